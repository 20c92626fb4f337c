//! Model container: a JSON manifest plus a flat little-endian binary.
//!
//! The binary is a sequence of records, one per tensor in manifest order:
//! `u32` name length, UTF-8 name, `u32` rows, `u32` cols, then rows × cols
//! `f64` values in row-major order. All integers are little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbones::Model;
use crate::bert_fmt::TokenVocab;
use crate::data::{EmbeddingTable, Vocab};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};
use crate::tiny_transformer::TransformerModel;

use super::config::ModelSpec;
use super::model::AnyModel;

pub const CONTAINER_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub model: ModelSpec,
    pub vocab: Vec<String>,
    #[serde(default)]
    pub categories: Vec<String>,
    pub tensors: Vec<TensorEntry>,
}

/// `model.json` → `model.bin`.
pub fn payload_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn manifest_of(model: &AnyModel) -> Manifest {
    let (spec, vocab, categories) = match model {
        AnyModel::Recurrent(m) => (ModelSpec::Recurrent(m.config.clone()), m.vocab.words().to_vec(), m.categories.clone()),
        AnyModel::Transformer(m) => (
            ModelSpec::Transformer { config: m.config.clone(), format: m.format, head: m.head },
            m.vocab.words().to_vec(),
            Vec::new(),
        ),
    };
    let tensors = model.all_params().iter().map(|p| TensorEntry { name: p.name.clone(), rows: p.value.rows(), cols: p.value.cols() }).collect();
    Manifest { version: CONTAINER_VERSION, model: spec, vocab, categories, tensors }
}

pub fn write_payload<W: Write>(model: &AnyModel, mut out: W) -> Result<()> {
    for p in model.all_params() {
        let name = p.name.as_bytes();
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name)?;
        out.write_all(&(p.value.rows() as u32).to_le_bytes())?;
        out.write_all(&(p.value.cols() as u32).to_le_bytes())?;
        for v in p.value.as_slice() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads every `(name, matrix)` record until end of input.
pub fn read_payload<R: Read>(mut input: R) -> Result<Vec<(String, Matrix)>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = bytes.as_slice();
    let mut out = Vec::new();
    while !cur.is_empty() {
        let n = read_u32(&mut cur)? as usize;
        if cur.len() < n {
            return Err(Error::Config("truncated tensor name".into()));
        }
        let name = String::from_utf8(cur[..n].to_vec()).map_err(|_| Error::Config("tensor name is not UTF-8".into()))?;
        cur = &cur[n..];
        let rows = read_u32(&mut cur)? as usize;
        let cols = read_u32(&mut cur)? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let mut b = [0u8; 8];
            cur.read_exact(&mut b).map_err(|_| Error::Config(format!("truncated payload for `{name}`")))?;
            data.push(f64::from_le_bytes(b));
        }
        out.push((name, Matrix::new(rows, cols, data)?));
    }
    Ok(out)
}

/// Rebuilds a model from a manifest and its tensors.
pub fn assemble(manifest: &Manifest, tensors: Vec<(String, Matrix)>) -> Result<AnyModel> {
    if manifest.version != CONTAINER_VERSION {
        return Err(Error::Config(format!("unsupported container version {}", manifest.version)));
    }
    let rng = Rng::new(0);
    let mut model = match &manifest.model {
        ModelSpec::Recurrent(cfg) => {
            let vocab = Vocab::from_words(manifest.vocab.iter().cloned());
            let matrix = Matrix::zeros(vocab.len(), cfg.emb_dim);
            let table = EmbeddingTable { vocab, matrix, oov_count: 0 };
            AnyModel::Recurrent(Model::new(cfg.clone(), &table, manifest.categories.clone(), &rng)?)
        }
        ModelSpec::Transformer { config, format, head } => {
            let vocab = TokenVocab::from_words(manifest.vocab.iter().cloned());
            AnyModel::Transformer(TransformerModel::new(config.clone(), *format, *head, vocab, &rng)?)
        }
    };
    let mut params = model.all_params_mut();
    if params.len() != tensors.len() {
        return Err(Error::Config(format!("model has {} tensors, payload {}", params.len(), tensors.len())));
    }
    for (p, (name, value)) in params.iter_mut().zip(tensors) {
        if p.name != name || p.value.shape() != value.shape() {
            return Err(Error::Config(format!("payload tensor `{name}` {:?} does not match `{}` {:?}", value.shape(), p.name, p.value.shape())));
        }
        p.value = value;
    }
    Ok(model)
}

/// Writes `path` (manifest) and its `.bin` payload.
pub fn save_model(model: &AnyModel, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&manifest_of(model))?)?;
    let file = fs::File::create(payload_path(path))?;
    let mut w = std::io::BufWriter::new(file);
    write_payload(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<AnyModel> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    let tensors = read_payload(std::io::BufReader::new(fs::File::open(payload_path(path))?))?;
    assemble(&manifest, tensors)
}
