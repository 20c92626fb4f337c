use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_embeddings_reader, read_jsonl, BucketProfile, EmbeddingTable, Sample, Vocab, OOV_SCALE};
use crate::error::{Error, Result};
use crate::numcore::Rng;

/// Optional `meta.json` next to the sample files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetMeta {
    pub name: String,
    pub bucket_profile: BucketProfile,
    /// Seed of the stream out-of-vocabulary rows are drawn from.
    pub embedding_seed: u64,
}

impl Default for DatasetMeta {
    fn default() -> Self {
        Self { name: "dataset".into(), bucket_profile: BucketProfile::Raw, embedding_seed: 0 }
    }
}

/// Train and test samples plus where word vectors come from.
///
/// A data directory holds `train.jsonl`, `test.jsonl`, and optionally
/// `embeddings.txt` (GloVe text) and `meta.json`.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub embeddings: Option<PathBuf>,
}

fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let file = File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    read_jsonl(BufReader::new(file))
}

impl Dataset {
    pub fn from_samples(name: &str, train: Vec<Sample>, test: Vec<Sample>) -> Self {
        Self { meta: DatasetMeta { name: name.into(), ..DatasetMeta::default() }, train, test, embeddings: None }
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let meta = if meta_path.exists() {
            serde_json::from_reader(BufReader::new(File::open(&meta_path)?))?
        } else {
            DatasetMeta {
                name: dir.file_name().map_or_else(|| "dataset".into(), |n| n.to_string_lossy().into_owned()),
                ..DatasetMeta::default()
            }
        };
        let train = read_samples(&dir.join("train.jsonl"))?;
        let test = read_samples(&dir.join("test.jsonl"))?;
        if train.is_empty() || test.is_empty() {
            return Err(Error::Empty("train or test split"));
        }
        let emb = dir.join("embeddings.txt");
        Ok(Self { meta, train, test, embeddings: emb.exists().then_some(emb) })
    }

    /// Every word of both splits.
    pub fn vocab(&self) -> Vocab {
        Vocab::from_samples([self.train.as_slice(), self.test.as_slice()])
    }

    /// Sorted distinct aspect categories of both splits.
    pub fn categories(&self) -> Vec<String> {
        let mut c: Vec<String> = self.train.iter().chain(&self.test).filter_map(|s| s.category.clone()).collect();
        c.sort();
        c.dedup();
        c
    }

    /// All samples of both splits, train first.
    pub fn all_samples(&self) -> Vec<Sample> {
        self.train.iter().chain(&self.test).cloned().collect()
    }

    /// Word rows for the union vocabulary: pretrained where available,
    /// U(−0.1, 0.1) otherwise.
    pub fn embedding_table(&self, dim: usize) -> Result<EmbeddingTable> {
        let rng = Rng::new(self.meta.embedding_seed);
        let vocab = self.vocab();
        match &self.embeddings {
            Some(path) => load_embeddings_reader(BufReader::new(File::open(path)?), &vocab, dim, &rng),
            None => Ok(EmbeddingTable::random(vocab, dim, OOV_SCALE, &rng)),
        }
    }
}
