use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

use super::sample::Sample;

pub const DEFAULT_EMBEDDING_DIM: usize = 300;
pub const OOV_SCALE: f64 = 0.1;

/// Sorted word list with a reverse index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        Self::from_words(words)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

impl Vocab {
    /// Deduplicates and sorts `words`.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = words.into_iter().map(Into::into).collect();
        let words: Vec<String> = set.into_iter().collect();
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }

    /// Every context and aspect word appearing in the given sample sets.
    pub fn from_samples<'a, I>(sets: I) -> Self
    where
        I: IntoIterator<Item = &'a [Sample]>,
    {
        let mut words = Vec::new();
        for set in sets {
            for s in set {
                words.extend(s.tokens.iter().cloned());
                words.extend(s.aspect_tokens());
            }
        }
        Self::from_words(words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// One embedding row per vocabulary word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub vocab: Vocab,
    pub matrix: Matrix,
    /// Rows not found in the pretrained file and drawn at random.
    pub oov_count: usize,
}

pub(crate) fn oov_row(rng: &Rng, word: &str, dim: usize) -> Vec<f64> {
    let mut r = rng.substream(&format!("oov/{word}"));
    (0..dim).map(|_| r.uniform(-OOV_SCALE, OOV_SCALE)).collect()
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn row(&self, word: &str) -> Option<&[f64]> {
        self.vocab.get(word).map(|i| self.matrix.row(i))
    }

    /// Every row drawn from U(−scale, scale), each word from its own substream.
    pub fn random(vocab: Vocab, dim: usize, scale: f64, rng: &Rng) -> Self {
        let mut data = Vec::with_capacity(vocab.len() * dim);
        for w in vocab.words() {
            let mut r = rng.substream(&format!("oov/{w}"));
            data.extend((0..dim).map(|_| r.uniform(-scale, scale)));
        }
        let matrix = Matrix::from_raw(vocab.len(), dim, data);
        Self { oov_count: vocab.len(), vocab, matrix }
    }
}

/// Reads GloVe-format text, keeping only vocabulary words.
///
/// The word is everything before the last `dim` fields, so tokens containing
/// spaces survive. Words absent from the file get U(−0.1, 0.1) rows drawn from
/// the `oov/<word>` substream of `rng`, so a word's row does not depend on the
/// rest of the vocabulary.
pub fn load_embeddings_reader<R: BufRead>(input: R, vocab: &Vocab, dim: usize, rng: &Rng) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::Config("embedding dim must be positive".into()));
    }
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() < dim + 1 {
            return Err(Error::Parse { line: n + 1, msg: format!("expected a word and {dim} values, got {} fields", parts.len()) });
        }
        let split = parts.len() - dim;
        let word = parts[..split].join(" ");
        let Some(idx) = vocab.get(&word) else { continue };
        if rows[idx].is_some() {
            continue;
        }
        let values = parts[split..]
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::Parse { line: n + 1, msg: format!("non-numeric or non-finite value for `{word}`") })?;
        rows[idx] = Some(values);
    }
    let mut oov_count = 0;
    let mut data = Vec::with_capacity(vocab.len() * dim);
    for (w, row) in vocab.words().iter().zip(rows) {
        match row {
            Some(r) => data.extend(r),
            None => {
                oov_count += 1;
                data.extend(oov_row(rng, w, dim));
            }
        }
    }
    Ok(EmbeddingTable { vocab: vocab.clone(), matrix: Matrix::from_raw(vocab.len(), dim, data), oov_count })
}

pub fn load_embeddings(glove_text: &str, vocab: &Vocab, dim: usize, rng: &Rng) -> Result<EmbeddingTable> {
    load_embeddings_reader(glove_text.as_bytes(), vocab, dim, rng)
}

/// Stacks the rows of `tokens`, one per token, in order.
pub fn embed_tokens<S: AsRef<str>>(table: &EmbeddingTable, tokens: &[S]) -> Result<Matrix> {
    let mut data = Vec::with_capacity(tokens.len() * table.dim());
    for t in tokens {
        let t = t.as_ref();
        let row = table.row(t).ok_or_else(|| Error::Lookup(format!("token `{t}` has no embedding row")))?;
        data.extend_from_slice(row);
    }
    Ok(Matrix::from_raw(tokens.len(), table.dim(), data))
}

/// Token indices into the table, failing on unknown words.
pub fn token_ids<S: AsRef<str>>(table: &EmbeddingTable, tokens: &[S]) -> Result<Vec<usize>> {
    tokens
        .iter()
        .map(|t| table.vocab.get(t.as_ref()).ok_or_else(|| Error::Lookup(format!("token `{}` has no embedding row", t.as_ref()))))
        .collect()
}
