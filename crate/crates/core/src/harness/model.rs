use crate::backbones::{Dropout, EncodedSample, Model};
use crate::bert_fmt::TokenVocab;
use crate::data::{EmbeddingTable, Sample};
use crate::error::Result;
use crate::numcore::{cross_entropy, ParamTensor, Rng, Vector};
use crate::tiny_transformer::{TransformerModel, TransformerSample};

use super::config::ModelSpec;

/// A trainable model of either family.
#[derive(Clone, Debug)]
pub enum AnyModel {
    Recurrent(Model),
    Transformer(TransformerModel),
}

/// A sample resolved against a model's vocabulary.
#[derive(Clone, Debug)]
pub enum AnyInput {
    Recurrent(EncodedSample),
    Transformer(TransformerSample),
}

impl AnyInput {
    pub fn label(&self) -> usize {
        match self {
            Self::Recurrent(x) => x.label,
            Self::Transformer(x) => x.label,
        }
    }
}

impl AnyModel {
    /// Builds a freshly initialized model. `table` supplies word rows for the
    /// recurrent family; `vocab_samples` supplies the transformer vocabulary.
    pub fn build(
        spec: &ModelSpec,
        table: Option<&EmbeddingTable>,
        categories: &[String],
        vocab_samples: &[Sample],
        rng: &Rng,
    ) -> Result<Self> {
        Ok(match spec {
            ModelSpec::Recurrent(cfg) => {
                let table = table.ok_or_else(|| crate::Error::Config("recurrent models need an embedding table".into()))?;
                Self::Recurrent(Model::new(cfg.clone(), table, categories.to_vec(), rng)?)
            }
            ModelSpec::Transformer { config, format, head } => {
                let vocab = TokenVocab::from_samples(vocab_samples);
                Self::Transformer(TransformerModel::new(config.clone(), *format, *head, vocab, rng)?)
            }
        })
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, Self::Recurrent(_))
    }

    pub fn encode(&self, s: &Sample) -> Result<AnyInput> {
        Ok(match self {
            Self::Recurrent(m) => AnyInput::Recurrent(m.encode(s)?),
            Self::Transformer(m) => AnyInput::Transformer(m.encode(s)?),
        })
    }

    pub fn encode_all(&self, samples: &[Sample]) -> Result<Vec<AnyInput>> {
        samples.iter().map(|s| self.encode(s)).collect()
    }

    pub fn predict(&self, x: &AnyInput) -> Result<Vector> {
        match (self, x) {
            (Self::Recurrent(m), AnyInput::Recurrent(x)) => m.predict(x),
            (Self::Transformer(m), AnyInput::Transformer(x)) => m.predict(x),
            _ => Err(family_mismatch()),
        }
    }

    pub fn loss(&self, x: &AnyInput) -> Result<f64> {
        Ok(cross_entropy(&self.predict(x)?, x.label())?.0)
    }

    /// Forward and backward on one sample; gradients accumulate.
    pub fn accumulate(&mut self, x: &AnyInput, dropout: Option<Dropout<'_>>) -> Result<f64> {
        match (self, x) {
            (Self::Recurrent(m), AnyInput::Recurrent(x)) => {
                let (_, c) = m.forward(x, dropout)?;
                m.backward(&c, x.label)
            }
            (Self::Transformer(m), AnyInput::Transformer(x)) => {
                let (_, c) = m.forward(x, dropout)?;
                m.backward(&c, x.label)
            }
            _ => Err(family_mismatch()),
        }
    }

    /// Tensors the optimizer updates.
    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        match self {
            Self::Recurrent(m) => m.params_mut(),
            Self::Transformer(m) => m.params_mut(),
        }
    }

    /// Every tensor, trainable or frozen.
    pub fn all_params(&self) -> Vec<&ParamTensor> {
        match self {
            Self::Recurrent(m) => m.all_params(),
            Self::Transformer(m) => m.params(),
        }
    }

    pub fn all_params_mut(&mut self) -> Vec<&mut ParamTensor> {
        match self {
            Self::Recurrent(m) => m.all_params_mut(),
            Self::Transformer(m) => m.params_mut(),
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.all_params_mut() {
            p.zero_grad();
        }
    }
}

fn family_mismatch() -> crate::Error {
    crate::Error::Config("input encoded for a different model family".into())
}
