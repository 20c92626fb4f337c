use serde::{Deserialize, Serialize};

use crate::backbones::ModelConfig;
use crate::bert_fmt::{FormatKind, HeadKind};
use crate::error::{Error, Result};
use crate::tiny_transformer::TransformerConfig;

/// Which model family a run trains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSpec {
    Recurrent(ModelConfig),
    Transformer { config: TransformerConfig, format: FormatKind, head: HeadKind },
}

impl ModelSpec {
    pub fn is_recurrent(&self) -> bool {
        matches!(self, Self::Recurrent(_))
    }
}

/// Training protocol. `lr` and `dropout` fall back to the family defaults
/// when absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelSpec,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    /// L2 coefficient on weight matrices (recurrent family).
    #[serde(default = "default_l2")]
    pub l2: f64,
    /// Decoupled weight decay on weight matrices (transformer family).
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_true")]
    pub shuffle: bool,
}

pub const DEFAULT_BATCH_SIZE: usize = 16;
pub const DEFAULT_EPOCHS: usize = 30;
pub const DEFAULT_RUNS: u64 = 10;
pub const RECURRENT_LR: f64 = 0.001;
pub const TRANSFORMER_LR: f64 = 1e-5;
pub const RECURRENT_DROPOUT: f64 = 0.5;
pub const TRANSFORMER_DROPOUT: f64 = 0.3;
pub const DEFAULT_L2: f64 = 1e-5;
pub const DEFAULT_WEIGHT_DECAY: f64 = 0.01;

fn default_batch() -> usize {
    DEFAULT_BATCH_SIZE
}

fn default_epochs() -> usize {
    DEFAULT_EPOCHS
}

fn default_seeds() -> Vec<u64> {
    (0..DEFAULT_RUNS).collect()
}

fn default_l2() -> f64 {
    DEFAULT_L2
}

fn default_weight_decay() -> f64 {
    DEFAULT_WEIGHT_DECAY
}

fn default_true() -> bool {
    true
}

impl TrainConfig {
    pub fn new(model: ModelSpec) -> Self {
        Self {
            model,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: DEFAULT_EPOCHS,
            seeds: default_seeds(),
            lr: None,
            dropout: None,
            l2: DEFAULT_L2,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            shuffle: true,
        }
    }

    pub fn recurrent(model: ModelConfig) -> Self {
        Self::new(ModelSpec::Recurrent(model))
    }

    pub fn transformer(config: TransformerConfig, format: FormatKind, head: HeadKind) -> Self {
        Self::new(ModelSpec::Transformer { config, format, head })
    }

    pub fn runs(&self) -> usize {
        self.seeds.len()
    }

    pub fn effective_lr(&self) -> f64 {
        self.lr.unwrap_or(if self.model.is_recurrent() { RECURRENT_LR } else { TRANSFORMER_LR })
    }

    pub fn effective_dropout(&self) -> f64 {
        self.dropout.unwrap_or(match &self.model {
            ModelSpec::Recurrent(_) => RECURRENT_DROPOUT,
            ModelSpec::Transformer { config, .. } => config.dropout,
        })
    }

    /// L2 actually applied: zero for the transformer family.
    pub fn effective_l2(&self) -> f64 {
        if self.model.is_recurrent() {
            self.l2
        } else {
            0.0
        }
    }

    /// Weight decay actually applied: zero for the recurrent family.
    pub fn effective_weight_decay(&self) -> f64 {
        if self.model.is_recurrent() {
            0.0
        } else {
            self.weight_decay
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let lr = self.effective_lr();
        if !lr.is_finite() || lr < 0.0 {
            return Err(Error::Config(format!("learning rate {lr} must be finite and non-negative")));
        }
        if !(0.0..1.0).contains(&self.effective_dropout()) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.effective_dropout())));
        }
        if self.l2 < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("l2 and weight_decay must be non-negative".into()));
        }
        match &self.model {
            ModelSpec::Recurrent(m) => m.validate(),
            ModelSpec::Transformer { config, .. } => {
                // vocab size is filled in from the data
                TransformerConfig { vocab_size: config.vocab_size.max(1), ..config.clone() }.validate()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::Backbone;
    use crate::data::Task;

    #[test]
    fn family_defaults() {
        let r = TrainConfig::recurrent(ModelConfig::default());
        assert_eq!((r.batch_size, r.epochs, r.runs()), (16, 30, 10));
        assert_eq!((r.effective_lr(), r.effective_dropout(), r.effective_l2(), r.effective_weight_decay()), (0.001, 0.5, 1e-5, 0.0));
        let t = TrainConfig::transformer(TransformerConfig::default(), FormatKind::Aabert2, HeadKind::Cls);
        assert_eq!((t.effective_lr(), t.effective_dropout(), t.effective_l2()), (1e-5, 0.3, 0.0));
        assert!(t.effective_weight_decay() > 0.0);
    }

    #[test]
    fn json_fills_defaults() {
        let c: TrainConfig = serde_json::from_str(r#"{"model":{"recurrent":{"backbone":"ian","cell":"aspect_aware"}},"seeds":[3,4]}"#).unwrap();
        assert_eq!(c.runs(), 2);
        assert_eq!(c.batch_size, 16);
        let ModelSpec::Recurrent(m) = &c.model else { panic!() };
        assert_eq!(m.backbone, Backbone::Ian);
        let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"model":{"recurrent":{}},"bogus":1}"#).is_err());
    }

    #[test]
    fn transformer_json() {
        let c: TrainConfig =
            serde_json::from_str(r#"{"model":{"transformer":{"config":{"layers":1},"format":"AABERT3","head":"SEP"}}}"#).unwrap();
        let ModelSpec::Transformer { config, format, head } = &c.model else { panic!() };
        assert_eq!((config.layers, *format, *head), (1, FormatKind::Aabert3, HeadKind::Sep));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn validation() {
        let mut c = TrainConfig::recurrent(ModelConfig::for_backbone(Backbone::Ram, Task::Acsa));
        assert!(c.validate().is_err());
        c.model = ModelSpec::Recurrent(ModelConfig::default());
        c.seeds.clear();
        assert!(c.validate().is_err());
        c.seeds = vec![1];
        c.dropout = Some(1.0);
        assert!(c.validate().is_err());
    }
}
