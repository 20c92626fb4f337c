//! Aspect-aware context encoders for aspect-based sentiment analysis.

pub mod error;
#[doc(hidden)]
pub mod fault;
pub mod numcore;
pub mod backbones;
pub mod bert_fmt;
pub mod data;
pub mod graph;
pub mod harness;
pub mod rnn;
pub mod tiny_transformer;

pub use error::{Error, Result};

pub use backbones::{Backbone, Model, ModelConfig};
pub use bert_fmt::{FormatKind, HeadKind, TokenizedInput};
pub use data::{Polarity, Sample, Task};
pub use harness::{AnyModel, Dataset, Metrics, ModelSpec, RunReport, TrainConfig};
pub use numcore::{Matrix, Rng, Vector};
pub use tiny_transformer::{TransformerConfig, TransformerModel};
