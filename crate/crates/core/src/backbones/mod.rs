//! Aspect vectors, attention, the classifier head and the backbone
//! compositions (single encoder, ATAE, IAN, RAM, ASGCN).

mod blocks;
mod config;
mod model;

pub use blocks::{
    additive_attention, aspect_vector, classify_head, AspectMode, AttentionParams, Classifier, NUM_CLASSES,
};
pub(crate) use blocks::{apply_mask, dropout_mask};
pub use config::{Backbone, ModelConfig};
pub use model::{Dropout, EncodedSample, ForwardCache, Model};

#[cfg(test)]
mod tests;
