use serde::{Deserialize, Serialize};

use crate::data::{BucketProfile, Sample};
use crate::error::{Error, Result};
use crate::numcore::Rng;

use super::metrics::Metrics;
use super::model::AnyModel;
use super::train::evaluate_model;

/// Metrics of a model evaluated on another domain's test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossDomainReport {
    /// E.g. `"L→R"`: trained on laptops, tested on restaurants.
    pub direction: String,
    /// Foreign words given fresh out-of-vocabulary rows.
    pub added_words: usize,
    pub metrics: Metrics,
}

/// Evaluates `model` on `foreign`. Words missing from a recurrent model's
/// vocabulary get rows drawn as out-of-vocabulary rows are at load time;
/// the transformer maps them to `[UNK]`.
pub fn cross_domain_eval(
    model: &mut AnyModel,
    foreign: &[Sample],
    direction: &str,
    profile: BucketProfile,
    rng: &Rng,
) -> Result<CrossDomainReport> {
    if foreign.is_empty() {
        return Err(Error::Empty("foreign test set"));
    }
    let added_words = match model {
        AnyModel::Recurrent(m) => {
            let words: Vec<String> = foreign.iter().flat_map(|s| s.tokens.iter().cloned().chain(s.aspect_tokens())).collect();
            m.extend_vocab(words.iter().map(String::as_str), rng)
        }
        AnyModel::Transformer(_) => 0,
    };
    let metrics = evaluate_model(model, foreign, profile)?;
    Ok(CrossDomainReport { direction: direction.into(), added_words, metrics })
}
