use serde::{Deserialize, Serialize};

use crate::data::{bucket_by_aspect_count, BucketProfile, Polarity, Sample};
use crate::error::{Error, Result};

const K: usize = 3;

/// Accuracy and macro-F1 over one aspect-count bucket.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    pub bucket: String,
    pub count: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Classification quality. Class order is positive, negative, neutral;
/// `confusion[gold][predicted]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: [f64; K],
    pub confusion: [[usize; K]; K],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_bucket: Vec<BucketMetrics>,
}

impl Metrics {
    /// Derives every score from a confusion matrix.
    pub fn from_confusion(confusion: [[usize; K]; K]) -> Result<Self> {
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::Empty("evaluation samples"));
        }
        let correct: usize = (0..K).map(|i| confusion[i][i]).sum();
        let mut per_class_f1 = [0.0; K];
        for (c, f1) in per_class_f1.iter_mut().enumerate() {
            let tp = confusion[c][c] as f64;
            let predicted: usize = (0..K).map(|g| confusion[g][c]).sum();
            let actual: usize = confusion[c].iter().sum();
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
            *f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        }
        Ok(Self {
            accuracy: correct as f64 / total as f64,
            macro_f1: per_class_f1.iter().sum::<f64>() / K as f64,
            per_class_f1,
            confusion,
            per_bucket: Vec::new(),
        })
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

/// Scores predicted class indices against gold indices.
pub fn evaluate_predictions(gold: &[usize], pred: &[usize]) -> Result<Metrics> {
    if gold.len() != pred.len() {
        return Err(Error::Config(format!("{} gold labels vs {} predictions", gold.len(), pred.len())));
    }
    let mut confusion = [[0usize; K]; K];
    for (&g, &p) in gold.iter().zip(pred) {
        if g >= K || p >= K {
            return Err(Error::Index { what: "class label", index: g.max(p), len: K });
        }
        confusion[g][p] += 1;
    }
    Metrics::from_confusion(confusion)
}

/// [`evaluate_predictions`] plus a breakdown by aspects per review.
pub fn evaluate_with_buckets(samples: &[Sample], pred: &[usize], profile: BucketProfile) -> Result<Metrics> {
    let gold: Vec<usize> = samples.iter().map(|s| s.polarity.index()).collect();
    let mut m = evaluate_predictions(&gold, pred)?;
    for (key, idx) in bucket_by_aspect_count(samples, profile) {
        let g: Vec<usize> = idx.iter().map(|&i| gold[i]).collect();
        let p: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
        let b = evaluate_predictions(&g, &p)?;
        m.per_bucket.push(BucketMetrics { bucket: key.to_string(), count: idx.len(), accuracy: b.accuracy, macro_f1: b.macro_f1 });
    }
    Ok(m)
}

pub fn class_names() -> [&'static str; K] {
    Polarity::ALL.map(Polarity::name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = evaluate_predictions(&[0, 1, 2, 2], &[0, 1, 2, 2]).unwrap();
        assert_eq!((m.accuracy, m.macro_f1), (1.0, 1.0));
    }

    #[test]
    fn absent_class_scores_zero() {
        let m = evaluate_predictions(&[0, 0], &[0, 0]).unwrap();
        assert_eq!(m.per_class_f1, [1.0, 0.0, 0.0]);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(evaluate_predictions(&[], &[]), Err(Error::Empty(_))));
        assert!(evaluate_predictions(&[0], &[0, 1]).is_err());
        assert!(evaluate_predictions(&[3], &[0]).is_err());
    }
}
