use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::TrainConfig;
use super::metrics::{class_names, Metrics};
use super::train::TrainOutcome;

/// Headline scores of one run's epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// One seed: its best epoch and the full curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub best_epoch: usize,
    pub best: Metrics,
    pub curve: Vec<CurvePoint>,
}

impl RunRecord {
    pub fn from_outcome(seed: u64, o: &TrainOutcome) -> Self {
        let curve = o
            .epochs
            .iter()
            .map(|e| CurvePoint { epoch: e.epoch, train_loss: e.train_loss, accuracy: e.metrics.accuracy, macro_f1: e.metrics.macro_f1 })
            .collect();
        Self { seed, best_epoch: o.best_epoch, best: o.best().metrics.clone(), curve }
    }
}

/// Scalar scores summarized across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub bucket: String,
    pub count: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Mean and sample standard deviation of the per-run bests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub mean: Summary,
    pub std: Summary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_bucket: Vec<BucketSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

/// Everything a `train` invocation produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub library_version: String,
    pub dataset: String,
    pub config: TrainConfig,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunRecord>,
    pub aggregate: Aggregate,
    /// Excluded from determinism comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl RunReport {
    /// Pretty JSON without the timing block.
    pub fn deterministic_json(&self) -> Result<String> {
        let stripped = Self { timing: None, ..self.clone() };
        Ok(serde_json::to_string_pretty(&stripped)?)
    }
}

/// Order-independent mean and sample standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let mut sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    sq.sort_by(f64::total_cmp);
    (mean, (sq.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

/// Averages per-run best metrics. Buckets present in every run are averaged too.
pub fn aggregate_runs(bests: &[Metrics]) -> Result<Aggregate> {
    if bests.is_empty() {
        return Err(Error::Empty("runs"));
    }
    let stat = |f: &dyn Fn(&Metrics) -> f64| mean_std(&bests.iter().map(f).collect::<Vec<_>>());
    let (acc, acc_sd) = stat(&|m| m.accuracy);
    let (f1, f1_sd) = stat(&|m| m.macro_f1);
    let mut pc = [0.0; 3];
    let mut pc_sd = [0.0; 3];
    for c in 0..3 {
        (pc[c], pc_sd[c]) = stat(&|m| m.per_class_f1[c]);
    }
    let mut per_bucket = Vec::new();
    for b in &bests[0].per_bucket {
        let found: Vec<_> = bests.iter().filter_map(|m| m.per_bucket.iter().find(|x| x.bucket == b.bucket)).collect();
        if found.len() != bests.len() {
            continue;
        }
        let (a, _) = mean_std(&found.iter().map(|x| x.accuracy).collect::<Vec<_>>());
        let (f, _) = mean_std(&found.iter().map(|x| x.macro_f1).collect::<Vec<_>>());
        per_bucket.push(BucketSummary { bucket: b.bucket.clone(), count: b.count, accuracy: a, macro_f1: f });
    }
    Ok(Aggregate {
        runs: bests.len(),
        mean: Summary { accuracy: acc, macro_f1: f1, per_class_f1: pc },
        std: Summary { accuracy: acc_sd, macro_f1: f1_sd, per_class_f1: pc_sd },
        per_bucket,
    })
}

/// Breakdown axis for [`analyze_report`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalyzeBy {
    AspectCount,
    Class,
}

impl std::str::FromStr for AnalyzeBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aspect-count" => Ok(Self::AspectCount),
            "class" => Ok(Self::Class),
            _ => Err(Error::Config(format!("unknown breakdown `{s}` (aspect-count|class)"))),
        }
    }
}

/// Plain-text table of the aggregate broken down by aspect count or class.
pub fn analyze_report(report: &RunReport, by: AnalyzeBy) -> String {
    let a = &report.aggregate;
    let mut out = format!("{} ({} runs): accuracy {:.4} ± {:.4}, macro-F1 {:.4} ± {:.4}\n", report.dataset, a.runs, a.mean.accuracy, a.std.accuracy, a.mean.macro_f1, a.std.macro_f1);
    match by {
        AnalyzeBy::Class => {
            out.push_str("class     F1 mean  F1 std\n");
            for (c, name) in class_names().iter().enumerate() {
                out.push_str(&format!("{name:<9} {:.4}   {:.4}\n", a.mean.per_class_f1[c], a.std.per_class_f1[c]));
            }
        }
        AnalyzeBy::AspectCount => {
            out.push_str("aspects  samples  accuracy  macro-F1\n");
            for b in &a.per_bucket {
                out.push_str(&format!("{:<8} {:<8} {:.4}    {:.4}\n", b.bucket, b.count, b.accuracy, b.macro_f1));
            }
        }
    }
    out
}
