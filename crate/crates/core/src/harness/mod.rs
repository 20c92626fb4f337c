//! Training and evaluation protocol, metrics, run reports, the gradient-check
//! suite, cross-domain evaluation and model files.

mod config;
mod cross;
mod dataset;
mod gradsuite;
mod metrics;
mod model;
mod report;
pub mod store;
mod train;

pub use config::{
    ModelSpec, TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_L2, DEFAULT_RUNS, DEFAULT_WEIGHT_DECAY, RECURRENT_DROPOUT,
    RECURRENT_LR, TRANSFORMER_DROPOUT, TRANSFORMER_LR,
};
pub use cross::{cross_domain_eval, CrossDomainReport};
pub use dataset::{Dataset, DatasetMeta};
pub use gradsuite::{backbone_variants, grad_check_suite, SuiteEntry, SuiteOptions, SuiteReport, CELL_TOLERANCE, KINK_MARGIN, MODEL_TOLERANCE};
pub use metrics::{class_names, evaluate_predictions, evaluate_with_buckets, BucketMetrics, Metrics};
pub use model::{AnyInput, AnyModel};
pub use report::{aggregate_runs, analyze_report, Aggregate, AnalyzeBy, BucketSummary, CurvePoint, RunRecord, RunReport, Summary, Timing};
pub use store::{load_model, save_model};
pub use train::{evaluate_model, predict_all, run_experiment, train_model, EpochRecord, TrainOutcome};
