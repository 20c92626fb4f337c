use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::backbones::Dropout;
use crate::data::{BucketProfile, Sample};
use crate::error::{Error, Result};
use crate::numcore::{adam_step, AdamConfig, ParamKind, Rng};

use super::config::TrainConfig;
use super::dataset::Dataset;
use super::metrics::{evaluate_with_buckets, Metrics};
use super::model::{AnyInput, AnyModel};
use super::report::{aggregate_runs, RunRecord, RunReport, Timing};

/// Scores after one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub metrics: Metrics,
}

/// Per-epoch curve of one run and the epoch picked as best.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Parameters as they were after the best epoch.
    pub best_model: AnyModel,
}

impl TrainOutcome {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }
}

/// Argmax class per sample; ties go to the lowest class index.
pub fn predict_all(model: &AnyModel, inputs: &[AnyInput]) -> Result<Vec<usize>> {
    inputs.iter().map(|x| Ok(model.predict(x)?.argmax())).collect()
}

/// Metrics of `model` on `samples`, with the aspect-count breakdown.
pub fn evaluate_model(model: &AnyModel, samples: &[Sample], profile: BucketProfile) -> Result<Metrics> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation samples"));
    }
    let inputs = model.encode_all(samples)?;
    evaluate_with_buckets(samples, &predict_all(model, &inputs)?, profile)
}

fn better(a: &Metrics, b: &Metrics) -> bool {
    a.accuracy > b.accuracy || (a.accuracy == b.accuracy && a.macro_f1 > b.macro_f1)
}

/// Adds `λ‖W‖²` for every weight matrix to the loss and `2λW` to its gradient.
fn apply_l2(model: &mut AnyModel, l2: f64) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    let mut penalty = 0.0;
    for p in model.params_mut() {
        if p.kind != ParamKind::Weight {
            continue;
        }
        let (v, g) = (p.value.as_slice().to_vec(), p.grad.as_mut_slice());
        for (gi, wi) in g.iter_mut().zip(&v) {
            penalty += wi * wi;
            *gi += 2.0 * l2 * wi;
        }
    }
    l2 * penalty
}

/// Trains `model` in place for `cfg.epochs` epochs of shuffled minibatches,
/// evaluating on `eval` after each. The last partial batch is kept.
pub fn train_model(
    cfg: &TrainConfig,
    model: &mut AnyModel,
    train: &[Sample],
    eval: &[Sample],
    seed: u64,
    profile: BucketProfile,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || eval.is_empty() {
        return Err(Error::Empty("train or eval set"));
    }
    let train_x = model.encode_all(train)?;
    let eval_x = model.encode_all(eval)?;
    let rng = Rng::new(seed);
    let mut order_rng = rng.substream("shuffle");
    let mut drop_rng = rng.substream("dropout");
    let p_drop = cfg.effective_dropout();
    let l2 = cfg.effective_l2();
    let weight_decay = cfg.effective_weight_decay();
    let adam = AdamConfig { lr: cfg.effective_lr(), ..AdamConfig::default() };
    let decayed = AdamConfig { weight_decay, ..adam };

    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut epochs: Vec<EpochRecord> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, AnyModel)> = None;
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order_rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            model.zero_grad();
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss += model.accumulate(&train_x[i], Some(Dropout { p: p_drop, rng: &mut drop_rng }))?;
            }
            let scale = 1.0 / batch.len() as f64;
            for p in model.params_mut() {
                p.grad.as_mut_slice().iter_mut().for_each(|g| *g *= scale);
            }
            let loss = batch_loss * scale + apply_l2(model, l2);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}, batch {b}, seed {seed}")));
            }
            loss_sum += batch_loss;
            for p in model.params_mut() {
                let c = if p.kind == ParamKind::Weight { &decayed } else { &adam };
                adam_step(p, c)?;
            }
        }
        let metrics = evaluate_with_buckets(eval, &predict_all(model, &eval_x)?, profile)?;
        let train_loss = loss_sum / train_x.len() as f64;
        debug!("seed {seed} epoch {epoch}: loss {train_loss:.4} acc {:.4} f1 {:.4}", metrics.accuracy, metrics.macro_f1);
        let improved = best.as_ref().is_none_or(|(e, _)| better(&metrics, &epochs[*e - 1].metrics));
        epochs.push(EpochRecord { epoch, train_loss, metrics });
        if improved {
            best = Some((epoch, model.clone()));
        }
    }
    let (best_epoch, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome { epochs, best_epoch, best_model })
}

/// One fresh model per seed, trained on `data.train` and evaluated on
/// `data.test`. Returns the report and the best model of the first seed.
pub fn run_experiment(cfg: &TrainConfig, data: &Dataset) -> Result<(RunReport, AnyModel)> {
    cfg.validate()?;
    let start = Instant::now();
    let table = match &cfg.model {
        super::ModelSpec::Recurrent(m) => Some(data.embedding_table(m.emb_dim)?),
        super::ModelSpec::Transformer { .. } => None,
    };
    let categories = data.categories();
    let vocab_samples = data.all_samples();
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    let mut first_best = None;
    for &seed in &cfg.seeds {
        let init = Rng::new(seed).substream("init");
        let mut model = AnyModel::build(&cfg.model, table.as_ref(), &categories, &vocab_samples, &init)?;
        let outcome = train_model(cfg, &mut model, &data.train, &data.test, seed, data.meta.bucket_profile)?;
        let best = outcome.best();
        info!("seed {seed}: best epoch {} acc {:.4} macro-F1 {:.4}", best.epoch, best.metrics.accuracy, best.metrics.macro_f1);
        runs.push(RunRecord::from_outcome(seed, &outcome));
        first_best.get_or_insert(outcome.best_model);
    }
    let aggregate = aggregate_runs(&runs.iter().map(|r| r.best.clone()).collect::<Vec<_>>())?;
    let report = RunReport {
        library_version: env!("CARGO_PKG_VERSION").into(),
        dataset: data.meta.name.clone(),
        config: cfg.clone(),
        seeds: cfg.seeds.clone(),
        runs,
        aggregate,
        timing: Some(Timing { wall_seconds: start.elapsed().as_secs_f64() }),
    };
    Ok((report, first_best.expect("at least one seed")))
}
