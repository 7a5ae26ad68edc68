//! Mini-batch training with cross-entropy loss, per-epoch logging and
//! best-checkpoint tracking, plus one-axis hyperparameter sweeps.

mod optim;
mod sweep;

pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use sweep::{sweep, write_sweep, SweepAxis, SweepPoint};

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ModalBatch;
use crate::error::{Error, Result};
use crate::eval::{accuracy, correct_count};
use crate::model::{Model, ModelConfig, VariantSpec};

/// Training hyperparameters. Defaults: lr 1e-3, batch 32, 125 epochs,
/// feature dimension 100, Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub feature_dim: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub variant: VariantSpec,
    /// Explicit architecture. When unset, the default architecture with a
    /// square token layout for `feature_dim` is used.
    pub model: Option<ModelConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 125,
            feature_dim: 100,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            variant: VariantSpec::acmca(),
            model: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be positive".into()));
        }
        self.model_config()?.validate()?;
        self.variant.validate()
    }

    /// Architecture implied by this configuration.
    pub fn model_config(&self) -> Result<ModelConfig> {
        match &self.model {
            Some(m) if m.feature_dim != self.feature_dim => Err(Error::Config(format!(
                "model.feature_dim {} disagrees with feature_dim {}",
                m.feature_dim, self.feature_dim
            ))),
            Some(m) => Ok(m.clone()),
            None => ModelConfig::with_feature_dim(self.feature_dim),
        }
    }
}

/// Metrics for one completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Sample-weighted mean training loss over the epoch.
    pub loss: f64,
    /// Accuracy of the in-epoch predictions on the training batches.
    pub train_acc: f64,
    pub eval_acc: Option<f64>,
    pub wall_secs: f64,
}

impl EpochRecord {
    /// Progress line: `epoch=<i> loss=<f> train_acc=<f> eval_acc=<f>`.
    pub fn progress_line(&self) -> String {
        let eval = self.eval_acc.map_or("na".to_string(), |a| format!("{a:.4}"));
        format!("epoch={} loss={:.6} train_acc={:.4} eval_acc={eval}", self.epoch, self.loss, self.train_acc)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    /// CSV with `# key=value` header lines. Wall time is optional so that
    /// logs meant for comparison stay byte-identical across runs.
    pub fn to_csv(&self, meta: &[(&str, String)], with_wall_time: bool) -> String {
        let mut out = String::new();
        for (k, v) in meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str("epoch,loss,train_acc,eval_acc");
        out.push_str(if with_wall_time { ",wall_secs\n" } else { "\n" });
        for r in &self.records {
            let eval = r.eval_acc.map_or(String::new(), |a| format!("{a:.6}"));
            let _ = write!(out, "{},{:.8},{:.6},{eval}", r.epoch, r.loss, r.train_acc);
            if with_wall_time {
                let _ = write!(out, ",{:.3}", r.wall_secs);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path, meta: &[(&str, String)], with_wall_time: bool) -> Result<()> {
        std::fs::write(path, self.to_csv(meta, with_wall_time)).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last epoch.
    pub model: Model,
    /// Snapshot with the highest evaluation accuracy (earliest on ties);
    /// `None` without an evaluation set.
    pub best: Option<(usize, Model)>,
    pub log: TrainLog,
}

/// Trains a fresh model. Batches are reshuffled every epoch from a generator
/// seeded by `cfg.seed`, so the outcome is a pure function of the inputs.
pub fn train(
    train_set: &ModalBatch,
    eval_set: Option<&ModalBatch>,
    cfg: &TrainConfig,
    mut progress: Option<&mut dyn FnMut(&EpochRecord)>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut model = Model::new(cfg.model_config()?, train_set.widths(), cfg.variant.clone(), cfg.seed)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainLog::default();
    let mut best: Option<(usize, f64, Model)> = None;
    let start = Instant::now();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train_set.select(chunk)?;
            model.params_mut().zero_grad();
            let located = |what: String| {
                Error::Numeric(format!(
                    "{what} at epoch {epoch}, batch {}; lower the learning rate or check the inputs",
                    bi + 1
                ))
            };
            let (loss, logits) = model.loss_and_grad(&batch).map_err(|e| match e {
                Error::Numeric(msg) => located(msg),
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(located(format!("loss became {loss}")));
            }
            opt.step(model.params_mut())?;
            loss_sum += loss * chunk.len() as f64;
            correct += correct_count(&logits, &batch.labels)?;
        }
        let n = train_set.len() as f64;
        let eval_acc = eval_set
            .map(|e| model.predict_logits(e).and_then(|l| accuracy(&l, &e.labels)))
            .transpose()
            .map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!("{msg} while evaluating after epoch {epoch}")),
                other => other,
            })?;
        let record = EpochRecord {
            epoch,
            loss: loss_sum / n,
            train_acc: correct as f64 / n,
            eval_acc,
            wall_secs: start.elapsed().as_secs_f64(),
        };
        if let Some(acc) = eval_acc {
            if best.as_ref().is_none_or(|(_, b, _)| acc > *b) {
                best = Some((epoch, acc, model.clone()));
            }
        }
        if let Some(cb) = progress.as_deref_mut() {
            cb(&record);
        }
        log.records.push(record);
    }
    model.params_mut().zero_grad();
    Ok(TrainOutcome { model, best: best.map(|(e, _, m)| (e, m)), log })
}
