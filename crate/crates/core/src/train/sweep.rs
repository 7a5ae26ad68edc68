use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, TrainConfig};
use crate::data::ModalBatch;
use crate::error::{Error, Result};
use crate::eval::{accuracy, svg};
use crate::model::square_layout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Epochs,
    BatchSize,
    FeatureDim,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Epochs => "epochs",
            SweepAxis::BatchSize => "batch_size",
            SweepAxis::FeatureDim => "feature_dim",
        }
    }

    /// Grid used when no values are given.
    pub fn default_values(self) -> Vec<usize> {
        match self {
            SweepAxis::Epochs => vec![25, 50, 75, 100, 125, 150],
            SweepAxis::BatchSize => vec![8, 16, 32, 64],
            SweepAxis::FeatureDim => vec![36, 64, 100, 144],
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &TrainConfig, value: usize) -> TrainConfig {
        let mut c = base.clone();
        match self {
            SweepAxis::Epochs => c.epochs = value,
            SweepAxis::BatchSize => c.batch_size = value,
            SweepAxis::FeatureDim => {
                c.feature_dim = value;
                if let Some(m) = c.model.as_mut() {
                    m.feature_dim = value;
                    m.n_tokens = square_layout(value).unwrap_or(m.n_tokens);
                }
            }
        }
        c
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").to_ascii_lowercase().as_str() {
            "epochs" => Ok(SweepAxis::Epochs),
            "batch_size" | "batch" => Ok(SweepAxis::BatchSize),
            "feature_dim" | "dim" => Ok(SweepAxis::FeatureDim),
            other => Err(Error::Config(format!("unknown sweep axis '{other}' (epochs, batch_size, feature_dim)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: usize,
    pub test_accuracy: f64,
    pub final_loss: f64,
}

/// One train/evaluate cycle per value with everything else fixed. All values
/// are validated before any training starts. Runs execute in parallel; the
/// result keeps the order of `values`.
pub fn sweep(
    train_set: &ModalBatch,
    test_set: &ModalBatch,
    axis: SweepAxis,
    values: &[usize],
    base: &TrainConfig,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Usage(format!("no values given for the {axis} sweep")));
    }
    let configs: Vec<TrainConfig> = values.iter().map(|&v| axis.apply(base, v)).collect();
    for c in &configs {
        c.validate()?;
    }
    configs
        .par_iter()
        .zip(values)
        .map(|(cfg, &value)| {
            let out = train(train_set, None, cfg, None)?;
            let logits = out.model.predict_logits(test_set)?;
            Ok(SweepPoint {
                value,
                test_accuracy: accuracy(&logits, &test_set.labels)?,
                final_loss: out.log.records.last().map_or(f64::NAN, |r| r.loss),
            })
        })
        .collect()
}

/// Writes `sweep_<axis>.csv` and `sweep_<axis>.svg` into `dir`. The CSV
/// header block records the fixed settings of `base`.
pub fn write_sweep(dir: &Path, axis: SweepAxis, base: &TrainConfig, points: &[SweepPoint]) -> Result<()> {
    let variant = base.variant.name.as_str();
    let mut csv = String::new();
    for (k, v) in [
        ("variant", variant.to_string()),
        ("axis", axis.name().to_string()),
        ("seed", base.seed.to_string()),
        ("epochs", base.epochs.to_string()),
        ("batch_size", base.batch_size.to_string()),
        ("feature_dim", base.feature_dim.to_string()),
        ("learning_rate", base.learning_rate.to_string()),
        ("optimizer", base.optimizer.to_string()),
    ] {
        if k != axis.name() {
            csv.push_str(&format!("# {k}={v}\n"));
        }
    }
    csv.push_str(&format!("{},test_accuracy,final_loss\n", axis.name()));
    for p in points {
        csv.push_str(&format!("{},{:.6},{:.8}\n", p.value, p.test_accuracy, p.final_loss));
    }
    let csv_path = dir.join(format!("sweep_{}.csv", axis.name()));
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    let plot = svg::LinePlot {
        title: format!("{variant}: test accuracy vs {}", axis.name()),
        x_label: axis.name().to_string(),
        y_label: "test accuracy".into(),
        x_range: None,
        y_range: Some((0.0, 1.0)),
        series: vec![svg::Series {
            name: variant.to_string(),
            points: points.iter().map(|p| (p.value as f64, p.test_accuracy)).collect(),
            markers: true,
        }],
    };
    let svg_path = dir.join(format!("sweep_{}.svg", axis.name()));
    std::fs::write(&svg_path, plot.render()).map_err(|e| Error::io(&svg_path, e))
}
