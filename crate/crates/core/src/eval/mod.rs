//! Classification metrics, one-vs-rest ROC analysis and report files.

mod metrics;
mod roc;
pub mod svg;

pub use metrics::{binary_metrics, confusion, metrics, ClassMetrics, ConfusionMatrix, Metrics, UndefinedFlags};
pub use roc::{roc_auc, roc_curve, RocCurve, RocReport};

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Label, ModalBatch};
use crate::error::{Error, Result};
use crate::model::{Model, N_CLASSES};
use crate::tensor::Tensor;

/// Row-wise argmax of `(n, 3)` logits or probabilities; the lowest index
/// wins ties.
pub fn predictions(scores: &Tensor) -> Result<Vec<usize>> {
    let shape = scores.shape();
    if shape.len() != 2 || shape[1] != N_CLASSES {
        return Err(Error::shape("predictions", format!("expected (n, {N_CLASSES}) scores, got {shape:?}")));
    }
    Ok(scores
        .data()
        .chunks(N_CLASSES)
        .map(|row| (1..N_CLASSES).fold(0, |best, c| if row[c] > row[best] { c } else { best }))
        .collect())
}

/// Number of rows whose argmax equals the label.
pub fn correct_count(scores: &Tensor, labels: &[usize]) -> Result<usize> {
    let preds = predictions(scores)?;
    if preds.len() != labels.len() {
        return Err(Error::Usage(format!("{} score rows for {} labels", preds.len(), labels.len())));
    }
    Ok(preds.iter().zip(labels).filter(|(p, y)| p == y).count())
}

/// Overall accuracy: correct predictions over all samples.
pub fn accuracy(scores: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Usage("accuracy of an empty set".into()));
    }
    Ok(correct_count(scores, labels)? as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub n_samples: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub roc: RocReport,
}

impl EvalReport {
    /// Report from posterior rows and true labels.
    pub fn from_scores(variant: impl Into<String>, proba: &[[f64; N_CLASSES]], labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Usage("cannot evaluate an empty set".into()));
        }
        let flat = Tensor::new(&[proba.len(), N_CLASSES], proba.iter().flatten().copied().collect())?;
        let cm = confusion(&predictions(&flat)?, labels)?;
        Ok(EvalReport {
            variant: variant.into(),
            n_samples: labels.len(),
            confusion: cm,
            metrics: metrics(&cm)?,
            roc: roc_auc(proba, labels)?,
        })
    }

    /// The row written to `comparison.csv`: macro accuracy, recall,
    /// specificity, F1, AUC, then the overall accuracy.
    pub fn summary(&self) -> [Option<f64>; 6] {
        let m = &self.metrics.macro_avg;
        [Some(m.accuracy), Some(m.recall), Some(m.specificity), Some(m.f1), self.roc.macro_auc, Some(self.metrics.overall_accuracy)]
    }

    /// Per-class table with a macro row, preceded by `# key=value` metadata
    /// including the confusion matrix.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# variant={}", self.variant);
        let _ = writeln!(out, "# n_samples={}", self.n_samples);
        let _ = writeln!(out, "# overall_accuracy={:.6}", self.metrics.overall_accuracy);
        for c in 0..N_CLASSES {
            let row = self.confusion.counts[c];
            let _ = writeln!(out, "# confusion_{}={};{};{}", Label::from_index(c).expect("class index"), row[0], row[1], row[2]);
        }
        out.push_str("class,accuracy,recall,specificity,f1,auc,undefined\n");
        let mut row = |name: &str, m: &ClassMetrics, auc: Option<f64>| {
            let mut flags = Vec::new();
            if m.undefined.recall {
                flags.push("recall");
            }
            if m.undefined.specificity {
                flags.push("specificity");
            }
            if m.undefined.f1 {
                flags.push("f1");
            }
            if auc.is_none() {
                flags.push("auc");
            }
            let _ = writeln!(
                out,
                "{name},{:.6},{:.6},{:.6},{:.6},{},{}",
                m.accuracy,
                m.recall,
                m.specificity,
                m.f1,
                fmt_opt(auc),
                flags.join(";")
            );
        };
        for c in 0..N_CLASSES {
            let label = Label::from_index(c).expect("class index").to_string();
            row(&label, &self.metrics.per_class[c], self.roc.per_class[c].auc);
        }
        row("macro", &self.metrics.macro_avg, self.roc.macro_auc);
        out
    }

    /// Per-class ROC curves plus the macro-average curve.
    pub fn roc_svg(&self) -> String {
        let mut series: Vec<svg::Series> = (0..N_CLASSES)
            .filter(|&c| self.roc.per_class[c].auc.is_some())
            .map(|c| svg::Series {
                name: format!("{} (AUC {})", Label::from_index(c).expect("class index"), fmt_opt(self.roc.per_class[c].auc)),
                points: self.roc.per_class[c].points.clone(),
                markers: false,
            })
            .collect();
        series.push(svg::Series {
            name: format!("macro (AUC {})", fmt_opt(self.roc.macro_auc)),
            points: self.roc.macro_curve.clone(),
            markers: false,
        });
        svg::LinePlot::roc(format!("ROC: {}", self.variant), series).render()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6}"))
}

/// Evaluates `model` on `batch`.
pub fn evaluate(model: &Model, batch: &ModalBatch) -> Result<EvalReport> {
    let proba = model.predict_proba(batch)?;
    EvalReport::from_scores(model.variant().name.clone(), &proba, &batch.labels)
}

/// File-name-safe form of a variant name.
pub fn file_stem(variant: &str) -> String {
    variant.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes `metrics_<variant>.csv` and `roc_<variant>.svg`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    let stem = file_stem(&report.variant);
    write(&dir.join(format!("metrics_{stem}.csv")), &report.metrics_csv())?;
    write(&dir.join(format!("roc_{stem}.svg")), &report.roc_svg())
}

pub const COMPARISON_HEADER: &str = "model,accuracy,recall,specificity,f1,auc,overall_accuracy";

/// One row per report, in the given order.
pub fn comparison_csv(reports: &[EvalReport], meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str(COMPARISON_HEADER);
    out.push('\n');
    for r in reports {
        let cells: Vec<String> = r.summary().iter().map(|v| fmt_opt(*v)).collect();
        let _ = writeln!(out, "{},{}", r.variant, cells.join(","));
    }
    out
}

/// Macro-average ROC curves of all reports on one set of axes.
pub fn comparison_svg(reports: &[EvalReport], title: &str) -> String {
    let series = reports
        .iter()
        .map(|r| svg::Series {
            name: format!("{} ({})", r.variant, fmt_opt(r.roc.macro_auc)),
            points: r.roc.macro_curve.clone(),
            markers: false,
        })
        .collect();
    svg::LinePlot::roc(title, series).render()
}

/// Writes each report's files plus `comparison.csv` and `roc_comparison.svg`.
pub fn compare_report(reports: &[EvalReport], dir: &Path, meta: &[(&str, String)]) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Usage("no reports to compare".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in reports {
        write_report(r, dir)?;
    }
    write(&dir.join("comparison.csv"), &comparison_csv(reports, meta))?;
    write(&dir.join("roc_comparison.svg"), &comparison_svg(reports, "Macro-average ROC"))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
