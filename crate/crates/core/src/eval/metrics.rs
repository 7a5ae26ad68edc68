use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::N_CLASSES;

/// 3x3 counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..N_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    /// Fraction of samples on the diagonal.
    pub fn overall_accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    /// One-vs-rest counts `(tp, tn, fp, fn)` for class `c`.
    pub fn one_vs_rest(&self, c: usize) -> (usize, usize, usize, usize) {
        let tp = self.counts[c][c];
        let fn_ = self.counts[c].iter().sum::<usize>() - tp;
        let fp = (0..N_CLASSES).map(|r| self.counts[r][c]).sum::<usize>() - tp;
        (tp, self.total() - tp - fn_ - fp, fp, fn_)
    }
}

pub fn confusion(preds: &[usize], labels: &[usize]) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Usage(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in preds.iter().zip(labels) {
        if p >= N_CLASSES || y >= N_CLASSES {
            return Err(Error::Usage(format!("class index out of range (pred {p}, label {y})")));
        }
        cm.counts[y][p] += 1;
    }
    Ok(cm)
}

/// Marks metrics whose denominator was zero (reported as 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UndefinedFlags {
    pub recall: bool,
    pub specificity: bool,
    pub f1: bool,
}

impl UndefinedFlags {
    pub fn any(&self) -> bool {
        self.recall || self.specificity || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
    pub undefined: UndefinedFlags,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Binary metrics from one-vs-rest counts:
/// accuracy `(TP+TN)/(TP+TN+FP+FN)`, recall `TP/(TP+FN)`, specificity
/// `TN/(TN+FP)`, F1 `2TP/(2TP+FP+FN)` (the harmonic mean of precision and
/// recall).
pub fn binary_metrics(tp: usize, tn: usize, fp: usize, fn_: usize) -> ClassMetrics {
    let (accuracy, _) = ratio(tp + tn, tp + tn + fp + fn_);
    let (recall, r_undef) = ratio(tp, tp + fn_);
    let (specificity, s_undef) = ratio(tn, tn + fp);
    let (f1, f_undef) = ratio(2 * tp, 2 * tp + fp + fn_);
    ClassMetrics { accuracy, recall, specificity, f1, undefined: UndefinedFlags { recall: r_undef, specificity: s_undef, f1: f_undef } }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: [ClassMetrics; N_CLASSES],
    /// Unweighted mean of the per-class values.
    pub macro_avg: ClassMetrics,
    /// Trace over total.
    pub overall_accuracy: f64,
}

/// One-vs-rest metrics per class plus their macro average.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    if cm.total() == 0 {
        return Err(Error::Usage("cannot compute metrics of an empty confusion matrix".into()));
    }
    let per_class: [ClassMetrics; N_CLASSES] = std::array::from_fn(|c| {
        let (tp, tn, fp, fn_) = cm.one_vs_rest(c);
        binary_metrics(tp, tn, fp, fn_)
    });
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / N_CLASSES as f64;
    let macro_avg = ClassMetrics {
        accuracy: mean(|m| m.accuracy),
        recall: mean(|m| m.recall),
        specificity: mean(|m| m.specificity),
        f1: mean(|m| m.f1),
        undefined: UndefinedFlags {
            recall: per_class.iter().any(|m| m.undefined.recall),
            specificity: per_class.iter().any(|m| m.undefined.specificity),
            f1: per_class.iter().any(|m| m.undefined.f1),
        },
    };
    Ok(Metrics { per_class, macro_avg, overall_accuracy: cm.overall_accuracy() })
}
