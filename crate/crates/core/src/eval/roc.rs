use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::N_CLASSES;

/// ROC points `(fpr, tpr)` from `(0, 0)` to `(1, 1)`; `auc` is `None` when
/// the labels contain only one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: Option<f64>,
}

/// Binary ROC by sweeping the threshold down through the distinct scores.
/// Tied scores move together, producing a diagonal segment; AUC uses the
/// trapezoidal rule.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<RocCurve> {
    if scores.len() != positive.len() {
        return Err(Error::Usage(format!("{} scores for {} labels", scores.len(), positive.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("ROC scores must be finite".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(RocCurve { points: vec![(0.0, 0.0), (1.0, 1.0)], auc: None });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    let auc = trapezoid(&points);
    Ok(RocCurve { points, auc: Some(auc) })
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    pub per_class: [RocCurve; N_CLASSES],
    /// Mean of the defined per-class AUCs.
    pub macro_auc: Option<f64>,
    /// Per-class curves averaged over the union of their FPR grids.
    pub macro_curve: Vec<(f64, f64)>,
}

/// One-vs-rest ROC for each class from posterior rows.
pub fn roc_auc(proba: &[[f64; N_CLASSES]], labels: &[usize]) -> Result<RocReport> {
    if proba.len() != labels.len() {
        return Err(Error::Usage(format!("{} score rows for {} labels", proba.len(), labels.len())));
    }
    let mut curves = Vec::with_capacity(N_CLASSES);
    for c in 0..N_CLASSES {
        let scores: Vec<f64> = proba.iter().map(|p| p[c]).collect();
        let pos: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        curves.push(roc_curve(&scores, &pos)?);
    }
    let per_class: [RocCurve; N_CLASSES] = curves.try_into().expect("three curves");
    let defined: Vec<&RocCurve> = per_class.iter().filter(|c| c.auc.is_some()).collect();
    let macro_auc =
        (!defined.is_empty()).then(|| defined.iter().filter_map(|c| c.auc).sum::<f64>() / defined.len() as f64);
    let macro_curve = average_curves(&defined);
    Ok(RocReport { per_class, macro_auc, macro_curve })
}

/// TPR of a curve at `x`: the highest TPR reached at exactly `x`, otherwise
/// linear interpolation between the neighbouring points.
fn tpr_at(points: &[(f64, f64)], x: f64) -> f64 {
    let exact = points.iter().filter(|p| p.0 == x).map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if exact.is_finite() {
        return exact;
    }
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.0 < x && x < b.0 {
            return a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0);
        }
    }
    1.0
}

fn average_curves(curves: &[&RocCurve]) -> Vec<(f64, f64)> {
    if curves.is_empty() {
        return vec![(0.0, 0.0), (1.0, 1.0)];
    }
    let mut grid: Vec<f64> = curves.iter().flat_map(|c| c.points.iter().map(|p| p.0)).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut out = vec![(0.0, 0.0)];
    for &x in &grid {
        let y = curves.iter().map(|c| tpr_at(&c.points, x)).sum::<f64>() / curves.len() as f64;
        out.push((x, y));
    }
    if out.last() != Some(&(1.0, 1.0)) {
        out.push((1.0, 1.0));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_and_constant_scores() {
        let pos = [true, true, false, false];
        assert_eq!(roc_curve(&[0.9, 0.8, 0.2, 0.1], &pos).unwrap().auc, Some(1.0));
        let flat = roc_curve(&[0.5; 4], &pos).unwrap();
        assert_eq!(flat.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(flat.auc, Some(0.5));
        assert_eq!(roc_curve(&[0.1, 0.2], &[true, true]).unwrap().auc, None);
    }

    #[test]
    fn six_sample_hand_case() {
        // positives 0.9, 0.6, 0.4; negatives 0.7, 0.4, 0.1
        // ordered pairs: 0.9 beats all 3, 0.6 beats 2, 0.4 beats 0.1 and ties 0.4
        let scores = [0.9, 0.6, 0.4, 0.7, 0.4, 0.1];
        let pos = [true, true, true, false, false, false];
        let r = roc_curve(&scores, &pos).unwrap();
        assert!((r.auc.unwrap() - 6.5 / 9.0).abs() < 1e-15);
        assert_eq!(r.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn macro_curve_runs_corner_to_corner() {
        let proba = [[0.7, 0.2, 0.1], [0.2, 0.5, 0.3], [0.1, 0.3, 0.6], [0.4, 0.4, 0.2]];
        let r = roc_auc(&proba, &[0, 1, 2, 1]).unwrap();
        assert_eq!(r.macro_curve.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.macro_curve.last(), Some(&(1.0, 1.0)));
        assert!(r.macro_curve.windows(2).all(|w| w[0].0 <= w[1].0));
    }
}
