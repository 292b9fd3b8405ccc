//! ROC curves, AUROC and per-cell AUROC grids.
//!
//! OOD examples are the positive class. An example is flagged at threshold
//! `t` when its score is `>= t`.

mod grid;
mod report;

pub use grid::{evaluate_experiment, AurocGrid, Experiment};
pub use report::{read_roc, write_report, write_roc};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// From `(0, 0)` at threshold `+inf` down to `(1, 1)` at the smallest score.
    pub points: Vec<RocPoint>,
    pub n_id: usize,
    pub n_ood: usize,
}

fn sorted_desc(v: &[f64], what: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::invalid(format!("no {what} scores")));
    }
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid(format!("NaN among {what} scores")));
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Threshold sweep over every distinct observed score.
pub fn roc(id: &[f64], ood: &[f64]) -> Result<RocCurve> {
    let neg = sorted_desc(id, "in-distribution")?;
    let pos = sorted_desc(ood, "out-of-distribution")?;
    let (n_id, n_ood) = (neg.len(), pos.len());
    let mut points = vec![RocPoint { threshold: f64::INFINITY, tpr: 0.0, fpr: 0.0 }];
    let (mut i, mut j) = (0, 0);
    while i < n_ood || j < n_id {
        let t = match (pos.get(i), neg.get(j)) {
            (Some(&a), Some(&b)) => a.max(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while i < n_ood && pos[i] >= t {
            i += 1;
        }
        while j < n_id && neg[j] >= t {
            j += 1;
        }
        points.push(RocPoint { threshold: t, tpr: i as f64 / n_ood as f64, fpr: j as f64 / n_id as f64 });
    }
    Ok(RocCurve { points, n_id, n_ood })
}

/// Trapezoidal area under the curve.
pub fn auroc(curve: &RocCurve) -> f64 {
    curve.points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
}

/// `auroc(roc(id, ood))`.
pub fn auroc_of(id: &[f64], ood: &[f64]) -> Result<f64> {
    Ok(auroc(&roc(id, ood)?))
}
