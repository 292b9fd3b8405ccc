use super::{auroc, roc, RocCurve};
use crate::detectors::ScoreTable;
use crate::error::{Error, Result};
use crate::nn::ModelKind;

/// AUROC per `(modulation, SIR bin)` cell of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct AurocGrid {
    pub model: ModelKind,
    pub oe: bool,
    /// Label of the out-of-distribution dataset.
    pub dataset: String,
    pub seed: u64,
    pub sir_db: Vec<f64>,
    /// `values[m][j]`.
    pub values: Vec<Vec<f64>>,
}

impl AurocGrid {
    pub fn n_mod(&self) -> usize {
        self.values.len()
    }

    pub fn n_sir(&self) -> usize {
        self.sir_db.len()
    }

    pub fn n_cells(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn get(&self, m: usize, j: usize) -> f64 {
        self.values[m][j]
    }

    /// Mean AUROC of modulation `m` over the given SIR bins.
    pub fn row_mean(&self, m: usize, bins: impl IntoIterator<Item = usize>) -> f64 {
        let v: Vec<f64> = bins.into_iter().map(|j| self.values[m][j]).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.sir_db.is_empty() {
            return Err(Error::data("empty AUROC grid"));
        }
        for (m, row) in self.values.iter().enumerate() {
            if row.len() != self.sir_db.len() {
                return Err(Error::data(format!("grid row {m} has {} cells for {} SIR bins", row.len(), self.sir_db.len())));
            }
            if let Some(j) = row.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::data(format!("grid cell (mod {m}, sir bin {j}) = {} outside [0, 1]", row[j])));
            }
        }
        Ok(())
    }
}

/// A grid plus the ROC curve behind every cell (`curves[m][j]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub grid: AurocGrid,
    pub curves: Vec<Vec<RocCurve>>,
}

/// One ROC and AUROC per cell from the in-distribution and
/// out-of-distribution scores of the same checkpoint.
pub fn evaluate_experiment(din: &ScoreTable, dout: &ScoreTable) -> Result<Experiment> {
    if (din.model, din.oe, din.seed) != (dout.model, dout.oe, dout.seed) {
        return Err(Error::data(format!(
            "score tables come from different checkpoints ({} oe={} seed={} vs {} oe={} seed={})",
            din.model.name(),
            din.oe,
            din.seed,
            dout.model.name(),
            dout.oe,
            dout.seed
        )));
    }
    if din.sir_db != dout.sir_db {
        return Err(Error::data(format!("mismatched SIR grids: {:?} vs {:?}", din.sir_db, dout.sir_db)));
    }
    if din.n_mod != dout.n_mod {
        return Err(Error::data(format!("mismatched modulation counts: {} vs {}", din.n_mod, dout.n_mod)));
    }
    let mut values = Vec::with_capacity(din.n_mod);
    let mut curves = Vec::with_capacity(din.n_mod);
    for m in 0..din.n_mod {
        let mut row = Vec::with_capacity(din.sir_db.len());
        let mut crow = Vec::with_capacity(din.sir_db.len());
        for j in 0..din.sir_db.len() {
            let c = roc(&din.cell(m, j)?, &dout.cell(m, j)?)?;
            row.push(auroc(&c));
            crow.push(c);
        }
        values.push(row);
        curves.push(crow);
    }
    let grid = AurocGrid { model: din.model, oe: din.oe, dataset: dout.dataset.clone(), seed: din.seed, sir_db: din.sir_db.clone(), values };
    grid.validate()?;
    Ok(Experiment { grid, curves })
}
