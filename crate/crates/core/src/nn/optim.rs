use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    RAdam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::RAdam => "radam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "radam" => Ok(OptimizerKind::RAdam),
            _ => Err(Error::invalid(format!("unknown optimizer '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self { kind: OptimizerKind::Adam, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn radam(lr: f64) -> Self {
        Self { kind: OptimizerKind::RAdam, ..Self::adam(lr) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps must be positive"));
        }
        Ok(())
    }
}

/// Adam / RAdam state for every tensor of a [`ParamStore`].
///
/// Moments are kept for all entries (empty for buffers that do not train) so
/// indices line up with the store.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new<T: Real>(config: OptimizerConfig, store: &ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let sizes = store.entries().iter().map(|e| if e.tensor.requires_grad() { e.tensor.numel() } else { 0 });
        let m: Vec<Vec<f64>> = sizes.map(|n| vec![0.0; n]).collect();
        Ok(Self { config, step: 0, v: m.clone(), m })
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    fn check_layout<T: Real>(&self, store: &ParamStore<T>) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::shape(format!("optimizer tracks {} tensors, store has {}", self.m.len(), store.len())));
        }
        for (i, e) in store.entries().iter().enumerate() {
            let want = if e.tensor.requires_grad() { e.tensor.numel() } else { 0 };
            if self.m[i].len() != want || self.v[i].len() != want {
                return Err(Error::shape(format!("optimizer moments for {} do not match its shape", e.name)));
            }
        }
        Ok(())
    }

    /// One update from the gradients currently held in `store`.
    ///
    /// Fails if no trainable tensor carries a gradient. Individual tensors the
    /// loss did not reach are left untouched.
    pub fn step<T: Real>(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        self.check_layout(store)?;
        if !store.entries().iter().any(|e| e.tensor.requires_grad() && e.tensor.grad().is_some()) {
            return Err(Error::Training("optimizer step without gradients; run backward first".into()));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let bc1 = 1.0 - c.beta1.powf(t);
        let bc2 = 1.0 - c.beta2.powf(t);
        // RAdam variance rectification; `None` selects the momentum-only update.
        let rect = match c.kind {
            OptimizerKind::Adam => Some(1.0),
            OptimizerKind::RAdam => {
                let rho_inf = 2.0 / (1.0 - c.beta2) - 1.0;
                let rho_t = rho_inf - 2.0 * t * c.beta2.powf(t) / bc2;
                (rho_t > 5.0).then(|| {
                    ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt()
                })
            }
        };
        for (i, e) in store.entries_mut().iter_mut().enumerate() {
            if !e.tensor.requires_grad() {
                continue;
            }
            let Some(grad) = e.tensor.grad().map(|g| g.iter().map(|x| x.f64()).collect::<Vec<_>>()) else {
                continue;
            };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, p) in e.tensor.data_mut().iter_mut().enumerate() {
                let g = grad[j];
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
                let mhat = m[j] / bc1;
                let delta = match rect {
                    Some(r) => c.lr * r * mhat / ((v[j] / bc2).sqrt() + c.eps),
                    None => c.lr * mhat,
                };
                *p = T::of(p.f64() - delta);
            }
        }
        Ok(())
    }
}

/// Cosine decay from `base` to `base * floor` over `total` steps.
pub fn cosine_lr(base: f64, floor: f64, step: u64, total: u64) -> f64 {
    if total == 0 {
        return base;
    }
    let p = (step.min(total) as f64) / total as f64;
    base * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos()))
}
