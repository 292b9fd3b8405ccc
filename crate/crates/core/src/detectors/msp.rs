//! Modulation classifier scored by maximum softmax probability.

use super::backbone::{Backbone, BackboneShape};
use crate::error::Result;
use crate::nn::layer::Layer;
use crate::nn::{Graph, LayerSpec, ParamStore, Real, Var};
use crate::seed::Rng;

pub const N_CLASSES: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct MspNet {
    pub backbone: Backbone,
    pub head: Layer,
}

impl MspNet {
    pub fn build<T: Real>(shape: &BackboneShape, store: &mut ParamStore<T>, rng: &mut Rng) -> Result<Self> {
        let backbone = Backbone::build(shape, store, rng)?;
        let head = Layer::build(LayerSpec::Linear { in_features: shape.width, out_features: N_CLASSES }, store, rng, "head")?;
        Ok(Self { backbone, head })
    }

    pub fn logits<T: Real>(&self, g: &mut Graph<T>, store: &mut ParamStore<T>, x: Var) -> Result<Var> {
        let h = self.backbone.forward(g, store, x)?;
        self.head.forward(g, store, h)
    }

    pub fn layers(&self) -> Vec<&Layer> {
        let mut v = self.backbone.layers();
        v.push(&self.head);
        v
    }
}

pub fn one_hot<T: Real>(labels: &[usize], k: usize) -> Vec<T> {
    let mut t = vec![T::zero(); labels.len() * k];
    labels.iter().enumerate().for_each(|(r, &c)| t[r * k + c] = T::one());
    t
}

/// Cross-entropy on labelled rows plus `lambda` times cross-entropy of the
/// outlier rows to the uniform distribution. `logits` holds the labelled rows
/// first, then `n_oe` outlier rows.
pub fn msp_loss<T: Real>(g: &mut Graph<T>, logits: Var, labels: &[usize], n_oe: usize, lambda: f64) -> Result<(Var, f64, f64)> {
    let n_id = labels.len();
    let id = if n_oe > 0 { g.slice_rows(logits, 0, n_id)? } else { logits };
    let ce = g.softmax_cross_entropy(id, one_hot(labels, N_CLASSES))?;
    let ce_v = g.scalar(ce).f64();
    if n_oe == 0 {
        return Ok((ce, ce_v, 0.0));
    }
    let oe = g.slice_rows(logits, n_id, n_id + n_oe)?;
    let u = g.softmax_cross_entropy(oe, vec![T::of(1.0 / N_CLASSES as f64); n_oe * N_CLASSES])?;
    let u_v = g.scalar(u).f64();
    Ok((g.weighted_sum(&[(ce, 1.0), (u, lambda)])?, ce_v, u_v))
}

/// `1 - max_c softmax(z)_c` per row of `[B, K]` logits.
pub fn msp_scores(logits: &[f64], k: usize) -> Vec<f64> {
    logits
        .chunks_exact(k)
        .map(|z| {
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
            1.0 - 1.0 / s
        })
        .collect()
}
