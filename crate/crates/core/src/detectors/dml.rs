//! Proxy-anchor metric learning scored by cosine similarity to the nearest
//! class proxy.

use super::backbone::{Backbone, BackboneShape};
use super::msp::N_CLASSES;
use crate::error::Result;
use crate::nn::layer::Layer;
use crate::nn::{Graph, LayerSpec, ParamId, ParamStore, ProxyAnchorArgs, Real, Var};
use crate::seed::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct DmlNet {
    pub backbone: Backbone,
    pub head: Layer,
    pub proxies: ParamId,
}

impl DmlNet {
    pub fn build<T: Real>(shape: &BackboneShape, embed_dim: usize, store: &mut ParamStore<T>, rng: &mut Rng) -> Result<Self> {
        let backbone = Backbone::build(shape, store, rng)?;
        let head = Layer::build(LayerSpec::Linear { in_features: shape.width, out_features: embed_dim }, store, rng, "head")?;
        let proxies = store.push_uniform("proxies", &[N_CLASSES, embed_dim], 1, rng);
        Ok(Self { backbone, head, proxies })
    }

    pub fn embed<T: Real>(&self, g: &mut Graph<T>, store: &mut ParamStore<T>, x: Var) -> Result<Var> {
        let h = self.backbone.forward(g, store, x)?;
        self.head.forward(g, store, h)
    }

    pub fn layers(&self) -> Vec<&Layer> {
        let mut v = self.backbone.layers();
        v.push(&self.head);
        v
    }
}

/// Proxy-anchor loss with the `n_oe` trailing rows of `emb` treated as
/// negatives of every proxy, weighted `lambda`.
pub fn dml_loss<T: Real>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    net: &DmlNet,
    emb: Var,
    labels: &[usize],
    n_oe: usize,
    alpha: f64,
    delta: f64,
    lambda: f64,
) -> Result<Var> {
    let proxies = g.param(store, net.proxies);
    let n_id = labels.len();
    if n_oe == 0 {
        return g.proxy_anchor(emb, proxies, labels, None, ProxyAnchorArgs { alpha, delta, outlier_weight: 0.0 });
    }
    let id = g.slice_rows(emb, 0, n_id)?;
    let oe = g.slice_rows(emb, n_id, n_id + n_oe)?;
    g.proxy_anchor(id, proxies, labels, Some(oe), ProxyAnchorArgs { alpha, delta, outlier_weight: lambda })
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// `1 - max_p cos(e, p)` per embedding row.
pub fn dml_scores(emb: &[f64], proxies: &[f64], dim: usize) -> Vec<f64> {
    emb.chunks_exact(dim)
        .map(|e| 1.0 - proxies.chunks_exact(dim).map(|p| cosine(e, p)).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_extremes() {
        let proxies = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let s = dml_scores(&[0.0, 2.0, 0.0, 0.0, 0.0, 3.0], &proxies, 3);
        assert!(s[0].abs() < 1e-15);
        assert!((s[1] - 1.0).abs() < 1e-15);
    }
}
