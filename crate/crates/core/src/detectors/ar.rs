//! Autoregressive density model: a causal dilated residual stack emitting a
//! diagonal Gaussian over the next two-channel sample.

use super::backbone::ResBlock;
use crate::error::{Error, Result};
use crate::nn::layer::{Layer, Sequential};
use crate::nn::{Graph, LayerSpec, ParamStore, Real, Var};
use crate::seed::Rng;

/// Log-variance is `LV_CENTER + LV_SPAN * tanh(raw)`.
pub const LV_CENTER: f64 = -2.0;
pub const LV_SPAN: f64 = 7.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ArShape {
    pub in_channels: usize,
    pub width: usize,
    pub kernel: usize,
    pub dilations: Vec<[usize; 2]>,
    pub dropout: f64,
}

impl ArShape {
    /// Largest lag, in steps, that can influence a prediction.
    pub fn receptive_field(&self) -> usize {
        self.dilations.iter().flatten().map(|d| (self.kernel - 1) * d).sum::<usize>() + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArNet {
    pub shape: ArShape,
    pub stem: Layer,
    pub blocks: Vec<ResBlock>,
    pub tail: Sequential,
    pub mean: Layer,
    pub logvar: Layer,
}

impl ArNet {
    pub fn build<T: Real>(s: &ArShape, store: &mut ParamStore<T>, rng: &mut Rng) -> Result<Self> {
        if s.kernel < 2 {
            return Err(Error::invalid("autoregressive kernel must be >= 2"));
        }
        let stem = Layer::build(LayerSpec::conv_causal(s.in_channels, s.width, 1, 1), store, rng, "ar.stem")?;
        let blocks = s
            .dilations
            .iter()
            .enumerate()
            .map(|(i, &d)| ResBlock::build(store, rng, &format!("ar.block{i}"), s.width, s.kernel, d, s.dropout, true))
            .collect::<Result<_>>()?;
        let tail = Sequential::build(vec![LayerSpec::BatchNorm1d { features: s.width }, LayerSpec::Relu], store, rng, "ar.tail")?;
        let mean = Layer::build(LayerSpec::conv_causal(s.width, 2, 1, 1), store, rng, "ar.mean")?;
        let logvar = Layer::build(LayerSpec::conv_causal(s.width, 2, 1, 1), store, rng, "ar.logvar")?;
        Ok(Self { shape: s.clone(), stem, blocks, tail, mean, logvar })
    }

    /// Per-position `(mean, logvar)` of shape `[B, 2, L]` from the shifted
    /// input built by [`super::inputs::ar_input`].
    pub fn params<T: Real>(&self, g: &mut Graph<T>, store: &mut ParamStore<T>, x: Var) -> Result<(Var, Var)> {
        let mut h = self.stem.forward(g, store, x)?;
        for b in &self.blocks {
            h = b.forward(g, store, h)?;
        }
        h = self.tail.forward(g, store, h)?;
        let mean = self.mean.forward(g, store, h)?;
        let raw = self.logvar.forward(g, store, h)?;
        let t = g.tanh(raw);
        let s = g.scale(t, LV_SPAN);
        Ok((mean, g.add_scalar(s, LV_CENTER)))
    }

    pub fn layers(&self) -> Vec<&Layer> {
        let mut v = vec![&self.stem];
        self.blocks.iter().for_each(|b| v.extend(b.layers()));
        v.extend(self.tail.layers.iter());
        v.push(&self.mean);
        v.push(&self.logvar);
        v
    }
}

/// Elementwise negative log density `[B, 2, L]` of `target` under the model.
pub fn ar_nll_elems<T: Real>(g: &mut Graph<T>, store: &mut ParamStore<T>, net: &ArNet, input: Var, target: Vec<T>) -> Result<Var> {
    let (mean, lv) = net.params(g, store, input)?;
    g.gaussian_nll(target, mean, lv)
}

/// Per-step NLL summed over the two channels: `[B, 2, L] -> B x [L]`.
pub fn step_nll(elems: &[f64], l: usize) -> Vec<Vec<f64>> {
    elems.chunks_exact(2 * l).map(|ex| (0..l).map(|t| ex[t] + ex[l + t]).collect()).collect()
}
