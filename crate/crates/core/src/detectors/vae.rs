//! Variational autoencoder over per-symbol spectra.
//!
//! The encoder sees the real/imaginary spectrum of one OFDM symbol; the
//! decoder emits its magnitude spectrum through a max over channels.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::layer::{Layer, Sequential};
use crate::nn::{Graph, LayerSpec, ParamStore, Real, Var};
use crate::seed::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct VaeShape {
    pub k: usize,
    pub channels: [usize; 2],
    pub latent: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaeNet {
    pub shape: VaeShape,
    pub encoder: Sequential,
    pub mu: Layer,
    pub logvar: Layer,
    pub decoder: Sequential,
}

impl VaeNet {
    pub fn build<T: Real>(s: &VaeShape, store: &mut ParamStore<T>, rng: &mut Rng) -> Result<Self> {
        if s.k % 4 != 0 || s.k < 4 {
            return Err(Error::invalid(format!("VAE needs a spectrum length divisible by 4, got {}", s.k)));
        }
        let [c1, c2] = s.channels;
        let l = s.k / 4;
        let down = |i, o| LayerSpec::Conv1d { in_channels: i, out_channels: o, kernel: 3, stride: 2, dilation: 1, padding: 1, causal: false };
        let up = |i, o| LayerSpec::ConvTranspose1d {
            in_channels: i,
            out_channels: o,
            kernel: 3,
            stride: 2,
            dilation: 1,
            padding: 1,
            output_padding: 1,
        };
        let encoder = Sequential::build(vec![down(2, c1), LayerSpec::Relu, down(c1, c2), LayerSpec::Relu, LayerSpec::Flatten], store, rng, "encoder")?;
        let mu = Layer::build(LayerSpec::Linear { in_features: c2 * l, out_features: s.latent }, store, rng, "mu")?;
        let logvar = Layer::build(LayerSpec::Linear { in_features: c2 * l, out_features: s.latent }, store, rng, "logvar")?;
        let decoder = Sequential::build(
            vec![
                LayerSpec::Linear { in_features: s.latent, out_features: c2 * l },
                LayerSpec::Relu,
                LayerSpec::Reshape { shape: vec![c2, l] },
                up(c2, c1),
                LayerSpec::Relu,
                up(c1, c1),
                LayerSpec::ChannelMax,
            ],
            store,
            rng,
            "decoder",
        )?;
        Ok(Self { shape: s.clone(), encoder, mu, logvar, decoder })
    }

    /// `(mu, logvar)` for folded spectra `[N, 2, k]`.
    pub fn encode<T: Real>(&self, g: &mut Graph<T>, store: &mut ParamStore<T>, x: Var) -> Result<(Var, Var)> {
        let h = self.encoder.forward(g, store, x)?;
        Ok((self.mu.forward(g, store, h)?, self.logvar.forward(g, store, h)?))
    }

    pub fn decode<T: Real>(&self, g: &mut Graph<T>, store: &mut ParamStore<T>, z: Var) -> Result<Var> {
        self.decoder.forward(g, store, z)
    }

    pub fn layers(&self) -> Vec<&Layer> {
        let mut v: Vec<&Layer> = self.encoder.layers.iter().collect();
        v.push(&self.mu);
        v.push(&self.logvar);
        v.extend(self.decoder.layers.iter());
        v
    }
}

/// Loss terms of one VAE evaluation.
pub struct VaeParts {
    pub loss: Var,
    pub kl: f64,
    pub mse: f64,
    /// Per-row reconstruction error averaged over the latent samples.
    pub row_mse: Var,
}

/// `beta * mean_rows(KL) + mean(MSE)` with `samples` reparametrized latent
/// draws `z = mu + eps * exp(logvar / 2)`.
pub fn vae_loss<T: Real>(
    g: &mut Graph<T>,
    store: &mut ParamStore<T>,
    net: &VaeNet,
    x: Var,
    target: &[T],
    beta: f64,
    samples: usize,
    rng: &mut Rng,
) -> Result<VaeParts> {
    let (mu, lv) = net.encode(g, store, x)?;
    elbo(g, mu, lv, target, beta, samples, rng, &mut |g, z| net.decode(g, store, z))
}

/// The ELBO penalty for an arbitrary decoder, given the posterior `mu` and
/// `logvar` rows.
#[allow(clippy::too_many_arguments)]
pub fn elbo<T: Real>(
    g: &mut Graph<T>,
    mu: Var,
    lv: Var,
    target: &[T],
    beta: f64,
    samples: usize,
    rng: &mut Rng,
    decode: &mut dyn FnMut(&mut Graph<T>, Var) -> Result<Var>,
) -> Result<VaeParts> {
    if samples == 0 {
        return Err(Error::invalid("need at least one latent sample"));
    }
    let kl_rows = g.kl_std_normal(mu, lv)?;
    let kl = g.mean(kl_rows);
    let half = g.scale(lv, 0.5);
    let sd = g.exp(half);
    let n = g.value(mu).len();
    let mut rows = Vec::with_capacity(samples);
    for _ in 0..samples {
        let eps: Vec<T> = (0..n).map(|_| T::of(StandardNormal.sample(rng))).collect();
        let noise = g.mul_const(sd, eps)?;
        let z = g.add(mu, noise)?;
        let y = decode(g, z)?;
        let r = g.mse_rows(y, target.to_vec())?;
        rows.push(g.scale(r, 1.0 / samples as f64));
    }
    let mut row_mse = rows[0];
    for &r in &rows[1..] {
        row_mse = g.add(row_mse, r)?;
    }
    let mse = g.mean(row_mse);
    let loss = g.weighted_sum(&[(kl, beta), (mse, 1.0)])?;
    let (kl_v, mse_v) = (g.scalar(kl).f64(), g.scalar(mse).f64());
    Ok(VaeParts { loss, kl: kl_v, mse: mse_v, row_mse })
}

/// `lambda * mean(max(0, margin - row_mse))`.
pub fn vae_oe_hinge<T: Real>(g: &mut Graph<T>, row_mse: Var, margin: f64, lambda: f64) -> Result<Var> {
    let neg = g.scale(row_mse, -1.0);
    let gap = g.add_scalar(neg, margin);
    let h = g.relu(gap);
    let m = g.mean(h);
    Ok(g.scale(m, lambda))
}

/// Reconstruction error with `z = mu`, one value per folded row.
pub fn vae_row_errors<T: Real>(g: &mut Graph<T>, store: &mut ParamStore<T>, net: &VaeNet, x: Var, target: &[T]) -> Result<Vec<f64>> {
    let (mu, _) = net.encode(g, store, x)?;
    let y = net.decode(g, store, mu)?;
    let r = g.mse_rows(y, target.to_vec())?;
    Ok(g.value(r).iter().map(|v| v.f64()).collect())
}
