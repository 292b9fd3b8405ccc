//! Batch assembly from datasets.

use crate::dataset::{freq_sequence, Dataset};
use crate::error::Result;
use crate::nn::Real;
use crate::signal::ofdm::OfdmConfig;
use crate::signal::C64;

/// 1 on data-bearing bins, 0 on null bins, for every position of the
/// frequency-domain sequence.
pub fn occupancy(cfg: &OfdmConfig) -> Vec<f32> {
    let mut row = vec![0.0; cfg.k];
    cfg.active_bins().into_iter().for_each(|b| row[b] = 1.0);
    row.repeat(cfg.n_symbols)
}

/// 1 on the last `cp_len` samples of every symbol, which repeat the sample
/// `k` positions earlier through the cyclic prefix; 0 elsewhere.
pub fn cp_echo(cfg: &OfdmConfig) -> Vec<f32> {
    let row: Vec<f32> = (0..cfg.symbol_len()).map(|t| if t >= cfg.k { 1.0 } else { 0.0 }).collect();
    row.repeat(cfg.n_symbols)
}

/// `[B, 2, N]` time-domain samples (I row, then Q row) of the listed examples.
pub fn iq_batch<T: Real>(ds: &Dataset, idx: &[usize]) -> Vec<T> {
    let n = ds.spec.block_size();
    let mut out = Vec::with_capacity(idx.len() * 2 * n);
    for &i in idx {
        let ex = ds.example(i);
        for c in 0..2 {
            out.extend(ex.iter().skip(c).step_by(2).map(|&v| T::of(v as f64)));
        }
    }
    out
}

/// `[B, 2, L]` frequency-domain sequences of the listed examples.
pub fn seq_batch<T: Real>(ds: &Dataset, idx: &[usize]) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(idx.len() * 2 * ds.spec.ofdm.n_symbols * ds.spec.ofdm.k);
    for &i in idx {
        out.extend(freq_sequence(ds.example(i), &ds.spec.ofdm)?.into_iter().map(|x| T::of(x as f64)));
    }
    Ok(out)
}

/// Append the occupancy channel: `[B, 2, L] -> [B, 3, L]`.
pub fn with_occupancy<T: Real>(x: &[T], mask: &[f32]) -> Vec<T> {
    let l = mask.len();
    let mut out = Vec::with_capacity(x.len() / 2 * 3);
    for ex in x.chunks_exact(2 * l) {
        out.extend_from_slice(ex);
        out.extend(mask.iter().map(|&m| T::of(m as f64)));
    }
    out
}

/// Channels produced by [`ar_input`].
pub const AR_CHANNELS: usize = 5;

/// Autoregressive input: data delayed one step with a zero start token, an
/// undelayed structure channel such as [`cp_echo`], and the data `lag` steps
/// back gated by that channel. `[B, 2, L] -> [B, 5, L]`.
pub fn ar_input<T: Real>(x: &[T], mask: &[f32], lag: usize) -> Vec<T> {
    let l = mask.len();
    let mut out = Vec::with_capacity(x.len() / 2 * AR_CHANNELS);
    for ex in x.chunks_exact(2 * l) {
        for c in 0..2 {
            out.push(T::zero());
            out.extend_from_slice(&ex[c * l..(c + 1) * l - 1]);
        }
        out.extend(mask.iter().map(|&m| T::of(m as f64)));
        for c in 0..2 {
            out.extend((0..l).map(|t| if t >= lag && lag > 0 { ex[c * l + t - lag] * T::of(mask[t] as f64) } else { T::zero() }));
        }
    }
    out
}

/// VAE batch: per-symbol spectra folded to `[B * n_symbols, 2, k]` and their
/// magnitude spectra `[B * n_symbols, k]`.
///
/// Each symbol is derotated by the phase of `sum(X * |X|^2)` and every
/// example is scaled to unit mean power, so both tensors are unchanged by a
/// global phase rotation or gain of the IQ samples.
pub fn vae_batch<T: Real>(ds: &Dataset, idx: &[usize]) -> Result<(Vec<T>, Vec<T>)> {
    let cfg = &ds.spec.ofdm;
    let (k, l) = (cfg.k, cfg.k * cfg.n_symbols);
    let mut x = Vec::with_capacity(idx.len() * 2 * l);
    let mut p = Vec::with_capacity(idx.len() * l);
    for &i in idx {
        let f = freq_sequence(ds.example(i), cfg)?;
        let z: Vec<C64> = (0..l).map(|t| C64::new(f[t] as f64, f[l + t] as f64)).collect();
        let ms = z.iter().map(|v| v.norm_sqr()).sum::<f64>() / l as f64;
        let s = if ms > 0.0 { 1.0 / ms.sqrt() } else { 0.0 };
        for row in z.chunks_exact(k) {
            let r: C64 = row.iter().map(|v| v * v.norm_sqr()).sum();
            let rot = if r.norm() > 0.0 { r.conj() / r.norm() * s } else { C64::new(s, 0.0) };
            x.extend(row.iter().map(|v| T::of((v * rot).re)));
            x.extend(row.iter().map(|v| T::of((v * rot).im)));
            p.extend(row.iter().map(|v| T::of(v.norm() * s)));
        }
    }
    Ok((x, p))
}
