use crate::error::{Error, Result};
use crate::signal::ofdm::{symbol_spectra, OfdmConfig};
use crate::signal::C64;

/// Per-symbol spectra `[n_symbols][2][k]` (real, imaginary), scaled so the
/// largest absolute value is 1.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralView {
    pub n_symbols: usize,
    pub k: usize,
    pub data: Vec<f32>,
}

impl SpectralView {
    /// Magnitude spectra `[n_symbols][k]`.
    pub fn magnitudes(&self) -> Vec<f32> {
        let k = self.k;
        self.data
            .chunks_exact(2 * k)
            .flat_map(|row| (0..k).map(move |b| row[b].hypot(row[k + b])))
            .collect()
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn spectra(iq: &[f32], cfg: &OfdmConfig) -> Result<Vec<Vec<C64>>> {
    if iq.len() != 2 * cfg.block_size() {
        return Err(Error::shape(format!("expected {} interleaved values, got {}", 2 * cfg.block_size(), iq.len())));
    }
    let x: Vec<C64> = iq.chunks_exact(2).map(|p| C64::new(p[0] as f64, p[1] as f64)).collect();
    symbol_spectra(cfg, &x)
}

/// Reshape to symbols, strip each cyclic prefix, transform, split into
/// real/imaginary channels and max-normalize. All-zero input gives zeros.
pub fn preprocess(iq: &[f32], cfg: &OfdmConfig) -> Result<SpectralView> {
    let rows = spectra(iq, cfg)?;
    let peak = rows.iter().flatten().fold(0.0f64, |m, z| m.max(z.re.abs()).max(z.im.abs()));
    let s = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    let mut data = Vec::with_capacity(rows.len() * 2 * cfg.k);
    for r in &rows {
        data.extend(r.iter().map(|z| (z.re * s) as f32));
        data.extend(r.iter().map(|z| (z.im * s) as f32));
    }
    Ok(SpectralView { n_symbols: cfg.n_symbols, k: cfg.k, data })
}

/// Scale applied by [`freq_sequence`]; makes the transform unitary.
pub fn freq_scale(k: usize) -> f64 {
    1.0 / (k as f64).sqrt()
}

/// Channel-major `[2][n_symbols * k]` sequence of CP-stripped symbol spectra
/// in symbol order, scaled by `1/sqrt(k)` without further normalization.
pub fn freq_sequence(iq: &[f32], cfg: &OfdmConfig) -> Result<Vec<f32>> {
    let rows = spectra(iq, cfg)?;
    let s = freq_scale(cfg.k);
    let mut out = Vec::with_capacity(2 * cfg.n_symbols * cfg.k);
    out.extend(rows.iter().flatten().map(|z| (z.re * s) as f32));
    out.extend(rows.iter().flatten().map(|z| (z.im * s) as f32));
    Ok(out)
}
