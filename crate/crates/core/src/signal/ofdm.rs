use rand::Rng as _;

use super::modulation::{map_symbols, ModScheme};
use super::{idft, normalize_power, rotate, C64};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// OFDM framing. Subcarrier spacing is `1/k` cycles/sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OfdmConfig {
    pub k: usize,
    pub cp_len: usize,
    pub n_symbols: usize,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self { k: 64, cp_len: 16, n_symbols: 12 }
    }
}

impl OfdmConfig {
    pub fn symbol_len(&self) -> usize {
        self.k + self.cp_len
    }

    pub fn block_size(&self) -> usize {
        self.symbol_len() * self.n_symbols
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 8 || self.n_symbols == 0 || self.cp_len > self.k {
            return Err(Error::invalid(format!("bad OFDM config {self:?}")));
        }
        Ok(())
    }

    /// Data-bearing bins: DC and the band-edge guard bins stay empty, as in
    /// 802.11a (26 bins either side of DC for K = 64).
    pub fn active_bins(&self) -> Vec<usize> {
        let half = self.k * 13 / 32;
        (1..=half).chain(self.k - half..self.k).collect()
    }
}

/// Samplewise impairments `a e^{j theta} e^{j 2 pi cfo t}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImpairmentSpec {
    pub a: f64,
    pub theta: f64,
    /// Carrier frequency offset, cycles/sample.
    pub cfo: f64,
    /// Timing offset in symbols; only 0 is supported.
    pub eps: f64,
}

impl Default for ImpairmentSpec {
    fn default() -> Self {
        Self { a: 1.0, theta: 0.0, cfo: 0.0, eps: 0.0 }
    }
}

impl ImpairmentSpec {
    pub const CFO_RANGE: f64 = 1e-3;

    /// Phase uniform on `[0, 2 pi)`, CFO uniform on `[-1e-3, 1e-3]`.
    pub fn draw(rng: &mut Rng) -> Self {
        Self {
            a: 1.0,
            theta: rng.random_range(0.0..std::f64::consts::TAU),
            cfo: rng.random_range(-Self::CFO_RANGE..=Self::CFO_RANGE),
            eps: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !(0.0..std::f64::consts::TAU).contains(&self.theta) || !self.cfo.is_finite() {
            return Err(Error::invalid(format!("bad impairment {self:?}")));
        }
        if self.eps != 0.0 {
            return Err(Error::invalid("timing offsets are not modelled; eps must be 0"));
        }
        Ok(())
    }

    pub fn apply(&self, x: &mut [C64]) -> Result<()> {
        self.validate()?;
        if self.a != 1.0 || self.theta != 0.0 || self.cfo != 0.0 {
            rotate(x, self.a, self.theta, self.cfo);
        }
        Ok(())
    }
}

/// Time-domain samples from a `[n_symbols][k]` subcarrier grid: one inverse
/// DFT per symbol with the cyclic prefix prepended. No power normalization.
pub fn synth_from_grid(cfg: &OfdmConfig, grid: &[Vec<C64>]) -> Result<Vec<C64>> {
    cfg.validate()?;
    if grid.len() != cfg.n_symbols || grid.iter().any(|r| r.len() != cfg.k) {
        return Err(Error::shape(format!("grid must be {} x {}", cfg.n_symbols, cfg.k)));
    }
    let mut out = Vec::with_capacity(cfg.block_size());
    let mut buf = vec![C64::default(); cfg.k];
    for row in grid {
        buf.copy_from_slice(row);
        idft(&mut buf);
        out.extend_from_slice(&buf[cfg.k - cfg.cp_len..]);
        out.extend_from_slice(&buf);
    }
    Ok(out)
}

/// Random data symbols on the active bins.
pub fn random_grid(cfg: &OfdmConfig, scheme: ModScheme, rng: &mut Rng) -> Vec<Vec<C64>> {
    let active = cfg.active_bins();
    let nb = scheme.bits_per_symbol();
    (0..cfg.n_symbols)
        .map(|_| {
            let bits: Vec<u8> = (0..active.len() * nb).map(|_| rng.random_range(0..2u8)).collect();
            let syms = map_symbols(&bits, scheme).expect("bit count is a multiple of the symbol size");
            let mut row = vec![C64::default(); cfg.k];
            for (&b, s) in active.iter().zip(syms) {
                row[b] = s;
            }
            row
        })
        .collect()
}

/// One packet: random symbols, normalized to unit power, then impaired.
pub fn synth_ofdm_packet(cfg: &OfdmConfig, scheme: ModScheme, imp: &ImpairmentSpec, rng: &mut Rng) -> Result<(Vec<C64>, Vec<Vec<C64>>)> {
    imp.validate()?;
    let grid = random_grid(cfg, scheme, rng);
    let mut x = synth_from_grid(cfg, &grid)?;
    normalize_power(&mut x);
    imp.apply(&mut x)?;
    Ok((x, grid))
}

/// Strip cyclic prefixes and take a `k`-point DFT of every symbol.
pub fn symbol_spectra(cfg: &OfdmConfig, x: &[C64]) -> Result<Vec<Vec<C64>>> {
    if x.len() != cfg.block_size() {
        return Err(Error::shape(format!("expected {} samples, got {}", cfg.block_size(), x.len())));
    }
    Ok(x.chunks(cfg.symbol_len())
        .map(|s| {
            let mut b = s[cfg.cp_len..].to_vec();
            super::dft(&mut b);
            b
        })
        .collect())
}
