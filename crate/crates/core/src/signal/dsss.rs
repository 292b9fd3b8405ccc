use rand::Rng as _;

use super::{rotate, C64};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// 802.11 DSSS Barker sequence.
pub const BARKER_11: [i8; 11] = [1, -1, 1, 1, -1, 1, 1, 1, -1, -1, -1];

/// DBPSK direct-sequence waveform with a rectangular chip pulse.
#[derive(Clone, Debug, PartialEq)]
pub struct DsssSpec {
    pub chips: Vec<i8>,
    /// Rectangular pulse width in samples.
    pub samples_per_chip: usize,
    pub a: f64,
    pub theta: f64,
    pub cfo: f64,
}

impl Default for DsssSpec {
    fn default() -> Self {
        Self { chips: BARKER_11.to_vec(), samples_per_chip: 1, a: 1.0, theta: 0.0, cfo: 0.0 }
    }
}

impl DsssSpec {
    pub fn validate(&self) -> Result<()> {
        if self.chips.is_empty() || self.chips.iter().any(|&c| c != 1 && c != -1) {
            return Err(Error::invalid("chips must be a non-empty +-1 sequence"));
        }
        if self.samples_per_chip == 0 || !(self.a > 0.0) {
            return Err(Error::invalid("samples_per_chip and amplitude must be positive"));
        }
        Ok(())
    }

    pub fn symbol_len(&self) -> usize {
        self.chips.len() * self.samples_per_chip
    }
}

/// Differential encoding `x_m = x_{m-1} d_m` from a reference `x_{-1} = +1`.
pub fn dbpsk_encode(data: &[i8]) -> Vec<i8> {
    let mut prev = 1i8;
    data.iter()
        .map(|&d| {
            prev *= d;
            prev
        })
        .collect()
}

/// Waveform for explicit `+-1` data bits (one per symbol).
pub fn synth_dsss_bits(spec: &DsssSpec, data: &[i8], n_samples: usize) -> Result<Vec<C64>> {
    spec.validate()?;
    let sl = spec.symbol_len();
    if n_samples < spec.chips.len() {
        return Err(Error::invalid(format!("need at least {} samples", spec.chips.len())));
    }
    if data.len() * sl < n_samples {
        return Err(Error::invalid(format!("{} data bits cannot fill {n_samples} samples", data.len())));
    }
    if data.iter().any(|&d| d != 1 && d != -1) {
        return Err(Error::invalid("data bits must be +-1"));
    }
    let x = dbpsk_encode(data);
    let mut out: Vec<C64> = (0..n_samples)
        .map(|t| {
            let chip = spec.chips[(t / spec.samples_per_chip) % spec.chips.len()];
            C64::new((chip * x[t / sl]) as f64, 0.0)
        })
        .collect();
    rotate(&mut out, spec.a, spec.theta, spec.cfo);
    Ok(out)
}

pub fn synth_dsss(spec: &DsssSpec, n_samples: usize, rng: &mut Rng) -> Result<Vec<C64>> {
    let n_sym = n_samples.div_ceil(spec.symbol_len().max(1));
    let data: Vec<i8> = (0..n_sym).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    synth_dsss_bits(spec, &data, n_samples)
}
