use rand::Rng as _;
use rand_distr::StandardNormal;

use super::C64;
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Multipath channel applied by linear convolution.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelModel {
    None,
    /// Taps at integer sample `delays` with average powers `powers_db`; the
    /// profile is normalized to unit total power.
    TappedDelayLine { delays: Vec<usize>, powers_db: Vec<f64> },
}

impl ChannelModel {
    /// Indoor surrogate: five taps one sample apart, 3 dB decay per tap.
    pub fn indoor() -> Self {
        ChannelModel::TappedDelayLine { delays: vec![0, 1, 2, 3, 4], powers_db: vec![0.0, -3.0, -6.0, -9.0, -12.0] }
    }

    pub fn validate(&self) -> Result<()> {
        if let ChannelModel::TappedDelayLine { delays, powers_db } = self {
            if delays.is_empty() || delays.len() != powers_db.len() || powers_db.iter().any(|p| !p.is_finite()) {
                return Err(Error::invalid("tap delays and powers must be non-empty and equal length"));
            }
        }
        Ok(())
    }

    /// Linear tap powers summing to one.
    pub fn profile(&self) -> Vec<f64> {
        match self {
            ChannelModel::None => vec![1.0],
            ChannelModel::TappedDelayLine { powers_db, .. } => {
                let lin: Vec<f64> = powers_db.iter().map(|&p| super::db_to_lin(p)).collect();
                let s: f64 = lin.iter().sum();
                lin.into_iter().map(|p| p / s).collect()
            }
        }
    }

    /// Complex Gaussian tap gains with variances from [`Self::profile`].
    pub fn draw(&self, rng: &mut Rng) -> Result<Vec<(usize, C64)>> {
        self.validate()?;
        match self {
            ChannelModel::None => Ok(vec![(0, C64::new(1.0, 0.0))]),
            ChannelModel::TappedDelayLine { delays, .. } => Ok(delays
                .iter()
                .zip(self.profile())
                .map(|(&d, p)| {
                    let s = (p / 2.0).sqrt();
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    (d, C64::new(re * s, im * s))
                })
                .collect()),
        }
    }
}

/// `y[t] = sum_i g_i x[t - d_i]`, truncated to the input length.
pub fn apply_taps(x: &[C64], taps: &[(usize, C64)]) -> Vec<C64> {
    let mut y = vec![C64::default(); x.len()];
    for &(d, g) in taps {
        for t in d..x.len() {
            y[t] += g * x[t - d];
        }
    }
    y
}

pub fn apply_channel(x: &[C64], ch: &ChannelModel, rng: &mut Rng) -> Result<Vec<C64>> {
    match ch {
        ChannelModel::None => Ok(x.to_vec()),
        _ => Ok(apply_taps(x, &ch.draw(rng)?)),
    }
}
