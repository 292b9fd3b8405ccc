use rand::seq::index::sample;
use rand::Rng as _;

use super::C64;
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Multi-tone interferer: `a * sum_j e^{j (2 pi f_j t + phi_j)}` with tones
/// on `q` distinct subcarrier centres `f_j = bin_j / k`.
#[derive(Clone, Debug, PartialEq)]
pub struct MtiSpec {
    pub a: f64,
    pub k: usize,
    pub bins: Vec<usize>,
    pub phases: Vec<f64>,
}

impl MtiSpec {
    /// `q` uniform on `[k/8, k]`, bins without replacement, phases uniform.
    pub fn draw(k: usize, rng: &mut Rng) -> Self {
        let q = rng.random_range(k / 8..=k);
        let mut bins = sample(rng, k, q).into_vec();
        bins.sort_unstable();
        let phases = (0..q).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        Self { a: 1.0, k, bins, phases }
    }

    pub fn q(&self) -> usize {
        self.bins.len()
    }

    /// Fraction of the `k` subcarriers covered by tones.
    pub fn rho(&self) -> f64 {
        self.q() as f64 / self.k as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins.len() != self.phases.len() {
            return Err(Error::invalid("one phase per tone required"));
        }
        let mut seen = vec![false; self.k];
        for &b in &self.bins {
            if b >= self.k || std::mem::replace(&mut seen[b], true) {
                return Err(Error::invalid(format!("tone bin {b} out of range or repeated")));
            }
        }
        Ok(())
    }
}

/// The waveform is periodic in `k`, so one period is built from a table of
/// roots of unity and tiled.
pub fn synth_mti(spec: &MtiSpec, n_samples: usize) -> Result<Vec<C64>> {
    spec.validate()?;
    let k = spec.k;
    let roots: Vec<C64> = (0..k).map(|i| C64::from_polar(1.0, std::f64::consts::TAU * i as f64 / k as f64)).collect();
    let mut period = vec![C64::default(); k];
    for (&b, &phi) in spec.bins.iter().zip(&spec.phases) {
        let c = C64::from_polar(spec.a, phi);
        for (t, z) in period.iter_mut().enumerate() {
            *z += c * roots[(b * t) % k];
        }
    }
    Ok((0..n_samples).map(|t| period[t % k]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use crate::signal::dft;

    #[test]
    fn empty_sum_is_zero() {
        let s = MtiSpec { a: 1.0, k: 64, bins: vec![], phases: vec![] };
        assert!(synth_mti(&s, 100).unwrap().iter().all(|z| *z == C64::default()));
    }

    #[test]
    fn single_tone_lands_in_its_bin() {
        let s = MtiSpec { a: 1.0, k: 64, bins: vec![3], phases: vec![0.0] };
        let mut x = synth_mti(&s, 64).unwrap();
        dft(&mut x);
        let total: f64 = x.iter().map(|c| c.norm_sqr()).sum();
        assert!(x[3].norm_sqr() / total > 1.0 - 1e-12);
    }

    #[test]
    fn matches_direct_evaluation() {
        let s = MtiSpec::draw(64, &mut rng_from(8));
        let x = synth_mti(&s, 200).unwrap();
        for (t, z) in x.iter().enumerate() {
            let direct: C64 = s
                .bins
                .iter()
                .zip(&s.phases)
                .map(|(&b, &p)| C64::from_polar(1.0, std::f64::consts::TAU * b as f64 * t as f64 / 64.0 + p))
                .sum();
            assert!((z - direct).norm() < 1e-9);
        }
    }

    #[test]
    fn draws_are_valid() {
        let mut rng = rng_from(4);
        for _ in 0..500 {
            let s = MtiSpec::draw(64, &mut rng);
            assert!((8..=64).contains(&s.q()));
            s.validate().unwrap();
            assert!(s.phases.iter().all(|p| (0.0..std::f64::consts::TAU).contains(p)));
        }
    }
}
