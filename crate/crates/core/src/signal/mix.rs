use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{db_to_lin, power, C64};
use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Mixed {
    pub samples: Vec<C64>,
    /// Amplitude factor applied to the interferer (0 when absent).
    pub interferer_scale: f64,
    pub signal_power: f64,
    pub interferer_power: f64,
    pub noise_power: f64,
}

/// Circular complex white Gaussian noise with exactly `p` average power.
pub fn awgn(n: usize, p: f64, rng: &mut Rng) -> Vec<C64> {
    let mut w: Vec<C64> = (0..n).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    let pw = power(&w);
    if pw > 0.0 {
        let s = (p / pw).sqrt();
        w.iter_mut().for_each(|z| *z *= s);
    }
    w
}

/// Add `interferer` at `sir_db` below `signal` and noise at `snr_db`.
///
/// Ratios are relative to the measured signal power. `f64::INFINITY` disables
/// the corresponding component. Noise is drawn from `rng` only when enabled.
pub fn mix(signal: &[C64], interferer: Option<&[C64]>, sir_db: f64, snr_db: f64, rng: &mut Rng) -> Result<Mixed> {
    let ps = power(signal);
    if !(ps > 0.0) {
        return Err(Error::invalid("signal has zero power"));
    }
    if sir_db.is_nan() || snr_db.is_nan() || sir_db == f64::NEG_INFINITY || snr_db == f64::NEG_INFINITY {
        return Err(Error::invalid(format!("unusable ratios sir={sir_db} snr={snr_db}")));
    }
    let mut out = signal.to_vec();
    let (mut scale, mut pi) = (0.0, 0.0);
    if sir_db.is_finite() {
        let i = interferer.ok_or_else(|| Error::invalid("finite SIR needs an interferer"))?;
        if i.len() != signal.len() {
            return Err(Error::shape(format!("interferer length {} vs signal {}", i.len(), signal.len())));
        }
        let p0 = power(i);
        if !(p0 > 0.0) {
            return Err(Error::invalid("zero-power interferer with finite SIR"));
        }
        pi = ps / db_to_lin(sir_db);
        scale = (pi / p0).sqrt();
        out.iter_mut().zip(i).for_each(|(o, z)| *o += z * scale);
    }
    let mut pn = 0.0;
    if snr_db.is_finite() {
        pn = ps / db_to_lin(snr_db);
        out.iter_mut().zip(awgn(signal.len(), pn, rng)).for_each(|(o, w)| *o += w);
    }
    Ok(Mixed { samples: out, interferer_scale: scale, signal_power: ps, interferer_power: pi, noise_power: pn })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use crate::signal::lin_to_db;

    fn unit(seed: u64) -> Vec<C64> {
        awgn(960, 1.0, &mut rng_from(seed))
    }

    #[test]
    fn zero_db_keeps_scale() {
        let m = mix(&unit(1), Some(&unit(2)), 0.0, f64::INFINITY, &mut rng_from(0)).unwrap();
        assert!((m.interferer_scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn twenty_db_power() {
        let s = unit(1);
        let i = unit(2);
        let m = mix(&s, Some(&i), 20.0, f64::INFINITY, &mut rng_from(0)).unwrap();
        let scaled: Vec<C64> = i.iter().map(|z| z * m.interferer_scale).collect();
        assert!((power(&scaled) - 0.01 * power(&s)).abs() < 1e-6);
    }

    #[test]
    fn noiseless_is_exact_sum() {
        let (s, i) = (unit(1), unit(2));
        let m = mix(&s, Some(&i), 6.0, f64::INFINITY, &mut rng_from(0)).unwrap();
        for t in 0..s.len() {
            assert_eq!(m.samples[t], s[t] + i[t] * m.interferer_scale);
        }
    }

    #[test]
    fn noise_power_is_exact() {
        let s = unit(1);
        let m = mix(&s, None, f64::INFINITY, 7.0, &mut rng_from(3)).unwrap();
        let n: Vec<C64> = m.samples.iter().zip(&s).map(|(a, b)| a - b).collect();
        assert!((lin_to_db(power(&s) / power(&n)) - 7.0).abs() < 1e-9);
    }

    #[test]
    fn silent_interferer_rejected() {
        let z = vec![C64::default(); 960];
        assert!(mix(&unit(1), Some(&z), 3.0, f64::INFINITY, &mut rng_from(0)).is_err());
    }
}
