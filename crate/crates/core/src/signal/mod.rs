//! Complex-baseband waveform synthesis.
//!
//! Sample rate is normalized to 1, so frequencies are in cycles/sample and an
//! OFDM subcarrier `k` sits at `k / K`.

pub mod channel;
pub mod dsss;
pub mod mix;
pub mod modulation;
pub mod mti;
pub mod ofdm;

use std::cell::RefCell;
use std::f64::consts::TAU;
use std::sync::Arc;

pub use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

pub use channel::ChannelModel;
pub use dsss::DsssSpec;
pub use mix::{mix, Mixed};
pub use modulation::ModScheme;
pub use mti::MtiSpec;
pub use ofdm::{ImpairmentSpec, OfdmConfig};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Unnormalized forward DFT, `X[k] = sum_n x[n] e^{-j 2 pi k n / N}`, in place.
pub fn dft(buf: &mut [C64]) {
    plan(buf.len(), false).process(buf);
}

/// Inverse DFT scaled by `1/N`, so `idft(dft(x)) == x`.
pub fn idft(buf: &mut [C64]) {
    plan(buf.len(), true).process(buf);
    let s = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|x| *x *= s);
}

/// Mean of `|x|^2`.
pub fn power(x: &[C64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|c| c.norm_sqr()).sum::<f64>() / x.len() as f64
}

pub fn scale(x: &mut [C64], s: f64) {
    x.iter_mut().for_each(|c| *c *= s);
}

/// Multiply by `a e^{j theta} e^{j 2 pi f t}` with `t` counted from zero.
pub fn rotate(x: &mut [C64], a: f64, theta: f64, f: f64) {
    for (t, c) in x.iter_mut().enumerate() {
        *c *= C64::from_polar(a, theta + TAU * f * t as f64);
    }
}

/// Scale `x` to unit average power. All-zero input stays zero.
pub fn normalize_power(x: &mut [C64]) {
    let p = power(x);
    if p > 0.0 {
        scale(x, 1.0 / p.sqrt());
    }
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
