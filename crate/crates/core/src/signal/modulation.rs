use std::fmt;

use super::C64;
use crate::error::{Error, Result};

/// Victim subcarrier modulation. Points are Gray-mapped per axis with bit 0
/// on the positive side and scaled to unit average energy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModScheme {
    Bpsk,
    Qpsk,
    Qam16,
    Qam64,
}

impl ModScheme {
    pub const ALL: [ModScheme; 4] = [ModScheme::Bpsk, ModScheme::Qpsk, ModScheme::Qam16, ModScheme::Qam64];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or_else(|| Error::invalid(format!("modulation index {i} out of range")))
    }

    pub fn name(self) -> &'static str {
        match self {
            ModScheme::Bpsk => "bpsk",
            ModScheme::Qpsk => "qpsk",
            ModScheme::Qam16 => "qam16",
            ModScheme::Qam64 => "qam64",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown modulation '{s}'")))
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            ModScheme::Bpsk => 1,
            ModScheme::Qpsk => 2,
            ModScheme::Qam16 => 4,
            ModScheme::Qam64 => 6,
        }
    }

    /// Bits carried on each of I and Q (BPSK uses I only).
    fn axis_bits(self) -> usize {
        match self {
            ModScheme::Bpsk => 1,
            m => m.bits_per_symbol() / 2,
        }
    }

    /// Scale that brings the odd-integer lattice to unit average energy.
    pub fn norm(self) -> f64 {
        match self {
            ModScheme::Bpsk => 1.0,
            ModScheme::Qpsk => 1.0 / 2f64.sqrt(),
            ModScheme::Qam16 => 1.0 / 10f64.sqrt(),
            ModScheme::Qam64 => 1.0 / 42f64.sqrt(),
        }
    }

    /// Every constellation point, indexed by its bit pattern (MSB first).
    pub fn constellation(self) -> Vec<C64> {
        let n = self.bits_per_symbol();
        (0..1usize << n)
            .map(|v| {
                let bits: Vec<u8> = (0..n).rev().map(|i| ((v >> i) & 1) as u8).collect();
                self.point(&bits)
            })
            .collect()
    }

    fn point(self, bits: &[u8]) -> C64 {
        let m = self.axis_bits();
        let i = pam_level(&bits[..m]);
        let q = if self == ModScheme::Bpsk { 0.0 } else { pam_level(&bits[m..]) };
        C64::new(i, q) * self.norm()
    }
}

impl fmt::Display for ModScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Gray-coded PAM on odd integers; all-zero bits map to the top level.
fn pam_level(bits: &[u8]) -> f64 {
    let m = bits.len();
    let g = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
    let mut idx = g;
    let mut shift = g >> 1;
    while shift > 0 {
        idx ^= shift;
        shift >>= 1;
    }
    ((1usize << m) - 1) as f64 - 2.0 * idx as f64
}

fn pam_bits(level: f64, m: usize) -> impl Iterator<Item = u8> {
    let top = ((1usize << m) - 1) as f64;
    let idx = ((top - level) / 2.0).round().clamp(0.0, top) as usize;
    let g = idx ^ (idx >> 1);
    (0..m).rev().map(move |i| ((g >> i) & 1) as u8)
}

pub fn map_symbols(bits: &[u8], scheme: ModScheme) -> Result<Vec<C64>> {
    let n = scheme.bits_per_symbol();
    if bits.len() % n != 0 {
        return Err(Error::invalid(format!("{} bits do not divide into {scheme} symbols of {n} bits", bits.len())));
    }
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return Err(Error::invalid(format!("bit value {b} is not 0 or 1")));
    }
    Ok(bits.chunks(n).map(|c| scheme.point(c)).collect())
}

/// Hard-decision nearest-point demapping.
pub fn demap_symbols(symbols: &[C64], scheme: ModScheme) -> Vec<u8> {
    let m = scheme.axis_bits();
    let s = 1.0 / scheme.norm();
    let mut out = Vec::with_capacity(symbols.len() * scheme.bits_per_symbol());
    for z in symbols {
        out.extend(pam_bits(z.re * s, m));
        if scheme != ModScheme::Bpsk {
            out.extend(pam_bits(z.im * s, m));
        }
    }
    out
}
