//! Browser bindings for a few interactive views of the workbench.

use ood_core::dataset::{interleave, preprocess, synth_example, DatasetKind, DatasetSpec, Interferer};
use ood_core::error::{Error, Result};
use ood_core::eval::{auroc, roc};
use ood_core::seed::rng_from;
use ood_core::signal::mti::{synth_mti, MtiSpec};
use ood_core::signal::ofdm::{symbol_spectra, OfdmConfig};
use ood_core::signal::{dft, lin_to_db, ModScheme, C64};
use rand::seq::index::sample;
use rand::Rng as _;
use wasm_bindgen::prelude::*;

const FLOOR_DB: f64 = -60.0;

fn kind_of(interferer: &str, channel: bool) -> Result<DatasetKind> {
    match interferer {
        "none" if !channel => Ok(DatasetKind::Din),
        "mti" if !channel => Ok(DatasetKind::DoutOe),
        "none" | "mti" => Err(Error::Usage("the channel only applies to test interferers".into())),
        other => Ok(DatasetKind::DoutTest { interferer: Interferer::parse(other)?, channel }),
    }
}

fn spec_at(sir_db: f64, snr_db: f64, n: usize, seed: u64) -> DatasetSpec {
    DatasetSpec { n_sir_bins: 1, sir_db: vec![sir_db], snr_db: [snr_db; 4], n_batches: 1, batch_size: n, base_seed: seed, ..Default::default() }
}

fn db(x: f64) -> f64 {
    if x > 0.0 {
        lin_to_db(x).max(FLOOR_DB)
    } else {
        FLOOR_DB
    }
}

/// Per-symbol power spectra `[n_symbols][k]` in dB of one synthesized packet,
/// normalized so the strongest bin is 0 dB.
pub fn packet_spectrum(modulation: usize, interferer: &str, channel: bool, sir_db: f64, snr_db: f64, seed: u64) -> Result<Vec<f32>> {
    ModScheme::from_index(modulation)?;
    let spec = spec_at(sir_db, snr_db, 1, seed);
    let (x, _) = synth_example(&spec, kind_of(interferer, channel)?, [modulation, 0, 0, 0])?;
    let view = preprocess(&interleave(&x), &spec.ofdm)?;
    let mags = view.magnitudes();
    let peak = mags.iter().fold(0.0f32, |a, &m| a.max(m)) as f64;
    Ok(mags.iter().map(|&m| db((m as f64 / peak).powi(2)) as f32).collect())
}

/// Power per subcarrier in dB of a multi-tone interferer with `q` tones.
pub fn mti_spectrum(q: usize, seed: u64) -> Result<Vec<f32>> {
    let k = OfdmConfig::default().k;
    if q == 0 || q > k {
        return Err(Error::Usage(format!("tone count must be in 1..={k}, got {q}")));
    }
    let mut rng = rng_from(seed);
    let mut bins = sample(&mut rng, k, q).into_vec();
    bins.sort_unstable();
    let phases = (0..q).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let mut x = synth_mti(&MtiSpec { a: 1.0, k, bins, phases }, k)?;
    dft(&mut x);
    let norm = (k * k) as f64;
    Ok(x.iter().map(|z| db(z.norm_sqr() / norm) as f32).collect())
}

/// ROC of a plain energy detector that measures power on the empty guard
/// and DC subcarriers. Returns `[auroc, fpr0, tpr0, fpr1, tpr1, ...]`.
pub fn guard_energy_roc(interferer: &str, channel: bool, sir_db: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 || n > 4096 {
        return Err(Error::Usage(format!("example count must be in 1..=4096, got {n}")));
    }
    let kind = kind_of(interferer, channel)?;
    let mut id = Vec::with_capacity(n);
    let mut ood = Vec::with_capacity(n);
    let spec = spec_at(sir_db, 15.0, n, seed);
    for i in 0..n {
        let c = [i % 4, 0, 0, i];
        id.push(guard_energy(&synth_example(&spec, DatasetKind::Din, c)?.0, &spec.ofdm)?);
        ood.push(guard_energy(&synth_example(&spec, kind, c)?.0, &spec.ofdm)?);
    }
    let curve = roc(&id, &ood)?;
    let mut out = vec![auroc(&curve)];
    out.extend(curve.points.iter().flat_map(|p| [p.fpr, p.tpr]));
    Ok(out)
}

fn guard_energy(x: &[C64], cfg: &OfdmConfig) -> Result<f64> {
    let rows = symbol_spectra(cfg, x)?;
    let active = cfg.active_bins();
    let guard: Vec<usize> = (0..cfg.k).filter(|b| !active.contains(b)).collect();
    let total: f64 = rows.iter().map(|r| guard.iter().map(|&b| r[b].norm_sqr()).sum::<f64>()).sum();
    Ok(total / (rows.len() * guard.len()) as f64)
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = packetSpectrum)]
pub fn packet_spectrum_js(modulation: usize, interferer: &str, channel: bool, sir_db: f64, snr_db: f64, seed: u32) -> std::result::Result<Vec<f32>, JsError> {
    js(packet_spectrum(modulation, interferer, channel, sir_db, snr_db, seed as u64))
}

#[wasm_bindgen(js_name = mtiSpectrum)]
pub fn mti_spectrum_js(q: usize, seed: u32) -> std::result::Result<Vec<f32>, JsError> {
    js(mti_spectrum(q, seed as u64))
}

#[wasm_bindgen(js_name = guardEnergyRoc)]
pub fn guard_energy_roc_js(interferer: &str, channel: bool, sir_db: f64, n: usize, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    js(guard_energy_roc(interferer, channel, sir_db, n, seed as u64))
}

#[wasm_bindgen(js_name = symbolShape)]
pub fn symbol_shape() -> Vec<u32> {
    let c = OfdmConfig::default();
    vec![c.n_symbols as u32, c.k as u32]
}
