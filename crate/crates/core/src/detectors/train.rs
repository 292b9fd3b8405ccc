//! Training loops shared by the four detectors.

use std::time::Instant;

use rand::seq::SliceRandom;

use super::ar::ar_nll_elems;
use super::dml::dml_loss;
use super::inputs::{ar_input, AR_CHANNELS, cp_echo, iq_batch, occupancy, seq_batch, vae_batch, with_occupancy};
use super::msp::msp_loss;
use super::vae::{vae_loss, vae_oe_hinge};
use super::{Detector, Net};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::optim::{cosine_lr, OptimizerConfig};
use crate::nn::{Graph, ModelKind, OptimizerState, ParamStore, Real, Var};
use crate::seed::{derive, rng_from};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    /// `main` or `background`.
    pub phase: &'static str,
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub parts: Vec<(&'static str, f64)>,
    pub seconds: f64,
}

impl LogRow {
    pub fn line(&self) -> String {
        let parts: Vec<String> = self.parts.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
        format!("{} step={} lr={:.3e} loss={:.6} {} t={:.1}s", self.phase, self.step, self.lr, self.loss, parts.join(" "), self.seconds)
    }
}

pub struct Trained<T: Real = f32> {
    pub detector: Detector<T>,
    /// Main optimizer, then the background optimizer when there is one.
    pub optimizers: Vec<OptimizerState>,
    pub log: Vec<LogRow>,
}

/// Epoch-wise shuffled minibatches, reproducible from `(seed, step)`.
struct Sampler {
    n: usize,
    b: usize,
    seed: u64,
    cache: Option<(usize, Vec<usize>)>,
}

impl Sampler {
    fn new(n: usize, b: usize, seed: u64) -> Self {
        Self { n, b, seed, cache: None }
    }

    fn batch(&mut self, step: u64) -> Vec<usize> {
        let start = step as usize * self.b;
        (start..start + self.b)
            .map(|p| {
                let epoch = p / self.n;
                if self.cache.as_ref().is_none_or(|c| c.0 != epoch) {
                    let mut perm: Vec<usize> = (0..self.n).collect();
                    perm.shuffle(&mut rng_from(derive(self.seed, &[epoch as u64])));
                    self.cache = Some((epoch, perm));
                }
                self.cache.as_ref().unwrap().1[p % self.n]
            })
            .collect()
    }
}

const MAIN: u64 = 0x6d61;
const BACKGROUND: u64 = 0x6267;
const OE_STREAM: u64 = 0x6f65;

/// Train `det` on `din` (plus `oe` when outlier exposure is active) until
/// its configured step count. Passing the optimizer states of a checkpoint
/// resumes where it stopped.
pub fn train<T: Real>(
    det: Detector<T>,
    optimizers: Vec<OptimizerState>,
    din: &Dataset,
    oe: Option<&Dataset>,
    on_log: &mut dyn FnMut(&LogRow),
) -> Result<Trained<T>> {
    let steps = det.config.steps;
    train_until(det, optimizers, din, oe, steps, on_log)
}

/// Like [`train`] but stops once the main optimizer has taken `until` steps.
/// The background model is trained only when the main run completes.
pub fn train_until<T: Real>(
    mut det: Detector<T>,
    mut optimizers: Vec<OptimizerState>,
    din: &Dataset,
    oe: Option<&Dataset>,
    until: u64,
    on_log: &mut dyn FnMut(&LogRow),
) -> Result<Trained<T>> {
    let cfg = det.config.clone();
    let until = until.min(cfg.steps);
    if din.is_empty() {
        return Err(Error::Training("empty in-distribution dataset".into()));
    }
    det.check_dataset(din)?;
    let oe = if cfg.oe.active() {
        let d = oe.ok_or_else(|| Error::Training("outlier exposure needs an outlier dataset".into()))?;
        if d.is_empty() {
            return Err(Error::Training("empty outlier dataset".into()));
        }
        det.check_dataset(d)?;
        Some(d)
    } else {
        None
    };
    let opt_cfg = OptimizerConfig { kind: cfg.optimizer_kind(), ..OptimizerConfig::adam(cfg.learning_rate()) };
    if optimizers.is_empty() {
        optimizers.push(OptimizerState::new(opt_cfg, &det.store)?);
    }
    if let (Some(bg), 1) = (&det.background, optimizers.len()) {
        optimizers.push(OptimizerState::new(opt_cfg, bg)?);
    }
    let mut log = Vec::new();
    let clock = Instant::now();
    let mut emit = |row: LogRow, log: &mut Vec<LogRow>| {
        on_log(&row);
        log.push(row);
    };

    let mut ids = Sampler::new(din.len(), cfg.batch_size, derive(cfg.seed, &[MAIN]));
    let n_oe = ((cfg.batch_size as f64 * cfg.oe.batch_fraction).round() as usize).max(1);
    let mut oes = oe.map(|d| Sampler::new(d.len(), n_oe, derive(cfg.seed, &[OE_STREAM])));
    let opt = &mut optimizers[0];
    while opt.step < until {
        let step = opt.step;
        let lr = cosine_lr(cfg.learning_rate(), cfg.lr_floor, step, cfg.steps);
        let id_idx = ids.batch(step);
        let oe_idx = match (&mut oes, oe) {
            (Some(s), Some(_)) => s.batch(step),
            _ => Vec::new(),
        };
        det.store.zero_grad();
        let (loss, parts) = main_step(&mut det, din, oe, &id_idx, &oe_idx, derive(cfg.seed, &[MAIN, step]))?;
        opt.set_lr(lr);
        opt.step(&mut det.store)?;
        if opt.step % cfg.log_every.max(1) == 0 || opt.step == cfg.steps {
            emit(LogRow { phase: "main", step: opt.step, lr, loss, parts, seconds: clock.elapsed().as_secs_f64() }, &mut log);
        }
    }

    if until < cfg.steps {
        return Ok(Trained { detector: det, optimizers, log });
    }
    if let (Some(bg), Some(oe)) = (det.background.as_mut(), oe) {
        let Net::Ar(net) = &det.net else { unreachable!("only the autoregressive model has a background") };
        let net = net.clone();
        let mask = cp_echo(&det.ofdm);
        let l = det.ofdm.block_size();
        let mut s = Sampler::new(oe.len(), cfg.batch_size, derive(cfg.seed, &[BACKGROUND]));
        let opt = &mut optimizers[1];
        while opt.step < cfg.background_steps {
            let step = opt.step;
            let lr = cosine_lr(cfg.learning_rate(), cfg.lr_floor, step, cfg.background_steps);
            let idx = s.batch(step);
            bg.zero_grad();
            let mut g = Graph::<T>::new(true, derive(cfg.seed, &[BACKGROUND, step]));
            let loss = ar_loss(&mut g, bg, &net, &iq_batch::<T>(oe, &idx), &mask, det.ofdm.k, idx.len(), l)?;
            let v = finite(g.scalar(loss).f64(), step)?;
            g.backward(loss, bg)?;
            opt.set_lr(lr);
            opt.step(bg)?;
            if opt.step % cfg.log_every.max(1) == 0 || opt.step == cfg.background_steps {
                emit(
                    LogRow { phase: "background", step: opt.step, lr, loss: v, parts: vec![("nll", v)], seconds: clock.elapsed().as_secs_f64() },
                    &mut log,
                );
            }
        }
    }
    Ok(Trained { detector: det, optimizers, log })
}

fn finite(v: f64, step: u64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Training(format!("loss became non-finite at step {step}")))
    }
}

fn ar_loss<T: Real>(g: &mut Graph<T>, store: &mut ParamStore<T>, net: &super::ar::ArNet, x: &[T], mask: &[f32], lag: usize, b: usize, l: usize) -> Result<Var> {
    let input = g.input_data(vec![b, AR_CHANNELS, l], ar_input(x, mask, lag));
    let e = ar_nll_elems(g, store, net, input, x.to_vec())?;
    Ok(g.mean(e))
}

/// Forward, loss and backward for one minibatch of the main model.
fn main_step<T: Real>(
    det: &mut Detector<T>,
    din: &Dataset,
    oe: Option<&Dataset>,
    id_idx: &[usize],
    oe_idx: &[usize],
    seed: u64,
) -> Result<(f64, Vec<(&'static str, f64)>)> {
    let cfg = &det.config;
    let mask = occupancy(&det.ofdm);
    let l = det.ofdm.k * det.ofdm.n_symbols;
    let labels: Vec<usize> = id_idx.iter().map(|&i| din.label(i)).collect();
    let mut g = Graph::<T>::new(true, seed);
    let seq_input = |g: &mut Graph<T>| -> Result<Var> {
        let mut x = seq_batch::<T>(din, id_idx)?;
        if let Some(o) = oe {
            x.extend(seq_batch::<T>(o, oe_idx)?);
        }
        Ok(g.input_data(vec![id_idx.len() + oe_idx.len(), 3, l], with_occupancy(&x, &mask)))
    };
    let lambda = cfg.oe.lambda;
    let (loss, parts) = match &det.net {
        Net::Msp(n) => {
            let x = seq_input(&mut g)?;
            let z = n.logits(&mut g, &mut det.store, x)?;
            let (loss, ce, u) = msp_loss(&mut g, z, &labels, oe_idx.len(), lambda)?;
            let mut parts = vec![("ce", ce)];
            if !oe_idx.is_empty() {
                parts.push(("oe_ce", u));
            }
            (loss, parts)
        }
        Net::Dml(n) => {
            let x = seq_input(&mut g)?;
            let e = n.embed(&mut g, &mut det.store, x)?;
            let loss = dml_loss(&mut g, &det.store, n, e, &labels, oe_idx.len(), cfg.alpha, cfg.delta, lambda)?;
            let v = g.scalar(loss).f64();
            (loss, vec![("proxy_anchor", v)])
        }
        Net::Vae(n) => {
            let rows = det.ofdm.n_symbols;
            let (x, p) = vae_batch::<T>(din, id_idx)?;
            let xv = g.input_data(vec![id_idx.len() * rows, 2, det.ofdm.k], x);
            let mut rng = rng_from(derive(seed, &[1]));
            let parts = vae_loss(&mut g, &mut det.store, n, xv, &p, cfg.beta, cfg.mc_samples, &mut rng)?;
            let rid = det.running_mse.expect("vae tracks its reconstruction error");
            let running = det.store.get(rid).data()[0].f64();
            let running = if running > 0.0 { running } else { parts.mse };
            let mut out = vec![("kl", parts.kl), ("mse", parts.mse)];
            let mut loss = parts.loss;
            if let Some(o) = oe {
                let (xo, po) = vae_batch::<T>(o, oe_idx)?;
                let xo = g.input_data(vec![oe_idx.len() * rows, 2, det.ofdm.k], xo);
                let (mu, _) = n.encode(&mut g, &mut det.store, xo)?;
                let y = n.decode(&mut g, &mut det.store, mu)?;
                let r = g.mse_rows(y, po)?;
                let h = vae_oe_hinge(&mut g, r, cfg.margin_factor * running, lambda)?;
                out.push(("oe_hinge", g.scalar(h).f64()));
                loss = g.add(loss, h)?;
            }
            let updated = 0.95 * running + 0.05 * parts.mse;
            det.store.get_mut(rid).data_mut()[0] = T::of(updated);
            (loss, out)
        }
        Net::Ar(n) => {
            let x = iq_batch::<T>(din, id_idx);
            let loss = ar_loss(&mut g, &mut det.store, n, &x, &cp_echo(&det.ofdm), det.ofdm.k, id_idx.len(), det.ofdm.block_size())?;
            let v = g.scalar(loss).f64();
            (loss, vec![("nll", v)])
        }
    };
    let v = finite(g.scalar(loss).f64(), 0)?;
    g.backward(loss, &mut det.store)?;
    Ok((v, parts))
}

impl ModelKind {
    /// Loss components reported in training logs.
    pub fn loss_parts(self) -> &'static [&'static str] {
        match self {
            ModelKind::Msp => &["ce", "oe_ce"],
            ModelKind::Dml => &["proxy_anchor"],
            ModelKind::Vae => &["kl", "mse", "oe_hinge"],
            ModelKind::Ar => &["nll"],
        }
    }
}
