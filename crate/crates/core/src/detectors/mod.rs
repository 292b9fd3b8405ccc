//! The four out-of-distribution detectors.
//!
//! Every detector maps a `[960, 2]` example to one score where larger means
//! more anomalous:
//!
//! * `msp`: `1 - max softmax` of a modulation classifier,
//! * `dml`: `1 - max cosine similarity` to the learned class proxies,
//! * `vae`: mean reconstruction error of per-symbol magnitude spectra,
//! * `ar`: negative log-likelihood of the time-domain samples, or with
//!   outlier exposure the likelihood ratio against a background model
//!   trained on multi-tone corrupted traffic.

pub mod ar;
pub mod backbone;
pub mod dml;
pub mod inputs;
pub mod msp;
mod scores;
mod train;
pub mod vae;

use serde::{Deserialize, Serialize};

pub use scores::{ScoreRow, ScoreTable};
pub use train::{train, train_until, LogRow, Trained};

use self::ar::{ar_nll_elems, ArNet, ArShape};
use self::backbone::BackboneShape;
use self::dml::{dml_scores, DmlNet};
use self::inputs::{ar_input, AR_CHANNELS, cp_echo, iq_batch, occupancy, seq_batch, vae_batch, with_occupancy};
use self::msp::{msp_scores, MspNet, N_CLASSES};
use self::vae::{vae_row_errors, VaeNet, VaeShape};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::layer::Layer;
use crate::nn::optim::OptimizerKind;
use crate::nn::{Checkpoint, Graph, ModelKind, OptimizerState, ParamId, ParamStore, Real};
use crate::seed::{derive, rng_from};
use crate::signal::ofdm::OfdmConfig;

/// Outlier-exposure settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OeConfig {
    pub enabled: bool,
    pub lambda: f64,
    /// Outlier examples per step as a fraction of the in-distribution batch.
    pub batch_fraction: f64,
}

impl Default for OeConfig {
    fn default() -> Self {
        Self { enabled: false, lambda: 0.5, batch_fraction: 0.5 }
    }
}

impl OeConfig {
    /// Whether outlier batches take part in training at all.
    pub fn active(&self) -> bool {
        self.enabled && self.lambda > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("OE lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 4.0) {
            return Err(Error::invalid(format!("OE batch fraction must be in (0, 4], got {}", self.batch_fraction)));
        }
        Ok(())
    }
}

/// Architecture and training hyperparameters of one detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub model: ModelKind,
    pub seed: u64,
    pub steps: u64,
    pub batch_size: usize,
    /// Defaults to 1e-3 for the VAE and 2e-3 otherwise.
    pub lr: Option<f64>,
    /// Defaults to RAdam for the VAE and Adam otherwise.
    pub optimizer: Option<OptimizerKind>,
    /// Final learning rate as a fraction of `lr` (cosine decay).
    pub lr_floor: f64,
    pub log_every: u64,

    pub stem: usize,
    pub width: usize,
    pub stride: usize,
    pub kernel: usize,
    pub dilations: Vec<[usize; 2]>,
    pub dropout: f64,

    pub embed_dim: usize,
    pub alpha: f64,
    pub delta: f64,

    pub latent: usize,
    pub vae_channels: [usize; 2],
    pub beta: f64,
    pub mc_samples: usize,
    /// Outlier hinge margin as a multiple of the running in-distribution error.
    pub margin_factor: f64,

    pub ar_width: usize,
    pub ar_kernel: usize,
    pub ar_dilations: Vec<[usize; 2]>,
    pub background_steps: u64,

    pub oe: OeConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Msp,
            seed: 0,
            steps: 400,
            batch_size: 64,
            lr: None,
            optimizer: None,
            lr_floor: 0.05,
            log_every: 25,
            stem: 32,
            width: 80,
            stride: 4,
            kernel: 3,
            dilations: vec![[1, 2], [4, 8]],
            dropout: 0.1,
            embed_dim: 64,
            alpha: 32.0,
            delta: 0.1,
            latent: 16,
            vae_channels: [8, 128],
            beta: 0.5,
            mc_samples: 1,
            margin_factor: 2.0,
            ar_width: 32,
            ar_kernel: 2,
            ar_dilations: vec![[1, 2], [4, 8], [16, 32]],
            background_steps: 40,
            oe: OeConfig::default(),
        }
    }
}

impl DetectorConfig {
    pub fn for_model(model: ModelKind) -> Self {
        Self { model, ..Self::default() }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr.unwrap_or(if self.model == ModelKind::Vae { 1e-3 } else { 2e-3 })
    }

    pub fn optimizer_kind(&self) -> OptimizerKind {
        self.optimizer.unwrap_or(if self.model == ModelKind::Vae { OptimizerKind::RAdam } else { OptimizerKind::Adam })
    }

    pub fn validate(&self) -> Result<()> {
        self.oe.validate()?;
        if self.batch_size == 0 || !(self.learning_rate() > 0.0) || !(0.0..=1.0).contains(&self.lr_floor) {
            return Err(Error::invalid("batch_size, lr and lr_floor must be positive / within [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.dropout) || self.mc_samples == 0 || !(self.beta >= 0.0) || !(self.margin_factor > 0.0) {
            return Err(Error::invalid("dropout, mc_samples, beta or margin_factor out of range"));
        }
        if self.alpha <= 0.0 || !(-1.0..1.0).contains(&self.delta) {
            return Err(Error::invalid("proxy-anchor alpha must be > 0 and delta in (-1, 1)"));
        }
        Ok(())
    }

    pub fn backbone_shape(&self) -> BackboneShape {
        BackboneShape {
            in_channels: 3,
            stem: self.stem,
            width: self.width,
            stride: self.stride,
            kernel: self.kernel,
            dilations: self.dilations.clone(),
            dropout: self.dropout,
        }
    }

    pub fn ar_shape(&self) -> ArShape {
        ArShape { in_channels: AR_CHANNELS, width: self.ar_width, kernel: self.ar_kernel, dilations: self.ar_dilations.clone(), dropout: self.dropout }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("detector config serializes")
    }

    pub fn from_text(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Usage(format!("bad detector config: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Net {
    Msp(MspNet),
    Dml(DmlNet),
    Vae(VaeNet),
    Ar(ArNet),
}

impl Net {
    pub fn layers(&self) -> Vec<&Layer> {
        match self {
            Net::Msp(n) => n.layers(),
            Net::Dml(n) => n.layers(),
            Net::Vae(n) => n.layers(),
            Net::Ar(n) => n.layers(),
        }
    }
}

/// A detector: architecture, parameters and (for the autoregressive model
/// with outlier exposure) the background twin.
#[derive(Clone, Debug, PartialEq)]
pub struct Detector<T: Real = f32> {
    pub config: DetectorConfig,
    pub ofdm: OfdmConfig,
    pub net: Net,
    pub store: ParamStore<T>,
    pub background: Option<ParamStore<T>>,
    /// Running in-distribution reconstruction error (VAE only).
    pub running_mse: Option<ParamId>,
}

const BACKGROUND_PREFIX: &str = "background.";

impl<T: Real> Detector<T> {
    /// Freshly initialized detector. The background twin is created when the
    /// config asks for an autoregressive model with active outlier exposure.
    pub fn new(config: &DetectorConfig, ofdm: &OfdmConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from(derive(config.seed, &[0x1417]));
        let mut store = ParamStore::new();
        let mut running_mse = None;
        let net = match config.model {
            ModelKind::Msp => Net::Msp(MspNet::build(&config.backbone_shape(), &mut store, &mut rng)?),
            ModelKind::Dml => Net::Dml(DmlNet::build(&config.backbone_shape(), config.embed_dim, &mut store, &mut rng)?),
            ModelKind::Vae => {
                let s = VaeShape { k: ofdm.k, channels: config.vae_channels, latent: config.latent };
                let n = VaeNet::build(&s, &mut store, &mut rng)?;
                running_mse = Some(store.push_const("vae.running_mse", &[1], 0.0, false));
                Net::Vae(n)
            }
            ModelKind::Ar => Net::Ar(ArNet::build(&config.ar_shape(), &mut store, &mut rng)?),
        };
        let background = if config.model == ModelKind::Ar && config.oe.active() {
            let mut bg = ParamStore::new();
            ArNet::build(&config.ar_shape(), &mut bg, &mut rng_from(derive(config.seed, &[0xB6])))?;
            Some(bg)
        } else {
            None
        };
        Ok(Self { config: config.clone(), ofdm: *ofdm, net, store, background, running_mse })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.model
    }

    pub fn n_params(&self) -> usize {
        self.store.n_trainable()
    }

    fn sequence_length(&self) -> usize {
        self.ofdm.k * self.ofdm.n_symbols
    }

    fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        if ds.spec.ofdm != self.ofdm {
            return Err(Error::data(format!(
                "dataset framing {:?} does not match the detector's {:?}",
                ds.spec.ofdm, self.ofdm
            )));
        }
        Ok(())
    }

    /// Scores of the listed examples in order, computed in inference mode.
    pub fn score(&mut self, ds: &Dataset, idx: &[usize]) -> Result<Vec<f64>> {
        self.check_dataset(ds)?;
        let mut out = Vec::with_capacity(idx.len());
        for chunk in idx.chunks(64) {
            out.extend(self.score_chunk(ds, chunk)?);
        }
        Ok(out)
    }

    fn score_chunk(&mut self, ds: &Dataset, idx: &[usize]) -> Result<Vec<f64>> {
        let b = idx.len();
        let l = self.sequence_length();
        let mask = occupancy(&self.ofdm);
        let mut g = Graph::<T>::inference();
        match &self.net {
            Net::Msp(n) => {
                let x = g.input_data(vec![b, 3, l], with_occupancy(&seq_batch::<T>(ds, idx)?, &mask));
                let z = n.logits(&mut g, &mut self.store, x)?;
                Ok(msp_scores(&to_f64(g.value(z)), N_CLASSES))
            }
            Net::Dml(n) => {
                let x = g.input_data(vec![b, 3, l], with_occupancy(&seq_batch::<T>(ds, idx)?, &mask));
                let e = n.embed(&mut g, &mut self.store, x)?;
                let p = to_f64(self.store.get(n.proxies).data());
                Ok(dml_scores(&to_f64(g.value(e)), &p, self.config.embed_dim))
            }
            Net::Vae(n) => {
                let (x, p) = vae_batch::<T>(ds, idx)?;
                let rows = self.ofdm.n_symbols;
                let xv = g.input_data(vec![b * rows, 2, self.ofdm.k], x);
                let errs = vae_row_errors(&mut g, &mut self.store, n, xv, &p)?;
                Ok(errs.chunks_exact(rows).map(|r| r.iter().sum::<f64>() / rows as f64).collect())
            }
            Net::Ar(n) => {
                let x = iq_batch::<T>(ds, idx);
                let n = n.clone();
                let (echo, len) = (cp_echo(&self.ofdm), self.ofdm.block_size());
                let sem = ar_sequence_nll(&n, &mut self.store, &x, &echo, self.ofdm.k, b, len)?;
                match &mut self.background {
                    None => Ok(sem),
                    Some(bg) => {
                        let back = ar_sequence_nll(&n, bg, &x, &echo, self.ofdm.k, b, len)?;
                        Ok(sem.iter().zip(&back).map(|(s, b)| s - b).collect())
                    }
                }
            }
        }
    }

    /// Predicted modulation per example (classifier only).
    pub fn predict(&mut self, ds: &Dataset, idx: &[usize]) -> Result<Vec<usize>> {
        let Net::Msp(n) = &self.net else {
            return Err(Error::invalid("only the classifier predicts labels"));
        };
        let n = n.clone();
        let l = self.sequence_length();
        let mask = occupancy(&self.ofdm);
        let mut out = Vec::new();
        for chunk in idx.chunks(64) {
            let mut g = Graph::<T>::inference();
            let x = g.input_data(vec![chunk.len(), 3, l], with_occupancy(&seq_batch::<T>(ds, chunk)?, &mask));
            let z = n.logits(&mut g, &mut self.store, x)?;
            out.extend(g.value(z).chunks_exact(N_CLASSES).map(|r| argmax(r)));
        }
        Ok(out)
    }

    /// Embeddings `[len(idx), embed_dim]` (metric-learning model only).
    pub fn embeddings(&mut self, ds: &Dataset, idx: &[usize]) -> Result<Vec<f64>> {
        let Net::Dml(n) = &self.net else {
            return Err(Error::invalid("only the metric-learning model has embeddings"));
        };
        let n = n.clone();
        let l = self.sequence_length();
        let mask = occupancy(&self.ofdm);
        let mut out = Vec::new();
        for chunk in idx.chunks(64) {
            let mut g = Graph::<T>::inference();
            let x = g.input_data(vec![chunk.len(), 3, l], with_occupancy(&seq_batch::<T>(ds, chunk)?, &mask));
            let e = n.embed(&mut g, &mut self.store, x)?;
            out.extend(to_f64(g.value(e)));
        }
        Ok(out)
    }

    pub fn proxies(&self) -> Option<Vec<f64>> {
        match &self.net {
            Net::Dml(n) => Some(to_f64(self.store.get(n.proxies).data())),
            _ => None,
        }
    }

    /// Per-example sequence NLL under the semantic model (autoregressive only).
    pub fn sequence_nll(&mut self, ds: &Dataset, idx: &[usize]) -> Result<Vec<f64>> {
        let Net::Ar(n) = &self.net else {
            return Err(Error::invalid("only the autoregressive model has a likelihood"));
        };
        self.check_dataset(ds)?;
        let n = n.clone();
        let echo = cp_echo(&self.ofdm);
        let mut out = Vec::new();
        for chunk in idx.chunks(64) {
            out.extend(ar_sequence_nll(&n, &mut self.store, &iq_batch::<T>(ds, chunk), &echo, self.ofdm.k, chunk.len(), self.ofdm.block_size())?);
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self, optimizers: Vec<OptimizerState>) -> Checkpoint {
        let mut params: ParamStore<f32> = self.store.cast();
        if let Some(bg) = &self.background {
            for e in bg.entries() {
                params.push(format!("{BACKGROUND_PREFIX}{}", e.name), e.tensor.cast());
            }
        }
        Checkpoint {
            kind: self.config.model,
            oe: self.config.oe.enabled,
            seed: self.config.seed,
            lambda: self.config.oe.lambda,
            beta: self.config.beta,
            config: format!("{}\n[framing]\nk = {}\ncp_len = {}\nn_symbols = {}\n", self.config.to_text(), self.ofdm.k, self.ofdm.cp_len, self.ofdm.n_symbols),
            layers: self.net.layers().into_iter().map(|l| (l.name.clone(), l.spec.clone())).collect(),
            params,
            optimizers,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        #[derive(Deserialize)]
        struct Framing {
            k: usize,
            cp_len: usize,
            n_symbols: usize,
        }
        let (head, framing) = ck.config.split_once("\n[framing]\n").ok_or_else(|| Error::data("checkpoint config lacks framing"))?;
        let config = DetectorConfig::from_text(head)?;
        let f: Framing = toml::from_str(framing).map_err(|e| Error::data(format!("bad framing in checkpoint: {e}")))?;
        if config.model != ck.kind {
            return Err(Error::data("checkpoint kind disagrees with its config"));
        }
        let mut d = Self::new(&config, &OfdmConfig { k: f.k, cp_len: f.cp_len, n_symbols: f.n_symbols })?;
        let n_main = d.store.len();
        let n_bg = d.background.as_ref().map_or(0, |b| b.len());
        if ck.params.len() != n_main + n_bg {
            return Err(Error::data(format!("checkpoint has {} tensors, architecture needs {}", ck.params.len(), n_main + n_bg)));
        }
        let entries = ck.params.entries();
        let mut main = ParamStore::<f32>::new();
        for e in &entries[..n_main] {
            main.push(e.name.clone(), e.tensor.clone());
        }
        copy_checked(&mut d.store, &main)?;
        if let Some(bg) = &mut d.background {
            let mut b = ParamStore::<f32>::new();
            for e in &entries[n_main..] {
                let name = e.name.strip_prefix(BACKGROUND_PREFIX).ok_or_else(|| Error::data(format!("unexpected tensor {}", e.name)))?;
                b.push(name, e.tensor.clone());
            }
            copy_checked(bg, &b)?;
        }
        Ok(d)
    }
}

fn copy_checked<T: Real>(dst: &mut ParamStore<T>, src: &ParamStore<f32>) -> Result<()> {
    for (a, b) in dst.entries().iter().zip(src.entries()) {
        if a.name != b.name {
            return Err(Error::data(format!("checkpoint tensor {} where {} was expected", b.name, a.name)));
        }
        if a.tensor.shape() != b.tensor.shape() {
            return Err(Error::data(format!("checkpoint tensor {} has shape {:?}, architecture needs {:?}", a.name, b.tensor.shape(), a.tensor.shape())));
        }
    }
    dst.copy_values_from(&src.cast())
}

fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.f64()).collect()
}

fn argmax<T: Real>(r: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in r.iter().enumerate() {
        if *v > r[best] {
            best = i;
        }
    }
    best
}

/// Summed per-sequence NLL in inference mode.
fn ar_sequence_nll<T: Real>(net: &ArNet, store: &mut ParamStore<T>, x: &[T], mask: &[f32], lag: usize, b: usize, l: usize) -> Result<Vec<f64>> {
    let mut g = Graph::<T>::inference();
    let input = g.input_data(vec![b, AR_CHANNELS, l], ar_input(x, mask, lag));
    let e = ar_nll_elems(&mut g, store, net, input, x.to_vec())?;
    Ok(g.value(e).chunks_exact(2 * l).map(|r| r.iter().map(|v| v.f64()).sum()).collect())
}

/// Score every example of `ds`, keyed by `(mod, sir_bin, index-in-cell)`.
pub fn score_dataset(det: &mut Detector, ds: &Dataset) -> Result<ScoreTable> {
    let all: Vec<usize> = (0..ds.len()).collect();
    let scores = det.score(ds, &all)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::data(format!("non-finite score for example {i}")));
    }
    let per_cell = ds.spec.n_batches * ds.spec.batch_size;
    let rows = scores
        .into_iter()
        .enumerate()
        .map(|(i, score)| {
            let [m, j, b, k] = ds.coords(i);
            ScoreRow { m, sir_bin: j, index: b * ds.spec.batch_size + k, score }
        })
        .collect();
    Ok(ScoreTable {
        model: det.kind(),
        oe: det.config.oe.enabled,
        dataset: ds.kind.label(),
        seed: det.config.seed,
        sir_db: ds.spec.sir_db.clone(),
        n_mod: ds.spec.n_mod,
        per_cell,
        rows,
    })
}
