//! Dataset geometry, example synthesis and the in-memory container.
//!
//! Examples live on a `[n_mod, n_sir_bins, n_batches, batch_size]` grid. Each
//! example's randomness is derived from the base seed and its coordinates, so
//! the in-distribution set and every interferer variant built from the same
//! seed and split share victim packets and noise draws coordinate by
//! coordinate; only the interferer differs.

mod format;
mod manifest;
mod preprocess;

use std::fmt;

use rand::Rng as _;

pub use format::{read, write, HEADER_BYTES, PROVENANCE_BYTES};
pub use manifest::{append_manifest, ManifestRow};
pub use preprocess::{freq_scale, freq_sequence, preprocess, SpectralView};

use crate::error::{Error, Result};
use crate::seed::{derive, rng_from};
use crate::signal::channel::{apply_channel, ChannelModel};
use crate::signal::dsss::{synth_dsss, DsssSpec};
use crate::signal::mti::{synth_mti, MtiSpec};
use crate::signal::ofdm::{synth_ofdm_packet, ImpairmentSpec, OfdmConfig};
use crate::signal::{mix, normalize_power, ModScheme, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Interferer {
    Dsss,
    Ofdm,
}

impl Interferer {
    pub fn name(self) -> &'static str {
        match self {
            Interferer::Dsss => "dsss",
            Interferer::Ofdm => "ofdm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dsss" => Ok(Interferer::Dsss),
            "ofdm" => Ok(Interferer::Ofdm),
            _ => Err(Error::Usage(format!("unknown interferer '{s}' (expected dsss or ofdm)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    /// Interferer-free victim traffic.
    Din,
    /// Victim traffic with multi-tone interference.
    DoutOe,
    DoutTest { interferer: Interferer, channel: bool },
}

impl DatasetKind {
    /// The four test variants in their conventional order.
    pub const TEST_VARIANTS: [DatasetKind; 4] = [
        DatasetKind::DoutTest { interferer: Interferer::Dsss, channel: false },
        DatasetKind::DoutTest { interferer: Interferer::Dsss, channel: true },
        DatasetKind::DoutTest { interferer: Interferer::Ofdm, channel: false },
        DatasetKind::DoutTest { interferer: Interferer::Ofdm, channel: true },
    ];

    /// 1-based test variant number, `None` for training kinds.
    pub fn variant(self) -> Option<usize> {
        Self::TEST_VARIANTS.iter().position(|&k| k == self).map(|i| i + 1)
    }

    pub fn source(self) -> Source {
        match self {
            DatasetKind::Din => Source::None,
            DatasetKind::DoutOe => Source::Mti,
            DatasetKind::DoutTest { interferer: Interferer::Dsss, .. } => Source::Dsss,
            DatasetKind::DoutTest { interferer: Interferer::Ofdm, .. } => Source::Ofdm,
        }
    }

    pub fn channel(self) -> bool {
        matches!(self, DatasetKind::DoutTest { channel: true, .. })
    }

    pub fn from_parts(source: Source, channel: bool) -> Result<Self> {
        match (source, channel) {
            (Source::None, false) => Ok(DatasetKind::Din),
            (Source::Mti, false) => Ok(DatasetKind::DoutOe),
            (Source::Dsss, c) => Ok(DatasetKind::DoutTest { interferer: Interferer::Dsss, channel: c }),
            (Source::Ofdm, c) => Ok(DatasetKind::DoutTest { interferer: Interferer::Ofdm, channel: c }),
            _ => Err(Error::invalid(format!("no dataset kind has source {source:?} with channel={channel}"))),
        }
    }

    /// Short label, e.g. `din`, `dout-oe`, `dout-test-dsss-ch`.
    pub fn label(self) -> String {
        match self {
            DatasetKind::Din => "din".into(),
            DatasetKind::DoutOe => "dout-oe".into(),
            DatasetKind::DoutTest { interferer, channel } => {
                format!("dout-test-{}{}", interferer.name(), if channel { "-ch" } else { "" })
            }
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Interference source of an individual example.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    None,
    Mti,
    Dsss,
    Ofdm,
}

impl Source {
    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        [Source::None, Source::Mti, Source::Dsss, Source::Ofdm].get(c as usize).copied()
    }
}

/// Which seed stream a dataset draws from. Held-out data uses a stream
/// disjoint from training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Usage(format!("unknown split '{s}' (expected train or test)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub n_mod: usize,
    pub n_sir_bins: usize,
    pub n_batches: usize,
    pub batch_size: usize,
    pub ofdm: OfdmConfig,
    /// SIR of each bin in dB.
    pub sir_db: Vec<f64>,
    /// Victim SNR per modulation in dB.
    pub snr_db: [f64; 4],
    pub base_seed: u64,
    pub split: Split,
    /// Samples per DSSS chip in test interferers.
    pub dsss_samples_per_chip: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_mod: 4,
            n_sir_bins: 14,
            n_batches: 16,
            batch_size: 64,
            ofdm: OfdmConfig::default(),
            sir_db: default_sir_grid(),
            snr_db: DEFAULT_SNR_DB,
            base_seed: 0,
            split: Split::Train,
            dsss_samples_per_chip: 2,
        }
    }
}

pub const DEFAULT_SNR_DB: [f64; 4] = [5.0, 8.0, 15.0, 25.0];
pub const N_CHANNELS: usize = 2;

/// 0, 3, ..., 39 dB.
pub fn default_sir_grid() -> Vec<f64> {
    (0..14).map(|i| 3.0 * i as f64).collect()
}

impl DatasetSpec {
    pub fn block_size(&self) -> usize {
        self.ofdm.block_size()
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n_mod, self.n_sir_bins, self.n_batches, self.batch_size]
    }

    pub fn n_examples(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        self.ofdm.validate()?;
        if self.n_mod == 0 || self.n_mod > ModScheme::ALL.len() {
            return Err(Error::invalid(format!("n_mod must be in 1..=4, got {}", self.n_mod)));
        }
        if self.n_sir_bins == 0 || self.n_sir_bins > 255 || self.sir_db.len() != self.n_sir_bins {
            return Err(Error::invalid(format!("{} SIR values for {} bins", self.sir_db.len(), self.n_sir_bins)));
        }
        if self.sir_db.iter().chain(&self.snr_db).any(|x| !x.is_finite()) {
            return Err(Error::invalid("SIR and SNR values must be finite"));
        }
        if self.dsss_samples_per_chip == 0 {
            return Err(Error::invalid("dsss_samples_per_chip must be >= 1"));
        }
        Ok(())
    }

    /// Flat index of `(mod, sir_bin, batch, item)`.
    pub fn index(&self, m: usize, j: usize, b: usize, i: usize) -> usize {
        ((m * self.n_sir_bins + j) * self.n_batches + b) * self.batch_size + i
    }

    pub fn coords(&self, idx: usize) -> [usize; 4] {
        let i = idx % self.batch_size;
        let r = idx / self.batch_size;
        let b = r % self.n_batches;
        let r = r / self.n_batches;
        [r / self.n_sir_bins, r % self.n_sir_bins, b, i]
    }

    /// Order-independent fingerprint of the SIR grid.
    pub fn sir_hash(&self) -> u64 {
        derive(self.sir_db.len() as u64, &self.sir_db.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
    }

    fn split_code(&self) -> u64 {
        match self.split {
            Split::Train => 0x7452_4149_4e00,
            Split::Test => 0x5445_5354_0000,
        }
    }

    fn victim_seed(&self, c: [usize; 4]) -> u64 {
        derive(self.base_seed, &[self.split_code(), c[0] as u64, c[1] as u64, c[2] as u64, c[3] as u64, 1])
    }

    fn noise_seed(&self, c: [usize; 4]) -> u64 {
        derive(self.base_seed, &[self.split_code(), c[0] as u64, c[1] as u64, c[2] as u64, c[3] as u64, 2])
    }
}

/// Provenance of one example. Together with the dataset spec this is enough
/// to re-synthesize it bit for bit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacketSpec {
    pub modulation: ModScheme,
    pub source: Source,
    pub channel: bool,
    pub sir_bin: u8,
    /// `+inf` when there is no interferer.
    pub sir_db: f64,
    pub snr_db: f64,
    pub victim_seed: u64,
    pub noise_seed: u64,
    pub interferer_seed: u64,
    pub theta: f64,
    pub cfo: f64,
    /// Interferer power relative to the victim before final normalization.
    pub interferer_power: f64,
    /// Number of tones for multi-tone interferers, else 0.
    pub mti_q: u16,
}

/// Synthesize the example at coordinates `c` of a `kind` dataset.
pub fn synth_example(spec: &DatasetSpec, kind: DatasetKind, c: [usize; 4]) -> Result<(Vec<C64>, PacketSpec)> {
    let [m, j, _, _] = c;
    let modulation = ModScheme::from_index(m)?;
    let source = kind.source();
    let victim_seed = spec.victim_seed(c);
    let noise_seed = spec.noise_seed(c);
    let interferer_seed = derive(victim_seed, &[source.code() as u64]);

    let mut vr = rng_from(victim_seed);
    let imp = ImpairmentSpec::draw(&mut vr);
    let (victim, _) = synth_ofdm_packet(&spec.ofdm, modulation, &imp, &mut vr)?;
    let n = victim.len();

    let mut ir = rng_from(interferer_seed);
    let mut mti_q = 0u16;
    let interferer = match source {
        Source::None => None,
        Source::Mti => {
            let s = MtiSpec::draw(spec.ofdm.k, &mut ir);
            mti_q = s.q() as u16;
            Some(synth_mti(&s, n)?)
        }
        Source::Dsss => {
            let d = DsssSpec {
                samples_per_chip: spec.dsss_samples_per_chip,
                theta: ir.random_range(0.0..std::f64::consts::TAU),
                cfo: ir.random_range(-ImpairmentSpec::CFO_RANGE..=ImpairmentSpec::CFO_RANGE),
                ..Default::default()
            };
            let off = ir.random_range(0..d.symbol_len());
            Some(synth_dsss(&d, n + off, &mut ir)?.split_off(off))
        }
        Source::Ofdm => {
            let cfg = OfdmConfig { n_symbols: spec.ofdm.n_symbols + 1, ..spec.ofdm };
            let scheme = ModScheme::ALL[ir.random_range(0..ModScheme::ALL.len())];
            let imp = ImpairmentSpec::draw(&mut ir);
            let (x, _) = synth_ofdm_packet(&cfg, scheme, &imp, &mut ir)?;
            let off = ir.random_range(0..cfg.symbol_len());
            Some(x[off..off + n].to_vec())
        }
    };
    let interferer = match interferer {
        Some(x) if kind.channel() => Some(apply_channel(&x, &ChannelModel::indoor(), &mut ir)?),
        other => other,
    };

    let sir_db = if interferer.is_some() { spec.sir_db[j] } else { f64::INFINITY };
    let snr_db = spec.snr_db[m];
    let mixed = mix(&victim, interferer.as_deref(), sir_db, snr_db, &mut rng_from(noise_seed))?;
    let mut x = mixed.samples;
    normalize_power(&mut x);
    let meta = PacketSpec {
        modulation,
        source,
        channel: kind.channel(),
        sir_bin: j as u8,
        sir_db,
        snr_db,
        victim_seed,
        noise_seed,
        interferer_seed,
        theta: imp.theta,
        cfo: imp.cfo,
        interferer_power: mixed.interferer_power / mixed.signal_power,
        mti_q,
    };
    Ok((x, meta))
}

/// Examples stored as interleaved `f32` I/Q (`[I0, Q0, I1, Q1, ...]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub kind: DatasetKind,
    pub iq: Vec<f32>,
    pub meta: Vec<PacketSpec>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn example_len(&self) -> usize {
        self.spec.block_size() * N_CHANNELS
    }

    /// Interleaved samples of example `idx`.
    pub fn example(&self, idx: usize) -> &[f32] {
        let n = self.example_len();
        &self.iq[idx * n..(idx + 1) * n]
    }

    pub fn complex(&self, idx: usize) -> Vec<C64> {
        self.example(idx).chunks_exact(2).map(|p| C64::new(p[0] as f64, p[1] as f64)).collect()
    }

    pub fn label(&self, idx: usize) -> usize {
        self.meta[idx].modulation.index()
    }

    pub fn coords(&self, idx: usize) -> [usize; 4] {
        self.spec.coords(idx)
    }

    /// Indices of every example in SIR bin `j` of modulation `m`.
    pub fn cell(&self, m: usize, j: usize) -> std::ops::Range<usize> {
        let start = self.spec.index(m, j, 0, 0);
        start..start + self.spec.n_batches * self.spec.batch_size
    }

    /// Regenerate example `idx` from its provenance.
    pub fn resynthesize(&self, idx: usize) -> Result<Vec<f32>> {
        let (x, meta) = synth_example(&self.spec, self.kind, self.coords(idx))?;
        if meta != self.meta[idx] {
            return Err(Error::data(format!("provenance of example {idx} does not match its coordinates")));
        }
        Ok(interleave(&x))
    }
}

pub fn interleave(x: &[C64]) -> Vec<f32> {
    x.iter().flat_map(|z| [z.re as f32, z.im as f32]).collect()
}

/// Materialize every example of `kind`.
pub fn generate(spec: &DatasetSpec, kind: DatasetKind) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.n_examples();
    let per = spec.block_size() * N_CHANNELS;
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).clamp(1, 16);
    let chunk = n.div_ceil(workers).max(1);
    let parts: Vec<Result<(Vec<f32>, Vec<PacketSpec>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..n)
            .step_by(chunk)
            .map(|start| {
                s.spawn(move || {
                    let end = (start + chunk).min(n);
                    let mut iq = Vec::with_capacity((end - start) * per);
                    let mut meta = Vec::with_capacity(end - start);
                    for idx in start..end {
                        let (x, m) = synth_example(spec, kind, spec.coords(idx))?;
                        iq.extend(interleave(&x));
                        meta.push(m);
                    }
                    Ok((iq, meta))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("generator thread panicked")).collect()
    });
    let mut iq = Vec::with_capacity(n * per);
    let mut meta = Vec::with_capacity(n);
    for p in parts {
        let (a, b) = p?;
        iq.extend(a);
        meta.extend(b);
    }
    Ok(Dataset { spec: spec.clone(), kind, iq, meta })
}
