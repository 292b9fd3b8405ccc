//! The `oodbench` command line: `synth`, `train`, `score`, `eval`, `report`.
//!
//! Exit codes: 0 success, 1 usage, 2 data, 3 training.

mod config;

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{DatasetSection, RunConfig};

use crate::dataset::{self, append_manifest, generate, Dataset, DatasetKind, Interferer, ManifestRow, Split};
use crate::detectors::{score_dataset, train, Detector, ScoreTable};
use crate::error::{Error, Result};
use crate::eval::{evaluate_experiment, write_report, AurocGrid};
use crate::nn::{Checkpoint, ModelKind};
use crate::signal::modulation::ModScheme;

#[derive(Debug, Parser)]
#[command(name = "oodbench", version, about = "Weak co-channel interferer detection workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a dataset file and append it to the manifest.
    Synth(SynthArgs),
    /// Train a detector on an in-distribution dataset.
    Train(TrainArgs),
    /// Score every example of a dataset with a checkpoint.
    Score(ScoreArgs),
    /// Build the AUROC grid of one experiment from two score tables.
    Eval(EvalArgs),
    /// Summarize AUROC grids, optionally merging them into one long CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML). Flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// din, dout-oe or dout-test.
    #[arg(long)]
    pub kind: String,
    /// Test interferer: dsss or ofdm.
    #[arg(long)]
    pub interferer: Option<String>,
    /// Pass the test interferer through the multipath channel.
    #[arg(long)]
    pub channel: bool,
    /// train or test (held-out draw).
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to manifest.tsv next to the output file.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// msp, dml, vae or ar.
    #[arg(long)]
    pub model: Option<String>,
    /// Enable outlier exposure.
    #[arg(long)]
    pub oe: bool,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    /// In-distribution training set.
    #[arg(long)]
    pub din: PathBuf,
    /// Outlier-exposure set, required with --oe.
    #[arg(long)]
    pub oe_data: Option<PathBuf>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `<out>.log`.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Scores of the in-distribution test set.
    #[arg(long)]
    pub din: PathBuf,
    /// Scores of the interference test set.
    #[arg(long)]
    pub dout: PathBuf,
    /// Output directory for the grid CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one ROC point file per cell.
    #[arg(long)]
    pub curves: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Grid CSV files written by `eval`.
    #[arg(required = true)]
    pub grids: Vec<PathBuf>,
    /// Long-format CSV with one row per cell of every grid.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Invalid(_) => 1,
        Error::Data(_) | Error::Format { .. } | Error::Io(_) | Error::Shape(_) => 2,
        Error::Training(_) => 3,
    }
}

/// Parse `args` (including the program name), run, and map the outcome to
/// an exit code. Diagnostics go to stderr, results to `out`.
pub fn main_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>, out: &mut dyn Write) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("oodbench: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Score(a) => score(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Report(a) => report(a, out),
    }
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn usage(e: Error) -> Error {
    Error::Usage(e.to_string())
}

/// Dataset kind from the `--kind`, `--interferer` and `--channel` flags.
pub fn parse_kind(kind: &str, interferer: Option<&str>, channel: bool) -> Result<DatasetKind> {
    match (kind, interferer) {
        ("din" | "dout-oe", Some(_)) => Err(Error::Usage(format!("--interferer does not apply to --kind {kind}"))),
        ("din" | "dout-oe", None) if channel => Err(Error::Usage(format!("--channel does not apply to --kind {kind}"))),
        ("din", None) => Ok(DatasetKind::Din),
        ("dout-oe", None) => Ok(DatasetKind::DoutOe),
        ("dout-test", Some(i)) => Ok(DatasetKind::DoutTest { interferer: Interferer::parse(i)?, channel }),
        ("dout-test", None) => Err(Error::Usage("--kind dout-test needs --interferer dsss|ofdm".into())),
        _ => Err(Error::Usage(format!("unknown dataset kind '{kind}' (expected din, dout-oe or dout-test)"))),
    }
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let kind = parse_kind(&a.kind, a.interferer.as_deref(), a.channel)?;
    let split = Split::parse(&a.split).map_err(usage)?;
    let spec = cfg.dataset_spec(split)?;
    let ds = generate(&spec, kind)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    dataset::write(&ds, &a.out)?;
    let manifest = a.manifest.clone().unwrap_or_else(|| a.out.with_file_name("manifest.tsv"));
    let row = ManifestRow::new(&ds, &a.out.display().to_string());
    append_manifest(&manifest, &row)?;
    let d = spec.dims();
    writeln!(out, "wrote {} ({}): dims [{}, {}, {}, {}] x [{}, 2]", a.out.display(), kind, d[0], d[1], d[2], d[3], spec.block_size())?;
    writeln!(out, "manifest {}: {}", manifest.display(), row.line())?;
    write_level_summary(&ds, out)?;
    Ok(())
}

/// Mean measured SIR per bin and the SNR of each modulation.
fn write_level_summary(ds: &Dataset, out: &mut dyn Write) -> Result<()> {
    let snr: Vec<String> = (0..ds.spec.n_mod)
        .map(|m| format!("{} {} dB", ModScheme::from_index(m).map_or("?", |s| s.name()), ds.spec.snr_db[m]))
        .collect();
    writeln!(out, "snr: {}", snr.join(", "))?;
    if ds.kind == DatasetKind::Din {
        return Ok(());
    }
    let mut line = Vec::new();
    for (j, &target) in ds.spec.sir_db.iter().enumerate() {
        let measured: Vec<f64> = ds.meta.iter().filter(|p| p.sir_bin as usize == j).map(|p| -10.0 * p.interferer_power.log10()).collect();
        let mean = measured.iter().sum::<f64>() / measured.len().max(1) as f64;
        line.push(format!("{target}->{mean:.2}"));
    }
    writeln!(out, "sir dB (target->measured): {}", line.join(" "))?;
    Ok(())
}

fn read_dataset(path: &Path, what: &str) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::data(format!("{what} dataset {} does not exist", path.display())));
    }
    dataset::read(path)
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let model = a.model.as_deref().map(ModelKind::parse).transpose()?;

    let (mut det, optimizers) = match &a.resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            let det = Detector::<f32>::from_checkpoint(&ck)?;
            if model.is_some_and(|m| m != det.kind()) || (a.oe && !det.config.oe.enabled) {
                return Err(Error::Usage(format!("--model/--oe disagree with checkpoint {}", p.display())));
            }
            (det, ck.optimizers)
        }
        None => {
            let mut dc = cfg.detector_config();
            if let Some(m) = model {
                dc.model = m;
            }
            if a.oe {
                dc.oe.enabled = true;
            }
            if let Some(l) = a.lambda {
                dc.oe.lambda = l;
            }
            dc.validate().map_err(usage)?;
            (Detector::<f32>::new(&dc, &cfg.ofdm()).map_err(usage)?, Vec::new())
        }
    };
    if let Some(s) = a.steps {
        det.config.steps = s;
    }

    let din = read_dataset(&a.din, "in-distribution")?;
    if din.kind != DatasetKind::Din {
        return Err(Error::data(format!("{} holds {}, not din", a.din.display(), din.kind)));
    }
    let oe = match (&a.oe_data, det.config.oe.active()) {
        (Some(p), true) => {
            let d = read_dataset(p, "outlier-exposure")?;
            if d.kind != DatasetKind::DoutOe {
                return Err(Error::data(format!("{} holds {}, not dout-oe", p.display(), d.kind)));
            }
            Some(d)
        }
        (None, true) => return Err(Error::Usage("outlier exposure needs --oe-data".into())),
        _ => None,
    };

    let log_path = a.log.clone().unwrap_or_else(|| PathBuf::from(format!("{}.log", a.out.display())));
    let mut log = OpenOptions::new().create(true).append(true).open(&log_path)?;
    let c = &det.config;
    writeln!(
        log,
        "# run model={} oe={} lambda={} seed={} steps={} resume={} params={}",
        c.model.name(),
        c.oe.enabled,
        c.oe.lambda,
        c.seed,
        c.steps,
        a.resume.as_ref().map_or("-".into(), |p| p.display().to_string()),
        det.n_params()
    )?;
    let mut io_err = None;
    let trained = train(det, optimizers, &din, oe.as_ref(), &mut |row| {
        if let Err(e) = writeln!(log, "{}", row.line()) {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    let det = &trained.detector;
    det.to_checkpoint(trained.optimizers.clone()).save(&a.out)?;
    let last = trained.log.last().map_or(f64::NAN, |r| r.loss);
    writeln!(
        out,
        "trained {}{} seed {} to step {} ({} parameters, last logged loss {last:.5}) -> {}",
        det.kind().name(),
        if det.config.oe.enabled { "+oe" } else { "" },
        det.config.seed,
        trained.optimizers[0].step,
        det.n_params(),
        a.out.display()
    )?;
    Ok(())
}

fn score(a: ScoreArgs, out: &mut dyn Write) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let mut det = Detector::<f32>::from_checkpoint(&ck)?;
    let ds = read_dataset(&a.data, "scoring")?;
    let table = score_dataset(&mut det, &ds)?;
    table.save(&a.out)?;
    writeln!(out, "scored {} examples of {} with {} -> {}", table.rows.len(), ds.kind, det.kind().name(), a.out.display())?;
    Ok(())
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let din = ScoreTable::load(&a.din)?;
    let dout = ScoreTable::load(&a.dout)?;
    let exp = evaluate_experiment(&din, &dout)?;
    let files = write_report(&exp, &a.out, a.curves)?;
    write_grid(&exp.grid, out)?;
    writeln!(out, "wrote {} file(s) under {}", files.len(), a.out.display())?;
    Ok(())
}

fn write_grid(g: &AurocGrid, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "{} oe={} vs {} (seed {})", g.model.name(), g.oe, g.dataset, g.seed)?;
    let head: Vec<String> = g.sir_db.iter().map(|s| format!("{s:>6}")).collect();
    writeln!(out, "{:>6} {}", "sir", head.join(""))?;
    for (m, row) in g.values.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>6.3}")).collect();
        writeln!(out, "{:>6} {}", ModScheme::from_index(m).map_or("?", |s| s.name()), cells.join(""))?;
    }
    Ok(())
}

fn report(a: ReportArgs, out: &mut dyn Write) -> Result<()> {
    let mut long = String::from("model,oe,dataset,seed,mod,sir_db,auroc\n");
    for p in &a.grids {
        let g = AurocGrid::parse_csv(&fs::read_to_string(p)?)?;
        write_grid(&g, out)?;
        for (m, row) in g.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let name = ModScheme::from_index(m).map_or("?", |s| s.name());
                long.push_str(&format!("{},{},{},{},{name},{},{v:?}\n", g.model.name(), g.oe, g.dataset, g.seed, g.sir_db[j]));
            }
        }
    }
    if let Some(o) = &a.out {
        fs::write(o, long)?;
        writeln!(out, "merged {} grid(s) into {}", a.grids.len(), o.display())?;
    }
    Ok(())
}
