//! Run configuration: one TOML file holding every knob of a pipeline run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{default_sir_grid, DatasetSpec, Split, DEFAULT_SNR_DB};
use crate::detectors::DetectorConfig;
use crate::error::{Error, Result};
use crate::signal::ofdm::OfdmConfig;

/// Dataset geometry and signal levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub n_mod: usize,
    pub n_batches: usize,
    pub batch_size: usize,
    pub sir_db: Vec<f64>,
    pub snr_db: [f64; 4],
    pub dsss_samples_per_chip: usize,
    pub k: usize,
    pub cp_len: usize,
    pub n_symbols: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetSpec::default();
        Self {
            n_mod: d.n_mod,
            n_batches: d.n_batches,
            batch_size: d.batch_size,
            sir_db: default_sir_grid(),
            snr_db: DEFAULT_SNR_DB,
            dsss_samples_per_chip: d.dsss_samples_per_chip,
            k: d.ofdm.k,
            cp_len: d.ofdm.cp_len,
            n_symbols: d.ofdm.n_symbols,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds dataset synthesis and detector training alike.
    pub seed: u64,
    pub dataset: DatasetSection,
    pub detector: DetectorConfig,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("bad config: {e}")))
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn ofdm(&self) -> OfdmConfig {
        OfdmConfig { k: self.dataset.k, cp_len: self.dataset.cp_len, n_symbols: self.dataset.n_symbols }
    }

    pub fn dataset_spec(&self, split: Split) -> Result<DatasetSpec> {
        let d = &self.dataset;
        let spec = DatasetSpec {
            n_mod: d.n_mod,
            n_sir_bins: d.sir_db.len(),
            n_batches: d.n_batches,
            batch_size: d.batch_size,
            ofdm: self.ofdm(),
            sir_db: d.sir_db.clone(),
            snr_db: d.snr_db,
            base_seed: self.seed,
            split,
            dsss_samples_per_chip: d.dsss_samples_per_chip,
        };
        spec.validate().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(spec)
    }

    /// The detector config with the run seed applied.
    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig { seed: self.seed, ..self.detector.clone() }
    }
}
