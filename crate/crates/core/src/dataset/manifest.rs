use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use super::Dataset;
use crate::error::Result;

/// One line of a dataset manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub path: String,
    pub kind: String,
    /// Test variant number (1-4) or `-`.
    pub variant: String,
    pub interferer: String,
    pub channel: bool,
    pub dims: [usize; 4],
    pub seed: u64,
    pub split: String,
}

impl ManifestRow {
    pub const HEADER: &'static str = "# path\tkind\tvariant\tinterferer\tchannel\tdims\tseed\tsplit";

    pub fn new(ds: &Dataset, path: &str) -> Self {
        let src = ds.kind.source();
        Self {
            path: path.to_string(),
            kind: ds.kind.label(),
            variant: ds.kind.variant().map_or("-".into(), |v| v.to_string()),
            interferer: format!("{src:?}").to_lowercase(),
            channel: ds.kind.channel(),
            dims: ds.spec.dims(),
            seed: ds.spec.base_seed,
            split: ds.spec.split.name().into(),
        }
    }

    pub fn line(&self) -> String {
        let d = self.dims.map(|x| x.to_string()).join("x");
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.path,
            self.kind,
            self.variant,
            self.interferer,
            if self.channel { "yes" } else { "no" },
            d,
            self.seed,
            self.split
        )
    }
}

/// Append `row` to the manifest at `path`, writing the header for a new file.
pub fn append_manifest(path: impl AsRef<Path>, row: &ManifestRow) -> Result<()> {
    let path = path.as_ref();
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{}", ManifestRow::HEADER)?;
    }
    writeln!(f, "{}", row.line())?;
    Ok(())
}
