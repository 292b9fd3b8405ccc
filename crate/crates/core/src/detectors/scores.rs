//! Score tables: one scalar per example, keyed by `(mod, sir_bin, index)`.
//!
//! Text format: `#`-prefixed `key = value` metadata lines, a column header
//! `mod,sir_bin,index,score`, then one row per example. Scores are written
//! in shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::ModelKind;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreRow {
    pub m: usize,
    pub sir_bin: usize,
    /// Position within the `(mod, sir_bin)` cell.
    pub index: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub model: ModelKind,
    pub oe: bool,
    pub dataset: String,
    pub seed: u64,
    pub sir_db: Vec<f64>,
    pub n_mod: usize,
    pub per_cell: usize,
    pub rows: Vec<ScoreRow>,
}

const COLUMNS: &str = "mod,sir_bin,index,score";

impl ScoreTable {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let sir: Vec<String> = self.sir_db.iter().map(|x| x.to_string()).collect();
        writeln!(s, "# oodbench score table").unwrap();
        writeln!(s, "# model = {}", self.model.name()).unwrap();
        writeln!(s, "# oe = {}", self.oe).unwrap();
        writeln!(s, "# dataset = {}", self.dataset).unwrap();
        writeln!(s, "# seed = {}", self.seed).unwrap();
        writeln!(s, "# sir_db = {}", sir.join(",")).unwrap();
        writeln!(s, "# n_mod = {}", self.n_mod).unwrap();
        writeln!(s, "# per_cell = {}", self.per_cell).unwrap();
        writeln!(s, "{COLUMNS}").unwrap();
        for r in &self.rows {
            writeln!(s, "{},{},{},{:?}", r.m, r.sir_bin, r.index, r.score).unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = std::collections::HashMap::new();
        let mut rows = Vec::new();
        let mut seen_header = false;
        for (ln, line) in text.lines().enumerate() {
            let bad = |msg: String| Error::data(format!("score table line {}: {msg}", ln + 1));
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !seen_header {
                if line.trim() != COLUMNS {
                    return Err(bad(format!("expected column header '{COLUMNS}'")));
                }
                seen_header = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(format!("expected 4 fields, got {}", f.len())));
            }
            let int = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(format!("'{s}': {e}")));
            let score = f[3].trim().parse::<f64>().map_err(|e| bad(format!("'{}': {e}", f[3])))?;
            rows.push(ScoreRow { m: int(f[0])?, sir_bin: int(f[1])?, index: int(f[2])?, score });
        }
        if !seen_header {
            return Err(Error::data("score table has no column header"));
        }
        let get = |k: &str| meta.get(k).cloned().ok_or_else(|| Error::data(format!("score table lacks '{k}' metadata")));
        let num = |k: &str| get(k)?.parse::<u64>().map_err(|e| Error::data(format!("metadata {k}: {e}")));
        let sir_db = get("sir_db")?
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| Error::data(format!("sir_db '{x}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model: ModelKind::parse(&get("model")?).map_err(|e| Error::data(e.to_string()))?,
            oe: get("oe")? == "true",
            dataset: get("dataset")?,
            seed: num("seed")?,
            sir_db,
            n_mod: num("n_mod")? as usize,
            per_cell: num("per_cell")? as usize,
            rows,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Scores of one `(mod, sir_bin)` cell in index order. Fails if the cell
    /// is missing or incomplete.
    pub fn cell(&self, m: usize, j: usize) -> Result<Vec<f64>> {
        let mut v: Vec<(usize, f64)> = self.rows.iter().filter(|r| r.m == m && r.sir_bin == j).map(|r| (r.index, r.score)).collect();
        if v.is_empty() {
            return Err(Error::data(format!("{} scores: missing cell (mod {m}, sir bin {j})", self.dataset)));
        }
        v.sort_by_key(|p| p.0);
        if v.len() != self.per_cell || v.iter().enumerate().any(|(i, p)| p.0 != i) {
            return Err(Error::data(format!(
                "{} scores: cell (mod {m}, sir bin {j}) has {} of {} entries",
                self.dataset,
                v.len(),
                self.per_cell
            )));
        }
        Ok(v.into_iter().map(|p| p.1).collect())
    }
}
