//! CSV output: the AUROC grid (rows = modulations, columns = SIR in dB) and
//! one ROC point file per cell, each headed by `#` metadata lines.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{AurocGrid, Experiment, RocCurve, RocPoint};
use crate::error::{Error, Result};
use crate::nn::ModelKind;
use crate::signal::modulation::ModScheme;

pub const GRID_FILE: &str = "auroc_grid.csv";

fn mod_name(m: usize) -> String {
    ModScheme::from_index(m).map_or_else(|_| format!("mod{m}"), |s| s.name().to_string())
}

fn meta_lines(s: &mut String, grid: &AurocGrid) {
    writeln!(s, "# model = {}", grid.model.name()).unwrap();
    writeln!(s, "# oe = {}", grid.oe).unwrap();
    writeln!(s, "# dataset = {}", grid.dataset).unwrap();
    writeln!(s, "# seed = {}", grid.seed).unwrap();
}

fn split_meta(text: &str) -> (HashMap<String, String>, Vec<&str>) {
    let mut meta = HashMap::new();
    let mut body = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        } else if !line.trim().is_empty() {
            body.push(line);
        }
    }
    (meta, body)
}

fn field<'a>(meta: &'a HashMap<String, String>, k: &str) -> Result<&'a str> {
    meta.get(k).map(String::as_str).ok_or_else(|| Error::data(format!("missing '{k}' metadata")))
}

fn num(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::data(format!("'{s}': {e}")))
}

impl AurocGrid {
    pub fn to_csv(&self) -> Result<String> {
        self.validate()?;
        let mut s = String::from("# oodbench auroc grid\n");
        meta_lines(&mut s, self);
        let cols: Vec<String> = self.sir_db.iter().map(|x| x.to_string()).collect();
        writeln!(s, "mod,{}", cols.join(",")).unwrap();
        for (m, row) in self.values.iter().enumerate() {
            let v: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            writeln!(s, "{},{}", mod_name(m), v.join(",")).unwrap();
        }
        Ok(s)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let (meta, body) = split_meta(text);
        let (head, rows) = body.split_first().ok_or_else(|| Error::data("grid CSV has no header row"))?;
        let sir_db = head.split(',').skip(1).map(num).collect::<Result<Vec<_>>>()?;
        let mut values = Vec::new();
        for (m, line) in rows.iter().enumerate() {
            let mut f = line.split(',');
            let name = f.next().unwrap_or_default();
            if name != mod_name(m) {
                return Err(Error::data(format!("grid row {m} is labelled '{name}', expected '{}'", mod_name(m))));
            }
            values.push(f.map(num).collect::<Result<Vec<_>>>()?);
        }
        let grid = AurocGrid {
            model: ModelKind::parse(field(&meta, "model")?).map_err(|e| Error::data(e.to_string()))?,
            oe: field(&meta, "oe")? == "true",
            dataset: field(&meta, "dataset")?.to_string(),
            seed: field(&meta, "seed")?.parse().map_err(|e| Error::data(format!("seed: {e}")))?,
            sir_db,
            values,
        };
        grid.validate()?;
        Ok(grid)
    }
}

/// Writes one ROC curve with its cell coordinates in the header.
pub fn write_roc(path: &Path, grid: &AurocGrid, m: usize, j: usize, curve: &RocCurve) -> Result<()> {
    let mut s = String::from("# oodbench roc curve\n");
    meta_lines(&mut s, grid);
    writeln!(s, "# mod = {}", mod_name(m)).unwrap();
    writeln!(s, "# sir_db = {}", grid.sir_db[j]).unwrap();
    writeln!(s, "# n_id = {}", curve.n_id).unwrap();
    writeln!(s, "# n_ood = {}", curve.n_ood).unwrap();
    writeln!(s, "threshold,fpr,tpr").unwrap();
    for p in &curve.points {
        writeln!(s, "{:?},{:?},{:?}", p.threshold, p.fpr, p.tpr).unwrap();
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_roc(path: &Path) -> Result<RocCurve> {
    let text = fs::read_to_string(path)?;
    let (meta, body) = split_meta(&text);
    let count = |k| field(&meta, k)?.parse::<usize>().map_err(|e| Error::data(format!("{k}: {e}")));
    let points = body
        .iter()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(Error::data(format!("ROC row '{line}' needs 3 fields")));
            }
            Ok(RocPoint { threshold: num(f[0])?, fpr: num(f[1])?, tpr: num(f[2])? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RocCurve { points, n_id: count("n_id")?, n_ood: count("n_ood")? })
}

/// Writes `auroc_grid.csv` and, with `curves`, `roc/<mod>_sir<j>.csv` for
/// every cell into `dir`. Returns the written paths.
pub fn write_report(exp: &Experiment, dir: &Path, curves: bool) -> Result<Vec<PathBuf>> {
    let csv = exp.grid.to_csv()?;
    fs::create_dir_all(dir)?;
    let grid_path = dir.join(GRID_FILE);
    fs::write(&grid_path, csv)?;
    let mut out = vec![grid_path];
    if curves {
        let roc_dir = dir.join("roc");
        fs::create_dir_all(&roc_dir)?;
        for (m, row) in exp.curves.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                let p = roc_dir.join(format!("{}_sir{j:02}.csv", mod_name(m)));
                write_roc(&p, &exp.grid, m, j, c)?;
                out.push(p);
            }
        }
    }
    Ok(out)
}
