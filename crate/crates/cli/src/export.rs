//! `uclt export`: consolidated plotting CSVs from a completed run directory.

use std::path::Path;

use anyhow::{anyhow, Context, Result};

use crate::output::{read_csv, write_csv, Manifest, MANIFEST};

pub const EXPORT_DIR: &str = "export";

#[derive(Debug)]
pub struct MissingRun(pub String);

impl std::fmt::Display for MissingRun {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "missing run: {}", self.0)
    }
}

impl std::error::Error for MissingRun {}

fn column(header: &[String], name: &str, file: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| anyhow!("{file}: no column {name:?}"))
}

/// Selects `columns` from every row, optionally prefixed by a fixed value.
fn select(dir: &Path, file: &str, prefix: Option<&str>, columns: &[&str]) -> Result<Vec<Vec<String>>> {
    let (header, rows) = read_csv(&dir.join(file))?;
    let idx = columns
        .iter()
        .map(|c| column(&header, c, file))
        .collect::<Result<Vec<_>>>()?;
    Ok(rows
        .into_iter()
        .map(|r| prefix.map(String::from).into_iter().chain(idx.iter().map(|&i| r[i].clone())).collect())
        .collect())
}

/// Writes the consolidated CSVs into `<run>/export` and returns their names.
pub fn run(run_dir: &Path) -> Result<Vec<String>> {
    let manifest_path = run_dir.join(MANIFEST);
    if !manifest_path.is_file() {
        return Err(MissingRun(format!("{} has no {MANIFEST}", run_dir.display())).into());
    }
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(&manifest_path)?)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let prov = &manifest.provenance;
    let out = run_dir.join(EXPORT_DIR);
    std::fs::create_dir_all(&out)?;
    let has = |f: &str| manifest.files.iter().any(|g| g == f);
    let mut written = Vec::new();
    let mut emit = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        write_csv(&out.join(name), prov, header, rows)?;
        written.push(name.to_string());
        Ok(())
    };

    let traces: Vec<&String> = manifest
        .files
        .iter()
        .filter(|f| f.starts_with("trace_") && f.ends_with(".csv"))
        .collect();
    if !traces.is_empty() {
        let mut rows = Vec::new();
        for f in traces {
            let condition = &f["trace_".len()..f.len() - ".csv".len()];
            rows.extend(select(run_dir, f, Some(condition), &["eps", "entropy", "integrand"])?);
        }
        emit("entropy.csv", &["condition", "eps", "entropy", "integrand"], rows)?;
    }
    let distances: Vec<&String> = manifest
        .files
        .iter()
        .filter(|f| f.starts_with("distances_") && f.ends_with(".csv"))
        .collect();
    if !distances.is_empty() {
        let mut rows = Vec::new();
        for f in distances {
            let kind = &f["distances_".len()..f.len() - ".csv".len()];
            rows.extend(select(run_dir, f, Some(kind), &["x1", "x2", "distance"])?);
        }
        emit("distances.csv", &["level", "x1", "x2", "distance"], rows)?;
    }
    if has("variance.csv") {
        let rows = select(run_dir, "variance.csv", None, &["point", "sup_average", "divergence_suspected"])?;
        emit("variance.csv", &["point", "sup_average", "divergence_suspected"], rows)?;
    }
    if has("covering.csv") {
        let rows = select(run_dir, "covering.csv", None, &["eps", "covering_number", "entropy"])?;
        emit("covering.csv", &["eps", "covering_number", "entropy"], rows)?;
    }
    if has("tails.csv") {
        let rows = select(run_dir, "tails.csv", None, &["model", "n", "x", "tail", "bound"])?;
        emit("tails.csv", &["model", "n", "x", "tail", "bound"], rows)?;
    }
    if has("ks.csv") {
        let rows = select(run_dir, "ks.csv", None, &["model", "n_small", "n_large", "ks"])?;
        emit("ks.csv", &["model", "n_small", "n_large", "ks"], rows)?;
    }
    if has("osekowski.csv") {
        let rows = select(run_dir, "osekowski.csv", None, &["model", "target", "p", "n", "ratio"])?;
        emit("osekowski.csv", &["model", "target", "p", "n", "osekowski_ratio"], rows)?;
    }
    Ok(written)
}
