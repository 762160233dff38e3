//! Run directories: provenance-stamped CSV and JSON files plus a manifest.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn csv_line(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }
}

/// Written last; its presence marks a completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub provenance: Provenance,
    pub exit_code: u8,
    pub files: Vec<String>,
}

pub struct RunDir {
    dir: PathBuf,
    prov: Provenance,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(dir: &Path, prov: Provenance) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let stale = dir.join(MANIFEST);
        if stale.exists() {
            std::fs::remove_file(&stale)?;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            prov,
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn provenance(&self) -> &Provenance {
        &self.prov
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        write_csv(&self.dir.join(name), &self.prov, header, rows)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json(&mut self, name: &str, command: &str, report: &impl Serialize) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            command: &'a str,
            provenance: &'a Provenance,
            report: &'a T,
        }
        let doc = Doc {
            command,
            provenance: &self.prov,
            report,
        };
        write_json(&self.dir.join(name), &doc)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Registers a file written by other code.
    pub fn record(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    pub fn finish(self, command: &str, exit_code: u8) -> Result<()> {
        let m = Manifest {
            command: command.into(),
            provenance: self.prov,
            exit_code,
            files: self.files,
        };
        write_json(&self.dir.join(MANIFEST), &m)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_csv(path: &Path, prov: &Provenance, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?);
    f.write_all(prov.csv_line().as_bytes())?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(f);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a provenance-stamped CSV back as header plus rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let f = std::fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut r = BufReader::new(f);
    let mut first = String::new();
    r.read_line(&mut first)?;
    if !first.starts_with("# ") {
        bail!("{}: missing provenance line", path.display());
    }
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|rec| Ok(rec?.iter().map(String::from).collect()))
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok((header, rows))
}

pub fn num(v: f64) -> String {
    uclt_core::numerics::fmt_f64(v)
}
