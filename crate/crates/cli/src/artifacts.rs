//! Output directory bookkeeping: every file written goes through [`Artifacts`]
//! so the manifest can list it with its hash and the config hash.

use std::path::{Path, PathBuf};

use fracmag::{CMat, CVec, Grid};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub kind: &'static str,
    pub bytes: u64,
    pub sha256: String,
    pub config_hash: String,
}

#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    config_hash: String,
    entries: Vec<ArtifactEntry>,
}

pub fn sha256_file(path: &Path) -> Result<(u64, String), CliError> {
    let bytes = std::fs::read(path)?;
    Ok((bytes.len() as u64, hex::encode(Sha256::digest(&bytes))))
}

impl Artifacts {
    pub fn new(dir: &Path, config_hash: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), config_hash: config_hash.to_string(), entries: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entries(&self) -> &[ArtifactEntry] {
        &self.entries
    }

    fn record(&mut self, path: &Path, kind: &'static str) -> Result<(), CliError> {
        let (bytes, sha256) = sha256_file(path)?;
        let rel = path.strip_prefix(&self.dir).unwrap_or(path).to_string_lossy().into_owned();
        self.entries.retain(|e| e.path != rel);
        self.entries.push(ArtifactEntry { path: rel, kind, bytes, sha256, config_hash: self.config_hash.clone() });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        self.record(&path, "json")?;
        Ok(path)
    }

    /// Writes a CSV with the given header; an empty row set yields a header-only file.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        drop(w);
        self.record(&path, "csv")?;
        Ok(path)
    }

    pub fn dump_grid_function(&mut self, stem: &str, grid: &Grid, u: &CVec) -> Result<(), CliError> {
        let (bin, side) = fracmag::io::write_grid_function(&self.dir.join(stem), grid, u)?;
        self.record(&bin, "grid-function")?;
        self.record(&side, "sidecar")
    }

    pub fn dump_operator(&mut self, stem: &str, m: &CMat, label: &str, hermiticity: f64) -> Result<(), CliError> {
        let (bin, side) = fracmag::io::write_operator(&self.dir.join(stem), m, label, hermiticity)?;
        self.record(&bin, "operator")?;
        self.record(&side, "sidecar")
    }
}

/// Formats a float for CSV output; shortest round-trip representation.
pub fn num(v: f64) -> String {
    v.to_string()
}
