//! Flat complex arrays (interleaved re/im, little-endian f64) with JSON sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridParams};
use crate::linalg::{CMat, CVec, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    #[serde(flatten)]
    pub grid: GridParams,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSidecar {
    pub dim: usize,
    pub label: String,
    pub hermiticity_residual: f64,
    /// Entries are stored row by row.
    pub layout: String,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut p = stem.as_os_str().to_owned();
    p.push(".");
    p.push(ext);
    PathBuf::from(p)
}

pub fn encode(values: impl IntoIterator<Item = C64>) -> Vec<u8> {
    let mut out = Vec::new();
    for z in values {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<C64>> {
    if !bytes.len().is_multiple_of(16) {
        return Err(Error::InvalidParameter(format!("flat array length {} is not a multiple of 16", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            C64::new(re, im)
        })
        .collect())
}

/// Writes `<stem>.bin` and `<stem>.json`. Returns both paths.
pub fn write_grid_function(stem: &Path, grid: &Grid, u: &CVec) -> Result<(PathBuf, PathBuf)> {
    if u.len() != grid.len() {
        return Err(Error::ShapeMismatch { expected: grid.len(), got: u.len() });
    }
    let bin = with_ext(stem, "bin");
    let json = with_ext(stem, "json");
    fs::write(&bin, encode(u.iter().copied()))?;
    let side = GridSidecar { grid: grid.params(), len: u.len() };
    fs::write(&json, serde_json::to_string_pretty(&side)?)?;
    Ok((bin, json))
}

pub fn read_grid_function(stem: &Path) -> Result<(GridSidecar, CVec)> {
    let side: GridSidecar = serde_json::from_str(&fs::read_to_string(with_ext(stem, "json"))?)?;
    let data = decode(&fs::read(with_ext(stem, "bin"))?)?;
    if data.len() != side.len {
        return Err(Error::ShapeMismatch { expected: side.len, got: data.len() });
    }
    Ok((side, CVec::from_vec(data)))
}

pub fn write_operator(stem: &Path, m: &CMat, label: &str, hermiticity_residual: f64) -> Result<(PathBuf, PathBuf)> {
    let bin = with_ext(stem, "bin");
    let json = with_ext(stem, "json");
    let rows = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| (i, j)));
    fs::write(&bin, encode(rows.map(|(i, j)| m[(i, j)])))?;
    let side = OperatorSidecar {
        dim: m.nrows(),
        label: label.to_string(),
        hermiticity_residual,
        layout: "row-major".into(),
    };
    fs::write(&json, serde_json::to_string_pretty(&side)?)?;
    Ok((bin, json))
}

pub fn read_operator(stem: &Path) -> Result<(OperatorSidecar, CMat)> {
    let side: OperatorSidecar = serde_json::from_str(&fs::read_to_string(with_ext(stem, "json"))?)?;
    let data = decode(&fs::read(with_ext(stem, "bin"))?)?;
    let n = side.dim;
    if data.len() != n * n {
        return Err(Error::ShapeMismatch { expected: n * n, got: data.len() });
    }
    Ok((side, CMat::from_row_slice(n, n, &data)))
}
