//! Grid binary dumps with JSON sidecars, parameter files, and hashing.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::params::ParameterSet;

/// Sidecar metadata stored next to every grid dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub components: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl Sidecar {
    pub fn for_field(f: &GridFunction) -> Self {
        Sidecar {
            d: f.grid.d,
            l: f.grid.l,
            n: f.grid.n,
            components: f.components,
            time: None,
            role: None,
            beta: None,
        }
    }
}

pub fn sidecar_path(bin: &Path) -> PathBuf {
    let mut p = bin.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Writes little-endian f64 values (row-major, component-major) plus sidecar.
pub fn save_grid_function(path: &Path, f: &GridFunction, sidecar: &Sidecar) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut bytes = Vec::with_capacity(f.values.len() * 8);
    for v in &f.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    let json = serde_json::to_string_pretty(sidecar)?;
    fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn load_grid_function(path: &Path) -> Result<(GridFunction, Sidecar)> {
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let grid = Grid::new(sidecar.d, sidecar.n, sidecar.l)?;
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let expect = sidecar.components * grid.len() * 8;
    if bytes.len() != expect {
        return Err(Error::Format(format!(
            "grid dump {path:?} has {} bytes, expected {expect}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let f = GridFunction::from_values(grid, sidecar.components, values)?;
    Ok((f, sidecar))
}

pub fn load_params(path: &Path) -> Result<ParameterSet> {
    ParameterSet::from_json(&fs::read_to_string(path)?)
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.bin");
        let grid = Grid::new(2, 16, 3.0).unwrap();
        let f = GridFunction::sample_scalar(grid, |x, y| x * y + 0.25);
        let mut sc = Sidecar::for_field(&f);
        sc.time = Some(0.5);
        save_grid_function(&path, &f, &sc).unwrap();
        let (g, meta) = load_grid_function(&path).unwrap();
        assert_eq!(g.values, f.values);
        assert_eq!(meta.time, Some(0.5));
        assert_eq!(meta.n, 16);
        // byte-stable dumps hash identically
        let h1 = sha256_hex(&path).unwrap();
        save_grid_function(&path, &f, &sc).unwrap();
        assert_eq!(h1, sha256_hex(&path).unwrap());
    }
}
