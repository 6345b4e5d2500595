//! On-disk optimizer state: one little-endian `f64` blob per tensor plus a
//! JSON manifest of names, shapes, seed and step.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::DenseMatrix;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),

    #[error("tensor name {0:?} must be nonempty and use only [A-Za-z0-9._-]")]
    InvalidName(String),

    #[error("{file}: expected {expected} bytes for shape {rows}×{cols}, found {found}")]
    Size {
        file: String,
        rows: usize,
        cols: usize,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub seed: u64,
    pub step: u64,
    pub tensors: BTreeMap<String, DenseMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    seed: u64,
    step: u64,
    tensors: Vec<TensorEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<(), CheckpointError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut entries = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            if !valid_name(name) {
                return Err(CheckpointError::InvalidName(name.clone()));
            }
            let file = format!("{name}.bin");
            let bytes: Vec<u8> = t.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
            let path = dir.join(&file);
            fs::write(&path, bytes).map_err(io_err(&path))?;
            entries.push(TensorEntry {
                name: name.clone(),
                rows: t.rows(),
                cols: t.cols(),
                file,
            });
        }
        let manifest = Manifest {
            seed: self.seed,
            step: self.step,
            tensors: entries,
        };
        let path = dir.join(MANIFEST_FILE);
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        fs::write(&path, json).map_err(io_err(&path))
    }

    pub fn load(dir: &Path) -> Result<Self, CheckpointError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let mut tensors = BTreeMap::new();
        for e in manifest.tensors {
            if !valid_name(&e.name) || e.file != format!("{}.bin", e.name) {
                return Err(CheckpointError::InvalidName(e.name));
            }
            let path = dir.join(&e.file);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let expected = e.rows * e.cols * 8;
            if bytes.len() != expected {
                return Err(CheckpointError::Size {
                    file: e.file,
                    rows: e.rows,
                    cols: e.cols,
                    expected,
                    found: bytes.len(),
                });
            }
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let t = DenseMatrix::from_vec(e.rows, e.cols, data).expect("length checked above");
            tensors.insert(e.name, t);
        }
        Ok(Self {
            seed: manifest.seed,
            step: manifest.step,
            tensors,
        })
    }
}
