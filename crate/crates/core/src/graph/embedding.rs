//! Dense image embeddings and their on-disk format.
//!
//! Layout: the 8 magic bytes `DIVEEMB1`, `n` and `dim` as little-endian
//! `u32`, then `n * dim` little-endian `f32` values in row-major order. Row
//! ids live in a sidecar `<file>.ids.jsonl` holding one `{"image_id": ..}`
//! object per row.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 8] = b"DIVEEMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
    row_ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct IdRecord {
    image_id: String,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-major values. Every row must be finite with a
    /// nonzero Euclidean norm.
    pub fn from_flat(dim: usize, data: Vec<f32>, row_ids: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Embedding("dim must be positive".into()));
        }
        if data.len() != dim * row_ids.len() {
            return Err(Error::Embedding(format!(
                "{} values do not fill {} rows of dim {}",
                data.len(),
                row_ids.len(),
                dim
            )));
        }
        for (i, row) in data.chunks_exact(dim).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Embedding(format!("non-finite value in row {i}")));
            }
            if row.iter().all(|v| *v == 0.0) {
                return Err(Error::Embedding(format!("zero-norm row {i}")));
            }
        }
        let mut lookup = HashMap::with_capacity(row_ids.len());
        for (i, id) in row_ids.iter().enumerate() {
            lookup.entry(id.clone()).or_insert(i);
        }
        Ok(Self {
            dim,
            data,
            row_ids,
            lookup,
        })
    }

    pub fn from_rows(row_ids: Vec<String>, rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::from_flat(dim, rows.concat(), row_ids)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    /// First row carrying `id`.
    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn has_unique_ids(&self) -> bool {
        self.lookup.len() == self.row_ids.len()
    }

    /// Row `i` widened to `f64` and scaled to unit length.
    pub fn unit_row(&self, i: usize) -> Vec<f64> {
        let row: Vec<f64> = self.row(i).iter().map(|&v| f64::from(v)).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.into_iter().map(|v| v / norm).collect()
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = OsString::from(path.as_os_str());
        s.push(".ids.jsonl");
        PathBuf::from(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let sidecar = Self::sidecar_path(path);
        let file = fs::File::open(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let mut ids = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&sidecar, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: IdRecord = serde_json::from_str(&line).map_err(|e| Error::Line {
                line: i + 1,
                message: format!("{}: {e}", sidecar.display()),
            })?;
            ids.push(rec.image_id);
        }
        Self::decode(&bytes, ids)
    }

    /// Decodes the binary payload given the sidecar ids.
    pub fn decode(bytes: &[u8], row_ids: Vec<String>) -> Result<Self> {
        if bytes.len() < 16 {
            if bytes.len() < 8 || &bytes[..8] != EMBEDDING_MAGIC {
                return Err(Error::Embedding("magic mismatch".into()));
            }
            return Err(Error::Embedding("truncated payload".into()));
        }
        if &bytes[..8] != EMBEDDING_MAGIC {
            return Err(Error::Embedding("magic mismatch".into()));
        }
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let payload = &bytes[16..];
        let expected = n
            .checked_mul(dim)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| Error::Embedding("header overflow".into()))?;
        if payload.len() < expected {
            return Err(Error::Embedding("truncated payload".into()));
        }
        if payload.len() > expected {
            return Err(Error::Embedding(format!(
                "{} trailing bytes after payload",
                payload.len() - expected
            )));
        }
        if row_ids.len() != n {
            return Err(Error::Embedding(format!(
                "sidecar lists {} ids for {n} rows",
                row_ids.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_flat(dim, data, row_ids)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.data.len() * 4);
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Writes the binary file and its id sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))?;
        let sidecar = Self::sidecar_path(path);
        let mut buf = Vec::new();
        for id in &self.row_ids {
            serde_json::to_writer(
                &mut buf,
                &IdRecord {
                    image_id: id.clone(),
                },
            )
            .expect("serialising a string record cannot fail");
            buf.push(b'\n');
        }
        let mut f = fs::File::create(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        f.write_all(&buf).map_err(|e| Error::io(&sidecar, e))
    }
}
