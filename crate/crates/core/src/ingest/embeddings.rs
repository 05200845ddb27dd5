//! `EMB1` embedding store: magic, u32 count, u32 dim, then count*dim
//! little-endian f32 values, row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 12;
const UNIT_NORM_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    count: usize,
    dim: usize,
    data: Vec<f32>,
    unit_norm: bool,
}

impl EmbeddingStore {
    pub fn new(count: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmbeddingDim("dimension must be positive".into()));
        }
        if data.len() != count * dim {
            return Err(Error::TruncatedPayload {
                expected: count * dim * 4,
                actual: data.len() * 4,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: pos / dim,
                col: pos % dim,
            });
        }
        let unit_norm = data.chunks_exact(dim).all(|row| {
            let n2: f64 = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
            (n2.sqrt() - 1.0).abs() <= UNIT_NORM_TOL
        });
        Ok(Self {
            count,
            dim,
            data,
            unit_norm,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(dim, bad.len()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Whether every row had unit L2 norm (within 1e-4) at load time.
    pub fn is_unit_norm(&self) -> bool {
        self.unit_norm
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.count as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedPayload {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = HEADER_LEN + count * dim * 4;
        if bytes.len() < expected {
            return Err(Error::TruncatedPayload {
                expected,
                actual: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::parse(
                "embedding payload",
                format!("{} trailing bytes after {count}x{dim} values", bytes.len() - expected),
            ));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(count, dim, data)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&bytes)
}

/// Companion list: one image id per line, line `i` naming row `i`.
pub fn load_embedding_ids(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

pub fn write_embedding_ids(path: impl AsRef<Path>, ids: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for id in ids {
        writeln!(f, "{id}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
