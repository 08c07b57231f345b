//! Precomputed word-embedding table.
//!
//! Layout (all integers little-endian):
//!
//! | bytes            | content                                   |
//! |------------------|-------------------------------------------|
//! | 4                | magic `PEAC`                              |
//! | 4                | `u32` version (1)                         |
//! | 4                | `u32` dim                                 |
//! | 4                | `u32` count                               |
//! | 4 · dim · count  | `f32` rows                                |
//! | rest             | UTF-8 words, one per row, `\n`-terminated |

use std::collections::HashMap;
use std::path::Path;

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PEAC";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub words: Vec<String>,
    /// `words.len()` rows of `dim` values.
    pub rows: Vec<Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, words: Vec<String>, rows: Vec<Vec<f32>>) -> Result<Self> {
        if words.len() != rows.len() {
            return Err(Error::Validation(format!(
                "{} words but {} rows",
                words.len(),
                rows.len()
            )));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Validation(format!(
                "row {bad} is not {dim}-dimensional"
            )));
        }
        if let Some(w) = words.iter().find(|w| w.contains('\n') || w.is_empty()) {
            return Err(Error::Validation(format!("unencodable word {w:?}")));
        }
        Ok(Self { dim, words, rows })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.dim * self.rows.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.rows.len() as u32).to_le_bytes());
        for row in &self.rows {
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for w in &self.words {
            out.extend_from_slice(w.as_bytes());
            out.push(b'\n');
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Input(format!("embedding table: {m}"));
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("missing PEAC header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let dim = u32_at(8) as usize;
        let count = u32_at(12) as usize;
        let matrix_end = dim
            .checked_mul(count)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(16))
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| bad("truncated matrix"))?;
        let rows = bytes[16..matrix_end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect::<Vec<_>>()
            .chunks(dim.max(1))
            .take(count)
            .map(<[f32]>::to_vec)
            .collect::<Vec<_>>();
        let text =
            std::str::from_utf8(&bytes[matrix_end..]).map_err(|_| bad("word list is not UTF-8"))?;
        let words: Vec<String> = text
            .strip_suffix('\n')
            .map(|t| t.split('\n').map(str::to_string).collect())
            .unwrap_or_default();
        if words.len() != count {
            return Err(bad(&format!("{count} rows but {} words", words.len())));
        }
        let rows = if dim == 0 {
            vec![Vec::new(); count]
        } else {
            rows
        };
        Self::new(dim, words, rows)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Word → embedding lookup (first occurrence wins).
    pub fn lookup(&self) -> HashMap<&str, EmbeddingVector> {
        let mut map = HashMap::new();
        for (w, r) in self.words.iter().zip(&self.rows) {
            map.entry(w.as_str())
                .or_insert_with(|| EmbeddingVector::from_raw(r.clone()));
        }
        map
    }
}
