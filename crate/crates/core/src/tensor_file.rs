//! The `SEMT` binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes  "SEMT"
//! version      u32      currently 1
//! dimension    u32      columns of every entry
//! entry count  u32
//! entries:
//!   id length  u16
//!   id bytes   UTF-8
//!   chunk idx  u32
//!   row count  u32
//!   values     row count × dimension IEEE-754 f32
//! ```
//!
//! The same container carries precomputed contextual embeddings (one entry per
//! document chunk) and model parameters (one entry per named tensor, with
//! dimension 1 and the flattened tensor as rows).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

pub const MAGIC: &[u8; 4] = b"SEMT";
pub const VERSION: u32 = 1;
const HEADER_LEN: u64 = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorEntry {
    pub id: String,
    pub chunk_index: u32,
    /// `rows × dimension`
    pub data: Tensor2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorFile {
    pub dimension: usize,
    pub entries: Vec<TensorEntry>,
}

/// What `validate` reports for a well-formed file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorFileSummary {
    pub version: u32,
    pub dimension: usize,
    pub entries: usize,
    pub total_rows: u64,
    pub bytes: u64,
}

impl TensorFile {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, chunk_index: u32, data: Tensor2) -> Result<()> {
        if data.cols() != self.dimension {
            return Err(Error::dim(
                "tensor entry columns",
                self.dimension,
                data.cols(),
            ));
        }
        let id = id.into();
        if id.len() > u16::MAX as usize {
            return Err(Error::InvalidInput(format!(
                "entry id longer than {} bytes",
                u16::MAX
            )));
        }
        self.entries.push(TensorEntry {
            id,
            chunk_index,
            data,
        });
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self
            .entries
            .iter()
            .map(|e| 2 + e.id.len() + 8 + 4 * e.data.len())
            .sum();
        let mut out = Vec::with_capacity(HEADER_LEN as usize + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for entry in &self.entries {
            out.extend_from_slice(&(entry.id.len() as u16).to_le_bytes());
            out.extend_from_slice(entry.id.as_bytes());
            out.extend_from_slice(&entry.chunk_index.to_le_bytes());
            out.extend_from_slice(&(entry.data.rows() as u32).to_le_bytes());
            for &v in entry.data.values() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = Reader { bytes, pos: 0 };
        let (version, dimension, count) = reader.header()?;
        let _ = version;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            entries.push(reader.entry(dimension, true)?);
        }
        reader.finish()?;
        Ok(Self { dimension, entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut file = fs::File::create(path).map_err(io)?;
        file.write_all(&self.to_bytes()).map_err(io)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        Self::from_bytes(&bytes)
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::MissingInput {
        path: path.to_path_buf(),
        source,
    })
}

/// Checks magic, version, per-entry layout, entry count, trailing bytes and
/// finiteness of every value. The first violation is reported with its byte
/// offset.
pub fn validate_bytes(bytes: &[u8]) -> Result<TensorFileSummary> {
    let mut reader = Reader { bytes, pos: 0 };
    let (version, dimension, count) = reader.header()?;
    let mut total_rows = 0u64;
    for _ in 0..count {
        let entry = reader.entry(dimension, true)?;
        total_rows += entry.data.rows() as u64;
    }
    reader.finish()?;
    Ok(TensorFileSummary {
        version,
        dimension,
        entries: count,
        total_rows,
        bytes: bytes.len() as u64,
    })
}

pub fn validate(path: &Path) -> Result<TensorFileSummary> {
    validate_bytes(&read_bytes(path)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::TensorFormat {
            offset: offset as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(
                self.pos,
                format!(
                    "truncated: need {n} bytes for {what}, {} remain",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn header(&mut self) -> Result<(u32, usize, usize)> {
        let magic = self.take(4, "magic")?;
        if magic != MAGIC {
            return Err(self.fail(0, format!("bad magic {magic:?}, expected \"SEMT\"")));
        }
        let version = self.u32("version")?;
        if version != VERSION {
            return Err(self.fail(4, format!("unsupported version {version}")));
        }
        let dimension = self.u32("dimension")? as usize;
        if dimension == 0 {
            return Err(self.fail(8, "dimension must be positive"));
        }
        let count = self.u32("entry count")? as usize;
        Ok((version, dimension, count))
    }

    fn entry(&mut self, dimension: usize, check_finite: bool) -> Result<TensorEntry> {
        let start = self.pos;
        let id_len = self.u16("id length")? as usize;
        let id_bytes = self.take(id_len, "id")?;
        let id = std::str::from_utf8(id_bytes)
            .map_err(|_| self.fail(start + 2, "entry id is not UTF-8"))?
            .to_owned();
        let chunk_index = self.u32("chunk index")?;
        let rows_at = self.pos;
        let rows = self.u32("row count")? as usize;
        if rows == 0 {
            return Err(self.fail(rows_at, format!("entry `{id}` has zero rows")));
        }
        let n = rows
            .checked_mul(dimension)
            .ok_or_else(|| self.fail(rows_at, "row count overflow"))?;
        let values_at = self.pos;
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| self.fail(rows_at, "row count overflow"))?,
            "values",
        )?;
        let mut values = Vec::with_capacity(n);
        for (i, b) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            if check_finite && !v.is_finite() {
                return Err(Error::NonFinite {
                    offset: (values_at + 4 * i) as u64,
                    entry: format!("{id}#{chunk_index}"),
                });
            }
            values.push(v as f64);
        }
        Ok(TensorEntry {
            id,
            chunk_index,
            data: Tensor2::from_vec(rows, dimension, values).expect("shape computed above"),
        })
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.fail(
                self.pos,
                format!(
                    "{} trailing bytes after last entry",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        Ok(())
    }
}
