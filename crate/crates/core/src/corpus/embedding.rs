use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scaler::FeatureScaler;
use crate::error::{Error, Result};
use crate::tensor::Tensor2;
use crate::tensor_file::TensorFile;

/// Word-vector lookup table loaded from the `<count> <dim>` text format.
/// Unknown tokens map to the all-zeros vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticVectors {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
}

impl StaticVectors {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            index: HashMap::new(),
            vectors: Vec::new(),
        }
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::dim("static vector", self.dim, vector.len()));
        }
        let token = token.into();
        match self.index.get(&token) {
            Some(&i) => self.vectors[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector),
            None => {
                self.index.insert(token, self.index.len());
                self.vectors.extend_from_slice(vector);
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|source| Error::MissingInput {
            path: path.to_path_buf(),
            source,
        })?;
        let malformed = |line: usize, reason: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| malformed(1, "empty vector file".into()))?
            .map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
        let mut parts = header.split_whitespace();
        let (count, dim) = match (
            parts.next().and_then(|s| s.parse::<usize>().ok()),
            parts.next().and_then(|s| s.parse::<usize>().ok()),
            parts.next(),
        ) {
            (Some(c), Some(d), None) if d > 0 => (c, d),
            _ => {
                return Err(malformed(
                    1,
                    format!("bad header `{header}`, expected `<count> <dim>`"),
                ))
            }
        };
        let mut table = Self::new(dim);
        let mut row = Vec::with_capacity(dim);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("non-empty line");
            row.clear();
            for f in fields {
                let v: f64 = f
                    .parse()
                    .map_err(|_| malformed(i + 2, format!("bad float `{f}`")))?;
                row.push(v);
            }
            if row.len() != dim {
                return Err(malformed(
                    i + 2,
                    format!(
                        "token `{token}` has {} values, header says {dim}",
                        row.len()
                    ),
                ));
            }
            table.insert(token, &row)?;
        }
        if table.len() != count {
            log::warn!(
                "{}: header declares {count} vectors, file holds {}",
                path.display(),
                table.len()
            );
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut entries: Vec<(&String, &usize)> = self.index.iter().collect();
        entries.sort_by_key(|(_, &i)| i);
        let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
        writeln!(out, "{} {}", entries.len(), self.dim).map_err(io)?;
        for (token, &i) in entries {
            write!(out, "{token}").map_err(io)?;
            for v in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                write!(out, " {v}").map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Per-chunk matrices exported by an external encoder, keyed by
/// `(document id, chunk index)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextualTensors {
    dim: usize,
    entries: HashMap<(String, u32), Tensor2>,
}

impl ContextualTensors {
    pub fn from_file(file: TensorFile) -> Self {
        let dim = file.dimension;
        let entries = file
            .entries
            .into_iter()
            .map(|e| ((e.id, e.chunk_index), e.data))
            .collect();
        Self { dim, entries }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_file(TensorFile::read(path)?))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, doc_id: &str, chunk_index: u32) -> Option<&Tensor2> {
        self.entries.get(&(doc_id.to_owned(), chunk_index))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    StaticLookup,
    PrecomputedContextual,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingSource {
    Static(StaticVectors),
    Contextual(ContextualTensors),
}

impl EmbeddingSource {
    pub fn load(kind: EmbeddingKind, path: &Path, expected_dim: Option<usize>) -> Result<Self> {
        let source = match kind {
            EmbeddingKind::StaticLookup => EmbeddingSource::Static(StaticVectors::load(path)?),
            EmbeddingKind::PrecomputedContextual => {
                EmbeddingSource::Contextual(ContextualTensors::load(path)?)
            }
        };
        if let Some(d) = expected_dim {
            if d != source.dim() {
                return Err(Error::dim(
                    format!("embedding file {}", path.display()),
                    d,
                    source.dim(),
                ));
            }
        }
        Ok(source)
    }

    pub fn kind(&self) -> EmbeddingKind {
        match self {
            EmbeddingSource::Static(_) => EmbeddingKind::StaticLookup,
            EmbeddingSource::Contextual(_) => EmbeddingKind::PrecomputedContextual,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            EmbeddingSource::Static(s) => s.dim(),
            EmbeddingSource::Contextual(c) => c.dim(),
        }
    }

    /// Static sources have no delimiter vector of their own; the model
    /// supplies a trainable one.
    pub fn needs_learned_sentinel(&self) -> bool {
        matches!(self, EmbeddingSource::Static(_))
    }
}

/// Embedding matrix for one chunk. Row 0 is the sentinel (delimiter) slot.
/// When `learned_sentinel` is set, row 0 is a zero placeholder that the model
/// replaces with its own trainable vector.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSequence {
    pub rows: Vec<Vec<f64>>,
    pub learned_sentinel: bool,
}

impl EmbeddingSequence {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Rows after the sentinel slot; falls back to all rows for single-row
    /// contextual entries.
    pub fn token_rows(&self) -> &[Vec<f64>] {
        if self.rows.len() > 1 {
            &self.rows[1..]
        } else {
            &self.rows
        }
    }

    /// Rows that carry real features (everything but a placeholder sentinel).
    pub fn feature_rows(&self) -> &[Vec<f64>] {
        if self.learned_sentinel {
            &self.rows[1..]
        } else {
            &self.rows
        }
    }

    pub fn scale(&mut self, scaler: &FeatureScaler) {
        let skip = usize::from(self.learned_sentinel);
        for row in self.rows.iter_mut().skip(skip) {
            scaler.transform_in_place(row);
        }
    }
}

/// Embeds one chunk: a sentinel slot followed by one row per token (static)
/// or the stored encoder rows (contextual), optionally standardised.
pub fn embed_chunk(
    source: &EmbeddingSource,
    doc_id: &str,
    chunk: &[String],
    chunk_index: u32,
    scaler: Option<&FeatureScaler>,
) -> Result<EmbeddingSequence> {
    if chunk.is_empty() {
        return Err(Error::EmptyDocument {
            id: format!("{doc_id}#{chunk_index}"),
        });
    }
    if let Some(s) = scaler {
        if s.dim() != source.dim() {
            return Err(Error::dim("scaler", source.dim(), s.dim()));
        }
    }
    let mut seq = match source {
        EmbeddingSource::Static(table) => {
            let d = table.dim();
            let mut rows = Vec::with_capacity(chunk.len() + 1);
            rows.push(vec![0.0; d]);
            rows.extend(
                chunk
                    .iter()
                    .map(|t| table.get(t).map_or_else(|| vec![0.0; d], <[f64]>::to_vec)),
            );
            EmbeddingSequence {
                rows,
                learned_sentinel: true,
            }
        }
        EmbeddingSource::Contextual(ctx) => {
            let m = ctx
                .get(doc_id, chunk_index)
                .ok_or_else(|| Error::MissingTensor {
                    doc_id: doc_id.to_owned(),
                    chunk_index,
                })?;
            EmbeddingSequence {
                rows: (0..m.rows()).map(|r| m.row(r).to_vec()).collect(),
                learned_sentinel: false,
            }
        }
    };
    if let Some(s) = scaler {
        seq.scale(s);
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    fn table(d: usize, words: &[&str]) -> StaticVectors {
        let mut t = StaticVectors::new(d);
        for (i, w) in words.iter().enumerate() {
            let v: Vec<f64> = (0..d).map(|j| (i * d + j) as f64 * 0.01).collect();
            t.insert(*w, &v).unwrap();
        }
        t
    }

    #[test]
    fn static_chunk_shape_has_sentinel_row() {
        let words = ["a", "b", "c", "d", "e"];
        let src = EmbeddingSource::Static(table(100, &words));
        let seq = embed_chunk(&src, "doc", &toks(&words), 0, None).unwrap();
        assert_eq!(seq.rows.len(), 6);
        assert!(seq.rows.iter().all(|r| r.len() == 100));
        assert!(seq.learned_sentinel);
        assert_eq!(seq.rows[2], src_row(&src, "b"));
    }

    fn src_row(src: &EmbeddingSource, t: &str) -> Vec<f64> {
        match src {
            EmbeddingSource::Static(s) => s.get(t).unwrap().to_vec(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn unknown_token_gets_zero_vector() {
        let src = EmbeddingSource::Static(table(4, &["known"]));
        let seq = embed_chunk(&src, "doc", &toks(&["known", "mystery"]), 0, None).unwrap();
        assert_eq!(seq.rows[2], vec![0.0; 4]);
    }

    #[test]
    fn identity_scaler_leaves_rows_unchanged() {
        let src = EmbeddingSource::Static(table(3, &["x", "y"]));
        let raw = embed_chunk(&src, "d", &toks(&["x", "y"]), 0, None).unwrap();
        let scaled = embed_chunk(
            &src,
            "d",
            &toks(&["x", "y"]),
            0,
            Some(&FeatureScaler::identity(3)),
        )
        .unwrap();
        assert_eq!(raw, scaled);
    }

    #[test]
    fn contextual_lookup_and_missing_entry() {
        let mut f = TensorFile::new(2);
        f.push(
            "d1",
            1,
            Tensor2::from_vec(3, 2, vec![1., 2., 3., 4., 5., 6.]).unwrap(),
        )
        .unwrap();
        let src = EmbeddingSource::Contextual(ContextualTensors::from_file(f));
        let seq = embed_chunk(&src, "d1", &toks(&["w"]), 1, None).unwrap();
        assert_eq!(seq.rows, vec![vec![1., 2.], vec![3., 4.], vec![5., 6.]]);
        assert!(!seq.learned_sentinel);
        let err = embed_chunk(&src, "d1", &toks(&["w"]), 0, None).unwrap_err();
        assert!(matches!(err, Error::MissingTensor { chunk_index: 0, .. }));
    }

    #[test]
    fn vector_file_round_trip_and_dimension_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vec.txt");
        let t = table(3, &["alpha", "beta"]);
        t.write(&path).unwrap();
        let back = StaticVectors::load(&path).unwrap();
        assert_eq!(back.get("beta"), t.get("beta"));
        let err = EmbeddingSource::load(EmbeddingKind::StaticLookup, &path, Some(5)).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 5,
                found: 3,
                ..
            }
        ));
    }

    #[test]
    fn vector_file_with_short_row_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vec.txt");
        fs::write(&path, "2 3\nok 1 2 3\nbad 1 2\n").unwrap();
        assert!(matches!(
            StaticVectors::load(&path),
            Err(Error::MalformedRecord { line: 3, .. })
        ));
    }
}
