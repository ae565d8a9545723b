//! Contiguous fixed-size chunking of a token sequence.

use crate::corpus::CaseDocument;
use crate::error::{Error, Result};

pub const DEFAULT_CHUNK_SIZE: usize = 512;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkedDocument {
    pub doc_id: String,
    pub chunk_size: usize,
    pub chunks: Vec<Vec<String>>,
}

impl ChunkedDocument {
    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn flatten(&self) -> Vec<String> {
        self.chunks.concat()
    }
}

/// Splits `tokens` left to right into non-overlapping chunks of `m` tokens;
/// the final chunk keeps whatever remains (1..=m tokens, no padding).
pub fn chunk_tokens(tokens: &[String], m: usize) -> Vec<Vec<String>> {
    assert!(m >= 1, "chunk size must be positive");
    tokens.chunks(m).map(<[String]>::to_vec).collect()
}

pub fn chunk_document(doc: &CaseDocument, m: usize) -> Result<ChunkedDocument> {
    if m == 0 {
        return Err(Error::Config("chunk size must be at least 1".into()));
    }
    if doc.tokens.is_empty() {
        return Err(Error::EmptyDocument { id: doc.id.clone() });
    }
    Ok(ChunkedDocument {
        doc_id: doc.id.clone(),
        chunk_size: m,
        chunks: chunk_tokens(&doc.tokens, m),
    })
}
