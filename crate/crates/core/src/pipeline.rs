//! Corpus → model-ready embedded documents.

use rayon::prelude::*;

use crate::chunker::chunk_document;
use crate::corpus::{embed_chunk, CaseDocument, EmbeddingSequence, EmbeddingSource, FeatureScaler};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedDocument {
    pub id: String,
    pub chunks: Vec<EmbeddingSequence>,
    pub gold: Vec<bool>,
}

impl EmbeddedDocument {
    pub fn targets(&self) -> Vec<f64> {
        self.gold
            .iter()
            .map(|&g| if g { 1.0 } else { 0.0 })
            .collect()
    }
}

pub fn embed_document(
    source: &EmbeddingSource,
    doc: &CaseDocument,
    chunk_size: usize,
    num_labels: usize,
    scaler: Option<&FeatureScaler>,
) -> Result<EmbeddedDocument> {
    let chunked = chunk_document(doc, chunk_size)?;
    let chunks = chunked
        .chunks
        .iter()
        .enumerate()
        .map(|(i, c)| embed_chunk(source, &doc.id, c, i as u32, scaler))
        .collect::<Result<Vec<_>>>()?;
    let gold = doc
        .labels
        .to_vector(num_labels)
        .into_iter()
        .map(|v| v > 0.5)
        .collect();
    Ok(EmbeddedDocument {
        id: doc.id.clone(),
        chunks,
        gold,
    })
}

/// Embeds every document; with `truncate_to` set, only the last that many
/// tokens of each document are kept.
pub fn embed_corpus(
    source: &EmbeddingSource,
    docs: &[CaseDocument],
    chunk_size: usize,
    num_labels: usize,
    truncate_to: Option<usize>,
) -> Result<Vec<EmbeddedDocument>> {
    docs.par_iter()
        .map(|d| match truncate_to {
            Some(m) => embed_document(source, &d.last_tokens(m), chunk_size, num_labels, None),
            None => embed_document(source, d, chunk_size, num_labels, None),
        })
        .collect()
}

/// Fits a standardiser on every real feature row of the training documents.
pub fn fit_scaler(docs: &[EmbeddedDocument]) -> Result<FeatureScaler> {
    FeatureScaler::fit(
        docs.iter()
            .flat_map(|d| d.chunks.iter())
            .flat_map(|c| c.feature_rows().iter().map(Vec::as_slice)),
    )
}

pub fn apply_scaler(docs: &mut [EmbeddedDocument], scaler: &FeatureScaler) -> Result<()> {
    for d in docs.iter() {
        if let Some(c) = d.chunks.first() {
            if c.dim() != scaler.dim() {
                return Err(Error::dim("scaler", c.dim(), scaler.dim()));
            }
        }
    }
    docs.par_iter_mut()
        .for_each(|d| d.chunks.iter_mut().for_each(|c| c.scale(scaler)));
    Ok(())
}
