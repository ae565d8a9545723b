//! Case records, embedding sources and feature standardisation.

mod embedding;
mod records;
mod scaler;

pub use embedding::{
    embed_chunk, ContextualTensors, EmbeddingKind, EmbeddingSequence, EmbeddingSource,
    StaticVectors,
};
pub use records::{
    load_corpus, tokenize, write_corpus, CaseDocument, Gold, LabelVocabulary, TaskKind,
};
pub use scaler::{FeatureScaler, STD_FLOOR};
