use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    MissingInput {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("document `{id}`: label {label} outside vocabulary of size {size}")]
    LabelOutOfRange {
        id: String,
        label: usize,
        size: usize,
    },

    #[error("document `{id}` has no tokens")]
    EmptyDocument { id: String },

    #[error("tensor file error at byte {offset}: {reason}")]
    TensorFormat { offset: u64, reason: String },

    #[error("non-finite value at byte {offset} ({entry})")]
    NonFinite { offset: u64, entry: String },

    #[error("no precomputed tensor for document `{doc_id}` chunk {chunk_index}")]
    MissingTensor { doc_id: String, chunk_index: u32 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    InvalidInput(String),

    #[error("non-finite gradient in parameter `{name}`")]
    NanGradient { name: String },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("checkpoint integrity: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }

    /// Read failure: a missing file is an input error, anything else i/o.
    pub fn read(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput { path, source }
        } else {
            Error::Io { path, source }
        }
    }

    pub fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable dotted error class used for machine-parsable diagnostics.
    pub fn class(&self) -> &'static str {
        match self {
            Error::MissingInput { .. } => "io.missing_input",
            Error::Io { .. } => "io.error",
            Error::MalformedRecord { .. } => "data.malformed_record",
            Error::LabelOutOfRange { .. } => "data.label_range",
            Error::EmptyDocument { .. } => "data.empty_document",
            Error::TensorFormat { .. } => "data.format",
            Error::NonFinite { .. } => "data.nonfinite",
            Error::MissingTensor { .. } => "data.missing_tensor",
            Error::DimensionMismatch { .. } => "data.dimension",
            Error::Config(_) => "config.invalid",
            Error::InvalidInput(_) => "input.invalid",
            Error::NanGradient { .. } => "train.nan_gradient",
            Error::Diverged(_) => "train.diverged",
            Error::Checkpoint(_) => "data.checkpoint",
        }
    }
}
