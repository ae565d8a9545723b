use serde::{Deserialize, Serialize};

use crate::chunker::DEFAULT_CHUNK_SIZE;
use crate::corpus::TaskKind;
use crate::error::{Error, Result};
use crate::nn::{Activation, CellKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    #[default]
    Sigmoid,
    Softmax,
}

/// Trainable tensor groups; each gets its own learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerGroup {
    ChunkRecurrent,
    DocumentRecurrent,
    Attention,
    Head,
    SentinelEmbedding,
}

impl LayerGroup {
    pub const ALL: [LayerGroup; 5] = [
        LayerGroup::ChunkRecurrent,
        LayerGroup::DocumentRecurrent,
        LayerGroup::Attention,
        LayerGroup::Head,
        LayerGroup::SentinelEmbedding,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub task: TaskKind,
    pub num_labels: usize,
    pub embedding_dim: usize,
    pub chunk_size: usize,
    pub gate: CellKind,
    pub bidirectional: bool,
    pub chunk_hidden: usize,
    pub doc_hidden: usize,
    pub attention_dim: usize,
    pub dropout: f64,
    pub chunk_semantics: bool,
    pub document_semantics: bool,
    pub concise_extraction: bool,
    /// Adds `U h_last` (final document-recurrent state) to the head logits.
    pub recurrent_bias: bool,
    pub activation: Activation,
    pub head: HeadKind,
    /// Prepend a trainable delimiter vector to each chunk (static sources).
    pub learned_sentinel: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::MultiLabel,
            num_labels: 100,
            embedding_dim: 300,
            chunk_size: DEFAULT_CHUNK_SIZE,
            gate: CellKind::Gru,
            bidirectional: true,
            chunk_hidden: 64,
            doc_hidden: 64,
            attention_dim: 64,
            dropout: 0.5,
            chunk_semantics: true,
            document_semantics: true,
            concise_extraction: true,
            recurrent_bias: false,
            activation: Activation::Relu,
            head: HeadKind::Sigmoid,
            learned_sentinel: true,
        }
    }
}

impl ModelConfig {
    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    /// Width of each chunk vector `fh_i`.
    pub fn chunk_width(&self) -> usize {
        if self.chunk_semantics {
            self.directions() * self.chunk_hidden
        } else {
            self.embedding_dim
        }
    }

    /// Width of the document vector `Th` and of the final recurrent state.
    pub fn doc_width(&self) -> usize {
        self.directions() * self.doc_hidden
    }

    pub fn head_input_width(&self) -> usize {
        if self.concise_extraction || !self.document_semantics {
            self.chunk_width()
        } else {
            self.doc_width()
        }
    }

    /// Number of head units: two for a softmax binary head, `|L|` otherwise.
    pub fn output_units(&self) -> usize {
        match (self.task, self.head) {
            (TaskKind::Binary, HeadKind::Softmax) => 2,
            _ => self.num_labels,
        }
    }

    pub fn is_active(&self, group: LayerGroup) -> bool {
        match group {
            LayerGroup::ChunkRecurrent => self.chunk_semantics,
            LayerGroup::DocumentRecurrent => self.document_semantics,
            LayerGroup::Attention => self.concise_extraction,
            LayerGroup::Head => true,
            LayerGroup::SentinelEmbedding => self.learned_sentinel && self.chunk_semantics,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.chunk_semantics || self.document_semantics || self.concise_extraction) {
            return bad("at least one of chunk_semantics, document_semantics, concise_extraction must be enabled".into());
        }
        if self.num_labels == 0 {
            return bad("num_labels must be positive".into());
        }
        if self.task == TaskKind::Binary && self.num_labels != 1 {
            return bad(format!(
                "binary task uses a single label, got num_labels = {}",
                self.num_labels
            ));
        }
        for (name, v) in [
            ("embedding_dim", self.embedding_dim),
            ("chunk_size", self.chunk_size),
            ("chunk_hidden", self.chunk_hidden),
            ("doc_hidden", self.doc_hidden),
            ("attention_dim", self.attention_dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.concise_extraction
            && self.document_semantics
            && self.chunk_width() != self.doc_width()
        {
            return bad(format!(
                "concise extraction attends over chunk vectors ({}) and the document vector ({}); widths must match",
                self.chunk_width(),
                self.doc_width()
            ));
        }
        if self.recurrent_bias && !self.document_semantics {
            return bad(
                "recurrent_bias needs document_semantics (it reads the final document state)"
                    .into(),
            );
        }
        Ok(())
    }
}
