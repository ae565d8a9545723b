//! Separable synthetic corpora: label `j` is present exactly when the marker
//! token for `j` occurs somewhere in the document.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CaseDocument, EmbeddingSource, Gold, LabelVocabulary, StaticVectors};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSettings {
    pub documents: usize,
    pub labels: usize,
    pub dim: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Number of distinct filler tokens.
    pub filler_vocab: usize,
    /// Filler vectors are drawn from `[-s, s]`, marker vectors from `[-1, 1]`.
    pub filler_scale: f64,
    /// Chance that any given label is attached to a document.
    pub label_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSettings {
    fn default() -> Self {
        Self::overfit()
    }
}

impl SyntheticSettings {
    /// 32 short documents, 4 labels, 16-dimensional vectors.
    pub fn overfit() -> Self {
        Self {
            documents: 32,
            labels: 4,
            dim: 16,
            min_tokens: 24,
            max_tokens: 48,
            filler_vocab: 64,
            filler_scale: 1.0,
            label_rate: 0.5,
            seed: 42,
        }
    }

    /// 2,000-token documents with one marker per present label at a uniform
    /// random position; low-norm filler so the marker is the only signal.
    pub fn positional() -> Self {
        Self {
            documents: 96,
            labels: 2,
            dim: 16,
            min_tokens: 2000,
            max_tokens: 2000,
            filler_vocab: 8,
            filler_scale: 0.1,
            label_rate: 0.4,
            seed: 42,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.documents < 2 || self.labels == 0 || self.dim == 0 || self.filler_vocab == 0 {
            return Err(Error::Config(
                "synthetic corpus needs ≥ 2 documents and positive labels, dim and filler vocabulary".into(),
            ));
        }
        if self.min_tokens < self.labels || self.min_tokens > self.max_tokens {
            return Err(Error::Config(format!(
                "synthetic token range {}..={} must hold every marker ({} labels)",
                self.min_tokens, self.max_tokens, self.labels
            )));
        }
        if !(self.filler_scale > 0.0 && self.filler_scale.is_finite()) {
            return Err(Error::Config(format!(
                "filler_scale {} must be positive",
                self.filler_scale
            )));
        }
        if !(0.0..=1.0).contains(&self.label_rate) {
            return Err(Error::Config(format!(
                "label_rate {} outside [0, 1]",
                self.label_rate
            )));
        }
        Ok(())
    }
}

pub fn marker_token(label: usize) -> String {
    format!("marker{label}")
}

pub fn filler_token(i: usize) -> String {
    format!("w{i}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub documents: Vec<CaseDocument>,
    pub vectors: StaticVectors,
    pub vocabulary: LabelVocabulary,
}

impl SyntheticCorpus {
    pub fn source(&self) -> EmbeddingSource {
        EmbeddingSource::Static(self.vectors.clone())
    }
}

fn draw_label_sets(settings: &SyntheticSettings, rng: &mut ChaCha8Rng) -> Vec<BTreeSet<usize>> {
    let mut sets: Vec<BTreeSet<usize>> = (0..settings.documents)
        .map(|_| {
            (0..settings.labels)
                .filter(|_| rng.gen_bool(settings.label_rate))
                .collect()
        })
        .collect();
    // every label needs at least one positive and one negative document
    for j in 0..settings.labels {
        let count = sets.iter().filter(|s| s.contains(&j)).count();
        if count == 0 {
            sets[j % settings.documents].insert(j);
        } else if count == settings.documents {
            sets[(j + 1) % settings.documents].remove(&j);
        }
    }
    sets
}

pub fn generate(settings: &SyntheticSettings) -> Result<SyntheticCorpus> {
    settings.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut vectors = StaticVectors::new(settings.dim);
    let tokens = (0..settings.filler_vocab)
        .map(|i| (filler_token(i), settings.filler_scale))
        .chain((0..settings.labels).map(|j| (marker_token(j), 1.0)));
    for (t, scale) in tokens {
        let v: Vec<f64> = (0..settings.dim)
            .map(|_| scale * rng.gen_range(-1.0..1.0))
            .collect();
        vectors.insert(t, &v)?;
    }
    let label_sets = draw_label_sets(settings, &mut rng);
    let width = settings.documents.to_string().len();
    let documents = label_sets
        .into_iter()
        .enumerate()
        .map(|(i, labels)| {
            let n = rng.gen_range(settings.min_tokens..=settings.max_tokens);
            let mut toks: Vec<String> = (0..n)
                .map(|_| filler_token(rng.gen_range(0..settings.filler_vocab)))
                .collect();
            let mut slots: Vec<usize> = (0..n).collect();
            slots.shuffle(&mut rng);
            for (&j, &pos) in labels.iter().zip(&slots) {
                toks[pos] = marker_token(j);
            }
            CaseDocument::new(format!("doc{i:0width$}"), toks, Gold::Labels(labels))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticCorpus {
        documents,
        vectors,
        vocabulary: LabelVocabulary::indexed(settings.labels),
    })
}
