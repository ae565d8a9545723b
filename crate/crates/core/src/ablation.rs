//! Component and gate ablations, each trained from the same seed.
//!
//! Component rows: full model, without chunk semantics, without document
//! semantics, without concise extraction. Gate rows: BiGRU, GRU, BiLSTM,
//! LSTM. Optionally two input rows: full document vs. last-m tokens only.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, ThresholdPolicy};
use crate::model::ModelConfig;
use crate::nn::CellKind;
use crate::pipeline::EmbeddedDocument;
use crate::training::{init_params, train, EpochMetrics, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowGroup {
    Component,
    Gate,
    Input,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub group: RowGroup,
    pub model: ModelConfig,
    /// Keep only the last `n` tokens of each document.
    pub truncate_to: Option<usize>,
}

/// Turns chunk semantics off. The chunk vector then has the embedding width,
/// so when concise extraction and the document stage are both on, the
/// document hidden size is adjusted to match it.
pub fn without_chunk_semantics(base: &ModelConfig) -> Result<ModelConfig> {
    let mut m = ModelConfig {
        chunk_semantics: false,
        ..base.clone()
    };
    if m.concise_extraction && m.document_semantics && m.chunk_width() != m.doc_width() {
        let dirs = m.directions();
        if !m.embedding_dim.is_multiple_of(dirs) {
            return Err(Error::Config(format!(
                "cannot match document width {} to embedding width {} with {} directions",
                m.doc_width(),
                m.embedding_dim,
                dirs
            )));
        }
        m.doc_hidden = m.embedding_dim / dirs;
    }
    Ok(m)
}

/// The rows to run. `truncate_to` adds the full-vs-truncated input pair.
pub fn standard_variants(
    base: &ModelConfig,
    truncate_to: Option<usize>,
) -> Vec<(String, RowGroup, Result<Variant>)> {
    let row = |name: &str, group, model: Result<ModelConfig>, truncate_to| {
        let v = model.and_then(|m| {
            m.validate()?;
            Ok(Variant {
                name: name.to_owned(),
                group,
                model: m,
                truncate_to,
            })
        });
        (name.to_owned(), group, v)
    };
    let with = |f: &dyn Fn(&mut ModelConfig)| {
        let mut m = base.clone();
        f(&mut m);
        Ok(m)
    };
    let mut rows = vec![
        row("full", RowGroup::Component, Ok(base.clone()), None),
        row(
            "without-chunk-semantics",
            RowGroup::Component,
            without_chunk_semantics(base),
            None,
        ),
        row(
            "without-document-semantics",
            RowGroup::Component,
            with(&|m| m.document_semantics = false),
            None,
        ),
        row(
            "without-concise-extraction",
            RowGroup::Component,
            with(&|m| m.concise_extraction = false),
            None,
        ),
    ];
    for (name, gate, bi) in [
        ("bigru", CellKind::Gru, true),
        ("gru", CellKind::Gru, false),
        ("bilstm", CellKind::Lstm, true),
        ("lstm", CellKind::Lstm, false),
    ] {
        rows.push(row(
            name,
            RowGroup::Gate,
            with(&|m| {
                m.gate = gate;
                m.bidirectional = bi;
            }),
            None,
        ));
    }
    if let Some(n) = truncate_to {
        rows.push(row(
            "full-document",
            RowGroup::Input,
            Ok(base.clone()),
            None,
        ));
        rows.push(row(
            &format!("last-{n}-tokens"),
            RowGroup::Input,
            Ok(base.clone()),
            Some(n),
        ));
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub group: RowGroup,
    /// `None` when the row completed; otherwise why it could not run.
    pub error: Option<String>,
    pub epochs_run: usize,
    pub final_train_loss: Option<f64>,
    pub best_epoch: usize,
    pub diverged: bool,
    /// Metrics of the best checkpoint on the evaluation split, thresholds
    /// fitted on the development split.
    pub eval: Option<EpochMetrics>,
    /// Attention parameters after training are bit-identical to their
    /// initial values.
    pub attention_untouched: bool,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

/// Embedded `(train, dev, eval)` splits for a given truncation.
pub type Splits = (
    Vec<EmbeddedDocument>,
    Option<Vec<EmbeddedDocument>>,
    Vec<EmbeddedDocument>,
);

fn run_variant(v: &Variant, train_cfg: &TrainConfig, splits: &Splits) -> Result<AblationRow> {
    let clock = Instant::now();
    let (train_docs, dev, eval_docs) = splits;
    let initial = init_params(&v.model, train_cfg.seed)?;
    let out = train(
        &v.model,
        train_docs,
        dev.as_deref(),
        train_cfg,
        initial.clone(),
    )?;
    let metrics = evaluate(
        &v.model,
        &out.best.params,
        eval_docs,
        &ThresholdPolicy::Fixed(out.best.thresholds.clone()),
    )?;
    Ok(AblationRow {
        name: v.name.clone(),
        group: v.group,
        error: None,
        epochs_run: out.log.len(),
        final_train_loss: out.log.last().map(|r| r.train_loss),
        best_epoch: out.best.epoch,
        diverged: out.diverged.is_some(),
        eval: Some(EpochMetrics::from(&metrics.report)),
        attention_untouched: out.last.params.attention == initial.attention,
        wall_seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Runs every row sequentially with the shared seed in `train_cfg`.
/// `splits` embeds the data for a truncation setting; it is called once per
/// distinct setting.
pub fn run_ablation<F>(
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    truncate_to: Option<usize>,
    mut splits: F,
) -> Result<AblationReport>
where
    F: FnMut(Option<usize>) -> Result<Splits>,
{
    let full = splits(None)?;
    let truncated = truncate_to.map(|n| splits(Some(n))).transpose()?;
    let mut rows = Vec::new();
    for (name, group, variant) in standard_variants(base, truncate_to) {
        log::info!("ablation row `{name}`");
        let result = variant.and_then(|v| {
            let data = if v.truncate_to.is_some() {
                truncated.as_ref().expect("truncated splits")
            } else {
                &full
            };
            run_variant(&v, train_cfg, data)
        });
        rows.push(result.unwrap_or_else(|e| AblationRow {
            name,
            group,
            error: Some(e.to_string()),
            epochs_run: 0,
            final_train_loss: None,
            best_epoch: 0,
            diverged: false,
            eval: None,
            attention_untouched: false,
            wall_seconds: 0.0,
        }));
    }
    Ok(AblationReport {
        seed: train_cfg.seed,
        rows,
    })
}

impl AblationReport {
    /// Plain-text comparison table.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<28} {:>6} {:>9} {:>9} {:>9} {:>9}  {}\n",
            "row", "epochs", "micro-F1", "macro-F1", "accuracy", "loss", "notes"
        );
        for r in &self.rows {
            let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
            let mut notes = Vec::new();
            if let Some(e) = &r.error {
                notes.push(format!("failed: {e}"));
            }
            if r.diverged {
                notes.push("diverged".into());
            }
            if r.attention_untouched {
                notes.push("attention untouched".into());
            }
            s.push_str(&format!(
                "{:<28} {:>6} {:>9} {:>9} {:>9} {:>9}  {}\n",
                r.name,
                r.epochs_run,
                f(r.eval.as_ref().map(|m| m.micro_f1)),
                f(r.eval.as_ref().map(|m| m.macro_f1_per_label_mean)),
                f(r.eval.as_ref().map(|m| m.accuracy)),
                f(r.final_train_loss),
                notes.join("; ")
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::embed_corpus;
    use crate::synthetic::{generate, SyntheticSettings};

    fn base() -> ModelConfig {
        ModelConfig {
            num_labels: 4,
            embedding_dim: 16,
            chunk_size: 8,
            chunk_hidden: 4,
            doc_hidden: 4,
            attention_dim: 4,
            dropout: 0.0,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn matrix_shape() {
        let rows = standard_variants(&base(), None);
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|(_, _, v)| v.is_ok()));
        assert_eq!(standard_variants(&base(), Some(10)).len(), 10);
        let (_, _, v) = &rows[1];
        let m = &v.as_ref().unwrap().model;
        assert_eq!(m.doc_hidden, 8);
    }

    #[test]
    fn odd_embedding_width_fails_that_row_only() {
        let b = ModelConfig {
            embedding_dim: 15,
            ..base()
        };
        let rows = standard_variants(&b, None);
        assert!(rows[1].2.is_err());
        assert!(rows[0].2.is_ok());
    }

    #[test]
    fn runs_every_row() {
        let c = generate(&SyntheticSettings {
            documents: 8,
            ..SyntheticSettings::overfit()
        })
        .unwrap();
        let src = c.source();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: Some(4),
            ..TrainConfig::default()
        };
        let report = run_ablation(&base(), &cfg, Some(8), |t| {
            let d = embed_corpus(&src, &c.documents, 8, 4, t)?;
            Ok((d.clone(), None, d))
        })
        .unwrap();
        assert_eq!(report.rows.len(), 10);
        for r in &report.rows {
            assert!(r.error.is_none(), "{}: {:?}", r.name, r.error);
            assert_eq!(r.epochs_run, 1);
            assert_eq!(
                r.attention_untouched,
                r.name == "without-concise-extraction"
            );
        }
        assert!(report.table().lines().count() == 11);
    }
}
