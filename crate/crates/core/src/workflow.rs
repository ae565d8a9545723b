//! End-to-end steps shared by the command-line tool: load and embed the
//! configured splits, train, and package checkpoints.

use std::path::Path;

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::config::RunConfig;
use crate::corpus::{
    load_corpus, CaseDocument, EmbeddingSource, FeatureScaler, LabelVocabulary, TaskKind,
};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::pipeline::{apply_scaler, embed_corpus, fit_scaler, EmbeddedDocument};
use crate::training::{init_params, train, Snapshot, TrainOutcome};

pub fn label_vocabulary(cfg: &RunConfig) -> Result<LabelVocabulary> {
    match (&cfg.data.label_names, cfg.model.task) {
        (Some(names), _) => LabelVocabulary::new(names.clone()),
        (None, TaskKind::Binary) => Ok(LabelVocabulary::binary()),
        (None, TaskKind::MultiLabel) => Ok(LabelVocabulary::indexed(cfg.model.num_labels)),
    }
}

pub fn load_source(cfg: &RunConfig) -> Result<EmbeddingSource> {
    EmbeddingSource::load(
        cfg.data.embedding_kind,
        &cfg.data.embeddings,
        Some(cfg.model.embedding_dim),
    )
}

/// The model configuration with the sentinel mode implied by the source.
pub fn resolve_model(cfg: &RunConfig, source: &EmbeddingSource) -> Result<ModelConfig> {
    let model = ModelConfig {
        learned_sentinel: source.needs_learned_sentinel(),
        ..cfg.model.clone()
    };
    model.validate()?;
    Ok(model)
}

/// Embedded training, development and test splits plus the scaler fitted on
/// the training split.
pub struct PreparedData {
    pub source: EmbeddingSource,
    pub model: ModelConfig,
    pub vocabulary: LabelVocabulary,
    pub scaler: Option<FeatureScaler>,
    pub train: Vec<EmbeddedDocument>,
    pub dev: Option<Vec<EmbeddedDocument>>,
    pub test: Option<Vec<EmbeddedDocument>>,
}

pub fn load_documents(
    cfg: &RunConfig,
    path: &Path,
    vocab: &LabelVocabulary,
) -> Result<Vec<CaseDocument>> {
    let docs = load_corpus(path, cfg.model.task, vocab)?;
    if docs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} contains no documents",
            path.display()
        )));
    }
    Ok(docs)
}

pub fn embed_documents(
    cfg: &RunConfig,
    source: &EmbeddingSource,
    docs: &[CaseDocument],
    scaler: Option<&FeatureScaler>,
) -> Result<Vec<EmbeddedDocument>> {
    let mut out = embed_corpus(
        source,
        docs,
        cfg.model.chunk_size,
        cfg.model.num_labels,
        cfg.data.truncate_to,
    )?;
    if let Some(s) = scaler {
        apply_scaler(&mut out, s)?;
    }
    Ok(out)
}

pub fn prepare(cfg: &RunConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let vocabulary = label_vocabulary(cfg)?;
    let source = load_source(cfg)?;
    let model = resolve_model(cfg, &source)?;
    let train_docs = load_documents(cfg, &cfg.data.train, &vocabulary)?;
    let mut train = embed_documents(cfg, &source, &train_docs, None)?;
    let scaler = if cfg.data.scale {
        let s = fit_scaler(&train)?;
        apply_scaler(&mut train, &s)?;
        Some(s)
    } else {
        None
    };
    let split = |p: &Option<std::path::PathBuf>| -> Result<Option<Vec<EmbeddedDocument>>> {
        p.as_ref()
            .map(|p| {
                let docs = load_documents(cfg, p, &vocabulary)?;
                embed_documents(cfg, &source, &docs, scaler.as_ref())
            })
            .transpose()
    };
    let dev = split(&cfg.data.dev)?;
    let test = split(&cfg.data.test)?;
    Ok(PreparedData {
        source,
        model,
        vocabulary,
        scaler,
        train,
        dev,
        test,
    })
}

pub struct TrainRun {
    pub initial: ModelParams,
    pub outcome: TrainOutcome,
}

pub fn train_prepared(cfg: &RunConfig, data: &PreparedData) -> Result<TrainRun> {
    let initial = init_params(&data.model, cfg.train.seed)?;
    let outcome = train(
        &data.model,
        &data.train,
        data.dev.as_deref(),
        &cfg.train,
        initial.clone(),
    )?;
    Ok(TrainRun { initial, outcome })
}

pub fn checkpoint_from(data: &PreparedData, snapshot: &Snapshot) -> Checkpoint {
    Checkpoint {
        config: data.model.clone(),
        params: snapshot.params.clone(),
        scaler: data.scaler.clone(),
        thresholds: snapshot.thresholds.clone(),
        meta: CheckpointMeta {
            epoch: snapshot.epoch,
            score: snapshot.score.is_finite().then_some(snapshot.score),
            label_names: data.vocabulary.names().to_vec(),
            embedding_kind: Some(data.source.kind()),
        },
    }
}

/// Embeds a document file for an existing checkpoint, using its scaler.
pub fn embed_for_checkpoint(
    cfg: &RunConfig,
    ckpt: &Checkpoint,
    path: &Path,
) -> Result<Vec<EmbeddedDocument>> {
    let source = load_source(cfg)?;
    if source.dim() != ckpt.config.embedding_dim {
        return Err(Error::dim(
            "embedding source",
            ckpt.config.embedding_dim,
            source.dim(),
        ));
    }
    if cfg.model.num_labels != ckpt.config.num_labels || cfg.model.task != ckpt.config.task {
        return Err(Error::dim(
            "configured labels vs checkpoint",
            ckpt.config.num_labels,
            cfg.model.num_labels,
        ));
    }
    let vocab = match ckpt.meta.label_names.len() {
        0 => label_vocabulary(cfg)?,
        _ => LabelVocabulary::new(ckpt.meta.label_names.clone())?,
    };
    let docs = load_documents(cfg, path, &vocab)?;
    let run = RunConfig {
        model: ckpt.config.clone(),
        ..cfg.clone()
    };
    embed_documents(&run, &source, &docs, ckpt.scaler.as_ref())
}
