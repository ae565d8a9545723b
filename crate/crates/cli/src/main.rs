//! `sljp`: prepare corpora, train, evaluate, predict, run ablations and
//! validate tensor files.
//!
//! Exit codes: 0 ok, 1 internal or training failure, 2 input or
//! configuration error, 3 data-format error. Failures print one line to
//! stderr: `error class=<class> message=<text>`.

mod manifest;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sljp::ablation::run_ablation;
use sljp::checkpoint::Checkpoint;
use sljp::config::RunConfig;
use sljp::corpus::{write_corpus, CaseDocument, LabelVocabulary};
use sljp::evaluation::{evaluate, predict_batch, ThresholdMode, ThresholdPolicy};
use sljp::pipeline::EmbeddedDocument;
use sljp::synthetic::{generate, SyntheticSettings};
use sljp::tensor_file;
use sljp::workflow::{
    self, checkpoint_from, embed_documents, embed_for_checkpoint, prepare, train_prepared,
};
use sljp::{Error, Result};

use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "sljp",
    version,
    about = "Hierarchical chunked document classifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus with a ready-to-run config, or summarise the
    /// splits named by a config.
    Prepare(PrepareArgs),
    /// Train a model; writes best/ and final/ checkpoints and metrics.jsonl.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a configured split.
    Eval(EvalArgs),
    /// Write per-document probabilities and predicted labels.
    Predict(PredictArgs),
    /// Component and gate ablations with a shared seed.
    Ablate(AblateArgs),
    /// Check a tensor file's layout and values.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set train.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set train.seed=N`.
    #[arg(long)]
    seed: Option<u64>,
    /// Shorthand for `--set train.epochs=N`.
    #[arg(long)]
    epochs: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("train.seed={s}"));
        }
        if let Some(e) = self.epochs {
            overrides.push(format!("train.epochs={e}"));
        }
        let cfg = RunConfig::load(&self.config, &overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SyntheticKind {
    /// 32 short documents, 4 labels; the whole corpus is the training set.
    Overfit,
    /// 96 documents of 2,000 tokens, 2 labels; 48 train, 48 test.
    Positional,
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    synthetic: Option<SyntheticKind>,
    /// Output directory for the synthetic corpus.
    #[arg(long, requires = "synthetic")]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 42, requires = "synthetic")]
    seed: u64,
    /// Summarise the splits of this configuration.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    /// Thresholds saved with the checkpoint.
    Stored,
    /// Fit on the evaluated split itself.
    SelfFit,
    /// Fit on the development split.
    DevFit,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    PerLabel,
    Global,
    Roc,
}

impl From<ModeArg> for ThresholdMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PerLabel => ThresholdMode::PerLabel,
            ModeArg::Global => ThresholdMode::Global,
            ModeArg::Roc => ThresholdMode::Roc,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    #[arg(long, value_enum, default_value = "stored")]
    policy: PolicyArg,
    /// Fitting mode for self-fit and dev-fit; defaults to the config's.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Documents to label (JSON lines).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Add a full-document row and a last-N-tokens row.
    #[arg(long, value_name = "N")]
    truncation: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    file: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    let class = e.class();
    if class.starts_with("data.") {
        3
    } else if class.starts_with("io.")
        || class.starts_with("config.")
        || class.starts_with("input.")
    {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error class={} message={}", e.class(), message);
            ExitCode::from(exit_code(&e))
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::write(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serialisable");
    fs::write(path, text + "\n").map_err(|e| Error::write(path, e))
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serialisable")
    );
}

fn hash_data_inputs(m: &mut RunManifest, cfg: &RunConfig) -> Result<()> {
    m.input(&cfg.data.embeddings)?;
    m.input(&cfg.data.train)?;
    for p in [&cfg.data.dev, &cfg.data.test].into_iter().flatten() {
        m.input(p)?;
    }
    Ok(())
}

fn synthetic_config(kind: SyntheticKind) -> String {
    let (labels, chunk, hidden, epochs, test) = match kind {
        SyntheticKind::Overfit => (4, 16, 16, 50, "train.jsonl"),
        SyntheticKind::Positional => (2, 250, 8, 15, "test.jsonl"),
    };
    format!(
        r#"# Synthetic corpus: label j is present iff token `marker<j>` occurs.
[data]
train = "train.jsonl"
test = "{test}"
embedding_kind = "static-lookup"
embeddings = "vectors.txt"
scale = false

[model]
num_labels = {labels}
embedding_dim = 16
chunk_size = {chunk}
chunk_hidden = {hidden}
doc_hidden = {hidden}
attention_dim = {hidden}
dropout = 0.0

[train]
epochs = {epochs}
batch_size = 4
seed = 42

[train.learning_rates]
chunk-recurrent = 1e-2
document-recurrent = 1e-2
attention = 1e-2
head = 1e-2
sentinel-embedding = 1e-2
"#
    )
}

#[derive(Serialize)]
struct SplitStats {
    split: String,
    documents: usize,
    min_tokens: usize,
    mean_tokens: f64,
    max_tokens: usize,
    chunks: usize,
    /// Documents carrying each label.
    label_positives: Vec<usize>,
}

fn split_stats(name: &str, docs: &[CaseDocument], chunk_size: usize, labels: usize) -> SplitStats {
    let lens: Vec<usize> = docs.iter().map(|d| d.tokens.len()).collect();
    let mut label_positives = vec![0; labels];
    for d in docs {
        for (count, v) in label_positives.iter_mut().zip(d.labels.to_vector(labels)) {
            *count += usize::from(v > 0.5);
        }
    }
    SplitStats {
        split: name.to_owned(),
        documents: docs.len(),
        min_tokens: lens.iter().copied().min().unwrap_or(0),
        mean_tokens: lens.iter().sum::<usize>() as f64 / lens.len().max(1) as f64,
        max_tokens: lens.iter().copied().max().unwrap_or(0),
        chunks: lens.iter().map(|n| n.div_ceil(chunk_size)).sum(),
        label_positives,
    }
}

fn cmd_prepare(a: PrepareArgs) -> Result<()> {
    if let Some(path) = a.config {
        let cfg = RunConfig::load(&path, &[])?;
        cfg.validate()?;
        let vocab = workflow::label_vocabulary(&cfg)?;
        let mut stats = Vec::new();
        for (name, p) in [
            ("train", Some(&cfg.data.train)),
            ("dev", cfg.data.dev.as_ref()),
            ("test", cfg.data.test.as_ref()),
        ] {
            if let Some(p) = p {
                let docs = workflow::load_documents(&cfg, p, &vocab)?;
                stats.push(split_stats(name, &docs, cfg.model.chunk_size, vocab.size()));
            }
        }
        print_json(&stats);
        return Ok(());
    }
    let kind = a.synthetic.expect("clap requires --synthetic or --config");
    let out = a
        .out
        .ok_or_else(|| Error::InvalidInput("--synthetic needs --out".into()))?;
    let mut m = RunManifest::new("prepare");
    m.seed = Some(a.seed);
    let settings = SyntheticSettings {
        seed: a.seed,
        ..match kind {
            SyntheticKind::Overfit => SyntheticSettings::overfit(),
            SyntheticKind::Positional => SyntheticSettings::positional(),
        }
    };
    let corpus = generate(&settings)?;
    create_dir(&out)?;
    let half = corpus.documents.len() / 2;
    let splits: Vec<(&str, &[CaseDocument])> = match kind {
        SyntheticKind::Overfit => vec![("train.jsonl", &corpus.documents)],
        SyntheticKind::Positional => vec![
            ("train.jsonl", &corpus.documents[..half]),
            ("test.jsonl", &corpus.documents[half..]),
        ],
    };
    for (name, docs) in splits {
        let p = out.join(name);
        write_corpus(&p, docs)?;
        m.output(&p);
    }
    let vectors = out.join("vectors.txt");
    corpus.vectors.write(&vectors)?;
    m.output(&vectors);
    let config = out.join("config.toml");
    let text = synthetic_config(kind);
    fs::write(&config, &text).map_err(|e| Error::write(&config, e))?;
    m.output(&config);
    m.config = Some(text);
    m.lap("generate");
    m.write(&out)?;
    println!("wrote {}", config.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let mut m = RunManifest::new("train");
    m.config = Some(cfg.to_toml_string());
    m.seed = Some(cfg.train.seed);
    m.input(&a.config.config)?;
    hash_data_inputs(&mut m, &cfg)?;
    let data = prepare(&cfg)?;
    m.lap("prepare");
    let run = train_prepared(&cfg, &data)?;
    m.lap("train");
    create_dir(&a.out)?;
    let log_path = a.out.join("metrics.jsonl");
    let mut log = String::new();
    for r in &run.outcome.log {
        log.push_str(&serde_json::to_string(r).expect("serialisable"));
        log.push('\n');
    }
    fs::write(&log_path, log).map_err(|e| Error::write(&log_path, e))?;
    m.output(&log_path);
    for (name, snap) in [("best", &run.outcome.best), ("final", &run.outcome.last)] {
        let dir = a.out.join(name);
        checkpoint_from(&data, snap).save(&dir)?;
        m.output(&dir);
    }
    if let Some(test) = &data.test {
        let best = &run.outcome.best;
        let ev = evaluate(
            &data.model,
            &best.params,
            test,
            &ThresholdPolicy::Fixed(best.thresholds.clone()),
        )?;
        let p = a.out.join("test_metrics.json");
        write_json(&p, &ev.report)?;
        m.output(&p);
        log::info!(
            "test (best epoch {}): macro-F1 {:.4}, micro-F1 {:.4}, accuracy {:.4}",
            best.epoch,
            ev.report.macro_f1_per_label_mean,
            ev.report.micro_f1,
            ev.report.accuracy
        );
    }
    m.lap("write");
    m.write(&a.out)?;
    if let Some(d) = &run.outcome.diverged {
        return Err(Error::Diverged(format!(
            "epoch {} step {}: {}; last good parameters saved in {}",
            d.epoch,
            d.step,
            d.reason,
            a.out.join("final").display()
        )));
    }
    println!(
        "best epoch {} score {:.4}",
        run.outcome.best.epoch, run.outcome.best.score
    );
    Ok(())
}

fn split_path(cfg: &RunConfig, split: Split) -> Result<PathBuf> {
    let (name, p) = match split {
        Split::Train => return Ok(cfg.data.train.clone()),
        Split::Dev => ("dev", &cfg.data.dev),
        Split::Test => ("test", &cfg.data.test),
    };
    p.clone()
        .ok_or_else(|| Error::Config(format!("data.{name} is not set")))
}

fn load_checkpoint(m: &mut RunManifest, dir: &Path) -> Result<Checkpoint> {
    let ck = Checkpoint::load(dir)?;
    m.input_dir(dir)?;
    Ok(ck)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let mut m = RunManifest::new("eval");
    m.config = Some(cfg.to_toml_string());
    m.seed = Some(cfg.train.seed);
    let ck = load_checkpoint(&mut m, &a.checkpoint)?;
    let path = split_path(&cfg, a.split)?;
    m.input(&cfg.data.embeddings)?;
    m.input(&path)?;
    let docs = embed_for_checkpoint(&cfg, &ck, &path)?;
    let mode = a
        .mode
        .map_or_else(|| cfg.train.threshold_mode_for(ck.config.task), Into::into);
    let policy = match a.policy {
        PolicyArg::Stored => ThresholdPolicy::Fixed(ck.thresholds.clone()),
        PolicyArg::SelfFit => ThresholdPolicy::SelfFit(mode),
        PolicyArg::DevFit => {
            let dev_path = split_path(&cfg, Split::Dev)?;
            m.input(&dev_path)?;
            let dev = embed_for_checkpoint(&cfg, &ck, &dev_path)?;
            ThresholdPolicy::DevFit(predict_batch(&ck.config, &ck.params, &dev)?, mode)
        }
    };
    m.lap("prepare");
    let ev = evaluate(&ck.config, &ck.params, &docs, &policy)?;
    m.lap("evaluate");
    create_dir(&a.out)?;
    let report = a.out.join("metrics.json");
    write_json(&report, &ev.report)?;
    m.output(&report);
    let thresholds = a.out.join("thresholds.json");
    write_json(&thresholds, &ev.thresholds)?;
    m.output(&thresholds);
    m.write(&a.out)?;
    print_json(&ev.report);
    Ok(())
}

#[derive(Serialize)]
struct Prediction<'a> {
    id: &'a str,
    probabilities: &'a [f64],
    labels: Vec<&'a str>,
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let mut m = RunManifest::new("predict");
    m.config = Some(cfg.to_toml_string());
    let ck = load_checkpoint(&mut m, &a.checkpoint)?;
    m.input(&cfg.data.embeddings)?;
    m.input(&a.input)?;
    let docs = embed_for_checkpoint(&cfg, &ck, &a.input)?;
    let vocab = match ck.meta.label_names.len() {
        0 => workflow::label_vocabulary(&cfg)?,
        _ => LabelVocabulary::new(ck.meta.label_names.clone())?,
    };
    m.lap("prepare");
    let batch = predict_batch(&ck.config, &ck.params, &docs)?;
    m.lap("predict");
    create_dir(&a.out)?;
    let path = a.out.join("predictions.jsonl");
    let mut out = Vec::new();
    for (doc, probs) in docs.iter().zip(&batch.probabilities) {
        let labels = probs
            .iter()
            .zip(&ck.thresholds.values)
            .zip(vocab.names())
            .filter(|((p, t), _)| p >= t)
            .map(|(_, n)| n.as_str())
            .collect();
        let line = Prediction {
            id: &doc.id,
            probabilities: probs,
            labels,
        };
        serde_json::to_writer(&mut out, &line).expect("serialisable");
        out.push(b'\n');
    }
    fs::write(&path, out).map_err(|e| Error::write(&path, e))?;
    m.output(&path);
    m.write(&a.out)?;
    println!("wrote {} predictions to {}", docs.len(), path.display());
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let mut m = RunManifest::new("ablate");
    m.config = Some(cfg.to_toml_string());
    m.seed = Some(cfg.train.seed);
    m.input(&a.config.config)?;
    hash_data_inputs(&mut m, &cfg)?;
    let base = prepare(&cfg)?;
    m.lap("prepare");
    let vocab = &base.vocabulary;
    let load = |p: &Path| workflow::load_documents(&cfg, p, vocab);
    let train_docs = load(&cfg.data.train)?;
    let dev_docs = cfg.data.dev.as_deref().map(load).transpose()?;
    let eval_docs = match (&cfg.data.test, &dev_docs) {
        (Some(p), _) => load(p)?,
        (None, Some(d)) => d.clone(),
        (None, None) => train_docs.clone(),
    };
    let report = run_ablation(&base.model, &cfg.train, a.truncation, |truncate_to| {
        let run = RunConfig {
            data: sljp::config::DataConfig {
                truncate_to,
                ..cfg.data.clone()
            },
            ..cfg.clone()
        };
        let embed = |docs: &[CaseDocument]| -> Result<Vec<EmbeddedDocument>> {
            embed_documents(&run, &base.source, docs, None)
        };
        let mut train = embed(&train_docs)?;
        let mut dev = dev_docs.as_deref().map(embed).transpose()?;
        let mut eval = embed(&eval_docs)?;
        if cfg.data.scale {
            let s = sljp::pipeline::fit_scaler(&train)?;
            for split in [Some(&mut train), dev.as_mut(), Some(&mut eval)]
                .into_iter()
                .flatten()
            {
                sljp::pipeline::apply_scaler(split, &s)?;
            }
        }
        Ok((train, dev, eval))
    })?;
    m.lap("ablate");
    create_dir(&a.out)?;
    let json = a.out.join("ablation.json");
    write_json(&json, &report)?;
    m.output(&json);
    let table = report.table();
    let txt = a.out.join("ablation.txt");
    fs::write(&txt, &table).map_err(|e| Error::write(&txt, e))?;
    m.output(&txt);
    m.write(&a.out)?;
    print!("{table}");
    std::io::stdout().flush().ok();
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<()> {
    let s = tensor_file::validate(&a.file)?;
    println!(
        "ok version={} dimension={} entries={} rows={} bytes={}",
        s.version, s.dimension, s.entries, s.total_rows, s.bytes
    );
    Ok(())
}
