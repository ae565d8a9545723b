//! Loss, optimiser and the mini-batch training loop.

mod adam;
mod config;
mod loss;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use config::{LearningRates, RatePreset, TrainConfig};
pub use loss::{document_loss, loss, one_sided_loss, LossForm, PROB_CLAMP};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, MetricsReport, ThresholdPolicy, ThresholdSet};
use crate::model::{backward, forward, ModelConfig, ModelParams};
use crate::nn::{Mode, Parameterized};
use crate::pipeline::EmbeddedDocument;

/// Parameters drawn from the seeded initialiser.
pub fn init_params(model: &ModelConfig, seed: u64) -> Result<ModelParams> {
    ModelParams::init(model, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Document visiting order for every epoch, drawn from one seeded stream.
pub struct EpochShuffler {
    rng: ChaCha8Rng,
    shuffle: bool,
}

impl EpochShuffler {
    pub fn new(seed: u64, shuffle: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Self { rng, shuffle }
    }

    pub fn next_order(&mut self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        if self.shuffle {
            order.shuffle(&mut self.rng);
        }
        order
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1_per_label_mean: f64,
    pub macro_f1_harmonic: f64,
    pub accuracy: f64,
}

impl From<&MetricsReport> for EpochMetrics {
    fn from(r: &MetricsReport) -> Self {
        Self {
            micro_precision: r.micro_precision,
            micro_recall: r.micro_recall,
            micro_f1: r.micro_f1,
            macro_precision: r.macro_precision,
            macro_recall: r.macro_recall,
            macro_f1_per_label_mean: r.macro_f1_per_label_mean,
            macro_f1_harmonic: r.macro_f1_harmonic,
            accuracy: r.accuracy,
        }
    }
}

/// One line of the metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: EpochMetrics,
    /// Whether this epoch became the best checkpoint.
    pub selected: bool,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub params: ModelParams,
    pub thresholds: ThresholdSet,
    /// 0 for the initial parameters.
    pub epoch: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub epoch: usize,
    pub step: u64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Last good state: the end of training, or the step before divergence.
    pub last: Snapshot,
    pub best: Snapshot,
    pub log: Vec<EpochRecord>,
    pub diverged: Option<Divergence>,
}

/// Owns the parameters and optimiser state for one training run.
pub struct Trainer<'a> {
    model: &'a ModelConfig,
    config: &'a TrainConfig,
    params: ModelParams,
    state: OptimizerState,
    rates: Vec<Option<f64>>,
    names: Vec<String>,
    adam: AdamConfig,
    docs_seen: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(
        model: &'a ModelConfig,
        config: &'a TrainConfig,
        params: ModelParams,
    ) -> Result<Self> {
        model.validate()?;
        config.validate(model.task)?;
        let lr = config.rates_for(model.task)?;
        let layout = params.layout();
        let rates = layout
            .iter()
            .map(|(_, g)| model.is_active(*g).then(|| lr.get(*g)))
            .collect();
        let names = layout.into_iter().map(|(n, _)| n).collect();
        Ok(Self {
            model,
            config,
            state: OptimizerState::new(&params),
            params,
            rates,
            names,
            adam: config.adam(),
            docs_seen: 0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn steps(&self) -> u64 {
        self.state.step
    }

    /// Mean loss and mean gradient over a batch. Documents run in parallel;
    /// each draws dropout masks from its own stream keyed by its position in
    /// the run, and gradients are summed in batch order, so the result does
    /// not depend on the thread count.
    pub fn batch_gradient(&self, batch: &[&EmbeddedDocument]) -> Result<(f64, ModelParams)> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty training batch".into()));
        }
        let base = self.docs_seen;
        let per_doc = batch
            .par_iter()
            .enumerate()
            .map(|(i, doc)| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                rng.set_stream(2 + base + i as u64);
                let trace = forward(self.model, &self.params, &doc.chunks, Mode::Train, &mut rng)?;
                let (l, d_logits) = document_loss(
                    self.model,
                    &trace,
                    &doc.targets(),
                    self.config.loss_weight,
                    self.config.loss_form,
                )?;
                let g = backward(self.model, &self.params, &trace, &d_logits)?;
                Ok((l, g))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        let mut grads = self.params.zeros_like();
        for (l, g) in &per_doc {
            total += l;
            for (acc, t) in grads.tensors_mut().into_iter().zip(g.tensors()) {
                acc.add_assign(t);
            }
        }
        let scale = 1.0 / batch.len() as f64;
        for t in grads.tensors_mut() {
            t.values_mut().iter_mut().for_each(|v| *v *= scale);
        }
        Ok((total * scale, grads))
    }

    fn clip(&self, grads: &mut ModelParams, max_norm: f64) {
        let sq: f64 = grads
            .tensors()
            .iter()
            .zip(&self.rates)
            .filter(|(_, r)| r.is_some())
            .map(|(t, _)| t.sum_squares())
            .sum();
        let norm = sq.sqrt();
        if norm > max_norm {
            let s = max_norm / norm;
            for t in grads.tensors_mut() {
                t.values_mut().iter_mut().for_each(|v| *v *= s);
            }
        }
    }

    /// One optimiser step; returns the batch loss measured before the update.
    /// On error the parameters are left as they were.
    pub fn step(&mut self, batch: &[&EmbeddedDocument]) -> Result<f64> {
        let (l, mut grads) = self.batch_gradient(batch)?;
        self.docs_seen += batch.len() as u64;
        if !l.is_finite() {
            return Err(Error::Diverged(format!("non-finite batch loss {l}")));
        }
        if let Some(c) = self.config.clip_norm {
            self.clip(&mut grads, c);
        }
        adam_step(
            &mut self.params,
            &grads,
            &mut self.state,
            &self.rates,
            &self.names,
            &self.adam,
        )?;
        Ok(l)
    }
}

/// Trains on `train_docs`, evaluating after every epoch on `dev_docs` (or
/// the training set when none is given) with freshly fitted thresholds.
pub fn train(
    model: &ModelConfig,
    train_docs: &[EmbeddedDocument],
    dev_docs: Option<&[EmbeddedDocument]>,
    config: &TrainConfig,
    initial: ModelParams,
) -> Result<TrainOutcome> {
    if train_docs.is_empty() {
        return Err(Error::InvalidInput("training corpus is empty".into()));
    }
    let dev = dev_docs.unwrap_or(train_docs);
    if dev.is_empty() {
        return Err(Error::InvalidInput("development corpus is empty".into()));
    }
    let start = Snapshot {
        thresholds: ThresholdSet::constant(model.num_labels, 0.5),
        params: initial.clone(),
        epoch: 0,
        score: f64::NEG_INFINITY,
    };
    let mut trainer = Trainer::new(model, config, initial)?;
    let batch_size = config.batch_size_for(model.task);
    let policy = ThresholdPolicy::SelfFit(config.threshold_mode_for(model.task));
    let mut shuffler = EpochShuffler::new(config.seed, config.shuffle);
    let mut best = start.clone();
    let mut last = start;
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let clock = Instant::now();
        let order = shuffler.next_order(train_docs.len());
        let mut loss_sum = 0.0;
        for idx in order.chunks(batch_size) {
            let batch: Vec<&EmbeddedDocument> = idx.iter().map(|&i| &train_docs[i]).collect();
            match trainer.step(&batch) {
                Ok(l) => loss_sum += l * batch.len() as f64,
                Err(e @ (Error::NanGradient { .. } | Error::Diverged(_))) => {
                    log::error!("training diverged in epoch {epoch}: {e}");
                    let step = trainer.steps() + 1;
                    last.params = trainer.into_params();
                    return Ok(TrainOutcome {
                        last,
                        best,
                        log,
                        diverged: Some(Divergence {
                            epoch,
                            step,
                            reason: e.to_string(),
                        }),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        let train_loss = loss_sum / train_docs.len() as f64;
        let eval = evaluate(model, trainer.params(), dev, &policy)?;
        let score = eval.report.selection_score();
        let selected = score > best.score;
        last = Snapshot {
            params: trainer.params().clone(),
            thresholds: eval.thresholds,
            epoch,
            score,
        };
        if selected {
            best = last.clone();
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            dev: EpochMetrics::from(&eval.report),
            selected,
            wall_seconds: clock.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {train_loss:.6} dev macro-F1 {:.4} micro-F1 {:.4} acc {:.4}{}",
            record.dev.macro_f1_per_label_mean,
            record.dev.micro_f1,
            record.dev.accuracy,
            if selected { " *" } else { "" }
        );
        log.push(record);
    }
    Ok(TrainOutcome {
        last,
        best,
        log,
        diverged: None,
    })
}

#[cfg(test)]
mod tests;
