//! Threshold fitting, metrics, and checkpoint evaluation.

mod metrics;
mod thresholds;

pub use metrics::{compute_metrics, LabelCounts, MetricsReport};
pub use thresholds::{candidate_thresholds, fit_thresholds, ThresholdMode, ThresholdSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TaskKind;
use crate::error::{Error, Result};
use crate::model::{forward_eval, ModelConfig, ModelParams};
use crate::pipeline::EmbeddedDocument;

/// `num / den`, or 0 when the denominator is 0.
pub(crate) fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `2TP / (2TP + FP + FN)`: the harmonic mean of precision and recall, with
/// the zero-denominator cases collapsing to 0.
pub fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionBatch {
    pub probabilities: Vec<Vec<f64>>,
    pub gold: Vec<Vec<bool>>,
}

impl PredictionBatch {
    pub fn new(probabilities: Vec<Vec<f64>>, gold: Vec<Vec<bool>>) -> Result<Self> {
        if probabilities.len() != gold.len() {
            return Err(Error::dim(
                "prediction batch documents",
                gold.len(),
                probabilities.len(),
            ));
        }
        let labels = gold.first().map_or(0, Vec::len);
        for (p, g) in probabilities.iter().zip(&gold) {
            if g.len() != labels {
                return Err(Error::dim("gold label vector", labels, g.len()));
            }
            if p.len() != labels {
                return Err(Error::dim("probability vector", labels, p.len()));
            }
            if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidInput(format!(
                    "probability {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            probabilities,
            gold,
        })
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.gold.first().map_or(0, Vec::len)
    }
}

/// Eval-mode probabilities for every document, in input order.
pub fn predict_batch(
    config: &ModelConfig,
    params: &ModelParams,
    docs: &[EmbeddedDocument],
) -> Result<PredictionBatch> {
    let probabilities = docs
        .par_iter()
        .map(|d| {
            if d.gold.len() != config.num_labels {
                return Err(Error::dim(
                    format!("labels of `{}`", d.id),
                    config.num_labels,
                    d.gold.len(),
                ));
            }
            Ok(forward_eval(config, params, &d.chunks)?.probabilities(config))
        })
        .collect::<Result<Vec<_>>>()?;
    PredictionBatch::new(probabilities, docs.iter().map(|d| d.gold.clone()).collect())
}

/// Which thresholds turn probabilities into decisions.
#[derive(Clone, Debug, PartialEq)]
pub enum ThresholdPolicy {
    /// Use the given thresholds as-is (e.g. the checkpoint's dev-fit set).
    Fixed(ThresholdSet),
    /// Fit on the evaluated batch itself.
    SelfFit(ThresholdMode),
    /// Fit on a separate development batch.
    DevFit(PredictionBatch, ThresholdMode),
}

impl ThresholdPolicy {
    pub fn describe(&self) -> String {
        match self {
            ThresholdPolicy::Fixed(_) => "fixed".into(),
            ThresholdPolicy::SelfFit(m) => format!("self-fit/{}", m.as_str()),
            ThresholdPolicy::DevFit(_, m) => format!("dev-fit/{}", m.as_str()),
        }
    }

    pub fn resolve(&self, batch: &PredictionBatch) -> Result<ThresholdSet> {
        match self {
            ThresholdPolicy::Fixed(t) => Ok(t.clone()),
            ThresholdPolicy::SelfFit(m) => fit_thresholds(batch, *m),
            ThresholdPolicy::DevFit(dev, m) => fit_thresholds(dev, *m),
        }
    }
}

/// Default fitting mode per task: per-label for multi-label, one global
/// cut-off for the binary task.
pub fn default_threshold_mode(task: TaskKind) -> ThresholdMode {
    match task {
        TaskKind::MultiLabel => ThresholdMode::PerLabel,
        TaskKind::Binary => ThresholdMode::Global,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub thresholds: ThresholdSet,
    pub batch: PredictionBatch,
}

pub fn evaluate_batch(
    batch: PredictionBatch,
    task: TaskKind,
    policy: &ThresholdPolicy,
) -> Result<Evaluation> {
    if batch.is_empty() {
        return Err(Error::InvalidInput(
            "cannot evaluate an empty corpus".into(),
        ));
    }
    let thresholds = policy.resolve(&batch)?;
    let mut report = compute_metrics(&batch, &thresholds, task)?;
    report.threshold_policy = Some(policy.describe());
    Ok(Evaluation {
        report,
        thresholds,
        batch,
    })
}

pub fn evaluate(
    config: &ModelConfig,
    params: &ModelParams,
    docs: &[EmbeddedDocument],
    policy: &ThresholdPolicy,
) -> Result<Evaluation> {
    let batch = predict_batch(config, params, docs)?;
    evaluate_batch(batch, config.task, policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_validation() {
        assert!(PredictionBatch::new(vec![vec![0.5]], vec![]).is_err());
        assert!(PredictionBatch::new(vec![vec![0.5, 0.1]], vec![vec![true]]).is_err());
        assert!(PredictionBatch::new(vec![vec![1.5]], vec![vec![true]]).is_err());
        assert!(PredictionBatch::new(
            vec![vec![0.5], vec![0.2]],
            vec![vec![true], vec![true, false]]
        )
        .is_err());
    }

    #[test]
    fn self_fit_dominates_dev_fit() {
        let test = PredictionBatch::new(
            vec![
                vec![0.3, 0.8],
                vec![0.6, 0.4],
                vec![0.7, 0.9],
                vec![0.2, 0.1],
            ],
            vec![
                vec![true, true],
                vec![false, false],
                vec![true, true],
                vec![false, false],
            ],
        )
        .unwrap();
        let dev = PredictionBatch::new(
            vec![vec![0.9, 0.2], vec![0.1, 0.95]],
            vec![vec![true, false], vec![false, true]],
        )
        .unwrap();
        let selff = evaluate_batch(
            test.clone(),
            TaskKind::MultiLabel,
            &ThresholdPolicy::SelfFit(ThresholdMode::PerLabel),
        )
        .unwrap();
        let devf = evaluate_batch(
            test,
            TaskKind::MultiLabel,
            &ThresholdPolicy::DevFit(dev, ThresholdMode::PerLabel),
        )
        .unwrap();
        assert!(selff.report.macro_f1_per_label_mean >= devf.report.macro_f1_per_label_mean);
        assert_eq!(
            selff.report.threshold_policy.as_deref(),
            Some("self-fit/per-label")
        );
        assert_eq!(
            devf.report.threshold_policy.as_deref(),
            Some("dev-fit/per-label")
        );
    }

    #[test]
    fn f1_zero_rule() {
        assert_eq!(f1_from_counts(0, 0, 0), 0.0);
        assert_eq!(f1_from_counts(0, 3, 0), 0.0);
        assert_eq!(f1_from_counts(2, 1, 1), 2.0 / 3.0);
    }
}
