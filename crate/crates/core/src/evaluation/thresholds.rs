//! Dynamic threshold determination.
//!
//! F1 is piecewise constant in the threshold between consecutive distinct
//! probabilities, so the candidates are `0`, every midpoint between
//! consecutive distinct sorted probabilities, and `1`. Ties in the objective
//! go to the larger threshold.

use serde::{Deserialize, Serialize};

use super::{f1_from_counts, PredictionBatch};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub values: Vec<f64>,
}

impl ThresholdSet {
    pub fn constant(n: usize, t: f64) -> Self {
        Self { values: vec![t; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// Best F1 independently per label.
    #[default]
    PerLabel,
    /// One shared threshold maximising pooled (micro) F1.
    Global,
    /// Per label, the ROC point maximising Youden's J = TPR − FPR.
    Roc,
}

impl ThresholdMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdMode::PerLabel => "per-label",
            ThresholdMode::Global => "global",
            ThresholdMode::Roc => "roc",
        }
    }
}

/// Ascending candidate thresholds for a set of probabilities.
pub fn candidate_thresholds(probs: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = probs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = Vec::with_capacity(sorted.len() + 2);
    out.push(0.0);
    for w in sorted.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        // adjacent floats: the midpoint may round onto the lower value
        out.push(if mid > w[0] { mid } else { w[1] });
    }
    out.push(1.0);
    out.dedup();
    out
}

/// Counts `(tp, fp, fn)` for each candidate, scanning candidates from the
/// largest down. `scored` must be sorted by probability, descending.
fn sweep<F>(scored: &[(f64, bool)], candidates: &[f64], mut visit: F)
where
    F: FnMut(f64, u64, u64, u64),
{
    let positives = scored.iter().filter(|(_, g)| *g).count() as u64;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    for &t in candidates.iter().rev() {
        while i < scored.len() && scored[i].0 >= t {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        visit(t, tp, fp, positives - tp);
    }
}

fn sorted_desc(mut scored: Vec<(f64, bool)>) -> Vec<(f64, bool)> {
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored
}

fn best_f1_threshold(scored: Vec<(f64, bool)>) -> f64 {
    let probs: Vec<f64> = scored.iter().map(|s| s.0).collect();
    let candidates = candidate_thresholds(&probs);
    let scored = sorted_desc(scored);
    let mut best = (f64::NEG_INFINITY, 1.0);
    sweep(&scored, &candidates, |t, tp, fp, fn_| {
        let f1 = f1_from_counts(tp, fp, fn_);
        // descending scan: strict improvement keeps the larger threshold on ties
        if f1 > best.0 {
            best = (f1, t);
        }
    });
    best.1
}

fn best_youden_threshold(scored: Vec<(f64, bool)>) -> f64 {
    let probs: Vec<f64> = scored.iter().map(|s| s.0).collect();
    let candidates = candidate_thresholds(&probs);
    let pos = scored.iter().filter(|s| s.1).count() as f64;
    let neg = scored.len() as f64 - pos;
    let scored = sorted_desc(scored);
    let mut best = (f64::NEG_INFINITY, 1.0);
    sweep(&scored, &candidates, |t, tp, fp, _| {
        let tpr = tp as f64 / pos;
        let fpr = if neg > 0.0 { fp as f64 / neg } else { 0.0 };
        let j = tpr - fpr;
        if j > best.0 {
            best = (j, t);
        }
    });
    best.1
}

pub fn fit_thresholds(batch: &PredictionBatch, mode: ThresholdMode) -> Result<ThresholdSet> {
    if batch.is_empty() {
        return Err(Error::InvalidInput(
            "threshold fitting needs at least one document".into(),
        ));
    }
    let labels = batch.num_labels();
    let column = |j: usize| -> Vec<(f64, bool)> {
        batch
            .probabilities
            .iter()
            .zip(&batch.gold)
            .map(|(p, g)| (p[j], g[j]))
            .collect()
    };
    let values = match mode {
        ThresholdMode::Global => {
            let pooled: Vec<(f64, bool)> = (0..labels).flat_map(column).collect();
            if !pooled.iter().any(|s| s.1) {
                log::warn!("no positive gold labels anywhere; global threshold set to 1.0");
                vec![1.0; labels]
            } else {
                vec![best_f1_threshold(pooled); labels]
            }
        }
        ThresholdMode::PerLabel | ThresholdMode::Roc => (0..labels)
            .map(|j| {
                let scored = column(j);
                if !scored.iter().any(|s| s.1) {
                    log::warn!("label {j} has no positive gold instance; threshold set to 1.0");
                    return 1.0;
                }
                match mode {
                    ThresholdMode::Roc => best_youden_threshold(scored),
                    _ => best_f1_threshold(scored),
                }
            })
            .collect(),
    };
    Ok(ThresholdSet { values })
}
