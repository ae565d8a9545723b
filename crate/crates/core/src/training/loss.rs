use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ForwardTrace, HeadKind, ModelConfig};

pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossForm {
    /// Per-label binary cross-entropy: `−λ Σ [y log p + (1−y) log(1−p)]`.
    #[default]
    TwoSided,
    /// Positive term only: `−λ Σ y log p`. Kept for comparison; it is
    /// minimised by predicting every label.
    OneSided,
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn check_len(gold: &[f64], probs: &[f64]) -> Result<()> {
    if gold.len() != probs.len() {
        return Err(Error::dim("loss inputs", gold.len(), probs.len()));
    }
    Ok(())
}

/// Weighted binary cross-entropy, probabilities clamped into
/// `[1e-12, 1 − 1e-12]`.
pub fn loss(gold: &[f64], probs: &[f64], weight: f64) -> Result<f64> {
    check_len(gold, probs)?;
    let sum: f64 = gold
        .iter()
        .zip(probs)
        .map(|(&y, &p)| {
            let p = clamp(p);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(-weight * sum)
}

pub fn one_sided_loss(gold: &[f64], probs: &[f64], weight: f64) -> Result<f64> {
    check_len(gold, probs)?;
    let sum: f64 = gold
        .iter()
        .zip(probs)
        .map(|(&y, &p)| y * clamp(p).ln())
        .sum();
    Ok(-weight * sum)
}

/// Loss of one forward pass and its gradient with respect to the logits.
///
/// Sigmoid head: `dL/dz = λ(p − y)` (two-sided) or `−λ y (1 − p)`.
/// Softmax head: categorical cross-entropy against the gold vector (for the
/// two-unit binary head, against `(1 − y, y)`), `dL/dz = λ(Σt · p − t)`.
/// The gradient is the analytic one; clamping only guards the logarithm.
pub fn document_loss(
    config: &ModelConfig,
    trace: &ForwardTrace,
    gold: &[f64],
    weight: f64,
    form: LossForm,
) -> Result<(f64, Vec<f64>)> {
    if gold.len() != config.num_labels {
        return Err(Error::dim("gold vector", config.num_labels, gold.len()));
    }
    let p = &trace.outputs;
    match config.head {
        HeadKind::Sigmoid => {
            let (value, grad) = match form {
                LossForm::TwoSided => (
                    loss(gold, p, weight)?,
                    p.iter().zip(gold).map(|(p, y)| weight * (p - y)).collect(),
                ),
                LossForm::OneSided => (
                    one_sided_loss(gold, p, weight)?,
                    p.iter()
                        .zip(gold)
                        .map(|(p, y)| -weight * y * (1.0 - p))
                        .collect(),
                ),
            };
            Ok((value, grad))
        }
        HeadKind::Softmax => {
            let target: Vec<f64> = if p.len() == 2 && gold.len() == 1 {
                vec![1.0 - gold[0], gold[0]]
            } else {
                gold.to_vec()
            };
            let mass: f64 = target.iter().sum();
            let value = one_sided_loss(&target, p, weight)?;
            let grad = p
                .iter()
                .zip(&target)
                .map(|(p, t)| weight * (mass * p - t))
                .collect();
            Ok((value, grad))
        }
    }
}
