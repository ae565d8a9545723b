use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use super::loss::LossForm;
use crate::corpus::TaskKind;
use crate::error::{Error, Result};
use crate::evaluation::ThresholdMode;
use crate::model::LayerGroup;

/// Named per-group learning-rate maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatePreset {
    /// Case-outcome rates: recurrent layers 1e-4, attention 3e-5.
    Ildc,
    /// Statute-identification rates: recurrent layers 1e-5, attention 3e-5.
    Ilsi,
}

impl RatePreset {
    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::Binary => RatePreset::Ildc,
            TaskKind::MultiLabel => RatePreset::Ilsi,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct LearningRates {
    pub chunk_recurrent: f64,
    pub document_recurrent: f64,
    pub attention: f64,
    pub head: f64,
    pub sentinel_embedding: f64,
}

impl LearningRates {
    pub fn preset(p: RatePreset) -> Self {
        let recurrent = match p {
            RatePreset::Ildc => 1e-4,
            RatePreset::Ilsi => 1e-5,
        };
        Self {
            chunk_recurrent: recurrent,
            document_recurrent: recurrent,
            attention: 3e-5,
            head: 3e-5,
            sentinel_embedding: recurrent,
        }
    }

    pub fn uniform(rate: f64) -> Self {
        Self {
            chunk_recurrent: rate,
            document_recurrent: rate,
            attention: rate,
            head: rate,
            sentinel_embedding: rate,
        }
    }

    pub fn get(&self, group: LayerGroup) -> f64 {
        match group {
            LayerGroup::ChunkRecurrent => self.chunk_recurrent,
            LayerGroup::DocumentRecurrent => self.document_recurrent,
            LayerGroup::Attention => self.attention,
            LayerGroup::Head => self.head,
            LayerGroup::SentinelEmbedding => self.sentinel_embedding,
        }
    }

    fn slot(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "chunk-recurrent" => &mut self.chunk_recurrent,
            "document-recurrent" => &mut self.document_recurrent,
            "attention" => &mut self.attention,
            "head" => &mut self.head,
            "sentinel-embedding" => &mut self.sentinel_embedding,
            _ => return None,
        })
    }

    /// Applies `key = rate` overrides. Pooling layers have no parameters, so
    /// rates given for them are dropped with a warning.
    pub fn with_overrides(mut self, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        for (key, &rate) in overrides {
            let norm = key.replace('_', "-").to_lowercase();
            if let Some(slot) = self.slot(&norm) {
                *slot = rate;
            } else if norm.contains("pool") {
                log::warn!("learning rate for `{key}` ignored: pooling layers have no parameters");
            } else {
                return Err(Error::Config(format!(
                    "unknown learning-rate group `{key}`"
                )));
            }
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for g in LayerGroup::ALL {
            let r = self.get(g);
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config(format!(
                    "learning rate for {g:?} must be positive, got {r}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Task default when unset: 32 multi-label, 64 binary.
    pub batch_size: Option<usize>,
    pub loss_weight: f64,
    pub loss_form: LossForm,
    pub l2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Task default when unset.
    pub rate_preset: Option<RatePreset>,
    /// Per-group overrides on top of the preset, keyed by group name.
    pub learning_rates: BTreeMap<String, f64>,
    pub seed: u64,
    pub shuffle: bool,
    /// Global gradient-norm clipping; off when unset.
    pub clip_norm: Option<f64>,
    /// Threshold fitting for per-epoch dev evaluation; task default when unset.
    pub threshold_mode: Option<ThresholdMode>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 20,
            batch_size: None,
            loss_weight: 1.0,
            loss_form: LossForm::TwoSided,
            l2: adam.l2,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            rate_preset: None,
            learning_rates: BTreeMap::new(),
            seed: 42,
            shuffle: true,
            clip_norm: None,
            threshold_mode: None,
        }
    }
}

impl TrainConfig {
    pub fn batch_size_for(&self, task: TaskKind) -> usize {
        self.batch_size.unwrap_or(match task {
            TaskKind::MultiLabel => 32,
            TaskKind::Binary => 64,
        })
    }

    pub fn rates_for(&self, task: TaskKind) -> Result<LearningRates> {
        let preset = self
            .rate_preset
            .unwrap_or_else(|| RatePreset::for_task(task));
        let rates = LearningRates::preset(preset).with_overrides(&self.learning_rates)?;
        rates.validate()?;
        Ok(rates)
    }

    pub fn threshold_mode_for(&self, task: TaskKind) -> ThresholdMode {
        self.threshold_mode
            .unwrap_or_else(|| crate::evaluation::default_threshold_mode(task))
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            l2: self.l2,
        }
    }

    pub fn validate(&self, task: TaskKind) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must be in (0, 1), got {b}"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad(format!("l2 must be non-negative, got {}", self.l2));
        }
        if !(self.loss_weight > 0.0 && self.loss_weight.is_finite()) {
            return bad(format!(
                "loss_weight must be positive, got {}",
                self.loss_weight
            ));
        }
        if self.batch_size_for(task) == 0 {
            return bad("batch_size must be positive".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip_norm must be positive, got {c}"));
            }
        }
        self.rates_for(task).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_defaults() {
        let c = TrainConfig::default();
        assert_eq!(c.batch_size_for(TaskKind::MultiLabel), 32);
        assert_eq!(c.batch_size_for(TaskKind::Binary), 64);
        let r = c.rates_for(TaskKind::Binary).unwrap();
        assert_eq!(r.chunk_recurrent, 1e-4);
        assert_eq!(r.attention, 3e-5);
        assert_eq!(r.head, 3e-5);
        let r = c.rates_for(TaskKind::MultiLabel).unwrap();
        assert_eq!(r.document_recurrent, 1e-5);
        c.validate(TaskKind::MultiLabel).unwrap();
    }

    #[test]
    fn pooling_rates_are_ignored_and_unknown_rejected() {
        let mut c = TrainConfig::default();
        c.learning_rates.insert("chunk-max-pool".into(), 1e-5);
        c.learning_rates.insert("head".into(), 1e-3);
        assert_eq!(c.rates_for(TaskKind::MultiLabel).unwrap().head, 1e-3);
        c.learning_rates.insert("decoder".into(), 1e-3);
        assert!(c.rates_for(TaskKind::MultiLabel).is_err());
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let c = TrainConfig {
            beta1: 1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate(TaskKind::Binary).is_err());
        let mut c = TrainConfig::default();
        c.learning_rates.insert("attention".into(), 0.0);
        assert!(c.validate(TaskKind::Binary).is_err());
    }
}
