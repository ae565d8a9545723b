use serde::{Deserialize, Serialize};

use super::{f1_from_counts, ratio, PredictionBatch, ThresholdSet};
use crate::corpus::TaskKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl LabelCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_from_counts(self.tp, self.fp, self.fn_)
    }

    /// True when P, R or F1 hit a zero denominator.
    pub fn has_undefined_rate(&self) -> bool {
        self.tp + self.fp == 0 || self.tp + self.fn_ == 0
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: TaskKind,
    pub documents: usize,
    pub labels: usize,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Arithmetic mean of per-label F1; the headline macro score.
    pub macro_f1_per_label_mean: f64,
    /// Harmonic mean of macro precision and macro recall.
    pub macro_f1_harmonic: f64,
    pub accuracy: f64,
    pub per_label: Vec<LabelCounts>,
    /// Labels whose precision or recall had a zero denominator (scored as 0).
    pub flagged_labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_policy: Option<String>,
}

impl MetricsReport {
    /// The score used for model selection: macro-F1 for multi-label,
    /// accuracy for the binary task.
    pub fn selection_score(&self) -> f64 {
        match self.task {
            TaskKind::MultiLabel => self.macro_f1_per_label_mean,
            TaskKind::Binary => self.accuracy,
        }
    }
}

pub fn compute_metrics(
    batch: &PredictionBatch,
    thresholds: &ThresholdSet,
    task: TaskKind,
) -> Result<MetricsReport> {
    let labels = batch.num_labels();
    if thresholds.len() != labels {
        return Err(Error::dim("thresholds", labels, thresholds.len()));
    }
    let mut per_label = vec![LabelCounts::default(); labels];
    let mut matched_fraction = 0.0;
    let mut exact = 0usize;
    for (probs, gold) in batch.probabilities.iter().zip(&batch.gold) {
        let mut matched = 0usize;
        for j in 0..labels {
            let pred = probs[j] >= thresholds.values[j];
            let c = &mut per_label[j];
            match (pred, gold[j]) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
            matched += usize::from(pred == gold[j]);
        }
        matched_fraction += matched as f64 / labels as f64;
        exact += usize::from(matched == labels);
    }
    let documents = batch.len();
    let (tp, fp, fn_) = per_label
        .iter()
        .fold((0, 0, 0), |(a, b, c), l| (a + l.tp, b + l.fp, c + l.fn_));
    let n = labels as f64;
    let macro_precision = per_label.iter().map(LabelCounts::precision).sum::<f64>() / n;
    let macro_recall = per_label.iter().map(LabelCounts::recall).sum::<f64>() / n;
    let macro_f1 = per_label.iter().map(LabelCounts::f1).sum::<f64>() / n;
    let macro_f1_harmonic = if macro_precision + macro_recall > 0.0 {
        2.0 * macro_precision * macro_recall / (macro_precision + macro_recall)
    } else {
        0.0
    };
    let accuracy = if documents == 0 {
        0.0
    } else {
        match task {
            TaskKind::MultiLabel => matched_fraction / documents as f64,
            TaskKind::Binary => exact as f64 / documents as f64,
        }
    };
    let flagged_labels = per_label
        .iter()
        .enumerate()
        .filter(|(_, c)| c.has_undefined_rate())
        .map(|(j, _)| j)
        .collect();
    Ok(MetricsReport {
        task,
        documents,
        labels,
        micro_precision: ratio(tp, tp + fp),
        micro_recall: ratio(tp, tp + fn_),
        micro_f1: f1_from_counts(tp, fp, fn_),
        macro_precision,
        macro_recall,
        macro_f1_per_label_mean: macro_f1,
        macro_f1_harmonic,
        accuracy,
        per_label,
        flagged_labels,
        threshold_policy: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch_from_counts(counts: &[(usize, usize, usize)]) -> PredictionBatch {
        // one label per entry; tp docs, then fp docs, then fn docs, per label
        let labels = counts.len();
        let mut probs = Vec::new();
        let mut gold = Vec::new();
        for (j, &(tp, fp, fn_)) in counts.iter().enumerate() {
            for (n, p, g) in [(tp, 1.0, true), (fp, 1.0, false), (fn_, 0.0, true)] {
                for _ in 0..n {
                    let mut pv = vec![0.0; labels];
                    let mut gv = vec![false; labels];
                    pv[j] = p;
                    gv[j] = g;
                    probs.push(pv);
                    gold.push(gv);
                }
            }
        }
        PredictionBatch::new(probs, gold).unwrap()
    }

    #[test]
    fn worked_example_micro_and_macro_precision() {
        let b = batch_from_counts(&[(2, 1, 0), (1, 0, 1)]);
        let m = compute_metrics(&b, &ThresholdSet::constant(2, 0.5), TaskKind::MultiLabel).unwrap();
        assert_eq!(m.micro_precision, 0.75);
        assert_eq!(m.macro_precision, (2.0 / 3.0 + 1.0) / 2.0);
        assert!((m.macro_precision - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let b = PredictionBatch::new(
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![vec![true, false], vec![false, true]],
        )
        .unwrap();
        let m = compute_metrics(&b, &ThresholdSet::constant(2, 0.5), TaskKind::MultiLabel).unwrap();
        for v in [
            m.micro_precision,
            m.micro_recall,
            m.micro_f1,
            m.macro_precision,
            m.macro_recall,
            m.macro_f1_per_label_mean,
            m.macro_f1_harmonic,
            m.accuracy,
        ] {
            assert_eq!(v, 1.0);
        }
        assert!(m.flagged_labels.is_empty());
    }

    #[test]
    fn ninety_five_of_hundred_matched() {
        let probs = vec![(0..100).map(|j| if j < 95 { 0.0 } else { 1.0 }).collect()];
        let gold = vec![vec![false; 100]];
        let b = PredictionBatch::new(probs, gold).unwrap();
        let m =
            compute_metrics(&b, &ThresholdSet::constant(100, 0.5), TaskKind::MultiLabel).unwrap();
        assert_eq!(m.accuracy, 0.95);
        assert_eq!(m.macro_f1_per_label_mean, 0.0);
    }

    #[test]
    fn empty_intersection_label_is_flagged_and_zero() {
        let b = PredictionBatch::new(vec![vec![0.9, 0.1]], vec![vec![true, false]]).unwrap();
        let m = compute_metrics(&b, &ThresholdSet::constant(2, 0.5), TaskKind::MultiLabel).unwrap();
        assert_eq!(m.flagged_labels, vec![1]);
        assert_eq!(m.per_label[1].f1(), 0.0);
        assert_eq!(m.macro_f1_per_label_mean, 0.5);
    }

    #[test]
    fn binary_accuracy_counts_documents() {
        let b = PredictionBatch::new(
            vec![vec![0.9], vec![0.4], vec![0.6], vec![0.1]],
            vec![vec![true], vec![true], vec![false], vec![false]],
        )
        .unwrap();
        let m = compute_metrics(&b, &ThresholdSet::constant(1, 0.5), TaskKind::Binary).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.selection_score(), 0.5);
    }

    #[test]
    fn balanced_errors_make_micro_scores_equal() {
        // pooled FP = FN = 2
        let b = batch_from_counts(&[(3, 2, 0), (1, 0, 2)]);
        let m = compute_metrics(&b, &ThresholdSet::constant(2, 0.5), TaskKind::MultiLabel).unwrap();
        assert_eq!(m.micro_precision, m.micro_recall);
        assert_eq!(m.micro_f1, m.micro_precision);
    }

    #[test]
    fn counts_sum_to_documents() {
        let b = batch_from_counts(&[(2, 1, 3), (0, 4, 1)]);
        let m = compute_metrics(&b, &ThresholdSet::constant(2, 0.5), TaskKind::MultiLabel).unwrap();
        for c in &m.per_label {
            assert_eq!(c.total() as usize, m.documents);
        }
    }

    #[test]
    fn threshold_length_must_match() {
        let b = batch_from_counts(&[(1, 0, 0)]);
        assert!(
            compute_metrics(&b, &ThresholdSet::constant(2, 0.5), TaskKind::MultiLabel).is_err()
        );
    }

    #[test]
    fn report_field_names() {
        let b = batch_from_counts(&[(1, 0, 0)]);
        let m = compute_metrics(&b, &ThresholdSet::constant(1, 0.5), TaskKind::MultiLabel).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"macro_f1_per_label_mean\""));
        assert!(json.contains("\"macro_f1_harmonic\""));
        assert!(json.contains("\"fn\":0"));
    }
}
