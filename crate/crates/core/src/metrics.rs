//! Classification metrics: accuracy, macro precision/recall/F1, multiclass
//! MCC and macro one-vs-rest ROC-AUC.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::MetricsError;

/// `K x K` counts; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_counts(num_classes: usize, counts: Vec<u64>) -> Result<Self, MetricsError> {
        if counts.len() != num_classes * num_classes {
            return Err(MetricsError::LengthMismatch(format!(
                "{} counts for {num_classes} classes",
                counts.len()
            )));
        }
        Ok(Self { num_classes, counts })
    }

    pub fn from_labels(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<Self, MetricsError> {
        if y_true.len() != y_pred.len() {
            return Err(MetricsError::LengthMismatch(format!(
                "{} true labels vs {} predictions",
                y_true.len(),
                y_pred.len()
            )));
        }
        let mut cm = Self::new(num_classes);
        for (&t, &p) in y_true.iter().zip(y_pred) {
            for label in [t, p] {
                if label >= num_classes {
                    return Err(MetricsError::LabelOutOfRange { label, num_classes });
                }
            }
            cm.counts[t * num_classes + p] += 1;
        }
        Ok(cm)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes + predicted]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|k| self.get(k, k)).sum()
    }

    pub fn true_totals(&self) -> Vec<u64> {
        (0..self.num_classes)
            .map(|t| (0..self.num_classes).map(|p| self.get(t, p)).sum())
            .collect()
    }

    pub fn predicted_totals(&self) -> Vec<u64> {
        (0..self.num_classes)
            .map(|p| (0..self.num_classes).map(|t| self.get(t, p)).sum())
            .collect()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    /// Gorodkin's multiclass MCC. Returns 0 when either marginal is
    /// degenerate.
    pub fn mcc(&self) -> f64 {
        let s = self.total() as f64;
        let c = self.trace() as f64;
        let t = self.true_totals();
        let p = self.predicted_totals();
        let tp: f64 = t.iter().zip(&p).map(|(&a, &b)| a as f64 * b as f64).sum();
        let pp: f64 = p.iter().map(|&x| (x as f64) * (x as f64)).sum();
        let tt: f64 = t.iter().map(|&x| (x as f64) * (x as f64)).sum();
        let denom = libm::sqrt((s * s - pp) * (s * s - tt));
        if denom == 0.0 {
            0.0
        } else {
            (c * s - tp) / denom
        }
    }

    /// Per-class `(precision, recall, f1)`; undefined ratios count as 0.
    pub fn per_class(&self) -> Vec<(f64, f64, f64)> {
        let t = self.true_totals();
        let p = self.predicted_totals();
        (0..self.num_classes)
            .map(|k| {
                let tp = self.get(k, k) as f64;
                let precision = if p[k] == 0 { 0.0 } else { tp / p[k] as f64 };
                let recall = if t[k] == 0 { 0.0 } else { tp / t[k] as f64 };
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                (precision, recall, f1)
            })
            .collect()
    }

    /// Averaged precision, recall and F1. Macro averaging covers the classes
    /// that occur in either the truth or the predictions; weighted averaging
    /// weights by true support.
    pub fn precision_recall_f1(&self, averaging: Averaging) -> (f64, f64, f64) {
        let t = self.true_totals();
        let p = self.predicted_totals();
        let mut sums = (0.0, 0.0, 0.0);
        let mut total_weight = 0.0;
        for (k, (pr, rc, f1)) in self.per_class().into_iter().enumerate() {
            let w = match averaging {
                Averaging::Macro if t[k] > 0 || p[k] > 0 => 1.0,
                Averaging::Macro => 0.0,
                Averaging::Weighted => t[k] as f64,
            };
            sums.0 += w * pr;
            sums.1 += w * rc;
            sums.2 += w * f1;
            total_weight += w;
        }
        if total_weight == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        (sums.0 / total_weight, sums.1 / total_weight, sums.2 / total_weight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    Macro,
    Weighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
    /// `None` when no class has both positive and negative samples.
    pub auc: Option<f64>,
    pub confusion: ConfusionMatrix,
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Binary ROC-AUC from the rank-sum statistic. `None` without both classes.
pub fn binary_auc(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Macro one-vs-rest AUC over classes with both positives and negatives.
pub fn macro_auc(y_true: &[usize], scores: &[Vec<f64>], num_classes: usize) -> Option<f64> {
    let mut total = 0.0;
    let mut classes = 0usize;
    for k in 0..num_classes {
        let positive: Vec<bool> = y_true.iter().map(|&y| y == k).collect();
        let column: Vec<f64> = scores.iter().map(|s| s[k]).collect();
        if let Some(a) = binary_auc(&positive, &column) {
            total += a;
            classes += 1;
        }
    }
    (classes > 0).then(|| total / classes as f64)
}

pub fn classification_metrics(
    y_true: &[usize],
    y_pred: &[usize],
    scores: &[Vec<f64>],
    num_classes: usize,
) -> Result<MetricsReport, MetricsError> {
    classification_metrics_with(y_true, y_pred, scores, num_classes, Averaging::Macro)
}

pub fn classification_metrics_with(
    y_true: &[usize],
    y_pred: &[usize],
    scores: &[Vec<f64>],
    num_classes: usize,
    averaging: Averaging,
) -> Result<MetricsReport, MetricsError> {
    if num_classes < 2 {
        return Err(MetricsError::TooFewClasses(num_classes));
    }
    if scores.len() != y_true.len() {
        return Err(MetricsError::LengthMismatch(format!(
            "{} score rows for {} samples",
            scores.len(),
            y_true.len()
        )));
    }
    if let Some(row) = scores.iter().find(|s| s.len() != num_classes) {
        return Err(MetricsError::LengthMismatch(format!(
            "score row of width {} for {num_classes} classes",
            row.len()
        )));
    }
    let confusion = ConfusionMatrix::from_labels(y_true, y_pred, num_classes)?;
    let (precision, recall, f1) = confusion.precision_recall_f1(averaging);
    Ok(MetricsReport {
        accuracy: confusion.accuracy(),
        precision,
        recall,
        f1,
        mcc: confusion.mcc(),
        auc: macro_auc(y_true, scores, num_classes),
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(labels: &[usize], k: usize) -> Vec<Vec<f64>> {
        labels
            .iter()
            .map(|&l| (0..k).map(|c| if c == l { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 3, 0, 1, 2, 3];
        let r = classification_metrics(&y, &y, &one_hot(&y, 4), 4).unwrap();
        assert_eq!((r.accuracy, r.f1, r.mcc, r.auc), (1.0, 1.0, 1.0, Some(1.0)));
        assert_eq!((r.precision, r.recall), (1.0, 1.0));
    }

    #[test]
    fn single_column_prediction_has_zero_mcc() {
        let y = [0, 1, 2, 3, 0, 1, 2, 3];
        let pred = [2; 8];
        let r = classification_metrics(&y, &pred, &one_hot(&pred, 4), 4).unwrap();
        assert_eq!(r.mcc, 0.0);
        assert_eq!(r.accuracy, 0.25);
    }

    #[test]
    fn weighted_averaging_uses_support() {
        let cm = ConfusionMatrix::from_counts(2, alloc::vec![3, 1, 0, 0]).unwrap();
        let (_, recall, _) = cm.precision_recall_f1(Averaging::Weighted);
        assert_eq!(recall, 0.75);
        let (_, macro_recall, _) = cm.precision_recall_f1(Averaging::Macro);
        assert_eq!(macro_recall, 0.375);
    }

    #[test]
    fn ties_get_midranks() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), alloc::vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(binary_auc(&[true, false], &[0.5, 0.5]), Some(0.5));
        assert_eq!(binary_auc(&[true, true], &[0.1, 0.5]), None);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            classification_metrics(&[0], &[0, 1], &[alloc::vec![1.0, 0.0]], 2),
            Err(MetricsError::LengthMismatch(_))
        ));
        assert_eq!(
            classification_metrics(&[0], &[0], &[alloc::vec![1.0]], 1),
            Err(MetricsError::TooFewClasses(1))
        );
        assert!(matches!(
            classification_metrics(&[0], &[5], &[alloc::vec![1.0, 0.0]], 2),
            Err(MetricsError::LabelOutOfRange { label: 5, .. })
        ));
    }
}
