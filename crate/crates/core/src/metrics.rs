//! Balanced accuracy, macro-F1 and the imbalance ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UplError};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(predictions: &[usize], targets: &[usize], mask: &[bool], num_classes: usize) -> Result<Self> {
        if predictions.len() != targets.len() || mask.len() != targets.len() {
            return Err(UplError::DimensionMismatch {
                context: "confusion matrix",
                expected: format!("{} predictions and mask entries", targets.len()),
                actual: format!("{} predictions, {} mask entries", predictions.len(), mask.len()),
            });
        }
        let mut counts = vec![0; num_classes * num_classes];
        let mut seen = 0;
        for ((&p, &t), _) in predictions.iter().zip(targets).zip(mask).filter(|(_, &m)| m) {
            if p >= num_classes || t >= num_classes {
                return Err(UplError::invalid(format!(
                    "class index {} outside [0, {num_classes})",
                    p.max(t)
                )));
            }
            counts[t * num_classes + p] += 1;
            seen += 1;
        }
        if seen == 0 {
            return Err(UplError::EmptyMask);
        }
        Ok(Self { num_classes, counts })
    }

    pub fn get(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth * self.num_classes + predicted]
    }

    fn support(&self, class: usize) -> usize {
        (0..self.num_classes).map(|p| self.get(class, p)).sum()
    }

    fn predicted(&self, class: usize) -> usize {
        (0..self.num_classes).map(|t| self.get(t, class)).sum()
    }

    /// Recall per class; `None` for classes absent from the targets.
    pub fn recalls(&self) -> Vec<Option<f64>> {
        (0..self.num_classes)
            .map(|c| {
                let support = self.support(c);
                (support > 0).then(|| self.get(c, c) as f64 / support as f64)
            })
            .collect()
    }

    /// Mean recall over the classes present in the targets.
    pub fn balanced_accuracy(&self) -> f64 {
        let recalls: Vec<f64> = self.recalls().into_iter().flatten().collect();
        recalls.iter().sum::<f64>() / recalls.len() as f64
    }

    /// Unweighted mean of per-class F1 over all classes; a class with
    /// `P + R = 0` scores 0.
    pub fn macro_f1(&self) -> f64 {
        let total: f64 = (0..self.num_classes)
            .map(|c| {
                let tp = self.get(c, c) as f64;
                let predicted = self.predicted(c) as f64;
                let support = self.support(c) as f64;
                let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
                let recall = if support > 0.0 { tp / support } else { 0.0 };
                if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                }
            })
            .sum();
        total / self.num_classes as f64
    }
}

pub fn balanced_accuracy(predictions: &[usize], targets: &[usize], mask: &[bool], num_classes: usize) -> Result<f64> {
    Ok(ConfusionMatrix::new(predictions, targets, mask, num_classes)?.balanced_accuracy())
}

pub fn macro_f1(predictions: &[usize], targets: &[usize], mask: &[bool], num_classes: usize) -> Result<f64> {
    Ok(ConfusionMatrix::new(predictions, targets, mask, num_classes)?.macro_f1())
}

/// `max_j m_j / min_j m_j`.
pub fn imbalance_ratio(counts: &[usize]) -> Result<f64> {
    if counts.is_empty() {
        return Err(UplError::invalid("imbalance ratio of no classes"));
    }
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(UplError::ZeroClassCount { class });
    }
    let max = *counts.iter().max().unwrap_or(&1);
    let min = *counts.iter().min().unwrap_or(&1);
    Ok(max as f64 / min as f64)
}

/// Metrics of a model over one node mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub balanced_accuracy: f64,
    pub macro_f1: f64,
    pub per_class_recall: Vec<Option<f64>>,
    /// Mean cross-entropy over the mask.
    pub risk: f64,
    pub nodes: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// TP=9, FN=1, TN=4, FP=6 with class 1 as the positive class.
    fn binary_case() -> (Vec<usize>, Vec<usize>) {
        let mut targets = vec![1; 10];
        targets.extend(vec![0; 10]);
        let mut preds = vec![1; 9];
        preds.push(0);
        preds.extend(vec![0; 4]);
        preds.extend(vec![1; 6]);
        (preds, targets)
    }

    #[test]
    fn binary_two_class_example() {
        let (p, t) = binary_case();
        let mask = vec![true; 20];
        let bacc = balanced_accuracy(&p, &t, &mask, 2).unwrap();
        assert!((bacc - 0.5 * (9.0 / 10.0 + 4.0 / 10.0)).abs() < 1e-12);
        assert!((bacc - 0.65).abs() < 1e-12);
        let f1 = macro_f1(&p, &t, &mask, 2).unwrap();
        let pos = 2.0 * (0.6 * 0.9) / (0.6 + 0.9);
        let neg = 2.0 * (0.8 * 0.4) / (0.8 + 0.4);
        assert!((f1 - (pos + neg) / 2.0).abs() < 1e-12);
        assert!((f1 - 0.626_667).abs() < 1e-6);
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let t = vec![0, 1, 2, 0, 1, 2];
        let mask = vec![true; 6];
        assert_eq!(balanced_accuracy(&t, &t, &mask, 3).unwrap(), 1.0);
        assert_eq!(macro_f1(&t, &t, &mask, 3).unwrap(), 1.0);
        let constant = vec![1; 6];
        assert!((balanced_accuracy(&constant, &t, &mask, 3).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let t2 = vec![0, 1, 0, 1];
        assert_eq!(balanced_accuracy(&[0; 4], &t2, &[true; 4], 2).unwrap(), 0.5);
    }

    #[test]
    fn absent_class_scores_zero_f1() {
        let t = vec![0, 1, 0, 1];
        // class 2 never appears: F1 over three classes is (1 + 1 + 0) / 3
        assert!((macro_f1(&t, &t, &[true; 4], 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        // balanced accuracy only averages present classes
        assert_eq!(balanced_accuracy(&t, &t, &[true; 4], 3).unwrap(), 1.0);
    }

    #[test]
    fn mask_is_respected_and_empty_rejected() {
        let t = vec![0, 1, 1];
        let p = vec![0, 0, 1];
        assert_eq!(balanced_accuracy(&p, &t, &[true, false, true], 2).unwrap(), 1.0);
        assert!(matches!(balanced_accuracy(&p, &t, &[false; 3], 2), Err(UplError::EmptyMask)));
        assert!(matches!(macro_f1(&p, &t, &[false; 3], 2), Err(UplError::EmptyMask)));
    }

    #[test]
    fn imbalance_ratio_examples() {
        assert_eq!(imbalance_ratio(&[20, 2]).unwrap(), 10.0);
        assert_eq!(imbalance_ratio(&[5, 5, 5]).unwrap(), 1.0);
        assert!((imbalance_ratio(&[487, 494, 501, 50, 50]).unwrap() - 10.02).abs() < 1e-12);
        assert_eq!(imbalance_ratio(&[20, 20, 20, 20, 2, 2, 2]).unwrap(), 10.0);
        assert!(imbalance_ratio(&[3, 0]).is_err());
    }

    fn labelled() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, Vec<bool>, Vec<usize>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(0usize..4, n),
                prop::collection::vec(0usize..4, n),
                prop::collection::vec(any::<bool>(), n),
                Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
            )
        })
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_permutation_invariant((p, t, mut mask, perm) in labelled()) {
            mask[0] = true;
            let bacc = balanced_accuracy(&p, &t, &mask, 4).unwrap();
            let f1 = macro_f1(&p, &t, &mask, 4).unwrap();
            prop_assert!((0.0..=1.0).contains(&bacc));
            prop_assert!((0.0..=1.0).contains(&f1));
            let pp: Vec<usize> = p.iter().map(|&c| perm[c]).collect();
            let tp: Vec<usize> = t.iter().map(|&c| perm[c]).collect();
            prop_assert!((balanced_accuracy(&pp, &tp, &mask, 4).unwrap() - bacc).abs() < 1e-12);
            prop_assert!((macro_f1(&pp, &tp, &mask, 4).unwrap() - f1).abs() < 1e-12);
        }
    }
}
