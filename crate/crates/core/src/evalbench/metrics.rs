use serde::{Deserialize, Serialize};

use crate::error::{AdeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy plus macro-averaged precision, recall and F1.
///
/// Per-class rates with an empty denominator are 0. F1 is computed per class
/// and then averaged.
pub fn classification_metrics(preds: &[usize], labels: &[usize], classes: usize) -> Result<MetricsReport> {
    if preds.is_empty() {
        return Err(AdeError::data("no predictions to score"));
    }
    if preds.len() != labels.len() {
        return Err(AdeError::shape(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    if let Some(&bad) = preds.iter().chain(labels).find(|&&v| v >= classes) {
        return Err(AdeError::Index(format!("class {bad} outside [0, {classes})")));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &y) in preds.iter().zip(labels) {
        confusion[y][p] += 1;
    }
    let per_class: Vec<ClassMetrics> = (0..classes)
        .map(|c| {
            let tp = confusion[c][c];
            let predicted: usize = (0..classes).map(|y| confusion[y][c]).sum();
            let support: usize = confusion[c].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            ClassMetrics { precision, recall, f1, support }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / classes as f64;
    let correct = (0..classes).map(|c| confusion[c][c]).sum();
    Ok(MetricsReport {
        accuracy: ratio(correct, preds.len()),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let r = classification_metrics(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!((r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_computed_two_class_case() {
        let r = classification_metrics(&[0, 0], &[0, 1], 2).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.per_class[0].precision, 0.5);
        assert_eq!(r.per_class[0].recall, 1.0);
        assert_eq!((r.per_class[1].precision, r.per_class[1].recall), (0.0, 0.0));
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_predictions_on_balanced_labels() {
        let labels: Vec<usize> = (0..8).map(|i| i % 4).collect();
        let r = classification_metrics(&[2; 8], &labels, 4).unwrap();
        assert_eq!(r.accuracy, 0.25);
        let total: usize = r.confusion.iter().flatten().sum();
        assert_eq!(total, 8);
    }

    #[test]
    fn empty_and_out_of_range_rejected() {
        assert!(classification_metrics(&[], &[], 2).is_err());
        assert!(classification_metrics(&[2], &[0], 2).is_err());
    }
}
