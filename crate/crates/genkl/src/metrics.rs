//! Binary-identification metrics for evaluating NC detectors, plus a
//! classification-accuracy helper.
//!
//! "Positive" throughout means "flagged as NC". Zero denominators return a
//! value of 0 carrying a `degenerate` flag rather than an error, because
//! threshold sweeps routinely produce empty predicted-positive sets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from metric evaluation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricsError {
    /// Predicted and truth sequences differ in length.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    /// The input sequences are empty.
    #[error("empty input")]
    EmptyInput,
}

/// The four cells of a binary confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    /// Total number of evaluated records.
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// A metric value together with a flag marking a zero-denominator case
/// (in which the value is reported as 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub degenerate: bool,
}

impl MetricValue {
    fn ratio(numerator: f64, denominator: f64) -> Self {
        if denominator == 0.0 {
            Self {
                value: 0.0,
                degenerate: true,
            }
        } else {
            Self {
                value: numerator / denominator,
                degenerate: false,
            }
        }
    }
}

/// Tallies a confusion matrix from per-record predicted and true NC flags.
pub fn confusion(predicted: &[bool], truth: &[bool]) -> Result<ConfusionCounts, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Precision `TP/(TP+FP)`, recall `TP/(TP+FN)`, and specificity
/// `TN/(TN+FP)`, in that order.
pub fn precision_recall_specificity(
    c: &ConfusionCounts,
) -> (MetricValue, MetricValue, MetricValue) {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    (
        MetricValue::ratio(tp, tp + fp),
        MetricValue::ratio(tp, tp + fn_),
        MetricValue::ratio(tn, tn + fp),
    )
}

/// F1 score `TP/(TP + (FP+FN)/2)` — the harmonic mean of precision and
/// recall whenever both are defined.
pub fn f1(c: &ConfusionCounts) -> MetricValue {
    let (tp, fp, fn_) = (c.tp as f64, c.fp as f64, c.fn_ as f64);
    MetricValue::ratio(tp, tp + 0.5 * (fp + fn_))
}

/// Cohen's kappa via the closed form
/// `2·(TP·TN - FN·FP) / ((TP+FP)·(FP+TN) + (TP+FN)·(FN+TN))`,
/// equivalent to the textbook "observed minus chance agreement over one
/// minus chance agreement".
pub fn kappa(c: &ConfusionCounts) -> MetricValue {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let numerator = 2.0 * (tp * tn - fn_ * fp);
    let denominator = (tp + fp) * (fp + tn) + (tp + fn_) * (fn_ + tn);
    MetricValue::ratio(numerator, denominator)
}

/// Fraction of positions where the predicted class equals the true class.
pub fn classification_accuracy(
    predicted: &[usize],
    truth: &[usize],
) -> Result<f64, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let hits = predicted
        .iter()
        .zip(truth)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HAND: ConfusionCounts = ConfusionCounts {
        tp: 10,
        fp: 5,
        tn: 80,
        fn_: 5,
    };

    #[test]
    fn tallies_all_four_cells() {
        let predicted = [true, true, false, false, true];
        let truth = [true, false, false, true, true];
        let c = confusion(&predicted, &truth).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 2,
                fp: 1,
                tn: 1,
                fn_: 1
            }
        );
        assert_eq!(c.total(), 5);
        assert!(confusion(&predicted, &truth[..4]).is_err());
    }

    #[test]
    fn hand_ratios() {
        let (p, r, s) = precision_recall_specificity(&HAND);
        assert!((p.value - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.value - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.value - 80.0 / 85.0).abs() < 1e-15);
        assert!(!p.degenerate && !r.degenerate && !s.degenerate);
    }

    #[test]
    fn f1_hand_value_and_harmonic_mean() {
        let f = f1(&HAND);
        assert!((f.value - 10.0 / 15.0).abs() < 1e-15);
        let (p, r, _) = precision_recall_specificity(&HAND);
        let harmonic = 2.0 * p.value * r.value / (p.value + r.value);
        assert!((f.value - harmonic).abs() < 1e-12);
    }

    #[test]
    fn kappa_hand_value() {
        let k = kappa(&HAND);
        assert!((k.value - 1550.0 / 2550.0).abs() < 1e-15);
        assert!((k.value - 0.6078431372549019).abs() < 1e-15);
    }

    #[test]
    fn kappa_matches_textbook_definition() {
        let c = ConfusionCounts {
            tp: 37,
            fp: 12,
            tn: 41,
            fn_: 9,
        };
        let n = c.total() as f64;
        let observed = (c.tp + c.tn) as f64 / n;
        let chance = ((c.tp + c.fp) as f64 * (c.tp + c.fn_) as f64
            + (c.tn + c.fn_) as f64 * (c.tn + c.fp) as f64)
            / (n * n);
        let textbook = (observed - chance) / (1.0 - chance);
        assert!((kappa(&c).value - textbook).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cases() {
        let no_positives = ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 10,
            fn_: 3,
        };
        let (p, _, _) = precision_recall_specificity(&no_positives);
        assert!(p.degenerate);
        assert_eq!(p.value, 0.0);

        let perfect = ConfusionCounts {
            tp: 7,
            fp: 0,
            tn: 9,
            fn_: 0,
        };
        let (p, r, s) = precision_recall_specificity(&perfect);
        assert_eq!((p.value, r.value, s.value), (1.0, 1.0, 1.0));
        assert_eq!(kappa(&perfect).value, 1.0);

        // chance-level agreement in a balanced table
        let chance = ConfusionCounts {
            tp: 5,
            fp: 5,
            tn: 5,
            fn_: 5,
        };
        assert_eq!(kappa(&chance).value, 0.0);
    }

    #[test]
    fn accuracy() {
        assert_eq!(
            classification_accuracy(&[0, 1, 2, 1], &[0, 1, 1, 1]).unwrap(),
            0.75
        );
        assert!(matches!(
            classification_accuracy(&[], &[]),
            Err(MetricsError::EmptyInput)
        ));
        assert!(classification_accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn serde_renames_fn() {
        let json = serde_json::to_string(&HAND).unwrap();
        assert!(json.contains("\"fn\":5"));
        let back: ConfusionCounts = serde_json::from_str(&json).unwrap();
        assert_eq!(back, HAND);
    }
}
