//! Downstream evaluation metrics.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::TaskKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    F1Micro,
    Accuracy,
    RecallMacro,
    OneMinusRae,
}

impl MetricKind {
    /// Metric used for rewards: micro-F1 for classification, 1-RAE for
    /// regression.
    pub fn default_for(task: TaskKind) -> Self {
        if task.is_classification() {
            MetricKind::F1Micro
        } else {
            MetricKind::OneMinusRae
        }
    }

    pub fn is_compatible(self, task: TaskKind) -> bool {
        (self == MetricKind::OneMinusRae) != task.is_classification()
    }

    pub fn check(self, task: TaskKind) -> Result<()> {
        if self.is_compatible(task) {
            Ok(())
        } else {
            Err(Error::IncompatibleMetric {
                metric: self.to_string(),
                task: task.to_string(),
            })
        }
    }

    pub fn compute(self, y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
        if y_true.len() != y_pred.len() {
            return Err(Error::DimensionMismatch {
                expected: y_true.len(),
                actual: y_pred.len(),
                context: "predictions vs targets".into(),
            });
        }
        if y_true.is_empty() {
            return Err(Error::InvalidArgument("no rows to score".into()));
        }
        Ok(match self {
            MetricKind::F1Micro => f1_micro(y_true, y_pred),
            MetricKind::Accuracy => accuracy(y_true, y_pred),
            MetricKind::RecallMacro => recall_macro(y_true, y_pred),
            MetricKind::OneMinusRae => one_minus_rae(y_true, y_pred)?,
        })
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::F1Micro => "f1_micro",
            MetricKind::Accuracy => "accuracy",
            MetricKind::RecallMacro => "recall_macro",
            MetricKind::OneMinusRae => "one_minus_rae",
        })
    }
}

pub fn accuracy(y_true: &[f64], y_pred: &[f64]) -> f64 {
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    hits as f64 / y_true.len() as f64
}

/// F1 from true/false positives and false negatives pooled over every class
/// seen in either vector.
pub fn f1_micro(y_true: &[f64], y_pred: &[f64]) -> f64 {
    let classes: BTreeSet<i64> = y_true.iter().chain(y_pred).map(|&c| c as i64).collect();
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for &c in &classes {
        for (&t, &p) in y_true.iter().zip(y_pred) {
            let (t, p) = (t as i64 == c, p as i64 == c);
            match (t, p) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fne += 1,
                (false, false) => {}
            }
        }
    }
    let denom = 2 * tp + fp + fne;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Unweighted mean of per-class recall over the classes present in
/// `y_true`.
pub fn recall_macro(y_true: &[f64], y_pred: &[f64]) -> f64 {
    let classes: BTreeSet<i64> = y_true.iter().map(|&c| c as i64).collect();
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let support = y_true.iter().filter(|&&t| t as i64 == c).count();
            let hits = y_true
                .iter()
                .zip(y_pred)
                .filter(|(&t, &p)| t as i64 == c && p as i64 == c)
                .count();
            hits as f64 / support as f64
        })
        .sum();
    total / classes.len() as f64
}

/// `1 − Σ|y−ŷ| / Σ|y−ȳ|`, with `ȳ` the mean of `y_true`.
pub fn one_minus_rae(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let baseline: f64 = y_true.iter().map(|y| (y - mean).abs()).sum();
    if baseline == 0.0 {
        return Err(Error::UndefinedRae);
    }
    let err: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).abs()).sum();
    Ok(1.0 - err / baseline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let y = [0.0, 1.0, 2.0, 1.0];
        for m in [MetricKind::F1Micro, MetricKind::Accuracy, MetricKind::RecallMacro] {
            assert_eq!(m.compute(&y, &y).unwrap(), 1.0);
        }
        assert_eq!(one_minus_rae(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn hand_confusion_matrix() {
        let (y, p) = ([0.0, 0.0, 1.0], [0.0, 1.0, 1.0]);
        assert!((accuracy(&y, &p) - 2.0 / 3.0).abs() < 1e-15);
        assert!((recall_macro(&y, &p) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rae_hand_cases() {
        assert!((one_minus_rae(&[1.0, 2.0, 3.0], &[1.0, 2.0, 6.0]).unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(one_minus_rae(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(one_minus_rae(&[4.0, 4.0], &[4.0, 5.0]), Err(Error::UndefinedRae)));
    }

    #[test]
    fn metric_task_compatibility() {
        assert!(MetricKind::OneMinusRae.check(TaskKind::BinaryClassification).is_err());
        assert!(MetricKind::F1Micro.check(TaskKind::Regression).is_err());
        assert!(MetricKind::RecallMacro.check(TaskKind::MulticlassClassification).is_ok());
        assert_eq!(MetricKind::default_for(TaskKind::Regression), MetricKind::OneMinusRae);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(MetricKind::Accuracy.compute(&[0.0, 1.0], &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn micro_f1_equals_accuracy(pairs in prop::collection::vec((0u8..5, 0u8..5), 1..60)) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let p: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            prop_assert!((f1_micro(&y, &p) - accuracy(&y, &p)).abs() < 1e-12);
        }

        #[test]
        fn rae_is_one_only_on_exact_match(y in prop::collection::vec(-5.0f64..5.0, 2..30), i in 0usize..30, d in 0.001f64..1.0) {
            prop_assume!(y.iter().any(|v| *v != y[0]));
            let mut p = y.clone();
            let i = i % y.len();
            p[i] += d;
            prop_assert!(one_minus_rae(&y, &p).unwrap() < 1.0);
            prop_assert_eq!(one_minus_rae(&y, &y).unwrap(), 1.0);
        }
    }
}
