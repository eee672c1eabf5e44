use serde::{Deserialize, Serialize};

use super::EvalError;

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    /// `trace / total`; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    /// Each row divided by its sum; empty rows stay zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter()
                    .map(|c| if s == 0 { 0.0 } else { *c as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(k);
    for (t, p) in y_true.iter().zip(y_pred) {
        if *t >= k || *p >= k {
            return Err(EvalError::LabelOutOfRange {
                label: (*t).max(*p),
                k,
            });
        }
        cm.counts[*t][*p] += 1;
    }
    Ok(cm)
}

/// Element-wise mean of equally sized confusion matrices.
pub fn mean_confusion(matrices: &[ConfusionMatrix]) -> Vec<Vec<f64>> {
    let Some(first) = matrices.first() else {
        return Vec::new();
    };
    let k = first.k();
    let m = matrices.len() as f64;
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| matrices.iter().map(|cm| cm.counts[i][j] as f64).sum::<f64>() / m)
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a ratio was 0/0 and reported as 0.
    #[serde(skip)]
    pub precision_undefined: bool,
    #[serde(skip)]
    pub recall_undefined: bool,
    #[serde(skip)]
    pub f1_undefined: bool,
}

impl BinaryMetrics {
    pub fn mean(items: &[BinaryMetrics]) -> BinaryMetrics {
        let n = items.len().max(1) as f64;
        let avg = |f: fn(&BinaryMetrics) -> f64| items.iter().map(f).sum::<f64>() / n;
        BinaryMetrics {
            accuracy: avg(|m| m.accuracy),
            precision: avg(|m| m.precision),
            recall: avg(|m| m.recall),
            f1: avg(|m| m.f1),
            precision_undefined: items.iter().any(|m| m.precision_undefined),
            recall_undefined: items.iter().any(|m| m.recall_undefined),
            f1_undefined: items.iter().any(|m| m.f1_undefined),
        }
    }
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

/// Accuracy, precision, recall and F1 of a 2x2 matrix with `positive` as the positive class.
pub fn binary_metrics(cm: &ConfusionMatrix, positive: usize) -> Result<BinaryMetrics, EvalError> {
    if cm.k() != 2 || positive > 1 {
        return Err(EvalError::BadParam(format!(
            "binary metrics need a 2x2 matrix and positive class 0 or 1 (k = {})",
            cm.k()
        )));
    }
    let neg = 1 - positive;
    let tp = cm.counts[positive][positive] as f64;
    let fp = cm.counts[neg][positive] as f64;
    let fn_ = cm.counts[positive][neg] as f64;
    let (precision, precision_undefined) = ratio(tp, tp + fp);
    let (recall, recall_undefined) = ratio(tp, tp + fn_);
    let (f1, f1_undefined) = ratio(2.0 * precision * recall, precision + recall);
    Ok(BinaryMetrics {
        accuracy: cm.accuracy(),
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
        f1_undefined,
    })
}
