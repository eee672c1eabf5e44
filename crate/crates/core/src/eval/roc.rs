use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::preprocess::FeatureMatrix;
use crate::scalar::Scalar;
use crate::svm::MultiClassModel;

/// ROC curve as `(fpr, tpr)` points from `(0, 0)` to `(1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub auc: f64,
    pub points: Vec<(f64, f64)>,
}

/// Area under the ROC curve with ties counted as one half.
///
/// Thresholds sweep the distinct scores in descending order, so tied scores
/// contribute a diagonal step; the trapezoid area then equals the
/// Mann-Whitney concordance probability.
pub fn roc_auc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<RocCurve, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::BadParam("scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClassLabels);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("no NaN"));

    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the concordance count, kept integral until the final division.
    let mut twice_area = 0u128;
    let mut points = vec![(0.0, 0.0)];
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut dtp, mut dfp) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                dtp += 1;
            } else {
                dfp += 1;
            }
            i += 1;
        }
        twice_area += u128::from(dfp) * u128::from(2 * tp + dtp);
        tp += dtp;
        fp += dfp;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = twice_area as f64 / (2.0 * pos as f64 * neg as f64);
    Ok(RocCurve { auc, points })
}

/// One-vs-rest ROC for one class; `auc` is `None` when the class is absent
/// from the labels (or is the only class present).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRoc {
    pub class: usize,
    pub auc: Option<f64>,
    pub curve: Vec<(f64, f64)>,
}

/// ROC of each class's decision values against "this class vs the rest".
pub fn per_class_roc<T: Scalar>(
    model: &MultiClassModel<T>,
    x: &FeatureMatrix<T>,
    y: &[usize],
) -> Result<Vec<ClassRoc>, EvalError> {
    if y.len() != x.nrows() {
        return Err(EvalError::LengthMismatch {
            left: x.nrows(),
            right: y.len(),
        });
    }
    let decisions = model.decision_matrix(x)?;
    Ok(per_class_roc_from_scores(&model.classes, &decisions, y))
}

/// Same as [`per_class_roc`] on precomputed `rows x K` decision values.
pub fn per_class_roc_from_scores<T: Scalar>(
    classes: &[usize],
    decisions: &[Vec<T>],
    y: &[usize],
) -> Vec<ClassRoc> {
    classes
        .iter()
        .enumerate()
        .map(|(col, &class)| {
            let scores: Vec<T> = decisions.iter().map(|row| row[col]).collect();
            let labels: Vec<bool> = y.iter().map(|c| *c == class).collect();
            match roc_auc(&scores, &labels) {
                Ok(curve) => ClassRoc {
                    class,
                    auc: Some(curve.auc),
                    curve: curve.points,
                },
                Err(_) => ClassRoc {
                    class,
                    auc: None,
                    curve: Vec::new(),
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svm::{train_multiclass_ovr, KernelSpec, SmoParams};

    #[test]
    fn auc_examples() {
        let r = roc_auc(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap();
        assert_eq!(r.auc, 0.75);
        assert_eq!(r.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.points.last(), Some(&(1.0, 1.0)));
        assert_eq!(r.points.len(), 5);

        let perfect = roc_auc(&[3.0, 2.0, 1.0, 0.0], &[true, true, false, false]).unwrap();
        assert_eq!(perfect.auc, 1.0);

        let ties = roc_auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(ties.auc, 0.5);
        assert_eq!(ties.points, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn auc_errors() {
        assert_eq!(roc_auc(&[1.0, 2.0], &[true, true]), Err(EvalError::SingleClassLabels));
        assert!(roc_auc(&[1.0], &[true, false]).is_err());
        assert!(roc_auc(&[f64::NAN, 1.0], &[true, false]).is_err());
    }

    #[test]
    fn separable_two_class_model() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![0.2], vec![5.0], vec![5.2]]).unwrap();
        let y = [0, 0, 1, 1];
        let m = train_multiclass_ovr(&x, &y, 2, &KernelSpec::rbf(0.5), &SmoParams::default()).unwrap();
        let rocs = per_class_roc(&m, &x, &y).unwrap();
        assert_eq!(rocs.iter().map(|r| r.auc).collect::<Vec<_>>(), vec![Some(1.0), Some(1.0)]);
    }

    #[test]
    fn absent_class_has_null_auc() {
        let decisions = vec![vec![0.3, -0.1, 0.0], vec![-0.2, 0.4, 0.1]];
        let rocs = per_class_roc_from_scores(&[0, 1, 2], &decisions, &[0, 1]);
        assert!(rocs[0].auc.is_some());
        assert_eq!(rocs[2].auc, None);
        assert!(serde_json::to_string(&rocs[2]).unwrap().contains(r#""auc":null"#));
    }
}
