use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{gram_matrix, KernelSpec};
use super::smo::{train_with_gram, SmoParams, SvmModel};
use super::SvmError;
use crate::preprocess::FeatureMatrix;
use crate::scalar::Scalar;

/// One-vs-rest member for a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClassModel<T> {
    pub class: usize,
    /// `None` when the class had no training rows; it then never wins.
    pub model: Option<SvmModel<T>>,
    #[serde(default = "yes")]
    pub converged: bool,
}

fn yes() -> bool {
    true
}

/// One-vs-rest bundle over classes `0..K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MultiClassModel<T> {
    pub classes: Vec<usize>,
    pub models: Vec<ClassModel<T>>,
}

impl<T: Scalar> MultiClassModel<T> {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Classes that had no training rows.
    pub fn absent_classes(&self) -> Vec<usize> {
        self.models
            .iter()
            .filter(|m| m.model.is_none())
            .map(|m| m.class)
            .collect()
    }

    pub fn all_converged(&self) -> bool {
        self.models.iter().all(|m| m.converged)
    }

    /// Per-class decision values; absent classes score `-inf`.
    pub fn decision_values(&self, x: &[T]) -> Result<Vec<T>, SvmError> {
        self.models
            .iter()
            .map(|m| match &m.model {
                Some(model) => model.decision_value(x),
                None => Ok(T::neg_infinity()),
            })
            .collect()
    }

    pub fn predict(&self, x: &[T]) -> Result<usize, SvmError> {
        let scores = self.decision_values(x)?;
        Ok(self.classes[argmax_lowest(&scores)])
    }

    /// Decision values for every row, `rows x K`.
    pub fn decision_matrix(&self, x: &FeatureMatrix<T>) -> Result<Vec<Vec<T>>, SvmError> {
        let rows: Vec<&[T]> = x.iter_rows().collect();
        rows.par_iter().map(|r| self.decision_values(r)).collect()
    }

    pub fn predict_all(&self, x: &FeatureMatrix<T>) -> Result<Vec<usize>, SvmError> {
        Ok(self
            .decision_matrix(x)?
            .iter()
            .map(|s| self.classes[argmax_lowest(s)])
            .collect())
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax_lowest<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Trains one binary model per class in `0..n_classes`, class `c` against the rest.
///
/// The kernel (and a `"scale"` gamma) is resolved once on `x` and shared by all
/// members, which also share one Gram matrix.
pub fn train_multiclass_ovr<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[usize],
    n_classes: usize,
    kernel: &KernelSpec<T>,
    params: &SmoParams<T>,
) -> Result<MultiClassModel<T>, SvmError> {
    if y.len() != x.nrows() {
        return Err(SvmError::LengthMismatch {
            rows: x.nrows(),
            labels: y.len(),
        });
    }
    if let Some(bad) = y.iter().find(|c| **c >= n_classes) {
        return Err(SvmError::LabelOutOfRange {
            label: *bad,
            n_classes,
        });
    }
    let mut present = vec![false; n_classes];
    y.iter().for_each(|c| present[*c] = true);
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(SvmError::SingleClass);
    }
    let kernel = kernel.resolve(x)?;
    let gram = gram_matrix(&kernel, x)?;

    let models = (0..n_classes)
        .into_par_iter()
        .map(|class| {
            if !present[class] {
                log::warn!("class {class} absent from training data; it will never be predicted");
                return Ok(ClassModel {
                    class,
                    model: None,
                    converged: true,
                });
            }
            let yb: Vec<i8> = y.iter().map(|c| if *c == class { 1 } else { -1 }).collect();
            let fit = train_with_gram(x, &yb, &kernel, &gram, params)?;
            if !fit.converged {
                log::warn!(
                    "class {class}: SMO stopped after {} updates, KKT gap {}",
                    fit.iterations,
                    fit.kkt_gap
                );
            }
            Ok(ClassModel {
                class,
                model: Some(fit.model),
                converged: fit.converged,
            })
        })
        .collect::<Result<Vec<_>, SvmError>>()?;
    Ok(MultiClassModel {
        classes: (0..n_classes).collect(),
        models,
    })
}

pub fn predict_multiclass<T: Scalar>(model: &MultiClassModel<T>, x: &[T]) -> Result<usize, SvmError> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_model(bias: f64) -> Option<SvmModel<f64>> {
        Some(SvmModel {
            kernel: KernelSpec::rbf(1.0),
            c: 1.0,
            support_vectors: vec![],
            dual_coefs: vec![],
            bias,
        })
    }

    fn bundle(biases: &[Option<f64>]) -> MultiClassModel<f64> {
        MultiClassModel {
            classes: (0..biases.len()).collect(),
            models: biases
                .iter()
                .enumerate()
                .map(|(class, b)| ClassModel {
                    class,
                    model: b.and_then(fake_model),
                    converged: true,
                })
                .collect(),
        }
    }

    #[test]
    fn argmax_examples() {
        let m = bundle(&[Some(0.2), Some(0.9), Some(0.1), Some(-1.0), Some(-1.0)]);
        assert_eq!(m.predict(&[0.0]).unwrap(), 1);
        let tie = bundle(&[Some(0.0), Some(0.1), Some(0.5), Some(0.2), Some(0.5)]);
        assert_eq!(tie.predict(&[0.0]).unwrap(), 2);
        let single = bundle(&[None, None, Some(-3.0), None, None]);
        assert_eq!(single.predict(&[0.0]).unwrap(), 2);
        assert_eq!(single.absent_classes(), vec![0, 1, 3, 4]);
    }

    #[test]
    fn rejects_identical_labels() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(
            train_multiclass_ovr(&x, &[1, 1], 3, &KernelSpec::rbf(1.0), &SmoParams::default())
                .unwrap_err(),
            SvmError::SingleClass
        );
        assert!(matches!(
            train_multiclass_ovr(&x, &[0, 3], 3, &KernelSpec::rbf(1.0), &SmoParams::default()),
            Err(SvmError::LabelOutOfRange { label: 3, n_classes: 3 })
        ));
    }

    #[test]
    fn absent_class_never_predicted() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![0.1], vec![3.0], vec![3.1]]).unwrap();
        let m = train_multiclass_ovr(&x, &[0, 0, 2, 2], 3, &KernelSpec::rbf(1.0), &SmoParams::default())
            .unwrap();
        assert_eq!(m.absent_classes(), vec![1]);
        assert_eq!(m.predict(&[0.05]).unwrap(), 0);
        assert_eq!(m.predict(&[3.05]).unwrap(), 2);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains(r#"{"class":1,"model":null"#));
        let back: MultiClassModel<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
