//! Sequential minimal optimization for the C-SVM dual.
//!
//! The dual is solved in its minimisation form
//! `min 1/2 a^T Q a - e^T a` with `Q_ij = y_i y_j k(x_i, x_j)`,
//! `0 <= a_i <= C` and `y^T a = 0`. Each step picks the maximal violating
//! pair: the index in the "up" set with the largest `-y_t G_t` paired with the
//! index in the "low" set with the smallest, which is the pair with the largest
//! error gap `|E_i - E_j|`.

use serde::{Deserialize, Serialize};

use super::kernel::{gram_matrix, KernelSpec};
use super::SvmError;
use crate::preprocess::FeatureMatrix;
use crate::scalar::Scalar;

/// Dual coefficients below this are not kept as support vectors.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

/// Curvature used when the pair's second derivative is not positive.
const TAU: f64 = 1e-12;

/// Binary kernel SVM in dual form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SvmModel<T> {
    pub kernel: KernelSpec<T>,
    #[serde(rename = "C")]
    pub c: T,
    pub support_vectors: Vec<Vec<T>>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coefs: Vec<T>,
    pub bias: T,
}

impl<T: Scalar> SvmModel<T> {
    pub fn n_features(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }

    /// `f(x) = sum_i coef_i k(sv_i, x) + b`.
    pub fn decision_value(&self, x: &[T]) -> Result<T, SvmError> {
        if let Some(d) = self.n_features() {
            if d != x.len() {
                return Err(SvmError::DimensionMismatch {
                    expected: d,
                    found: x.len(),
                });
            }
        }
        Ok(self.decision_value_unchecked(x))
    }

    #[inline]
    pub(crate) fn decision_value_unchecked(&self, x: &[T]) -> T {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .fold(self.bias, |acc, (sv, c)| acc + *c * self.kernel.eval_unchecked(sv, x))
    }

    /// Sign of the decision value; 0 maps to `+1`.
    pub fn predict(&self, x: &[T]) -> Result<i8, SvmError> {
        Ok(if self.decision_value(x)? >= T::zero() { 1 } else { -1 })
    }

    pub fn decision_values(&self, x: &FeatureMatrix<T>) -> Result<Vec<T>, SvmError> {
        x.iter_rows().map(|r| self.decision_value(r)).collect()
    }
}

pub fn decision_value<T: Scalar>(model: &SvmModel<T>, x: &[T]) -> Result<T, SvmError> {
    model.decision_value(x)
}

pub fn predict_binary<T: Scalar>(model: &SvmModel<T>, x: &[T]) -> Result<i8, SvmError> {
    model.predict(x)
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SmoParams<T> {
    #[serde(rename = "C")]
    pub c: T,
    /// KKT tolerance on `y_i f(x_i)`.
    pub tol: T,
    /// Cap on pair updates; `None` means `10 * n`.
    pub max_passes: Option<usize>,
}

impl<T: Scalar> Default for SmoParams<T> {
    fn default() -> Self {
        Self {
            c: T::one(),
            tol: T::lit(1e-3),
            max_passes: None,
        }
    }
}

impl<T: Scalar> SmoParams<T> {
    pub fn with_c(c: T) -> Self {
        Self {
            c,
            ..Self::default()
        }
    }
}

/// Result of one binary training run.
#[derive(Debug, Clone)]
pub struct BinaryFit<T> {
    pub model: SvmModel<T>,
    /// Full dual vector, one entry per training row.
    pub alphas: Vec<T>,
    pub iterations: usize,
    /// False when the update budget ran out with the KKT gap above `tol`.
    pub converged: bool,
    /// Final maximal violation `max_up(-yG) - min_low(-yG)`.
    pub kkt_gap: T,
}

impl<T: Scalar> BinaryFit<T> {
    /// The model, or [`SvmError::NoConvergence`] if the solver gave up.
    pub fn into_converged(self) -> Result<SvmModel<T>, SvmError> {
        if self.converged {
            Ok(self.model)
        } else {
            Err(SvmError::NoConvergence {
                iterations: self.iterations,
                gap: self.kkt_gap.as_f64(),
            })
        }
    }
}

fn check_labels(y: &[i8]) -> Result<(), SvmError> {
    if let Some(bad) = y.iter().find(|v| **v != 1 && **v != -1) {
        return Err(SvmError::BadParam(format!("binary labels must be -1 or +1, got {bad}")));
    }
    let pos = y.contains(&1);
    let neg = y.contains(&-1);
    if !(pos && neg) {
        return Err(SvmError::SingleClass);
    }
    Ok(())
}

fn check_params<T: Scalar>(params: &SmoParams<T>) -> Result<(), SvmError> {
    if !(params.c > T::zero() && params.c.is_finite()) {
        return Err(SvmError::BadParam(format!("C must be positive, got {}", params.c)));
    }
    if params.tol.is_nan() || params.tol <= T::zero() {
        return Err(SvmError::BadParam(format!("tol must be positive, got {}", params.tol)));
    }
    Ok(())
}

/// Trains a binary SVM on labels in `{-1, +1}`.
///
/// A `"scale"` gamma is resolved on `x` first.
pub fn train_binary_smo<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[i8],
    kernel: &KernelSpec<T>,
    params: &SmoParams<T>,
) -> Result<BinaryFit<T>, SvmError> {
    if y.len() != x.nrows() {
        return Err(SvmError::LengthMismatch {
            rows: x.nrows(),
            labels: y.len(),
        });
    }
    check_labels(y)?;
    check_params(params)?;
    if x.nrows() < 2 {
        return Err(SvmError::BadParam("need at least 2 training rows".into()));
    }
    let kernel = kernel.resolve(x)?;
    let gram = gram_matrix(&kernel, x)?;
    train_with_gram(x, y, &kernel, &gram, params)
}

/// SMO on a precomputed Gram matrix; `kernel` must already be resolved.
pub(crate) fn train_with_gram<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[i8],
    kernel: &KernelSpec<T>,
    gram: &[T],
    params: &SmoParams<T>,
) -> Result<BinaryFit<T>, SvmError> {
    check_labels(y)?;
    check_params(params)?;
    let n = x.nrows();
    debug_assert_eq!(gram.len(), n * n);
    let c = params.c;
    let tol = params.tol;
    let max_iter = params.max_passes.unwrap_or(10 * n);
    let yf: Vec<T> = y.iter().map(|v| if *v > 0 { T::one() } else { -T::one() }).collect();

    let mut solver = Solver {
        n,
        gram,
        y: &yf,
        c,
        alpha: vec![T::zero(); n],
        grad: vec![-T::one(); n],
    };

    let mut iterations = 0;
    let mut converged = false;
    let mut gap;
    loop {
        let Some((i, j, g)) = solver.select_pair() else {
            converged = true;
            gap = T::zero();
            break;
        };
        gap = g;
        if gap < tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;
        if solver.update_pair(i, j) {
            continue;
        }
        // Fallback: sweep the remaining violating partners of i, then any pair.
        if !solver.full_pass(i) {
            log::debug!("smo stalled after {iterations} updates with gap {gap}");
            break;
        }
    }

    let bias = -solver.rho();
    let threshold = T::lit(SUPPORT_THRESHOLD);
    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for (i, a) in solver.alpha.iter().enumerate() {
        if *a > threshold {
            support_vectors.push(x.row(i).to_vec());
            dual_coefs.push(*a * yf[i]);
        }
    }
    Ok(BinaryFit {
        model: SvmModel {
            kernel: *kernel,
            c,
            support_vectors,
            dual_coefs,
            bias,
        },
        alphas: solver.alpha,
        iterations,
        converged,
        kkt_gap: gap,
    })
}

struct Solver<'a, T> {
    n: usize,
    gram: &'a [T],
    y: &'a [T],
    c: T,
    alpha: Vec<T>,
    /// Gradient of the minimisation objective, `Q a - e`.
    grad: Vec<T>,
}

impl<T: Scalar> Solver<'_, T> {
    #[inline]
    fn q(&self, i: usize, j: usize) -> T {
        self.y[i] * self.y[j] * self.gram[i * self.n + j]
    }

    #[inline]
    fn in_up(&self, t: usize) -> bool {
        (self.y[t] > T::zero() && self.alpha[t] < self.c)
            || (self.y[t] < T::zero() && self.alpha[t] > T::zero())
    }

    #[inline]
    fn in_low(&self, t: usize) -> bool {
        (self.y[t] < T::zero() && self.alpha[t] < self.c)
            || (self.y[t] > T::zero() && self.alpha[t] > T::zero())
    }

    #[inline]
    fn score(&self, t: usize) -> T {
        -self.y[t] * self.grad[t]
    }

    /// Maximal violating pair and its gap, or `None` if a set is empty.
    fn select_pair(&self) -> Option<(usize, usize, T)> {
        let mut up: Option<(usize, T)> = None;
        let mut low: Option<(usize, T)> = None;
        for t in 0..self.n {
            let s = self.score(t);
            if self.in_up(t) && up.is_none_or(|(_, best)| s > best) {
                up = Some((t, s));
            }
            if self.in_low(t) && low.is_none_or(|(_, best)| s < best) {
                low = Some((t, s));
            }
        }
        let ((i, gmax), (j, gmin)) = (up?, low?);
        Some((i, j, gmax - gmin))
    }

    /// Analytic two-variable step; returns whether any alpha moved.
    fn update_pair(&mut self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let c = self.c;
        let tau = T::lit(TAU);
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (gi, gj) = (self.grad[i], self.grad[j]);
        let kii = self.gram[i * self.n + i];
        let kjj = self.gram[j * self.n + j];
        let kij = self.gram[i * self.n + j];

        let (mut ai, mut aj);
        if self.y[i] != self.y[j] {
            let mut quad = kii + kjj - T::lit(2.0) * kij;
            if quad <= T::zero() {
                quad = tau;
            }
            let delta = (-gi - gj) / quad;
            let diff = old_i - old_j;
            ai = old_i + delta;
            aj = old_j + delta;
            if diff > T::zero() {
                if aj < T::zero() {
                    aj = T::zero();
                    ai = diff;
                }
            } else if ai < T::zero() {
                ai = T::zero();
                aj = -diff;
            }
            if diff > T::zero() {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = kii + kjj - T::lit(2.0) * kij;
            if quad <= T::zero() {
                quad = tau;
            }
            let delta = (gi - gj) / quad;
            let sum = old_i + old_j;
            ai = old_i - delta;
            aj = old_j + delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < T::zero() {
                aj = T::zero();
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < T::zero() {
                ai = T::zero();
                aj = sum;
            }
        }
        // Snap rounding residue onto the box.
        let snap = |v: T| {
            let eps = T::epsilon() * c * T::lit(16.0);
            if v < eps {
                T::zero()
            } else if v > c - eps {
                c
            } else {
                v
            }
        };
        ai = snap(ai);
        aj = snap(aj);

        let (di, dj) = (ai - old_i, aj - old_j);
        if di == T::zero() && dj == T::zero() {
            return false;
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        for k in 0..self.n {
            let delta = self.q(i, k) * di + self.q(j, k) * dj;
            self.grad[k] += delta;
        }
        true
    }

    /// Tries every violating pair, most violating first, until one moves.
    fn full_pass(&mut self, first: usize) -> bool {
        let mut lows: Vec<usize> = (0..self.n).filter(|&t| self.in_low(t)).collect();
        lows.sort_by(|&a, &b| self.score(a).total_cmp(&self.score(b)).then(a.cmp(&b)));
        let mut ups: Vec<usize> = (0..self.n).filter(|&t| self.in_up(t)).collect();
        ups.sort_by(|&a, &b| self.score(b).total_cmp(&self.score(a)).then(a.cmp(&b)));
        ups.retain(|&t| t != first);
        ups.insert(0, first);
        for &i in &ups {
            for &j in &lows {
                if self.score(i) <= self.score(j) {
                    break;
                }
                if self.update_pair(i, j) {
                    return true;
                }
            }
        }
        false
    }

    /// Offset `rho` with `f(x) = sum a_i y_i k(x_i, x) - rho`.
    fn rho(&self) -> T {
        let mut upper = T::infinity();
        let mut lower = T::neg_infinity();
        let mut free_sum = T::zero();
        let mut free = 0usize;
        for t in 0..self.n {
            let yg = self.y[t] * self.grad[t];
            let at_upper = self.alpha[t] >= self.c;
            let at_lower = self.alpha[t] <= T::zero();
            if at_upper {
                if self.y[t] < T::zero() {
                    upper = upper.min(yg);
                } else {
                    lower = lower.max(yg);
                }
            } else if at_lower {
                if self.y[t] > T::zero() {
                    upper = upper.min(yg);
                } else {
                    lower = lower.max(yg);
                }
            } else {
                free += 1;
                free_sum += yg;
            }
        }
        if free > 0 {
            free_sum / T::from_usize_lossy(free)
        } else if upper.is_finite() && lower.is_finite() {
            (upper + lower) / T::lit(2.0)
        } else if upper.is_finite() {
            upper
        } else if lower.is_finite() {
            lower
        } else {
            T::zero()
        }
    }
}

/// Dual objective in maximisation form, `sum a_i - 1/2 sum_ij a_i a_j y_i y_j k_ij`.
pub fn dual_objective<T: Scalar>(alphas: &[T], y: &[i8], gram: &[T]) -> T {
    let n = alphas.len();
    let mut quad = T::zero();
    for i in 0..n {
        if alphas[i] == T::zero() {
            continue;
        }
        for j in 0..n {
            let yy = if y[i] == y[j] { T::one() } else { -T::one() };
            quad += alphas[i] * alphas[j] * yy * gram[i * n + j];
        }
    }
    alphas.iter().copied().sum::<T>() - quad / T::lit(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> BinaryFit<f64> {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        train_binary_smo(&x, &[-1, 1], &KernelSpec::linear(), &SmoParams::with_c(10.0)).unwrap()
    }

    #[test]
    fn analytic_two_point_solution() {
        let fit = two_point();
        assert!(fit.converged);
        assert!((fit.alphas[0] - 0.5).abs() < 1e-12);
        assert!((fit.alphas[1] - 0.5).abs() < 1e-12);
        let m = &fit.model;
        assert!((m.bias + 1.0).abs() < 1e-12);
        assert!(m.decision_value(&[1.0]).unwrap().abs() < 1e-12);
        assert!((m.decision_value(&[2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((m.decision_value(&[0.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn predict_tie_rule() {
        let m = two_point().model;
        assert_eq!(m.predict(&[3.0]).unwrap(), 1);
        assert_eq!(m.predict(&[-1.0]).unwrap(), -1);
        let exact = SvmModel {
            bias: 0.0,
            support_vectors: vec![],
            dual_coefs: vec![],
            ..m.clone()
        };
        assert_eq!(exact.predict(&[1.0]).unwrap(), 1);
        assert!(matches!(
            m.predict(&[1.0, 2.0]),
            Err(SvmError::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn empty_support_set_returns_bias() {
        let m = SvmModel {
            kernel: KernelSpec::rbf(1.0),
            c: 1.0,
            support_vectors: vec![],
            dual_coefs: vec![],
            bias: 0.25,
        };
        assert_eq!(m.decision_value(&[3.0, 4.0]).unwrap(), 0.25);
    }

    #[test]
    fn xor_with_rbf() {
        let x = FeatureMatrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ])
        .unwrap();
        let y = [-1, -1, 1, 1];
        let fit = train_binary_smo(&x, &y, &KernelSpec::rbf(1.0), &SmoParams::with_c(10.0)).unwrap();
        assert!(fit.converged);
        for (row, label) in x.iter_rows().zip(y) {
            assert_eq!(fit.model.predict(row).unwrap(), label);
        }
    }

    #[test]
    fn rejects_single_class() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(
            train_binary_smo(&x, &[1, 1], &KernelSpec::rbf(1.0), &SmoParams::default()).unwrap_err(),
            SvmError::SingleClass
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let bad_c = SmoParams { c: 0.0, ..SmoParams::default() };
        assert!(train_binary_smo(&x, &[1, -1], &KernelSpec::rbf(1.0), &bad_c).is_err());
        assert!(train_binary_smo(&x, &[1], &KernelSpec::rbf(1.0), &SmoParams::default()).is_err());
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let x = FeatureMatrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.5, 0.4],
        ])
        .unwrap();
        let params = SmoParams {
            max_passes: Some(1),
            ..SmoParams::with_c(10.0)
        };
        let fit = train_binary_smo(&x, &[-1, -1, 1, 1, 1], &KernelSpec::rbf(1.0), &params).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
        assert!(matches!(fit.into_converged(), Err(SvmError::NoConvergence { .. })));
    }

    #[test]
    fn single_precision_training() {
        let x = FeatureMatrix::from_rows(&[vec![0.0f32], vec![2.0]]).unwrap();
        let fit =
            train_binary_smo(&x, &[-1, 1], &KernelSpec::linear(), &SmoParams::with_c(10.0)).unwrap();
        assert!(fit.model.decision_value(&[1.0]).unwrap().abs() < 1e-5);
    }

    #[test]
    fn model_json_schema() {
        let json = serde_json::to_string(&two_point().model).unwrap();
        let pos: Vec<usize> = ["\"kernel\"", "\"C\"", "\"support_vectors\"", "\"dual_coefs\"", "\"bias\""]
            .iter()
            .map(|k| json.find(k).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{json}");
        let back: SvmModel<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, two_point().model);
    }
}
