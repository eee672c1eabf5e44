//! Channel scaling and principal component analysis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{fix_sign, symmetric_eigen};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("series is empty")]
    EmptySeries,
    #[error("component count {k} outside 1..={d}")]
    BadK { k: usize, d: usize },
    #[error("need at least 2 rows to estimate a covariance, got {0}")]
    DegenerateData(usize),
    #[error("expected {expected} columns, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix shape invalid: {0}")]
    BadShape(String),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
}

/// Dense row-major `n x d` matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureMatrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
    col_names: Vec<String>,
}

impl<T: Scalar> FeatureMatrix<T> {
    /// Builds a matrix from row-major values. Rejects empty shapes and non-finite entries.
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<T>,
        col_names: Vec<String>,
    ) -> Result<Self, PreprocessError> {
        if rows == 0 || cols == 0 {
            return Err(PreprocessError::BadShape(format!("{rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(PreprocessError::BadShape(format!(
                "{} values for {rows}x{cols}",
                values.len()
            )));
        }
        if col_names.len() != cols {
            return Err(PreprocessError::BadShape(format!(
                "{} column names for {cols} columns",
                col_names.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(PreprocessError::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self {
            rows,
            cols,
            values,
            col_names,
        })
    }

    /// Builds a matrix from rows, naming columns `x0, x1, ...`.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, PreprocessError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(PreprocessError::DimensionMismatch {
                expected: cols,
                found: bad.len(),
            });
        }
        let names = (0..cols).map(|i| format!("x{i}")).collect();
        Self::new(rows.len(), cols, rows.concat(), names)
    }

    pub fn with_col_names(mut self, names: Vec<String>) -> Result<Self, PreprocessError> {
        if names.len() != self.cols {
            return Err(PreprocessError::BadShape(format!(
                "{} column names for {} columns",
                names.len(),
                self.cols
            )));
        }
        self.col_names = names;
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.values.chunks_exact(self.cols)
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.iter_rows().map(|r| r[j]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.iter_rows().map(<[T]>::to_vec).collect()
    }

    /// Rows at the given indices, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self, PreprocessError> {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self::new(idx.len(), self.cols, values, self.col_names.clone())
    }

    /// Contiguous row range `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self, PreprocessError> {
        if start >= end || end > self.rows {
            return Err(PreprocessError::BadShape(format!(
                "row range {start}..{end} of {}",
                self.rows
            )));
        }
        Self::new(
            end - start,
            self.cols,
            self.values[start * self.cols..end * self.cols].to_vec(),
            self.col_names.clone(),
        )
    }
}

/// Population mean and standard deviation of a series.
fn mean_std<T: Scalar>(series: &[T]) -> (T, T) {
    let n = T::from_usize_lossy(series.len());
    let mean = series.iter().copied().sum::<T>() / n;
    let var = series
        .iter()
        .map(|x| (*x - mean) * (*x - mean))
        .sum::<T>()
        / n;
    (mean, var.sqrt())
}

/// Standard deviations below this are treated as zero.
pub const STD_FLOOR: f64 = 1e-12;

/// Z-scores a series with the population standard deviation.
///
/// A series whose std is below [`STD_FLOOR`] maps to all zeros and reports std 0.
pub fn standardize<T: Scalar>(series: &[T]) -> Result<(Vec<T>, T, T), PreprocessError> {
    if series.is_empty() {
        return Err(PreprocessError::EmptySeries);
    }
    let (mean, std) = mean_std(series);
    if std < T::lit(STD_FLOOR) {
        return Ok((vec![T::zero(); series.len()], mean, T::zero()));
    }
    Ok((series.iter().map(|x| (*x - mean) / std).collect(), mean, std))
}

/// Rescales a series onto `[0, 1]`. A constant series maps to zeros.
pub fn normalize_minmax<T: Scalar>(series: &[T]) -> Result<Vec<T>, PreprocessError> {
    if series.is_empty() {
        return Err(PreprocessError::EmptySeries);
    }
    let (lo, hi) = series
        .iter()
        .fold((series[0], series[0]), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
    let range = hi - lo;
    if range <= T::zero() {
        log::warn!("min-max normalization of a constant series; returning zeros");
        return Ok(vec![T::zero(); series.len()]);
    }
    Ok(series.iter().map(|x| (*x - lo) / range).collect())
}

/// Per-column z-scoring fitted on one matrix and replayed on others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    /// Population std per column; 0 marks a constant column.
    pub std: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit(x: &FeatureMatrix<T>) -> Self {
        let (mean, std) = (0..x.ncols())
            .map(|j| {
                let (m, s) = mean_std(&x.column(j));
                (m, if s < T::lit(STD_FLOOR) { T::zero() } else { s })
            })
            .unzip();
        Self { mean, std }
    }

    pub fn transform(&self, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>, PreprocessError> {
        if x.ncols() != self.mean.len() {
            return Err(PreprocessError::DimensionMismatch {
                expected: self.mean.len(),
                found: x.ncols(),
            });
        }
        let values = x
            .iter_rows()
            .flat_map(|row| {
                row.iter().enumerate().map(|(j, v)| {
                    if self.std[j] == T::zero() {
                        T::zero()
                    } else {
                        (*v - self.mean[j]) / self.std[j]
                    }
                })
            })
            .collect();
        FeatureMatrix::new(x.nrows(), x.ncols(), values, x.col_names().to_vec())
    }
}

/// Principal axes of a feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PcaModel<T> {
    pub mean: Vec<T>,
    /// `k x d`; each row is a unit principal direction.
    pub components: Vec<Vec<T>>,
    pub explained_variance_ratio: Vec<T>,
}

/// Sample covariance (denominator `n - 1`) as a row-major `d x d` matrix, plus column means.
pub fn covariance<T: Scalar>(x: &FeatureMatrix<T>) -> (Vec<T>, Vec<T>) {
    let (n, d) = (x.nrows(), x.ncols());
    let nf = T::from_usize_lossy(n);
    let mean: Vec<T> = (0..d)
        .map(|j| x.iter_rows().map(|r| r[j]).sum::<T>() / nf)
        .collect();
    let mut cov = vec![T::zero(); d * d];
    for row in x.iter_rows() {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += di * (row[j] - mean[j]);
            }
        }
    }
    let denom = T::from_usize_lossy(n - 1);
    for i in 0..d {
        for j in i..d {
            let c = cov[i * d + j] / denom;
            cov[i * d + j] = c;
            cov[j * d + i] = c;
        }
    }
    (mean, cov)
}

/// Fits the top-`k` principal components.
///
/// Each component's largest-magnitude entry is made positive.
pub fn pca_fit<T: Scalar>(x: &FeatureMatrix<T>, k: usize) -> Result<PcaModel<T>, PreprocessError> {
    let d = x.ncols();
    if k == 0 || k > d {
        return Err(PreprocessError::BadK { k, d });
    }
    if x.nrows() < 2 {
        return Err(PreprocessError::DegenerateData(x.nrows()));
    }
    let (mean, cov) = covariance(x);
    let trace: T = (0..d).map(|i| cov[i * d + i]).sum();
    let eig = symmetric_eigen(&cov, d);

    let mut components = Vec::with_capacity(k);
    let mut evr = Vec::with_capacity(k);
    for (value, mut vector) in eig.values.into_iter().zip(eig.vectors).take(k) {
        fix_sign(&mut vector);
        components.push(vector);
        // Rounding can leave tiny negative eigenvalues on rank-deficient data.
        let value = value.max(T::zero());
        evr.push(if trace > T::zero() { value / trace } else { T::zero() });
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance_ratio: evr,
    })
}

/// Smallest `k` whose cumulative explained variance reaches `threshold`.
pub fn components_for_variance<T: Scalar>(
    x: &FeatureMatrix<T>,
    threshold: f64,
) -> Result<usize, PreprocessError> {
    let full = pca_fit(x, x.ncols())?;
    let mut acc = 0.0;
    for (i, r) in full.explained_variance_ratio.iter().enumerate() {
        acc += r.as_f64();
        if acc >= threshold - 1e-12 {
            return Ok(i + 1);
        }
    }
    Ok(x.ncols())
}

impl<T: Scalar> PcaModel<T> {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// Scores `(x - mean) * components^T`.
    pub fn transform(&self, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>, PreprocessError> {
        pca_transform(self, x)
    }

    /// Maps scores back to feature space: `scores * components + mean`.
    pub fn inverse_transform(
        &self,
        scores: &FeatureMatrix<T>,
    ) -> Result<FeatureMatrix<T>, PreprocessError> {
        let k = self.n_components();
        if scores.ncols() != k {
            return Err(PreprocessError::DimensionMismatch {
                expected: k,
                found: scores.ncols(),
            });
        }
        let d = self.n_features();
        let mut values = Vec::with_capacity(scores.nrows() * d);
        for row in scores.iter_rows() {
            for j in 0..d {
                let v = (0..k).fold(self.mean[j], |acc, c| acc + row[c] * self.components[c][j]);
                values.push(v);
            }
        }
        let names = (0..d).map(|i| format!("x{i}")).collect();
        FeatureMatrix::new(scores.nrows(), d, values, names)
    }
}

pub fn pca_transform<T: Scalar>(
    model: &PcaModel<T>,
    x: &FeatureMatrix<T>,
) -> Result<FeatureMatrix<T>, PreprocessError> {
    let d = model.n_features();
    if x.ncols() != d {
        return Err(PreprocessError::DimensionMismatch {
            expected: d,
            found: x.ncols(),
        });
    }
    let k = model.n_components();
    let mut values = Vec::with_capacity(x.nrows() * k);
    let mut centered = vec![T::zero(); d];
    for row in x.iter_rows() {
        for j in 0..d {
            centered[j] = row[j] - model.mean[j];
        }
        for comp in &model.components {
            values.push(crate::linalg::dot(&centered, comp));
        }
    }
    let names = (0..k).map(|i| format!("pc{}", i + 1)).collect();
    FeatureMatrix::new(x.nrows(), k, values, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn standardize_examples() {
        let (z, m, s) = standardize(&[1.0, 2.0, 3.0]).unwrap();
        assert!(close(m, 2.0, 1e-15));
        assert!(close(s, (2.0f64 / 3.0).sqrt(), 1e-15));
        assert!(close(s, 0.816497, 1e-6));
        for (got, want) in z.iter().zip([-1.224745, 0.0, 1.224745]) {
            assert!(close(*got, want, 1e-6));
        }

        let (z, _, s) = standardize(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(z, vec![0.0; 3]);
        assert_eq!(s, 0.0);

        assert_eq!(standardize::<f64>(&[]), Err(PreprocessError::EmptySeries));
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(normalize_minmax(&[2.0, 4.0, 6.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_minmax(&[7.0]).unwrap(), vec![0.0]);
        assert_eq!(normalize_minmax(&[-1.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(normalize_minmax::<f32>(&[]), Err(PreprocessError::EmptySeries));
    }

    #[test]
    fn collinear_pca() {
        let x = FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let model = pca_fit(&x, 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(model.components[0][0], h, 1e-12));
        assert!(close(model.components[0][1], h, 1e-12));
        assert!(close(model.explained_variance_ratio[0], 1.0, 1e-12));

        let scores = model.transform(&x).unwrap();
        for (got, want) in scores.column(0).iter().zip([-std::f64::consts::SQRT_2, 0.0, std::f64::consts::SQRT_2]) {
            assert!(close(*got, want, 1e-6));
        }
    }

    #[test]
    fn pca_errors() {
        let x = FeatureMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(pca_fit(&x, 0), Err(PreprocessError::BadK { k: 0, d: 2 }));
        assert_eq!(pca_fit(&x, 3), Err(PreprocessError::BadK { k: 3, d: 2 }));
        let one = FeatureMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert_eq!(pca_fit(&one, 1), Err(PreprocessError::DegenerateData(1)));

        let model = pca_fit(&x, 1).unwrap();
        let wrong = FeatureMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(
            model.transform(&wrong),
            Err(PreprocessError::DimensionMismatch { expected: 2, found: 3 })
        );
    }

    #[test]
    fn centering_gives_zero_scores() {
        let x = FeatureMatrix::from_rows(&[
            vec![1.0, 4.0, 2.0],
            vec![2.0, 1.0, 0.5],
            vec![0.0, 3.0, 7.0],
            vec![5.0, 2.0, 1.0],
        ])
        .unwrap();
        let model = pca_fit(&x, 2).unwrap();
        let rep = FeatureMatrix::from_rows(&vec![model.mean.clone(); 3]).unwrap();
        let scores = model.transform(&rep).unwrap();
        assert!(scores.values().iter().all(|v: &f64| v.abs() < 1e-12));
    }

    #[test]
    fn full_rank_evr_sums_to_one_and_reconstructs() {
        let x = FeatureMatrix::from_rows(&[
            vec![1.0, 4.0, 2.0],
            vec![2.0, 1.0, 0.5],
            vec![0.0, 3.0, 7.0],
            vec![5.0, 2.0, 1.0],
            vec![-1.0, 0.0, 2.5],
        ])
        .unwrap();
        let model = pca_fit(&x, 3).unwrap();
        let total: f64 = model.explained_variance_ratio.iter().sum();
        assert!(close(total, 1.0, 1e-9));
        let back = model.inverse_transform(&model.transform(&x).unwrap()).unwrap();
        for (a, b) in back.values().iter().zip(x.values()) {
            assert!(close(*a, *b, 1e-9));
        }
    }

    #[test]
    fn standardizer_replays_training_statistics() {
        let train = FeatureMatrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let s = Standardizer::fit(&train);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 0.0]);
        let test = FeatureMatrix::from_rows(&[vec![4.0, 9.0]]).unwrap();
        assert_eq!(s.transform(&test).unwrap().row(0), &[2.0, 0.0]);
    }

    #[test]
    fn default_component_count() {
        // Nearly all variance on one axis.
        let x = FeatureMatrix::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![10.0, 0.1, 0.0],
            vec![20.0, -0.1, 0.05],
            vec![30.0, 0.0, -0.05],
        ])
        .unwrap();
        assert_eq!(components_for_variance(&x, 0.95).unwrap(), 1);
        assert_eq!(components_for_variance(&x, 1.0).unwrap(), 3);
    }

    #[test]
    fn single_precision_pca() {
        let x = FeatureMatrix::from_rows(&[vec![0.0f32, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let model = pca_fit(&x, 2).unwrap();
        assert!((model.explained_variance_ratio[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn json_schema() {
        let model = PcaModel {
            mean: vec![0.5],
            components: vec![vec![1.0]],
            explained_variance_ratio: vec![1.0],
        };
        assert_eq!(
            serde_json::to_string(&model).unwrap(),
            r#"{"mean":[0.5],"components":[[1.0]],"explained_variance_ratio":[1.0]}"#
        );
    }
}
