use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SvmError;
use crate::linalg::{dot, squared_distance};
use crate::preprocess::FeatureMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Poly,
    Sigmoid,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [KernelKind::Rbf, KernelKind::Poly, KernelKind::Sigmoid];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Rbf => "rbf",
            KernelKind::Poly => "poly",
            KernelKind::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = SvmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rbf" => Ok(Self::Rbf),
            "poly" => Ok(Self::Poly),
            "sigmoid" => Ok(Self::Sigmoid),
            other => Err(SvmError::BadParam(format!("unknown kernel `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaRule {
    /// `1 / (d * var(X))` over all entries of the training matrix.
    Scale,
}

/// Kernel width: a fixed value or a rule resolved against training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, bound = "T: Scalar")]
pub enum Gamma<T> {
    Value(T),
    Rule(GammaRule),
}

impl<T: Scalar> FromStr for Gamma<T> {
    type Err = SvmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "scale" {
            return Ok(Gamma::Rule(GammaRule::Scale));
        }
        let v: f64 = s
            .parse()
            .map_err(|_| SvmError::BadParam(format!("gamma must be a number or `scale`, got `{s}`")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(SvmError::BadParam(format!("gamma must be positive, got {v}")));
        }
        Ok(Gamma::Value(T::lit(v)))
    }
}

impl<T: Scalar> fmt::Display for Gamma<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Value(v) => write!(f, "{v}"),
            Gamma::Rule(GammaRule::Scale) => f.write_str("scale"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KernelSpec<T> {
    pub kind: KernelKind,
    pub gamma: Gamma<T>,
    /// Polynomial degree; ignored by the other kernels.
    pub degree: u32,
    pub coef0: T,
}

impl<T: Scalar> KernelSpec<T> {
    /// Library defaults: `gamma = scale`, `degree = 3`, `coef0 = 0`.
    pub fn new(kind: KernelKind) -> Self {
        Self {
            kind,
            gamma: Gamma::Rule(GammaRule::Scale),
            degree: 3,
            coef0: T::zero(),
        }
    }

    pub fn rbf(gamma: T) -> Self {
        Self {
            gamma: Gamma::Value(gamma),
            ..Self::new(KernelKind::Rbf)
        }
    }

    pub fn poly(degree: u32, gamma: T, coef0: T) -> Self {
        Self {
            kind: KernelKind::Poly,
            gamma: Gamma::Value(gamma),
            degree,
            coef0,
        }
    }

    pub fn sigmoid(gamma: T, coef0: T) -> Self {
        Self {
            gamma: Gamma::Value(gamma),
            coef0,
            ..Self::new(KernelKind::Sigmoid)
        }
    }

    /// `<x, z>` expressed as a degree-1 polynomial kernel.
    pub fn linear() -> Self {
        Self::poly(1, T::one(), T::zero())
    }

    pub fn with_gamma(mut self, gamma: Gamma<T>) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn gamma_value(&self) -> Option<T> {
        match self.gamma {
            Gamma::Value(v) => Some(v),
            Gamma::Rule(_) => None,
        }
    }

    /// Replaces a gamma rule by its value on `x`; a zero-variance matrix gets gamma 1.
    pub fn resolve(&self, x: &FeatureMatrix<T>) -> Result<Self, SvmError> {
        if self.kind == KernelKind::Poly && self.degree == 0 {
            return Err(SvmError::BadParam("polynomial degree must be >= 1".into()));
        }
        let gamma = match self.gamma {
            Gamma::Value(v) if v > T::zero() && v.is_finite() => v,
            Gamma::Value(v) => {
                return Err(SvmError::BadParam(format!("gamma must be positive, got {v}")))
            }
            Gamma::Rule(GammaRule::Scale) => {
                let vals = x.values();
                let count = T::from_usize_lossy(vals.len());
                let mean = vals.iter().copied().sum::<T>() / count;
                let var = vals.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / count;
                let denom = T::from_usize_lossy(x.ncols()) * var;
                if denom > T::zero() {
                    T::one() / denom
                } else {
                    T::one()
                }
            }
        };
        Ok(Self {
            gamma: Gamma::Value(gamma),
            ..*self
        })
    }

    /// Kernel value without dimension checks. Panics if gamma is unresolved.
    #[inline]
    pub fn eval_unchecked(&self, x: &[T], z: &[T]) -> T {
        let gamma = self.gamma_value().expect("kernel gamma must be resolved before use");
        match self.kind {
            KernelKind::Rbf => (-gamma * squared_distance(x, z)).exp(),
            KernelKind::Poly => (gamma * dot(x, z) + self.coef0).powi(self.degree as i32),
            KernelKind::Sigmoid => (gamma * dot(x, z) + self.coef0).tanh(),
        }
    }
}

/// Evaluates `k(x, z)`.
///
/// RBF `exp(-g||x - z||^2)`, polynomial `(g<x, z> + c0)^degree`, sigmoid `tanh(g<x, z> + c0)`.
pub fn kernel_eval<T: Scalar>(spec: &KernelSpec<T>, x: &[T], z: &[T]) -> Result<T, SvmError> {
    if x.len() != z.len() {
        return Err(SvmError::DimensionMismatch {
            expected: x.len(),
            found: z.len(),
        });
    }
    if spec.gamma_value().is_none() {
        return Err(SvmError::UnresolvedGamma);
    }
    Ok(spec.eval_unchecked(x, z))
}

/// Full row-major Gram matrix of `x` under a resolved kernel.
pub fn gram_matrix<T: Scalar>(spec: &KernelSpec<T>, x: &FeatureMatrix<T>) -> Result<Vec<T>, SvmError> {
    if spec.gamma_value().is_none() {
        return Err(SvmError::UnresolvedGamma);
    }
    let n = x.nrows();
    let mut gram = vec![T::zero(); n * n];
    gram.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let xi = x.row(i);
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = spec.eval_unchecked(xi, x.row(j));
        }
    });
    // Force exact symmetry; the two triangles can differ in the last bit.
    for i in 0..n {
        for j in (i + 1)..n {
            gram[j * n + i] = gram[i * n + j];
        }
    }
    Ok(gram)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        let rbf = KernelSpec::rbf(0.5);
        let x = [0.3, -1.2];
        assert_eq!(kernel_eval(&rbf, &x, &x).unwrap(), 1.0);
        let v = kernel_eval(&rbf, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.606531).abs() < 1e-6);

        let poly = KernelSpec::poly(2, 1.0, 1.0);
        assert_eq!(kernel_eval(&poly, &[1.0, 0.0], &[1.0, 1.0]).unwrap(), 4.0);

        let sig = KernelSpec::sigmoid(0.5, -1.0);
        let v = kernel_eval(&sig, &[1.0, 2.0], &[2.0, 0.0]).unwrap();
        assert!((v - 0.0f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn kernel_errors() {
        let rbf = KernelSpec::rbf(1.0);
        assert_eq!(
            kernel_eval(&rbf, &[1.0, 2.0], &[1.0]),
            Err(SvmError::DimensionMismatch { expected: 2, found: 1 })
        );
        let unresolved = KernelSpec::<f64>::new(KernelKind::Rbf);
        assert_eq!(kernel_eval(&unresolved, &[1.0], &[1.0]), Err(SvmError::UnresolvedGamma));
    }

    #[test]
    fn scale_gamma() {
        let x = FeatureMatrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        // entries 0,2,2,0: var 1, d 2 -> gamma 0.5
        let k = KernelSpec::new(KernelKind::Rbf).resolve(&x).unwrap();
        assert_eq!(k.gamma_value(), Some(0.5));

        let flat = FeatureMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let k = KernelSpec::new(KernelKind::Rbf).resolve(&flat).unwrap();
        assert_eq!(k.gamma_value(), Some(1.0));
    }

    #[test]
    fn gamma_parsing_and_json() {
        assert_eq!("scale".parse::<Gamma<f64>>().unwrap(), Gamma::Rule(GammaRule::Scale));
        assert_eq!("0.25".parse::<Gamma<f64>>().unwrap(), Gamma::Value(0.25));
        assert!("-1".parse::<Gamma<f64>>().is_err());
        assert!("wide".parse::<Gamma<f64>>().is_err());

        let spec = KernelSpec::<f64>::new(KernelKind::Poly);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"poly","gamma":"scale","degree":3,"coef0":0.0}"#);
        let back: KernelSpec<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let fixed: KernelSpec<f64> =
            serde_json::from_str(r#"{"kind":"rbf","gamma":2.0,"degree":3,"coef0":0.0}"#).unwrap();
        assert_eq!(fixed.gamma_value(), Some(2.0));
    }
}
