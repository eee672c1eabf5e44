//! Kernel support vector machines trained with SMO, plus one-vs-rest bundling.

mod kernel;
mod multiclass;
mod smo;

use thiserror::Error;

pub use kernel::{gram_matrix, kernel_eval, Gamma, GammaRule, KernelKind, KernelSpec};
pub use multiclass::{
    argmax_lowest, predict_multiclass, train_multiclass_ovr, ClassModel, MultiClassModel,
};
pub use smo::{
    decision_value, dual_objective, predict_binary, train_binary_smo, BinaryFit, SmoParams,
    SvmModel, SUPPORT_THRESHOLD,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvmError {
    #[error("expected dimension {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("label {label} outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("kernel gamma not resolved")]
    UnresolvedGamma,
    #[error("SMO did not converge after {iterations} updates (KKT gap {gap})")]
    NoConvergence { iterations: usize, gap: f64 },
    #[error("invalid parameter: {0}")]
    BadParam(String),
}
