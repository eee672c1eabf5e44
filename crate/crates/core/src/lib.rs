//! Tennis forehand analysis from wrist-worn IMU Euler angles.
//!
//! The pipeline cleans sensor logs ([`ingest`]), projects them with PCA
//! ([`preprocess`]), finds swings and their five phases by change-point
//! detection ([`segment`]), classifies skill and phase with kernel SVMs
//! trained by SMO ([`svm`]) and evaluates everything with participant-grouped
//! cross-validation ([`eval`]). [`synth`] generates labelled data to run it on.
//!
//! Numeric modules are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod cli;
pub mod eval;
pub mod ingest;
pub mod linalg;
pub mod pipeline;
pub mod preprocess;
pub mod scalar;
pub mod segment;
pub mod svm;
pub mod synth;

pub use scalar::Scalar;

pub type Features = preprocess::FeatureMatrix<f64>;
pub type Features32 = preprocess::FeatureMatrix<f32>;
pub type Pca = preprocess::PcaModel<f64>;
pub type Pca32 = preprocess::PcaModel<f32>;
pub type Kernel = svm::KernelSpec<f64>;
pub type Kernel32 = svm::KernelSpec<f32>;
pub type Svm = svm::SvmModel<f64>;
pub type Svm32 = svm::SvmModel<f32>;
pub type MultiClassSvm = svm::MultiClassModel<f64>;
pub type MultiClassSvm32 = svm::MultiClassModel<f32>;
