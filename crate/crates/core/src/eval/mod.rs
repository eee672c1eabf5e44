//! Splitting, cross-validation, metrics and the end-to-end experiment.

mod experiment;
mod metrics;
mod roc;
mod split;

use thiserror::Error;

pub use experiment::{
    confusion_csv, run_experiment, task_rows, train_bundle, EvaluationReport, ExperimentConfig,
    KernelReport, MetricSet, PhaseReport, SkillReport, TaskSelection,
};
pub use metrics::{binary_metrics, confusion_matrix, mean_confusion, BinaryMetrics, ConfusionMatrix};
pub use roc::{per_class_roc, per_class_roc_from_scores, roc_auc, ClassRoc, RocCurve};
pub use split::{grouped_kfold, split_holdout, FoldPlan, HoldoutSplit, Participant};

use crate::preprocess::PreprocessError;
use crate::segment::SegmentError;
use crate::svm::SvmError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("need at least {needed} participants, found {found}")]
    TooFewParticipants { found: usize, needed: usize },
    #[error("fold count {k} invalid for {participants} participants")]
    BadK { k: usize, participants: usize },
    #[error("label {label} outside 0..{k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("labels contain a single class")]
    SingleClassLabels,
    #[error("dataset contains a single skill level")]
    SingleSkill,
    #[error("no usable swings in the dataset")]
    NoData,
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
}

impl EvalError {
    /// True when the input dataset (not configuration or numerics) is at fault.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Self::TooFewParticipants { .. }
                | Self::SingleSkill
                | Self::NoData
                | Self::SingleClassLabels
                | Self::Segment(SegmentError::NoSwingsFound)
        )
    }
}
