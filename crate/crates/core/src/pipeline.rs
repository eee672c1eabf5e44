//! Glue between recordings and the classifiers: swing segmentation per
//! session, feature rows for the skill and phase tasks, and the
//! self-contained inference bundle.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::EvalError;
use crate::ingest::{ImuFrame, Recording, Session, Skill};
use crate::preprocess::{
    components_for_variance, pca_fit, FeatureMatrix, PcaModel, PreprocessError, Standardizer,
};
use crate::segment::{
    extract_swings, segment_phases, PhaseSegmentation, SegmentError, SwingParams, SwingWindow,
    DEFAULT_MIN_SEG_LEN, N_PHASES,
};
use crate::svm::{MultiClassModel, SvmError, SvmModel};

pub const ANGLE_NAMES: [&str; 3] = ["yaw", "roll", "pitch"];

/// What the classifiers see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// One row per frame: the three Euler angles.
    Frames,
    /// One row per swing: mean/std/min/max of each angle.
    Aggregates,
}

impl FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "frames" => Ok(Self::Frames),
            "aggregates" => Ok(Self::Aggregates),
            other => Err(format!("unknown feature mode `{other}`")),
        }
    }
}

/// Signal fed to the change-point detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentInput {
    /// Principal component scores of the session's standardized angles.
    Pca,
    /// The raw angles.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Skill,
    Phase,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Skill => "skill",
            Task::Phase => "phase",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub swing: SwingParams,
    pub min_seg_len: usize,
    pub input: SegmentInput,
    /// Cumulative explained variance used to pick the PCA size.
    pub pca_variance: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            swing: SwingParams::default(),
            min_seg_len: DEFAULT_MIN_SEG_LEN,
            input: SegmentInput::Pca,
            pca_variance: 0.95,
        }
    }
}

/// One detected swing with its phase labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwingRecord {
    pub participant_id: String,
    pub skill: Skill,
    pub session: Session,
    pub swing_index: usize,
    pub window: SwingWindow,
    pub frames: Vec<ImuFrame>,
    pub segmentation: PhaseSegmentation,
}

/// Per-swing segmentation output as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationRecord {
    pub participant_id: String,
    pub session: Session,
    pub swing_index: usize,
    pub start: usize,
    pub end: usize,
    pub breakpoints: [usize; 4],
    pub phases: Vec<usize>,
}

impl From<&SwingRecord> for SegmentationRecord {
    fn from(s: &SwingRecord) -> Self {
        Self {
            participant_id: s.participant_id.clone(),
            session: s.session,
            swing_index: s.swing_index,
            start: s.window.start,
            end: s.window.end,
            breakpoints: s.segmentation.breakpoints,
            phases: s.segmentation.phases(),
        }
    }
}

pub fn angle_matrix(frames: &[ImuFrame]) -> Result<FeatureMatrix<f64>, PreprocessError> {
    let values = frames.iter().flat_map(ImuFrame::angles).collect();
    FeatureMatrix::new(
        frames.len(),
        3,
        values,
        ANGLE_NAMES.iter().map(|s| s.to_string()).collect(),
    )
}

/// Detector input for a whole session.
pub fn segmentation_signal(
    frames: &[ImuFrame],
    params: &SegmentParams,
) -> Result<FeatureMatrix<f64>, PreprocessError> {
    let raw = angle_matrix(frames)?;
    match params.input {
        SegmentInput::Raw => Ok(raw),
        SegmentInput::Pca => {
            let z = Standardizer::fit(&raw).transform(&raw)?;
            let k = components_for_variance(&z, params.pca_variance)?;
            pca_fit(&z, k)?.transform(&z)
        }
    }
}

/// Finds the swings in one session and splits each into phases.
///
/// Windows too short to hold five segments are skipped.
pub fn segment_recording(
    rec: &Recording,
    params: &SegmentParams,
) -> Result<Vec<SwingRecord>, SegmentError> {
    let windows = extract_swings(&rec.frames, &params.swing)?;
    let signal = segmentation_signal(&rec.frames, params)
        .map_err(|e| SegmentError::BadParam(e.to_string()))?;
    let min_len = N_PHASES * params.min_seg_len.max(1);
    let mut out = Vec::with_capacity(windows.len());
    for window in windows.into_iter().filter(|w| w.len() >= min_len) {
        let part = signal
            .slice_rows(window.start, window.end)
            .map_err(|e| SegmentError::BadParam(e.to_string()))?;
        let segmentation = segment_phases(&part, params.min_seg_len)?;
        out.push(SwingRecord {
            participant_id: rec.participant_id.clone(),
            skill: rec.skill,
            session: rec.session,
            swing_index: out.len(),
            window,
            frames: rec.frames[window.start..window.end].to_vec(),
            segmentation,
        });
    }
    Ok(out)
}

/// Segments every recording in parallel; output keeps dataset order.
///
/// Sessions where no swing is found contribute nothing.
pub fn segment_dataset(
    recordings: &[Recording],
    params: &SegmentParams,
) -> Result<Vec<SwingRecord>, SegmentError> {
    let per_rec: Vec<Vec<SwingRecord>> = recordings
        .par_iter()
        .map(|rec| match segment_recording(rec, params) {
            Ok(s) => Ok(s),
            Err(SegmentError::NoSwingsFound) => {
                log::warn!("{} {}: no swings found", rec.participant_id, rec.session);
                Ok(Vec::new())
            }
            Err(e) => Err(e),
        })
        .collect::<Result<_, _>>()?;
    Ok(per_rec.into_iter().flatten().collect())
}

/// Labelled feature rows with the participant each row came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledRows {
    pub col_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub groups: Vec<String>,
}

impl LabeledRows {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows whose participant satisfies `keep`, in order.
    pub fn filter_groups(&self, keep: impl Fn(&str) -> bool) -> LabeledRows {
        let mut out = LabeledRows {
            col_names: self.col_names.clone(),
            ..LabeledRows::default()
        };
        for i in 0..self.len() {
            if keep(&self.groups[i]) {
                out.rows.push(self.rows[i].clone());
                out.labels.push(self.labels[i]);
                out.groups.push(self.groups[i].clone());
            }
        }
        out
    }

    pub fn select(&self, idx: &[usize]) -> LabeledRows {
        LabeledRows {
            col_names: self.col_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i].clone()).collect(),
        }
    }

    pub fn matrix(&self) -> Result<FeatureMatrix<f64>, PreprocessError> {
        FeatureMatrix::from_rows(&self.rows)?.with_col_names(self.col_names.clone())
    }
}

/// Summary statistics of one swing: mean, std, min, max per angle.
pub fn swing_aggregates(frames: &[ImuFrame]) -> Vec<f64> {
    let n = frames.len().max(1) as f64;
    let mut out = Vec::with_capacity(12);
    for c in 0..3 {
        let vals: Vec<f64> = frames.iter().map(|f| f.angles()[c]).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.extend([mean, var.sqrt(), min, max]);
    }
    out
}

pub fn aggregate_names() -> Vec<String> {
    ANGLE_NAMES
        .iter()
        .flat_map(|c| ["mean", "std", "min", "max"].map(|s| format!("{c}_{s}")))
        .collect()
}

/// Skill-task rows (label 0 beginner, 1 intermediate).
pub fn skill_rows(swings: &[SwingRecord], mode: FeatureMode, frame_stride: usize) -> LabeledRows {
    let stride = frame_stride.max(1);
    let mut out = LabeledRows::default();
    match mode {
        FeatureMode::Frames => {
            out.col_names = ANGLE_NAMES.iter().map(|s| s.to_string()).collect();
            for s in swings {
                for f in s.frames.iter().step_by(stride) {
                    out.rows.push(f.angles().to_vec());
                    out.labels.push(s.skill.label());
                    out.groups.push(s.participant_id.clone());
                }
            }
        }
        FeatureMode::Aggregates => {
            out.col_names = aggregate_names();
            for s in swings {
                out.rows.push(swing_aggregates(&s.frames));
                out.labels.push(s.skill.label());
                out.groups.push(s.participant_id.clone());
            }
        }
    }
    out
}

/// Phase-task rows: one per (strided) frame, labelled with its phase.
pub fn phase_rows(swings: &[SwingRecord], frame_stride: usize) -> LabeledRows {
    let stride = frame_stride.max(1);
    let mut out = LabeledRows {
        col_names: ANGLE_NAMES.iter().map(|s| s.to_string()).collect(),
        ..LabeledRows::default()
    };
    for s in swings {
        for (i, f) in s.frames.iter().enumerate().step_by(stride) {
            out.rows.push(f.angles().to_vec());
            out.labels.push(s.segmentation.phase_of(i));
            out.groups.push(s.participant_id.clone());
        }
    }
    out
}

/// Standardization followed by PCA, fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub standardizer: Standardizer<f64>,
    pub pca: PcaModel<f64>,
}

impl Preprocessor {
    /// Uses `components` if given, otherwise the smallest count reaching `variance`.
    pub fn fit(
        x: &FeatureMatrix<f64>,
        components: Option<usize>,
        variance: f64,
    ) -> Result<Self, PreprocessError> {
        let standardizer = Standardizer::fit(x);
        let z = standardizer.transform(x)?;
        let k = match components {
            Some(k) => k,
            None => components_for_variance(&z, variance)?,
        };
        Ok(Self {
            standardizer,
            pca: pca_fit(&z, k)?,
        })
    }

    pub fn transform(&self, x: &FeatureMatrix<f64>) -> Result<FeatureMatrix<f64>, PreprocessError> {
        self.pca.transform(&self.standardizer.transform(x)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BundleModel {
    Binary { model: SvmModel<f64> },
    Multiclass { model: MultiClassModel<f64> },
}

/// Everything needed to classify raw feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineBundle {
    pub task: Task,
    pub features: FeatureMode,
    pub col_names: Vec<String>,
    pub preprocessor: Preprocessor,
    pub model: BundleModel,
}

impl PipelineBundle {
    /// Class label for one raw feature row (skill: 0/1, phase: 0..5).
    pub fn predict(&self, row: &[f64]) -> Result<usize, EvalError> {
        let x = FeatureMatrix::from_rows(&[row.to_vec()])?;
        let z = self.preprocessor.transform(&x)?;
        match &self.model {
            BundleModel::Binary { model } => Ok(usize::from(model.predict(z.row(0))? > 0)),
            BundleModel::Multiclass { model } => Ok(model.predict(z.row(0))?),
        }
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }
}

impl From<SvmError> for SegmentError {
    fn from(e: SvmError) -> Self {
        SegmentError::BadParam(e.to_string())
    }
}
