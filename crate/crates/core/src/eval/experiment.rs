//! Holdout split, grouped cross-validation and refit for both tasks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{binary_metrics, confusion_matrix, mean_confusion, BinaryMetrics, ConfusionMatrix};
use super::roc::{per_class_roc_from_scores, ClassRoc};
use super::split::{grouped_kfold, split_holdout, HoldoutSplit, Participant};
use super::EvalError;
use crate::ingest::{CleaningPolicy, Recording, Skill};
use crate::pipeline::{
    phase_rows, segment_dataset, skill_rows, BundleModel, FeatureMode, LabeledRows, PipelineBundle,
    Preprocessor, SegmentParams, SwingRecord, Task,
};
use crate::segment::{Phase, N_PHASES};
use crate::svm::{
    train_binary_smo, train_multiclass_ovr, Gamma, GammaRule, KernelKind, KernelSpec, MultiClassModel,
    SmoParams, SvmModel,
};

/// Accuracy, precision, recall and F1 for one evaluation phase.
pub type MetricSet = BinaryMetrics;

/// Which tasks an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskSelection {
    Skill,
    Phase,
    Both,
}

impl TaskSelection {
    pub fn includes(self, task: Task) -> bool {
        match self {
            TaskSelection::Both => true,
            TaskSelection::Skill => task == Task::Skill,
            TaskSelection::Phase => task == Task::Phase,
        }
    }
}

/// Every knob of an experiment. Echoed verbatim into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskSelection,
    /// Kernels compared on the skill task.
    pub kernels: Vec<KernelKind>,
    /// Kernel of the phase classifier.
    pub phase_kernel: KernelKind,
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: Gamma<f64>,
    pub degree: u32,
    pub coef0: f64,
    pub tol: f64,
    pub max_passes: Option<usize>,
    pub folds: usize,
    pub test_frac: f64,
    pub features: FeatureMode,
    /// Keep every n-th frame of a swing as a feature row.
    pub frame_stride: usize,
    /// Training rows per fit are subsampled (seeded) down to this count.
    pub max_train_rows: usize,
    /// Fixed PCA size; `None` picks the smallest size reaching `pca_variance`.
    pub pca_components: Option<usize>,
    pub pca_variance: f64,
    pub segment: SegmentParams,
    /// Applied when recordings are loaded from disk.
    pub cleaning: CleaningPolicy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskSelection::Both,
            kernels: KernelKind::ALL.to_vec(),
            phase_kernel: KernelKind::Rbf,
            c: 1.0,
            gamma: Gamma::Rule(GammaRule::Scale),
            degree: 3,
            coef0: 0.0,
            tol: 1e-3,
            max_passes: None,
            folds: 5,
            test_frac: 0.2,
            features: FeatureMode::Frames,
            frame_stride: 2,
            max_train_rows: 1500,
            pca_components: None,
            pca_variance: 0.95,
            segment: SegmentParams::default(),
            cleaning: CleaningPolicy::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn kernel_spec(&self, kind: KernelKind) -> KernelSpec<f64> {
        KernelSpec {
            kind,
            gamma: self.gamma,
            degree: self.degree,
            coef0: self.coef0,
        }
    }

    pub fn smo_params(&self) -> SmoParams<f64> {
        SmoParams {
            c: self.c,
            tol: self.tol,
            max_passes: self.max_passes,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |msg: String| Err(EvalError::BadParam(msg));
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if !(self.test_frac > 0.0 && self.test_frac < 1.0) {
            return bad(format!("test_frac {} outside (0, 1)", self.test_frac));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("C must be positive, got {}", self.c));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("gamma must be positive, got {g}"));
            }
        }
        if self.degree == 0 {
            return bad("degree must be at least 1".into());
        }
        if self.task.includes(Task::Skill) && self.kernels.is_empty() {
            return bad("no kernels selected".into());
        }
        if self.max_train_rows < 2 {
            return bad("max_train_rows must be at least 2".into());
        }
        if !(self.pca_variance > 0.0 && self.pca_variance <= 1.0) {
            return bad(format!("pca_variance {} outside (0, 1]", self.pca_variance));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    /// Unweighted mean of the per-fold metrics.
    pub cross_validation: MetricSet,
    pub testing: MetricSet,
    pub test_confusion_matrix: Vec<Vec<u64>>,
}

/// Skill-task results keyed by kernel; kernels not run are omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkillReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rbf: Option<KernelReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poly: Option<KernelReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigmoid: Option<KernelReport>,
}

impl SkillReport {
    pub fn get(&self, kind: KernelKind) -> Option<&KernelReport> {
        match kind {
            KernelKind::Rbf => self.rbf.as_ref(),
            KernelKind::Poly => self.poly.as_ref(),
            KernelKind::Sigmoid => self.sigmoid.as_ref(),
        }
    }

    fn slot(&mut self, kind: KernelKind) -> &mut Option<KernelReport> {
        match kind {
            KernelKind::Rbf => &mut self.rbf,
            KernelKind::Poly => &mut self.poly,
            KernelKind::Sigmoid => &mut self.sigmoid,
        }
    }

    /// Reports in fixed kernel order.
    pub fn entries(&self) -> Vec<(KernelKind, &KernelReport)> {
        KernelKind::ALL
            .iter()
            .filter_map(|k| self.get(*k).map(|r| (*k, r)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    /// Element-wise mean of the per-fold confusion matrices.
    pub confusion_matrix: Vec<Vec<f64>>,
    /// One-vs-rest ROC of the refit model on the test participants.
    pub roc: Vec<ClassRoc>,
    pub cross_validation_accuracy: f64,
    pub test_accuracy: f64,
    pub test_confusion_matrix: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skill: Option<SkillReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseReport>,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub holdout: HoldoutSplit,
    pub n_swings: usize,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Kernel-by-phase metric table, one row per (kernel, evaluation phase).
    pub fn table_csv(&self) -> String {
        let mut out = String::from("kernel,phase,accuracy,precision,recall,f1\n");
        if let Some(skill) = &self.skill {
            for (kind, r) in skill.entries() {
                for (phase, m) in [("cross_validation", &r.cross_validation), ("testing", &r.testing)] {
                    let _ = writeln!(
                        out,
                        "{kind},{phase},{},{},{},{}",
                        m.accuracy, m.precision, m.recall, m.f1
                    );
                }
            }
        }
        out
    }

    /// Long-format ROC points: `class,fpr,tpr`.
    pub fn roc_csv(&self) -> Option<String> {
        let phase = self.phase.as_ref()?;
        let mut out = String::from("class,fpr,tpr\n");
        for r in &phase.roc {
            for (fpr, tpr) in &r.curve {
                let _ = writeln!(out, "{},{fpr},{tpr}", r.class);
            }
        }
        Some(out)
    }

    /// Human-readable summary.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed {}  swings {}", self.seed, self.n_swings);
        let _ = writeln!(out, "test participants: {}", self.holdout.test.join(", "));
        if let Some(skill) = &self.skill {
            let _ = writeln!(out, "\nskill classification");
            let _ = writeln!(
                out,
                "{:<8} {:<17} {:>8} {:>9} {:>8} {:>8}",
                "kernel", "phase", "accuracy", "precision", "recall", "f1"
            );
            for (kind, r) in skill.entries() {
                for (phase, m) in [("cross-validation", &r.cross_validation), ("testing", &r.testing)] {
                    let _ = writeln!(
                        out,
                        "{:<8} {:<17} {:>8.3} {:>9.3} {:>8.3} {:>8.3}",
                        kind.as_str(),
                        phase,
                        m.accuracy,
                        m.precision,
                        m.recall,
                        m.f1
                    );
                }
            }
        }
        if let Some(phase) = &self.phase {
            let _ = writeln!(out, "\nphase classification");
            let _ = writeln!(
                out,
                "cv accuracy {:.3}  test accuracy {:.3}",
                phase.cross_validation_accuracy, phase.test_accuracy
            );
            let _ = writeln!(out, "mean fold confusion (rows true, cols predicted):");
            for row in &phase.confusion_matrix {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:>8.1}")).collect();
                let _ = writeln!(out, "{}", cells.join(""));
            }
            for r in &phase.roc {
                let name = Phase::from_index(r.class).map_or("?", Phase::name);
                match r.auc {
                    Some(auc) => {
                        let _ = writeln!(out, "AUC class {} ({name}): {auc:.3}", r.class);
                    }
                    None => {
                        let _ = writeln!(out, "AUC class {} ({name}): n/a", r.class);
                    }
                }
            }
        }
        out
    }
}

/// CSV of a count or mean confusion matrix with `true\pred` headers.
pub fn confusion_csv<V: std::fmt::Display>(matrix: &[Vec<V>]) -> String {
    let k = matrix.len();
    let mut out = String::from("true");
    for j in 0..k {
        let _ = write!(out, ",pred_{j}");
    }
    out.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn participants(recordings: &[Recording]) -> Result<Vec<Participant>, EvalError> {
    let mut by_id: BTreeMap<&str, Skill> = BTreeMap::new();
    for r in recordings {
        if let Some(prev) = by_id.insert(&r.participant_id, r.skill) {
            if prev != r.skill {
                return Err(EvalError::BadParam(format!(
                    "participant {} listed with two skill levels",
                    r.participant_id
                )));
            }
        }
    }
    Ok(by_id.into_iter().map(|(id, s)| Participant::new(id, s)).collect())
}

/// Rows for `task` under the configured feature mode.
pub fn task_rows(swings: &[SwingRecord], task: Task, config: &ExperimentConfig) -> LabeledRows {
    match task {
        Task::Skill => skill_rows(swings, config.features, config.frame_stride),
        Task::Phase => phase_rows(swings, config.frame_stride),
    }
}

/// Seeded subsample of at most `max` rows, kept in original order.
fn subsample(rows: &LabeledRows, max: usize, seed: u64, stream: u64) -> LabeledRows {
    if rows.len() <= max {
        return rows.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut idx = rand::seq::index::sample(&mut rng, rows.len(), max).into_vec();
    idx.sort_unstable();
    rows.select(&idx)
}

enum Fitted {
    Binary(SvmModel<f64>),
    Multi(MultiClassModel<f64>),
}

struct FittedPipeline {
    preprocessor: Preprocessor,
    model: Fitted,
}

impl FittedPipeline {
    fn fit(
        train: &LabeledRows,
        task: Task,
        kernel: &KernelSpec<f64>,
        config: &ExperimentConfig,
    ) -> Result<Self, EvalError> {
        let x = train.matrix()?;
        let preprocessor = Preprocessor::fit(&x, config.pca_components, config.pca_variance)?;
        let z = preprocessor.transform(&x)?;
        let params = config.smo_params();
        let model = match task {
            Task::Skill => {
                let y: Vec<i8> = train.labels.iter().map(|l| if *l == 1 { 1 } else { -1 }).collect();
                let fit = train_binary_smo(&z, &y, kernel, &params)?;
                if !fit.converged {
                    log::warn!(
                        "{} kernel: SMO stopped after {} updates, KKT gap {}",
                        kernel.kind,
                        fit.iterations,
                        fit.kkt_gap
                    );
                }
                Fitted::Binary(fit.model)
            }
            Task::Phase => Fitted::Multi(train_multiclass_ovr(&z, &train.labels, N_PHASES, kernel, &params)?),
        };
        Ok(Self { preprocessor, model })
    }

    /// Predicted labels and, for the multi-class model, the decision matrix.
    fn predict(&self, rows: &LabeledRows) -> Result<(Vec<usize>, Vec<Vec<f64>>), EvalError> {
        if rows.is_empty() {
            return Ok((Vec::new(), Vec::new()));
        }
        let z = self.preprocessor.transform(&rows.matrix()?)?;
        match &self.model {
            Fitted::Binary(m) => {
                let d = m.decision_values(&z)?;
                Ok((d.iter().map(|v| usize::from(*v >= 0.0)).collect(), Vec::new()))
            }
            Fitted::Multi(m) => {
                let d = m.decision_matrix(&z)?;
                let labels = d.iter().map(|row| crate::svm::argmax_lowest(row)).collect();
                Ok((labels, d))
            }
        }
    }
}

struct TaskData {
    folds: Vec<(LabeledRows, LabeledRows)>,
    train_val: LabeledRows,
    test: LabeledRows,
}

impl TaskData {
    fn new(rows: &LabeledRows, holdout: &HoldoutSplit, folds: usize, seed: u64) -> Result<Self, EvalError> {
        let plan = grouped_kfold(&holdout.train_val, folds, seed)?;
        let test_ids: BTreeSet<&str> = holdout.test.iter().map(String::as_str).collect();
        let train_val = rows.filter_groups(|g| !test_ids.contains(g));
        let test = rows.filter_groups(|g| test_ids.contains(g));
        let folds = (0..plan.k())
            .map(|i| {
                let eval_ids: BTreeSet<&str> = plan.eval_ids(i).iter().map(String::as_str).collect();
                (
                    train_val.filter_groups(|g| !eval_ids.contains(g)),
                    train_val.filter_groups(|g| eval_ids.contains(g)),
                )
            })
            .collect();
        Ok(Self {
            folds,
            train_val,
            test,
        })
    }
}

fn task_stream(task: Task) -> u64 {
    match task {
        Task::Skill => 0,
        Task::Phase => 1 << 32,
    }
}

fn skill_kernel_report(
    data: &TaskData,
    kind: KernelKind,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<KernelReport, EvalError> {
    let kernel = config.kernel_spec(kind);
    let base = task_stream(Task::Skill);
    let fold_metrics = data
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, (train, eval))| {
            let train = subsample(train, config.max_train_rows, seed, base + i as u64);
            let fitted = FittedPipeline::fit(&train, Task::Skill, &kernel, config)?;
            let (pred, _) = fitted.predict(eval)?;
            binary_metrics(&confusion_matrix(&eval.labels, &pred, 2)?, 1)
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let train = subsample(&data.train_val, config.max_train_rows, seed, base + data.folds.len() as u64);
    let fitted = FittedPipeline::fit(&train, Task::Skill, &kernel, config)?;
    let (pred, _) = fitted.predict(&data.test)?;
    let cm = confusion_matrix(&data.test.labels, &pred, 2)?;
    Ok(KernelReport {
        cross_validation: BinaryMetrics::mean(&fold_metrics),
        testing: binary_metrics(&cm, 1)?,
        test_confusion_matrix: cm.counts,
    })
}

fn phase_report(data: &TaskData, config: &ExperimentConfig, seed: u64) -> Result<PhaseReport, EvalError> {
    let kernel = config.kernel_spec(config.phase_kernel);
    let base = task_stream(Task::Phase);
    let fold_cms = data
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, (train, eval))| {
            let train = subsample(train, config.max_train_rows, seed, base + i as u64);
            let fitted = FittedPipeline::fit(&train, Task::Phase, &kernel, config)?;
            let (pred, _) = fitted.predict(eval)?;
            confusion_matrix(&eval.labels, &pred, N_PHASES)
        })
        .collect::<Result<Vec<ConfusionMatrix>, EvalError>>()?;
    let cv_accuracy = fold_cms.iter().map(ConfusionMatrix::accuracy).sum::<f64>() / fold_cms.len() as f64;

    let train = subsample(&data.train_val, config.max_train_rows, seed, base + data.folds.len() as u64);
    let fitted = FittedPipeline::fit(&train, Task::Phase, &kernel, config)?;
    let (pred, decisions) = fitted.predict(&data.test)?;
    let cm = confusion_matrix(&data.test.labels, &pred, N_PHASES)?;
    let classes: Vec<usize> = (0..N_PHASES).collect();
    Ok(PhaseReport {
        confusion_matrix: mean_confusion(&fold_cms),
        roc: per_class_roc_from_scores(&classes, &decisions, &data.test.labels),
        cross_validation_accuracy: cv_accuracy,
        test_accuracy: cm.accuracy(),
        test_confusion_matrix: cm.counts,
    })
}

/// Runs the configured tasks on cleaned recordings.
///
/// Participants are split into train/validation and test sides once; each
/// kernel is cross-validated over participant folds of the train/validation
/// side, refit on all of it and scored on the test side. Every random choice
/// derives from `seed`.
pub fn run_experiment(
    recordings: &[Recording],
    config: &ExperimentConfig,
    seed: u64,
) -> Result<EvaluationReport, EvalError> {
    config.validate()?;
    let roster = participants(recordings)?;
    if roster.is_empty() {
        return Err(EvalError::NoData);
    }
    let skills: BTreeSet<Skill> = roster.iter().map(|p| p.skill).collect();
    if config.task.includes(Task::Skill) && skills.len() < 2 {
        return Err(EvalError::SingleSkill);
    }
    let holdout = split_holdout(&roster, config.test_frac, seed)?;
    if holdout.train_val.len() < config.folds {
        return Err(EvalError::TooFewParticipants {
            found: roster.len(),
            needed: config.folds + holdout.test.len(),
        });
    }

    let swings = segment_dataset(recordings, &config.segment)?;
    if swings.is_empty() {
        return Err(EvalError::NoData);
    }
    log::info!("{} swings from {} participants", swings.len(), roster.len());

    let skill = if config.task.includes(Task::Skill) {
        let rows = task_rows(&swings, Task::Skill, config);
        let data = TaskData::new(&rows, &holdout, config.folds, seed)?;
        let mut report = SkillReport::default();
        for kind in KernelKind::ALL.iter().filter(|k| config.kernels.contains(k)) {
            *report.slot(*kind) = Some(skill_kernel_report(&data, *kind, config, seed)?);
        }
        Some(report)
    } else {
        None
    };

    let phase = if config.task.includes(Task::Phase) {
        let rows = task_rows(&swings, Task::Phase, config);
        let data = TaskData::new(&rows, &holdout, config.folds, seed)?;
        Some(phase_report(&data, config, seed)?)
    } else {
        None
    };

    Ok(EvaluationReport {
        skill,
        phase,
        config: config.clone(),
        seed,
        holdout,
        n_swings: swings.len(),
    })
}

/// Fits the full pipeline for `task` on every recording.
pub fn train_bundle(
    recordings: &[Recording],
    task: Task,
    kernel: KernelKind,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<PipelineBundle, EvalError> {
    config.validate()?;
    if task == Task::Skill {
        let skills: BTreeSet<Skill> = recordings.iter().map(|r| r.skill).collect();
        if skills.len() < 2 {
            return Err(EvalError::SingleSkill);
        }
    }
    let swings = segment_dataset(recordings, &config.segment)?;
    if swings.is_empty() {
        return Err(EvalError::NoData);
    }
    let rows = task_rows(&swings, task, config);
    let train = subsample(&rows, config.max_train_rows, seed, task_stream(task));
    let fitted = FittedPipeline::fit(&train, task, &config.kernel_spec(kernel), config)?;
    let features = match task {
        Task::Skill => config.features,
        Task::Phase => FeatureMode::Frames,
    };
    Ok(PipelineBundle {
        task,
        features,
        col_names: rows.col_names.clone(),
        preprocessor: fitted.preprocessor,
        model: match fitted.model {
            Fitted::Binary(model) => BundleModel::Binary { model },
            Fitted::Multi(model) => BundleModel::Multiclass { model },
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let cfg = ExperimentConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains(r#""gamma":"scale""#));
        assert!(json.contains(r#""C":1.0"#));
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"folds":3,"gamma":0.5}"#).unwrap();
        assert_eq!(partial.folds, 3);
        assert_eq!(partial.gamma, Gamma::Value(0.5));
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"fold":3}"#).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.folds = 1;
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig { c: 0.0, ..ExperimentConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn subsample_is_seeded_and_ordered() {
        let rows = LabeledRows {
            col_names: vec!["a".into()],
            rows: (0..100).map(|i| vec![i as f64]).collect(),
            labels: vec![0; 100],
            groups: vec!["p".into(); 100],
        };
        let a = subsample(&rows, 10, 5, 1);
        assert_eq!(a, subsample(&rows, 10, 5, 1));
        assert_ne!(a, subsample(&rows, 10, 5, 2));
        assert_eq!(a.len(), 10);
        assert!(a.rows.windows(2).all(|w| w[0][0] < w[1][0]));
        assert_eq!(subsample(&rows, 200, 5, 1), rows);
    }

    #[test]
    fn confusion_csv_layout() {
        assert_eq!(confusion_csv(&[vec![1, 2], vec![3, 4]]), "true,pred_0,pred_1\n0,1,2\n1,3,4\n");
    }
}
