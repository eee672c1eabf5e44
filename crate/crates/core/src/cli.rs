//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 invalid input
//! data, 4 any other failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::eval::{confusion_csv, run_experiment, train_bundle, EvalError, EvaluationReport, ExperimentConfig, TaskSelection};
use crate::ingest::{load_dataset, ColumnMap, DatasetManifest, IngestError, Recording};
use crate::pipeline::{segment_dataset, FeatureMode, SegmentInput, SegmentationRecord, Task};
use crate::segment::SegmentError;
use crate::svm::{Gamma, KernelKind};
use crate::synth::{generate_dataset, SynthConfig, SynthError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "swingphase", version, about = "Tennis forehand skill and phase analysis from wrist IMU logs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (CSVs, manifest.json, truth.json).
    Synth(SynthArgs),
    /// Parse and clean a dataset, writing it as one JSON file.
    Ingest(IngestArgs),
    /// Detect swings and phases; writes segmentations.json and per-swing CSVs.
    Segment(SegmentArgs),
    /// Fit a pipeline on the whole dataset and write it as JSON.
    Train(TrainArgs),
    /// Run the cross-validated kernel comparison and phase evaluation.
    Evaluate(EvaluateArgs),
    /// Print a report JSON as text.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Generator config JSON; defaults to the bundled one.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub participants: Option<usize>,
    #[arg(long)]
    pub intermediate: Option<usize>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ColumnStyle {
    /// loggingTime, motionYaw(rad), motionRoll(rad), motionPitch(rad)
    Sensor,
    /// time, yaw, roll, pitch
    Plain,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory (with manifest.json), a manifest file, or an `ingest` output file.
    #[arg(long)]
    pub data: PathBuf,
    /// Experiment config JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sensor")]
    pub columns: ColumnStyle,
    /// Keep backhand sessions.
    #[arg(long)]
    pub all_sessions: bool,
    #[arg(long)]
    pub no_smoothing: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SegmentInputArg {
    Pca,
    Raw,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub segment_input: Option<SegmentInputArg>,
    #[arg(long)]
    pub min_seg_len: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Skill,
    Phase,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KernelArg {
    Rbf,
    Poly,
    Sigmoid,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FeatureArg {
    Frames,
    Aggregates,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    #[arg(long = "c")]
    pub c: Option<f64>,
    /// A positive number or `scale`.
    #[arg(long)]
    pub gamma: Option<Gamma<f64>>,
    #[arg(long)]
    pub degree: Option<u32>,
    #[arg(long)]
    pub coef0: Option<f64>,
    #[arg(long, value_enum)]
    pub features: Option<FeatureArg>,
    #[arg(long)]
    pub frame_stride: Option<usize>,
    #[arg(long)]
    pub max_train_rows: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub seed: u64,
    /// Report JSON path; CSV exports are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub test_frac: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON written by `evaluate`.
    #[arg(long)]
    pub input: PathBuf,
    /// Write the text here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: EXIT_RUNTIME, message: message.into() }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        if e.is_data_error() {
            Self::data(e.to_string())
        } else {
            Self::runtime(e.to_string())
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::BadParam(_) | EvalError::BadK { .. } => Self::usage(e.to_string()),
            _ if e.is_data_error() => Self::data(e.to_string()),
            _ => Self::runtime(e.to_string()),
        }
    }
}

impl From<SegmentError> for CliError {
    fn from(e: SegmentError) -> Self {
        match e {
            SegmentError::BadParam(_) => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::BadConfig(_) | SynthError::BadProfile(_) => Self::usage(e.to_string()),
            _ => Self::runtime(e.to_string()),
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message.replace('\n', " "));
            e.code
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Segment(a) => segment(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(path) => SynthConfig::from_json(&read_text(path)?)?,
        None => SynthConfig::default(),
    };
    cfg.seed = a.seed;
    if let Some(n) = a.participants {
        cfg.n_participants = n;
        cfg.n_intermediate = cfg.n_intermediate.min(n);
    }
    if let Some(n) = a.intermediate {
        cfg.n_intermediate = n;
    }
    if let Some(r) = a.sample_rate {
        cfg.sample_rate = r;
    }
    let ds = generate_dataset(&cfg)?;
    ds.write(&a.out)?;
    write_text(
        &a.out.join("synth_config.json"),
        &(serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n"),
    )?;
    log::info!("wrote {} sessions, {} swings to {}", ds.recordings.len(), ds.truth.len(), a.out.display());
    Ok(())
}

fn experiment_config(data: &DataArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &data.config {
        Some(path) => serde_json::from_str(&read_text(path)?)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?,
        None => ExperimentConfig::default(),
    };
    if data.no_smoothing {
        cfg.cleaning.smoothing = false;
    }
    Ok(cfg)
}

/// Loads recordings from a dataset directory, a manifest, or an `ingest` output file.
fn load_recordings(data: &DataArgs, cfg: &ExperimentConfig) -> Result<Vec<Recording>, CliError> {
    let path = &data.data;
    if !path.exists() {
        return Err(CliError::usage(format!("{}: no such file or directory", path.display())));
    }
    let manifest_path = if path.is_dir() { path.join("manifest.json") } else { path.clone() };
    let text = read_text(&manifest_path)?;
    let columns = match data.columns {
        ColumnStyle::Sensor => ColumnMap::default(),
        ColumnStyle::Plain => ColumnMap::plain(),
    };
    let recordings = match DatasetManifest::from_json(&text) {
        Ok(manifest) => {
            let base = manifest_path.parent().unwrap_or(Path::new("."));
            load_dataset(&manifest, base, !data.all_sessions, &columns, &cfg.cleaning)?
        }
        Err(manifest_err) => match serde_json::from_str::<Vec<Recording>>(&text) {
            Ok(recs) => recs
                .into_iter()
                .filter(|r| data.all_sessions || r.session.is_forehand())
                .collect(),
            Err(_) => return Err(CliError::from(manifest_err)),
        },
    };
    if recordings.is_empty() {
        return Err(CliError::data("dataset has no recordings"));
    }
    Ok(recordings)
}

fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let cfg = experiment_config(&a.data)?;
    let recordings = load_recordings(&a.data, &cfg)?;
    write_text(&a.out, &(serde_json::to_string(&recordings).expect("recordings serialize") + "\n"))
}

fn segment(a: SegmentArgs) -> Result<(), CliError> {
    let mut cfg = experiment_config(&a.data)?;
    if let Some(input) = a.segment_input {
        cfg.segment.input = match input {
            SegmentInputArg::Pca => SegmentInput::Pca,
            SegmentInputArg::Raw => SegmentInput::Raw,
        };
    }
    if let Some(m) = a.min_seg_len {
        if m == 0 {
            return Err(CliError::usage("min-seg-len must be at least 1"));
        }
        cfg.segment.min_seg_len = m;
    }
    let recordings = load_recordings(&a.data, &cfg)?;
    let swings = segment_dataset(&recordings, &cfg.segment)?;
    if swings.is_empty() {
        return Err(CliError::data("no swings found in any session"));
    }
    let records: Vec<SegmentationRecord> = swings.iter().map(SegmentationRecord::from).collect();
    write_text(
        &a.out.join("segmentations.json"),
        &(serde_json::to_string_pretty(&records).expect("records serialize") + "\n"),
    )?;
    for s in &swings {
        let mut csv = String::from("frame,t,yaw,roll,pitch,phase\n");
        for (i, f) in s.frames.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                s.window.start + i,
                f.t,
                f.yaw,
                f.roll,
                f.pitch,
                s.segmentation.phase_of(i)
            );
        }
        let name = format!("{}_{}_{:02}.csv", s.participant_id, s.session, s.swing_index);
        write_text(&a.out.join("swings").join(name), &csv)?;
    }
    Ok(())
}

fn single_kernel(k: KernelArg) -> Option<KernelKind> {
    match k {
        KernelArg::Rbf => Some(KernelKind::Rbf),
        KernelArg::Poly => Some(KernelKind::Poly),
        KernelArg::Sigmoid => Some(KernelKind::Sigmoid),
        KernelArg::All => None,
    }
}

fn apply_model_args(cfg: &mut ExperimentConfig, m: &ModelArgs) -> Result<(), CliError> {
    if let Some(t) = m.task {
        cfg.task = match t {
            TaskArg::Skill => TaskSelection::Skill,
            TaskArg::Phase => TaskSelection::Phase,
            TaskArg::Both => TaskSelection::Both,
        };
    }
    if let Some(k) = m.kernel {
        cfg.kernels = single_kernel(k).map_or_else(|| KernelKind::ALL.to_vec(), |k| vec![k]);
    }
    if let Some(c) = m.c {
        cfg.c = c;
    }
    if let Some(g) = m.gamma {
        cfg.gamma = g;
    }
    if let Some(d) = m.degree {
        cfg.degree = d;
    }
    if let Some(c) = m.coef0 {
        cfg.coef0 = c;
    }
    if let Some(f) = m.features {
        cfg.features = match f {
            FeatureArg::Frames => FeatureMode::Frames,
            FeatureArg::Aggregates => FeatureMode::Aggregates,
        };
    }
    if let Some(s) = m.frame_stride {
        cfg.frame_stride = s;
    }
    if let Some(r) = m.max_train_rows {
        cfg.max_train_rows = r;
    }
    cfg.validate().map_err(CliError::from)
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = experiment_config(&a.data)?;
    apply_model_args(&mut cfg, &a.model)?;
    let task = match a.model.task {
        None | Some(TaskArg::Skill) => Task::Skill,
        Some(TaskArg::Phase) => Task::Phase,
        Some(TaskArg::Both) => return Err(CliError::usage("train needs --task skill or --task phase")),
    };
    let kernel = match a.model.kernel {
        None if task == Task::Phase => cfg.phase_kernel,
        None => KernelKind::Rbf,
        Some(k) => single_kernel(k).ok_or_else(|| CliError::usage("train needs a single kernel"))?,
    };
    let recordings = load_recordings(&a.data, &cfg)?;
    let bundle = train_bundle(&recordings, task, kernel, &cfg, a.seed)?;
    write_text(&a.out, &(bundle.to_json().expect("bundle serializes") + "\n"))
}

/// `dir/stem_suffix` next to the report file.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "report".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}_{suffix}"))
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let mut cfg = experiment_config(&a.data)?;
    if let Some(k) = a.folds {
        cfg.folds = k;
    }
    if let Some(f) = a.test_frac {
        cfg.test_frac = f;
    }
    if a.model.task == Some(TaskArg::Phase) {
        if let Some(k) = a.model.kernel.and_then(single_kernel) {
            cfg.phase_kernel = k;
        }
    }
    apply_model_args(&mut cfg, &a.model)?;
    let recordings = load_recordings(&a.data, &cfg)?;
    let report = run_experiment(&recordings, &cfg, a.seed)?;
    write_text(&a.out, &(report.to_json() + "\n"))?;
    if report.skill.is_some() {
        write_text(&sibling(&a.out, "table.csv"), &report.table_csv())?;
    }
    if let Some(skill) = &report.skill {
        for (kind, r) in skill.entries() {
            write_text(
                &sibling(&a.out, &format!("skill_confusion_{kind}.csv")),
                &confusion_csv(&r.test_confusion_matrix),
            )?;
        }
    }
    if let Some(phase) = &report.phase {
        write_text(&sibling(&a.out, "phase_confusion.csv"), &confusion_csv(&phase.confusion_matrix))?;
        if let Some(roc) = report.roc_csv() {
            write_text(&sibling(&a.out, "roc.csv"), &roc)?;
        }
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let text = read_text(&a.input)?;
    let report: EvaluationReport = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("{}: not a report: {e}", a.input.display())))?;
    let rendered = report.render_text();
    match &a.out {
        Some(path) => write_text(path, &rendered),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(run(["swingphase", "evaluate", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["swingphase"]), EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["swingphase", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_data_path_is_usage_error() {
        let code = run([
            "swingphase", "evaluate", "--data", "/nonexistent/dir", "--seed", "1", "--out", "/tmp/x.json",
        ]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("out/report.json"), "roc.csv"), PathBuf::from("out/report_roc.csv"));
    }
}
