//! Wrist-sensor CSV logs, dataset manifests and the cleaning pass.
//!
//! Parsing keeps unparseable cells as `NaN` so that [`clean`] can decide
//! whether to interpolate or drop them.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("file has no data rows")]
    EmptyFile,
    #[error("time not strictly increasing at row {row} ({prev} -> {next})")]
    NonMonotoneTime { row: usize, prev: f64, next: f64 },
    #[error("channel `{0}` has no valid samples")]
    AllMissing(&'static str),
    #[error("no frames left after cleaning")]
    NoFramesLeft,
    #[error("bad cleaning policy: {0}")]
    BadPolicy(String),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("entry {participant_id}/{session} ({path}): {source}")]
    Entry {
        participant_id: String,
        session: Session,
        path: PathBuf,
        #[source]
        source: Box<IngestError>,
    },
}

impl IngestError {
    /// True when the error comes from the input data rather than the environment.
    pub fn is_data_error(&self) -> bool {
        match self {
            Self::Io { .. } => false,
            Self::Entry { source, .. } => source.is_data_error(),
            _ => true,
        }
    }
}

/// One orientation sample. Angles in radians, `t` in seconds from the first frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuFrame {
    pub t: f64,
    pub yaw: f64,
    pub roll: f64,
    pub pitch: f64,
}

impl ImuFrame {
    pub fn new(t: f64, yaw: f64, roll: f64, pitch: f64) -> Self {
        Self { t, yaw, roll, pitch }
    }

    pub fn angles(&self) -> [f64; 3] {
        [self.yaw, self.roll, self.pitch]
    }

    pub fn is_complete(&self) -> bool {
        self.t.is_finite() && self.yaw.is_finite() && self.roll.is_finite() && self.pitch.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Skill {
    Beginner = 0,
    Intermediate = 1,
}

impl Skill {
    pub fn label(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Session {
    Forehand10A,
    Forehand10B,
    Forehand20,
    Backhand10A,
    Backhand10B,
}

impl Session {
    pub const FOREHAND: [Session; 3] = [Self::Forehand10A, Self::Forehand10B, Self::Forehand20];

    pub fn is_forehand(self) -> bool {
        matches!(self, Self::Forehand10A | Self::Forehand10B | Self::Forehand20)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Forehand10A => "forehand10a",
            Self::Forehand10B => "forehand10b",
            Self::Forehand20 => "forehand20",
            Self::Backhand10A => "backhand10a",
            Self::Backhand10B => "backhand10b",
        }
    }
}

impl fmt::Display for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A cleaned session log for one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub participant_id: String,
    pub skill: Skill,
    pub handedness: Handedness,
    pub session: Session,
    pub frames: Vec<ImuFrame>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub participant_id: String,
    pub skill: Skill,
    pub handedness: Handedness,
    pub session: Session,
    pub csv_path: String,
}

/// Serialized as a bare JSON array of entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let manifest: Self =
            serde_json::from_str(text).map_err(|e| IngestError::Manifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn read(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Every participant keeps one skill/handedness, and no CSV is listed twice.
    pub fn validate(&self) -> Result<(), IngestError> {
        let mut seen_paths = HashSet::new();
        let mut people: HashMap<&str, (Skill, Handedness)> = HashMap::new();
        for e in &self.entries {
            if !seen_paths.insert(e.csv_path.as_str()) {
                return Err(IngestError::Manifest(format!(
                    "csv_path `{}` listed more than once",
                    e.csv_path
                )));
            }
            let traits = (e.skill, e.handedness);
            if let Some(prev) = people.insert(&e.participant_id, traits) {
                if prev != traits {
                    return Err(IngestError::Manifest(format!(
                        "participant `{}` has inconsistent skill/handedness",
                        e.participant_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Header names of the four required columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub time: String,
    pub yaw: String,
    pub roll: String,
    pub pitch: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            time: "loggingTime".into(),
            yaw: "motionYaw(rad)".into(),
            roll: "motionRoll(rad)".into(),
            pitch: "motionPitch(rad)".into(),
        }
    }
}

impl ColumnMap {
    /// Plain `time,yaw,roll,pitch` headers.
    pub fn plain() -> Self {
        Self {
            time: "time".into(),
            yaw: "yaw".into(),
            roll: "roll".into(),
            pitch: "pitch".into(),
        }
    }
}

#[derive(Clone, Copy)]
enum Stamp {
    Seconds(f64),
    /// Calendar timestamps, kept integral so rebasing stays exact.
    Micros(i64),
}

impl Stamp {
    fn seconds_since(self, origin: Stamp) -> f64 {
        match (self, origin) {
            (Stamp::Micros(a), Stamp::Micros(b)) => (a - b) as f64 * 1e-6,
            (a, b) => a.as_seconds() - b.as_seconds(),
        }
    }

    fn as_seconds(self) -> f64 {
        match self {
            Stamp::Seconds(s) => s,
            Stamp::Micros(m) => m as f64 * 1e-6,
        }
    }
}

fn parse_timestamp(cell: &str) -> Option<Stamp> {
    let cell = cell.trim();
    if let Ok(v) = cell.parse::<f64>() {
        return v.is_finite().then_some(Stamp::Seconds(v));
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(cell) {
        return Some(Stamp::Micros(dt.timestamp_micros()));
    }
    // Sensor-log exports look like `2023-06-10 14:22:31.123 -0700`.
    for fmt in ["%Y-%m-%d %H:%M:%S%.f %z", "%Y-%m-%d %H:%M:%S%.f%z"] {
        if let Ok(dt) = DateTime::parse_from_str(cell, fmt) {
            return Some(Stamp::Micros(dt.timestamp_micros()));
        }
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(cell, fmt) {
            return Some(Stamp::Micros(dt.and_utc().timestamp_micros()));
        }
    }
    None
}

fn parse_angle(cell: &str) -> f64 {
    cell.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .unwrap_or(f64::NAN)
}

/// Parses a sensor log into frames, rebasing time so the first frame is at 0.
///
/// Unparseable cells become `NaN`. Out-of-range angles are logged, not rejected.
pub fn parse_sensor_csv(text: &str, columns: &ColumnMap) -> Result<Vec<ImuFrame>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let idx = [
        find(&columns.time)?,
        find(&columns.yaw)?,
        find(&columns.roll)?,
        find(&columns.pitch)?,
    ];

    let mut stamps = Vec::new();
    let mut frames = Vec::new();
    for record in reader.records() {
        let record = record?;
        let cell = |i: usize| record.get(idx[i]).unwrap_or("");
        stamps.push(parse_timestamp(cell(0)));
        frames.push(ImuFrame {
            t: f64::NAN,
            yaw: parse_angle(cell(1)),
            roll: parse_angle(cell(2)),
            pitch: parse_angle(cell(3)),
        });
    }
    if frames.is_empty() {
        return Err(IngestError::EmptyFile);
    }

    let origin = stamps.iter().flatten().next().copied();
    let mut prev: Option<f64> = None;
    for (row, frame) in frames.iter_mut().enumerate() {
        if let (Some(stamp), Some(origin)) = (stamps[row], origin) {
            frame.t = stamp.seconds_since(origin);
        }
        if frame.t.is_finite() {
            if let Some(p) = prev {
                if frame.t <= p {
                    return Err(IngestError::NonMonotoneTime {
                        row,
                        prev: p,
                        next: frame.t,
                    });
                }
            }
            prev = Some(frame.t);
        }
    }
    warn_out_of_range(&frames);
    Ok(frames)
}

fn warn_out_of_range(frames: &[ImuFrame]) {
    use std::f64::consts::{FRAC_PI_2, PI};
    let bad = frames
        .iter()
        .filter(|f| f.yaw.abs() > PI || f.pitch.abs() > FRAC_PI_2 || f.roll.abs() > PI)
        .count();
    if bad > 0 {
        log::warn!("{bad} frames have Euler angles outside the usual device range");
    }
}

/// Writes frames with plain `time,yaw,roll,pitch` headers, or the given column map.
pub fn write_sensor_csv(frames: &[ImuFrame], columns: &ColumnMap) -> Result<String, IngestError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([&columns.time, &columns.yaw, &columns.roll, &columns.pitch])?;
    for f in frames {
        writer.write_record([
            f.t.to_string(),
            f.yaw.to_string(),
            f.roll.to_string(),
            f.pitch.to_string(),
        ])?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| IngestError::Manifest(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

/// How [`clean`] treats missing samples and noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleaningPolicy {
    /// Longest run of missing samples that is interpolated; longer runs are dropped.
    pub max_gap: usize,
    /// Centered moving-average window (odd). Ignored when `smoothing` is off.
    pub window: usize,
    pub smoothing: bool,
}

impl Default for CleaningPolicy {
    fn default() -> Self {
        Self {
            max_gap: 3,
            window: 5,
            smoothing: true,
        }
    }
}

impl CleaningPolicy {
    pub fn without_smoothing(mut self) -> Self {
        self.smoothing = false;
        self
    }
}

const CHANNELS: [&str; 4] = ["t", "yaw", "roll", "pitch"];

fn channel(f: &ImuFrame, c: usize) -> f64 {
    match c {
        0 => f.t,
        1 => f.yaw,
        2 => f.roll,
        _ => f.pitch,
    }
}

fn channel_mut(f: &mut ImuFrame, c: usize) -> &mut f64 {
    match c {
        0 => &mut f.t,
        1 => &mut f.yaw,
        2 => &mut f.roll,
        _ => &mut f.pitch,
    }
}

/// Fills short gaps, drops long ones and optionally smooths each angle channel.
///
/// Time is interpolated by index; angles are interpolated against time.
pub fn clean(frames: &[ImuFrame], policy: &CleaningPolicy) -> Result<Vec<ImuFrame>, IngestError> {
    if policy.smoothing && (policy.window == 0 || policy.window.is_multiple_of(2)) {
        return Err(IngestError::BadPolicy(format!(
            "smoothing window must be odd, got {}",
            policy.window
        )));
    }
    if frames.is_empty() {
        return Err(IngestError::NoFramesLeft);
    }
    let mut out = frames.to_vec();

    for c in 0..4 {
        let valid: Vec<usize> = (0..out.len())
            .filter(|&i| channel(&out[i], c).is_finite())
            .collect();
        if valid.is_empty() {
            return Err(IngestError::AllMissing(CHANNELS[c]));
        }
        for pair in valid.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let gap = hi - lo - 1;
            if gap == 0 || gap > policy.max_gap {
                continue;
            }
            let (vlo, vhi) = (channel(&out[lo], c), channel(&out[hi], c));
            for i in (lo + 1)..hi {
                let w = if c == 0 {
                    (i - lo) as f64 / (hi - lo) as f64
                } else {
                    let (tlo, thi, ti) = (out[lo].t, out[hi].t, out[i].t);
                    if tlo.is_finite() && thi.is_finite() && ti.is_finite() && thi > tlo {
                        (ti - tlo) / (thi - tlo)
                    } else {
                        (i - lo) as f64 / (hi - lo) as f64
                    }
                };
                *channel_mut(&mut out[i], c) = vlo + w * (vhi - vlo);
            }
        }
    }

    out.retain(ImuFrame::is_complete);
    if out.is_empty() {
        return Err(IngestError::NoFramesLeft);
    }

    if policy.smoothing && policy.window > 1 {
        let half = policy.window / 2;
        let src = out.clone();
        for c in 1..4 {
            let mut prefix = Vec::with_capacity(src.len() + 1);
            prefix.push(0.0);
            for f in &src {
                prefix.push(prefix.last().unwrap() + channel(f, c));
            }
            for (i, frame) in out.iter_mut().enumerate() {
                let lo = i.saturating_sub(half);
                let hi = (i + half + 1).min(src.len());
                *channel_mut(frame, c) = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
            }
        }
    }
    Ok(out)
}

/// Loads every manifest entry, resolving relative CSV paths against `base_dir`.
///
/// Files are read in parallel; the output follows manifest order.
pub fn load_dataset(
    manifest: &DatasetManifest,
    base_dir: &Path,
    forehand_only: bool,
    columns: &ColumnMap,
    policy: &CleaningPolicy,
) -> Result<Vec<Recording>, IngestError> {
    manifest.validate()?;
    manifest
        .entries
        .par_iter()
        .filter(|e| !forehand_only || e.session.is_forehand())
        .map(|entry| {
            let path = base_dir.join(&entry.csv_path);
            let text = std::fs::read_to_string(&path).map_err(|source| IngestError::Io {
                path: path.clone(),
                source,
            })?;
            let annotate = |source: IngestError| IngestError::Entry {
                participant_id: entry.participant_id.clone(),
                session: entry.session,
                path: path.clone(),
                source: Box::new(source),
            };
            let frames = parse_sensor_csv(&text, columns).map_err(annotate)?;
            let frames = clean(&frames, policy).map_err(annotate)?;
            Ok(Recording {
                participant_id: entry.participant_id.clone(),
                skill: entry.skill,
                handedness: entry.handedness,
                session: entry.session,
                frames,
            })
        })
        .collect()
}
