//! Synthetic forehand sessions with known skill levels and phase boundaries.
//!
//! Each swing holds one orientation per phase; neighbouring phases are joined
//! by short raised-cosine blends centred on the true boundary, and the arm
//! eases in and out of a rest pose between swings. Default numbers live in
//! `config/synth_default.json`.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{
    write_sensor_csv, ColumnMap, DatasetManifest, Handedness, ImuFrame, IngestError, ManifestEntry,
    Recording, Session, Skill,
};
use crate::segment::{PhaseSegmentation, DEFAULT_MIN_SEG_LEN, N_PHASES};

const DEFAULT_CONFIG: &str = include_str!("../config/synth_default.json");

/// Sample rate used by [`generate_swing`].
pub const DEFAULT_SAMPLE_RATE: f64 = 50.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid swing profile: {0}")]
    BadProfile(String),
    #[error("invalid synth config: {0}")]
    BadConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Swing shape and variability for one skill level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwingProfile {
    /// Mean frames per phase.
    pub phase_durations: [f64; N_PHASES],
    /// Per-phase standard deviation of the duration, in frames.
    pub duration_jitter: [f64; N_PHASES],
    /// Standard deviation of a per-swing factor scaling all durations.
    pub tempo_sd: f64,
    /// Held (yaw, roll, pitch) per phase, radians.
    pub channel_targets: [[f64; 3]; N_PHASES],
    pub rest_pose: [f64; 3],
    /// Standard deviation of a per-swing factor scaling the excursion from rest.
    pub amplitude_jitter: f64,
    /// Standard deviation added to each held angle, per swing.
    pub waypoint_jitter: f64,
    /// Additive per-frame Gaussian noise.
    pub noise: f64,
    /// Half-width in frames of the blend across each phase boundary.
    pub transition: usize,
}

impl SwingProfile {
    /// Shortest duration any phase may be sampled at.
    pub fn min_duration(&self) -> usize {
        (2 * DEFAULT_MIN_SEG_LEN).max(2 * self.transition + 2)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::BadProfile(m));
        let sigmas = self
            .duration_jitter
            .iter()
            .chain([&self.tempo_sd, &self.amplitude_jitter, &self.waypoint_jitter, &self.noise]);
        for s in sigmas {
            if !(s.is_finite() && *s >= 0.0) {
                return bad(format!("standard deviations must be finite and >= 0, got {s}"));
            }
        }
        for d in self.phase_durations {
            if !(d.is_finite() && d >= self.min_duration() as f64) {
                return bad(format!(
                    "phase durations must be at least {} frames, got {d}",
                    self.min_duration()
                ));
            }
        }
        if self.transition == 0 {
            return bad("transition half-width must be at least 1".into());
        }
        if self
            .channel_targets
            .iter()
            .chain([&self.rest_pose])
            .flatten()
            .any(|v| !v.is_finite())
        {
            return bad("angles must be finite".into());
        }
        Ok(())
    }

    /// Draws the durations and held angles of one swing.
    pub fn sample_plan(&self, rng: &mut impl Rng) -> SwingPlan {
        let tempo = 1.0 + self.tempo_sd * std_normal(rng);
        let tempo = tempo.clamp(0.5, 1.5);
        let min = self.min_duration();
        let durations = std::array::from_fn(|p| {
            let d = self.phase_durations[p] * tempo + self.duration_jitter[p] * std_normal(rng);
            (d.round().max(0.0) as usize).max(min)
        });
        let amplitude = 1.0 + self.amplitude_jitter * std_normal(rng);
        let levels = std::array::from_fn(|p| {
            std::array::from_fn(|c| {
                let rest = self.rest_pose[c];
                rest + amplitude * (self.channel_targets[p][c] - rest)
                    + self.waypoint_jitter * std_normal(rng)
            })
        });
        SwingPlan { durations, levels }
    }
}

fn std_normal(rng: &mut impl Rng) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

/// Sampled durations and held angles of one swing.
#[derive(Debug, Clone, PartialEq)]
pub struct SwingPlan {
    pub durations: [usize; N_PHASES],
    pub levels: [[f64; 3]; N_PHASES],
}

impl SwingPlan {
    pub fn len(&self) -> usize {
        self.durations.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Phase boundaries relative to the swing start.
    pub fn breakpoints(&self) -> [usize; 4] {
        let mut acc = 0;
        std::array::from_fn(|p| {
            acc += self.durations[p];
            acc
        })
    }

    pub fn truth(&self) -> PhaseSegmentation {
        PhaseSegmentation::new(self.breakpoints(), self.len()).expect("durations are positive")
    }
}

/// Piecewise-constant levels with a raised-cosine blend across each boundary.
struct Track {
    values: Vec<[f64; 3]>,
}

impl Track {
    fn new() -> Self {
        Self { values: Vec::new() }
    }

    fn len(&self) -> usize {
        self.values.len()
    }

    fn hold(&mut self, level: [f64; 3], frames: usize) {
        self.values.extend(std::iter::repeat_n(level, frames));
    }

    /// Blends frames `b - h .. b + h` from the level on the left of `b` to the one on its right.
    fn blend(&mut self, b: usize, h: usize) {
        let (left, right) = (self.values[b - 1], self.values[b]);
        for j in 0..2 * h {
            let w = 0.5 - 0.5 * (PI * (j as f64 + 0.5) / (2 * h) as f64).cos();
            let v = &mut self.values[b - h + j];
            for c in 0..3 {
                v[c] = left[c] + (right[c] - left[c]) * w;
            }
        }
    }
}

fn frames_from(values: &[[f64; 3]], sample_rate: f64, noise: f64, rng: &mut impl Rng) -> Vec<ImuFrame> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut a = *v;
            if noise > 0.0 {
                for x in &mut a {
                    *x += noise * std_normal(rng);
                }
            }
            ImuFrame::new(i as f64 / sample_rate, a[0], a[1], a[2])
        })
        .collect()
}

/// One isolated swing and its phase boundaries; frames are sampled at 50 Hz.
pub fn generate_swing(
    profile: &SwingProfile,
    rng: &mut impl Rng,
) -> Result<(Vec<ImuFrame>, PhaseSegmentation), SynthError> {
    profile.validate()?;
    let plan = profile.sample_plan(rng);
    let mut track = Track::new();
    for p in 0..N_PHASES {
        track.hold(plan.levels[p], plan.durations[p]);
    }
    for b in plan.breakpoints() {
        track.blend(b, profile.transition);
    }
    let frames = frames_from(&track.values, DEFAULT_SAMPLE_RATE, profile.noise, rng);
    Ok((frames, plan.truth()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub session: Session,
    pub swings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_participants: usize,
    /// The rest are beginners.
    pub n_intermediate: usize,
    pub sessions: Vec<SessionPlan>,
    pub sample_rate: f64,
    /// Inclusive range of rest frames before, between and after swings.
    pub idle_frames: [usize; 2],
    /// Half-width of the ease between rest pose and swing.
    pub idle_transition: usize,
    /// Standard deviation of each participant's constant per-angle offset.
    pub participant_offset_sd: f64,
    pub beginner: SwingProfile,
    pub intermediate: SwingProfile,
}

impl Default for SynthConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CONFIG).expect("bundled synth config parses")
    }
}

impl SynthConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| SynthError::BadConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn profile(&self, skill: Skill) -> &SwingProfile {
        match skill {
            Skill::Beginner => &self.beginner,
            Skill::Intermediate => &self.intermediate,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::BadConfig(m));
        if self.n_participants == 0 {
            return bad("n_participants must be at least 1".into());
        }
        if self.n_intermediate > self.n_participants {
            return bad(format!(
                "n_intermediate {} exceeds n_participants {}",
                self.n_intermediate, self.n_participants
            ));
        }
        if self.sessions.is_empty() || self.sessions.iter().any(|s| s.swings == 0) {
            return bad("every session needs at least one swing".into());
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return bad(format!("sample_rate must be positive, got {}", self.sample_rate));
        }
        let [lo, hi] = self.idle_frames;
        if lo > hi || lo < 3 * self.idle_transition {
            return bad(format!(
                "idle_frames {:?} must be ordered and at least {}",
                self.idle_frames,
                3 * self.idle_transition
            ));
        }
        if self.idle_transition == 0 {
            return bad("idle_transition must be at least 1".into());
        }
        if !(self.participant_offset_sd.is_finite() && self.participant_offset_sd >= 0.0) {
            return bad("participant_offset_sd must be >= 0".into());
        }
        self.beginner.validate()?;
        self.intermediate.validate()
    }
}

/// Ground truth for one generated swing; frame indices refer to the session CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwingTruth {
    pub participant_id: String,
    pub session: Session,
    pub swing_index: usize,
    /// Boundary between forward swing and follow-through.
    pub impact_frame: usize,
    /// Phase boundaries relative to `start`.
    pub breakpoints: [usize; 4],
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub recordings: Vec<Recording>,
    pub truth: Vec<SwingTruth>,
}

impl SyntheticDataset {
    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            entries: self
                .recordings
                .iter()
                .map(|r| ManifestEntry {
                    participant_id: r.participant_id.clone(),
                    skill: r.skill,
                    handedness: r.handedness,
                    session: r.session,
                    csv_path: csv_name(&r.participant_id, r.session),
                })
                .collect(),
        }
    }

    /// Writes `manifest.json`, `truth.json` and one CSV per session into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| SynthError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let columns = ColumnMap::default();
        for r in &self.recordings {
            let path = dir.join(csv_name(&r.participant_id, r.session));
            fs::write(&path, write_sensor_csv(&r.frames, &columns)?).map_err(io(&path))?;
        }
        let manifest = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        let path = dir.join("manifest.json");
        fs::write(&path, manifest + "\n").map_err(io(&path))?;
        let truth = serde_json::to_string_pretty(&self.truth).expect("truth serializes");
        let path = dir.join("truth.json");
        fs::write(&path, truth + "\n").map_err(io(&path))?;
        Ok(())
    }
}

pub fn csv_name(participant_id: &str, session: Session) -> String {
    format!("{participant_id}_{session}.csv")
}

/// Participant ids `P01`, `P02`, ... and their skill levels.
pub fn roster(config: &SynthConfig) -> Vec<(String, Skill)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::MAX);
    let mut skills: Vec<Skill> = (0..config.n_participants)
        .map(|i| {
            if i < config.n_intermediate {
                Skill::Intermediate
            } else {
                Skill::Beginner
            }
        })
        .collect();
    rand::seq::SliceRandom::shuffle(skills.as_mut_slice(), &mut rng);
    skills
        .into_iter()
        .enumerate()
        .map(|(i, s)| (format!("P{:02}", i + 1), s))
        .collect()
}

/// `(start, breakpoints, end)` of one swing inside a session.
type SwingSpan = (usize, [usize; 4], usize);

fn generate_session(
    config: &SynthConfig,
    profile: &SwingProfile,
    offset: [f64; 3],
    n_swings: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<ImuFrame>, Vec<SwingSpan>) {
    let rest: [f64; 3] = std::array::from_fn(|c| profile.rest_pose[c] + offset[c]);
    let h = config.idle_transition;
    let [lo, hi] = config.idle_frames;
    let mut track = Track::new();
    let mut swings = Vec::with_capacity(n_swings);
    let mut blends = Vec::new();
    for _ in 0..n_swings {
        let plan = profile.sample_plan(rng);
        let idle = rng.random_range(lo..=hi);
        // The ease into the swing finishes as the swing starts.
        track.hold(rest, idle - h);
        blends.push((track.len(), h));
        let start = track.len() + h;
        let levels: Vec<[f64; 3]> = plan
            .levels
            .iter()
            .map(|l| std::array::from_fn(|c| l[c] + offset[c]))
            .collect();
        track.hold(levels[0], h + plan.durations[0]);
        for p in 1..N_PHASES {
            blends.push((track.len(), profile.transition));
            track.hold(levels[p], plan.durations[p]);
        }
        let end = track.len();
        swings.push((start, plan.breakpoints(), end));
        track.hold(levels[N_PHASES - 1], h);
        blends.push((track.len(), h));
    }
    let tail = rng.random_range(lo..=hi);
    track.hold(rest, tail);
    for (b, w) in blends {
        track.blend(b, w);
    }
    let frames = frames_from(&track.values, config.sample_rate, profile.noise, rng);
    (frames, swings)
}

/// Generates every participant's sessions. Participants draw from
/// independent streams of the seed, so output does not depend on scheduling.
pub fn generate_dataset(config: &SynthConfig) -> Result<SyntheticDataset, SynthError> {
    config.validate()?;
    let people = roster(config);
    let per_person: Vec<(Vec<Recording>, Vec<SwingTruth>)> = people
        .par_iter()
        .enumerate()
        .map(|(i, (id, skill))| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let profile = config.profile(*skill);
            let offset: [f64; 3] =
                std::array::from_fn(|_| config.participant_offset_sd * std_normal(&mut rng));
            let mut recordings = Vec::new();
            let mut truth = Vec::new();
            for plan in &config.sessions {
                let (frames, swings) = generate_session(config, profile, offset, plan.swings, &mut rng);
                for (k, (start, bkps, end)) in swings.into_iter().enumerate() {
                    truth.push(SwingTruth {
                        participant_id: id.clone(),
                        session: plan.session,
                        swing_index: k,
                        impact_frame: start + bkps[2],
                        breakpoints: bkps,
                        start,
                        end,
                    });
                }
                recordings.push(Recording {
                    participant_id: id.clone(),
                    skill: *skill,
                    handedness: Handedness::Right,
                    session: plan.session,
                    frames,
                });
            }
            (recordings, truth)
        })
        .collect();
    let (recordings, truth): (Vec<_>, Vec<_>) = per_person.into_iter().unzip();
    Ok(SyntheticDataset {
        recordings: recordings.into_iter().flatten().collect(),
        truth: truth.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_sensor_csv;

    #[test]
    fn default_config_is_valid() {
        let cfg = SynthConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_participants, 12);
        assert_eq!(cfg.sessions.iter().map(|s| s.swings).sum::<usize>(), 40);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(SynthConfig::from_json(&json).unwrap(), cfg);
    }

    #[test]
    fn swing_length_is_sum_of_durations() {
        let cfg = SynthConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for profile in [&cfg.beginner, &cfg.intermediate] {
            for _ in 0..20 {
                let (frames, truth) = generate_swing(profile, &mut rng).unwrap();
                assert_eq!(frames.len(), truth.len);
                for (a, b) in truth.segments() {
                    assert!(b - a >= 2 * DEFAULT_MIN_SEG_LEN);
                }
            }
        }
    }

    #[test]
    fn bad_profile_rejected() {
        let mut p = SynthConfig::default().intermediate;
        p.noise = -1.0;
        assert!(matches!(generate_swing(&p, &mut ChaCha8Rng::seed_from_u64(0)), Err(SynthError::BadProfile(_))));
        let mut p = SynthConfig::default().intermediate;
        p.phase_durations[2] = 2.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn dataset_shape_and_determinism() {
        let mut cfg = SynthConfig::with_seed(9);
        cfg.n_participants = 2;
        cfg.n_intermediate = 1;
        let a = generate_dataset(&cfg).unwrap();
        assert_eq!(a.recordings.len(), 6);
        assert_eq!(a.truth.len(), 80);
        assert_eq!(a, generate_dataset(&cfg).unwrap());
        let skills: Vec<Skill> = roster(&cfg).into_iter().map(|(_, s)| s).collect();
        assert!(skills.contains(&Skill::Beginner) && skills.contains(&Skill::Intermediate));

        cfg.n_participants = 1;
        cfg.n_intermediate = 0;
        let one = generate_dataset(&cfg).unwrap();
        assert_eq!(one.recordings.len(), 3);
    }

    #[test]
    fn truth_sits_inside_the_session() {
        let mut cfg = SynthConfig::with_seed(4);
        cfg.n_participants = 1;
        cfg.n_intermediate = 0;
        let ds = generate_dataset(&cfg).unwrap();
        for t in &ds.truth {
            let rec = ds
                .recordings
                .iter()
                .find(|r| r.session == t.session)
                .unwrap();
            assert!(t.end <= rec.frames.len());
            assert!(t.breakpoints[3] < t.end - t.start);
            assert!(t.start < t.impact_frame && t.impact_frame < t.end);
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut cfg = SynthConfig::with_seed(5);
        cfg.n_participants = 1;
        cfg.n_intermediate = 0;
        let ds = generate_dataset(&cfg).unwrap();
        let rec = &ds.recordings[0];
        let text = write_sensor_csv(&rec.frames, &ColumnMap::default()).unwrap();
        assert_eq!(parse_sensor_csv(&text, &ColumnMap::default()).unwrap(), rec.frames);
    }
}
