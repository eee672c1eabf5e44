//! Generator and segmentation checks against the generator's own ground truth.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use swingphase::ingest::{
    load_dataset, parse_sensor_csv, CleaningPolicy, ColumnMap, DatasetManifest, ManifestEntry, Session, Skill,
};
use swingphase::pipeline::{angle_matrix, segment_dataset, SegmentParams, SwingRecord};
use swingphase::segment::{segment_phases, DEFAULT_MIN_SEG_LEN, N_PHASES};
use swingphase::synth::{csv_name, generate_dataset, generate_swing, SynthConfig, SyntheticDataset};

fn default_dataset() -> SyntheticDataset {
    generate_dataset(&SynthConfig::with_seed(42)).unwrap()
}

#[test]
fn default_config_yields_480_swings_in_36_sessions() {
    let ds = default_dataset();
    assert_eq!(ds.recordings.len(), 36);
    assert_eq!(ds.truth.len(), 480);
    let intermediates = ds
        .recordings
        .iter()
        .filter(|r| r.skill == Skill::Intermediate)
        .map(|r| &r.participant_id)
        .collect::<std::collections::BTreeSet<_>>();
    assert_eq!(intermediates.len(), 6);
}

#[test]
fn one_window_per_generated_swing_and_each_holds_its_impact() {
    let ds = default_dataset();
    let swings = segment_dataset(&ds.recordings, &SegmentParams::default()).unwrap();
    assert_eq!(swings.len(), 480);

    let mut per_session: HashMap<(String, Session), Vec<&SwingRecord>> = HashMap::new();
    for s in &swings {
        per_session.entry((s.participant_id.clone(), s.session)).or_default().push(s);
    }
    for truth in &ds.truth {
        let windows = &per_session[&(truth.participant_id.clone(), truth.session)];
        let hits = windows.iter().filter(|s| s.window.contains(truth.impact_frame)).count();
        assert_eq!(hits, 1, "{} {:?} swing {}", truth.participant_id, truth.session, truth.swing_index);
    }
}

#[test]
fn standalone_swings_recover_truth_within_three_frames_at_default_noise() {
    let cfg = SynthConfig::with_seed(42);
    for profile in [&cfg.beginner, &cfg.intermediate] {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..50 {
            let (frames, truth) = generate_swing(profile, &mut rng).unwrap();
            let got = segment_phases(&angle_matrix(&frames).unwrap(), DEFAULT_MIN_SEG_LEN).unwrap();
            for (g, t) in got.breakpoints.iter().zip(truth.breakpoints) {
                assert!(g.abs_diff(t) <= 3, "{:?} vs {:?}", got.breakpoints, truth.breakpoints);
            }
        }
    }
}

#[test]
fn segmentations_are_five_contiguous_segments() {
    let ds = default_dataset();
    for s in segment_dataset(&ds.recordings[..6], &SegmentParams::default()).unwrap() {
        let segs = s.segmentation.segments();
        assert_eq!(segs.len(), N_PHASES);
        assert_eq!(segs[0].0, 0);
        assert_eq!(segs[N_PHASES - 1].1, s.frames.len());
        for w in segs.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        assert!(segs.iter().all(|(a, b)| b - a >= DEFAULT_MIN_SEG_LEN));
    }
}

#[test]
fn truth_segments_respect_detector_minimum() {
    let ds = default_dataset();
    for t in &ds.truth {
        let mut prev = 0;
        for b in t.breakpoints.iter().copied().chain([t.end - t.start]) {
            assert!(b - prev >= 2 * DEFAULT_MIN_SEG_LEN);
            prev = b;
        }
    }
}

fn cohens_d(a: &[f64], b: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    (mean(a) - mean(b)).abs() / ((var(a) + var(b)) / 2.0).sqrt()
}

#[test]
fn skills_separate_on_a_per_swing_variance_statistic() {
    let ds = default_dataset();
    let swings = segment_dataset(&ds.recordings, &SegmentParams::default()).unwrap();
    let best = (0..3)
        .map(|c| {
            let stat = |s: &SwingRecord| {
                let v: Vec<f64> = s.frames.iter().map(|f| f.angles()[c]).collect();
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
            };
            let by = |skill| swings.iter().filter(|s| s.skill == skill).map(stat).collect::<Vec<_>>();
            cohens_d(&by(Skill::Beginner), &by(Skill::Intermediate))
        })
        .fold(0.0, f64::max);
    assert!(best >= 1.0, "largest effect size {best}");
}

#[test]
fn written_dataset_round_trips_and_stays_in_device_range() {
    let ds = default_dataset();
    let dir = tempfile::tempdir().unwrap();
    ds.write(dir.path()).unwrap();
    let columns = ColumnMap::default();
    for rec in &ds.recordings {
        let text = std::fs::read_to_string(dir.path().join(csv_name(&rec.participant_id, rec.session))).unwrap();
        let parsed = parse_sensor_csv(&text, &columns).unwrap();
        assert_eq!(parsed.len(), rec.frames.len());
        for (p, f) in parsed.iter().zip(&rec.frames) {
            assert!((p.t - f.t).abs() <= 1e-12);
            for (a, b) in p.angles().iter().zip(f.angles()) {
                assert!((a - b).abs() <= 1e-12);
            }
            assert!(p.yaw.abs() <= PI && p.pitch.abs() <= FRAC_PI_2);
        }
    }
    let truth: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth.len(), 480);
    assert_eq!(truth[0]["breakpoints"].as_array().unwrap().len(), 4);
}

#[test]
fn same_seed_writes_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    default_dataset().write(a.path()).unwrap();
    default_dataset().write(b.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 38);
    for name in names {
        assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap());
    }
}

#[test]
fn forehand_filter_drops_backhand_entries() {
    let mut cfg = SynthConfig::with_seed(5);
    cfg.n_participants = 1;
    cfg.n_intermediate = 0;
    let ds = generate_dataset(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.write(dir.path()).unwrap();

    let mut manifest = ds.manifest();
    let source = manifest.entries[0].csv_path.clone();
    for session in [Session::Backhand10A, Session::Backhand10B] {
        let csv_path = csv_name("P01", session);
        std::fs::copy(dir.path().join(&source), dir.path().join(&csv_path)).unwrap();
        manifest.entries.push(ManifestEntry { session, csv_path, ..manifest.entries[0].clone() });
    }
    assert_eq!(manifest.entries.len(), 5);
    let policy = CleaningPolicy::default();
    let forehand = load_dataset(&manifest, dir.path(), true, &ColumnMap::default(), &policy).unwrap();
    assert_eq!(forehand.len(), 3);
    assert!(forehand.iter().all(|r| r.session.is_forehand()));
    let all = load_dataset(&manifest, dir.path(), false, &ColumnMap::default(), &policy).unwrap();
    assert_eq!(all.len(), 5);
    let empty = load_dataset(&DatasetManifest::default(), dir.path(), true, &ColumnMap::default(), &policy).unwrap();
    assert!(empty.is_empty());
}
