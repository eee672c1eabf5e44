//! Randomized invariants across modules.

use proptest::prelude::*;

use swingphase::eval::roc_auc;
use swingphase::ingest::{clean, parse_sensor_csv, write_sensor_csv, CleaningPolicy, ColumnMap, ImuFrame};
use swingphase::preprocess::{pca_fit, standardize, FeatureMatrix};
use swingphase::segment::segment_cost_l2;
use swingphase::svm::{kernel_eval, train_binary_smo, KernelSpec, SmoParams};

fn rows(n: std::ops::RangeInclusive<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0..10.0f64, d), n)
}

fn kernels() -> impl Strategy<Value = KernelSpec<f64>> {
    prop_oneof![
        (0.01..3.0f64).prop_map(KernelSpec::rbf),
        (1u32..=4, 0.01..2.0f64, -1.0..1.0f64).prop_map(|(d, g, c)| KernelSpec::poly(d, g, c)),
        (0.01..2.0f64, -1.0..1.0f64).prop_map(|(g, c)| KernelSpec::sigmoid(g, c)),
    ]
}

/// Frames at 50 Hz with some angle samples knocked out.
fn frames() -> impl Strategy<Value = Vec<ImuFrame>> {
    prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, -1.5..1.5f64, prop::bool::weighted(0.15)), 3..60).prop_map(
        |v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (y, r, p, gap))| {
                    let f = ImuFrame::new(i as f64 * 0.02, y, r, p);
                    if gap { ImuFrame { yaw: f64::NAN, ..f } } else { f }
                })
                .collect()
        },
    )
}

/// Population covariance of two score columns.
fn cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

/// Cholesky of `g + shift * I`; succeeds iff its smallest eigenvalue exceeds `-shift`.
fn cholesky_succeeds(g: &[f64], n: usize, shift: f64) -> bool {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = g[i * n + j] + if i == j { shift } else { 0.0 };
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return false;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn standardized_series_has_zero_mean_unit_std(v in prop::collection::vec(-1e3..1e3f64, 2..50)) {
        let (z, _, std) = standardize(&v).unwrap();
        prop_assume!(std > 0.0);
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let sd = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() <= 1e-9);
        prop_assert!((sd - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn pca_scores_are_uncorrelated_and_ratios_nest(x in rows(4..=25, 4)) {
        let m = FeatureMatrix::from_rows(&x).unwrap();
        let full = pca_fit(&m, 4).unwrap();
        let scores = full.transform(&m).unwrap();
        let top = full.explained_variance_ratio[0];
        let largest = cov(&scores.column(0), &scores.column(0));
        prop_assume!(top > 0.0);
        for a in 0..4 {
            for b in a + 1..4 {
                prop_assert!(cov(&scores.column(a), &scores.column(b)).abs() <= 1e-8 * largest.max(1.0));
            }
        }
        for k in 1..4 {
            let part = pca_fit(&m, k).unwrap();
            for (p, f) in part.explained_variance_ratio.iter().zip(&full.explained_variance_ratio) {
                prop_assert!((p - f).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn kernels_are_symmetric(spec in kernels(), x in prop::collection::vec(-3.0..3.0f64, 3), z in prop::collection::vec(-3.0..3.0f64, 3)) {
        let a = kernel_eval(&spec, &x, &z).unwrap();
        let b = kernel_eval(&spec, &z, &x).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn rbf_gram_is_positive_semidefinite(x in rows(2..=8, 2), gamma in 0.01..5.0f64) {
        let spec = KernelSpec::rbf(gamma);
        let n = x.len();
        let g: Vec<f64> = (0..n * n).map(|i| kernel_eval(&spec, &x[i / n], &x[i % n]).unwrap()).collect();
        prop_assert!(cholesky_succeeds(&g, n, 1e-8));
    }

    #[test]
    fn cleaning_without_smoothing_is_idempotent(f in frames()) {
        let policy = CleaningPolicy::default().without_smoothing();
        if let Ok(once) = clean(&f, &policy) {
            let twice = clean(&once, &policy).unwrap();
            prop_assert_eq!(once.len(), twice.len());
            for (a, b) in once.iter().zip(&twice) {
                prop_assert_eq!(a.t.to_bits(), b.t.to_bits());
                for (x, y) in a.angles().iter().zip(b.angles()) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn csv_round_trip_preserves_frames(f in frames()) {
        let mut complete: Vec<ImuFrame> = f.into_iter().filter(ImuFrame::is_complete).collect();
        prop_assume!(!complete.is_empty());
        // Parsed times are relative to the first row.
        let t0 = complete[0].t;
        complete.iter_mut().for_each(|fr| fr.t -= t0);
        for columns in [ColumnMap::default(), ColumnMap::plain()] {
            let text = write_sensor_csv(&complete, &columns).unwrap();
            let back = parse_sensor_csv(&text, &columns).unwrap();
            prop_assert_eq!(back.len(), complete.len());
            for (a, b) in back.iter().zip(&complete) {
                prop_assert!((a.t - b.t).abs() <= 1e-12);
                for (x, y) in a.angles().iter().zip(b.angles()) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn auc_is_invariant_to_monotone_maps_and_flips_on_negation(
        s in prop::collection::hash_set(-1000i32..1000, 4..30),
        flips in prop::collection::vec(any::<bool>(), 30),
    ) {
        let scores: Vec<f64> = s.into_iter().map(|v| f64::from(v) / 100.0).collect();
        let mut labels: Vec<bool> = flips[..scores.len()].to_vec();
        labels[0] = true;
        labels[1] = false;
        let base = roc_auc(&scores, &labels).unwrap().auc;
        let mapped: Vec<f64> = scores.iter().map(|v| v.powi(3) + 2.0 * v.exp()).collect();
        prop_assert!((roc_auc(&mapped, &labels).unwrap().auc - base).abs() <= 1e-12);
        let neg: Vec<f64> = scores.iter().map(|v| -v).collect();
        prop_assert!((roc_auc(&neg, &labels).unwrap().auc + base - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn splitting_a_segment_never_raises_cost(x in rows(2..=40, 2), cut in 0.0..1.0f64) {
        let m = FeatureMatrix::from_rows(&x).unwrap();
        let n = x.len();
        let c = 1 + ((n - 1) as f64 * cut) as usize;
        let c = c.min(n - 1);
        let parent = segment_cost_l2(&m, 0, n).unwrap();
        let children = segment_cost_l2(&m, 0, c).unwrap() + segment_cost_l2(&m, c, n).unwrap();
        prop_assert!(children <= parent + 1e-9 * (1.0 + parent));
    }

    #[test]
    fn scaling_dual_coefs_and_bias_keeps_predictions(x in rows(6..=12, 2), lambda in 0.01..100.0f64) {
        let y: Vec<i8> = (0..x.len()).map(|i| if x[i][0] + 0.5 * x[i][1] > 0.0 { 1 } else { -1 }).collect();
        prop_assume!(y.contains(&1) && y.contains(&-1));
        let m = FeatureMatrix::from_rows(&x).unwrap();
        let model = train_binary_smo(&m, &y, &KernelSpec::rbf(0.1), &SmoParams::default()).unwrap().model;
        let mut scaled = model.clone();
        scaled.dual_coefs.iter_mut().for_each(|a| *a *= lambda);
        scaled.bias *= lambda;
        for row in &x {
            let f = model.decision_value(row).unwrap();
            prop_assume!(f.abs() > 1e-9);
            prop_assert_eq!(model.predict(row).unwrap(), scaled.predict(row).unwrap());
        }
    }
}
