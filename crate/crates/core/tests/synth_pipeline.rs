use proptest::prelude::*;

use tractshape::io::{load_subject, ClusterLayout, Target};
use tractshape::measures::{extract_features, MeasureKind};
use tractshape::pipeline::{
    fuse_predictions, make_folds, run_experiment_detailed, CategorySpec, ExperimentConfig, ModelKind,
};
use tractshape::synth::{gen_cohort, gen_cohort_features, write_cohort, CohortSpec, Noise, Planted, TargetSpec};
use tractshape::task::{Predictions, TaskSpec};

fn tpvt_only(planted: Vec<Planted>, noise: Noise) -> Vec<TargetSpec> {
    vec![TargetSpec { target: Target::Tpvt, baseline: 100.0, planted, noise }]
}

fn length_experiment(seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(
        "length",
        TaskSpec::for_target(Target::Tpvt),
        ModelKind::Enet,
        vec![CategorySpec::new("Shape", &[MeasureKind::Length])],
        seed,
    )
}

#[test]
fn noiseless_planted_signal_is_recovered() {
    let planted = vec![
        Planted { measure: MeasureKind::Length, cluster: 3, beta: 0.6 },
        Planted { measure: MeasureKind::Length, cluster: 4, beta: -0.5 },
        Planted { measure: MeasureKind::Length, cluster: 9, beta: 0.3 },
    ];
    let spec = CohortSpec { seed: 11, targets: tpvt_only(planted, Noise::Sd(0.0)), ..CohortSpec::default() };
    let (cohort, truth) = gen_cohort_features(&spec).unwrap();
    assert!(truth.targets[0].realized_r.unwrap() > 1.0 - 1e-12);
    let run = run_experiment_detailed(&cohort, &length_experiment(5)).unwrap();
    assert!(run.report.mean >= 0.99, "fold-mean r {}", run.report.mean);
    assert!(run.report.fold_values.iter().all(|r| *r >= 0.98), "{:?}", run.report.fold_values);
}

#[test]
fn no_planted_signal_gives_no_correlation() {
    for seed in [21, 22, 23] {
        let spec = CohortSpec { seed, targets: tpvt_only(vec![], Noise::Sd(5.0)), ..CohortSpec::default() };
        let (cohort, _) = gen_cohort_features(&spec).unwrap();
        assert_eq!(cohort.phenotypes.len(), 200);
        let run = run_experiment_detailed(&cohort, &length_experiment(seed)).unwrap();
        assert!(run.report.mean.abs() <= 0.2, "seed {seed}: fold-mean r {}", run.report.mean);
    }
}

#[test]
fn generation_is_deterministic_and_subjects_are_independent() {
    let small = CohortSpec { subjects: 16, clusters: 9, streamline_range: (5, 15), points: 6, ..CohortSpec::default() };
    let a = gen_cohort(&small).unwrap();
    assert_eq!(a.subjects, gen_cohort(&small).unwrap().subjects);
    assert_eq!(a.truth, gen_cohort(&small).unwrap().truth);
    let fewer = gen_cohort(&CohortSpec { subjects: 11, ..small.clone() }).unwrap();
    // phenotypes are standardized over the cohort; the geometry is per subject
    for (x, y) in fewer.subjects.iter().zip(&a.subjects) {
        assert_eq!((&x.subject_id, &x.clusters), (&y.subject_id, &y.clusters));
    }
    let reseeded = gen_cohort(&CohortSpec { seed: 99, ..small.clone() }).unwrap();
    assert_ne!(reseeded.subjects, a.subjects);
}

#[test]
fn written_cohort_loads_back_with_finite_measures() {
    let spec = CohortSpec { subjects: 10, clusters: 9, pad_to: Some(12), streamline_range: (3, 9), points: 5, ..CohortSpec::default() };
    let tmp = tempfile::tempdir().unwrap();
    let generated = gen_cohort(&spec).unwrap();
    write_cohort(&spec, tmp.path()).unwrap();
    let layout = ClusterLayout { cluster_count: spec.cluster_count() };
    for s in &generated.subjects {
        let loaded = load_subject(&tmp.path().join(&s.subject_id), &layout).unwrap();
        assert_eq!(loaded.clusters.len(), 12);
        assert!(loaded.clusters[9..].iter().all(|c| c.is_missing()));
        let f = extract_features(&loaded).unwrap();
        assert!(f.values().flat_map(|v| &v.values).all(|v| v.is_finite()));
        // stored geometry is f32, so compare measures rather than points
        let g = extract_features(s).unwrap();
        for (kind, v) in &f {
            for (x, y) in v.values.iter().zip(&g[kind].values) {
                assert!((x - y).abs() <= 1e-4 * y.abs().max(1.0), "{kind}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn fusing_copies_returns_the_original() {
    let spec = CohortSpec { subjects: 40, clusters: 8, seed: 4, ..CohortSpec::default() };
    let (cohort, _) = gen_cohort_features(&spec).unwrap();
    let run = run_experiment_detailed(&cohort, &length_experiment(2)).unwrap();
    let one = &run.measures[0];
    for n in 2..6 {
        let fused = fuse_predictions(&vec![one.clone(); n], "copies").unwrap();
        let (Predictions::Values(a), Predictions::Values(b)) = (&fused.predictions, &one.predictions) else {
            panic!("regression expected")
        };
        assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * y.abs().max(1.0)));
        assert_eq!(fused.subject_ids, one.subject_ids);
    }
}

proptest! {
    #[test]
    fn folds_partition_subjects(n in 2usize..300, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let ids: Vec<String> = (0..n).map(|i| format!("s{i:03}")).collect();
        let folds = make_folds(&ids, k, seed).unwrap();
        prop_assert_eq!(folds.len(), n);
        let sizes = folds.sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in 0..k {
            let test = folds.test_indices(f);
            let train = folds.train_indices(f);
            prop_assert_eq!(test.len() + train.len(), n);
            prop_assert!(test.iter().all(|i| !train.contains(i)));
        }
        prop_assert_eq!(make_folds(&ids, k, seed).unwrap(), folds);
    }
}
