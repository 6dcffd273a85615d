use proptest::prelude::*;

use tractshape::measures::{FeatureVector, MeasureKind};
use tractshape::normalize::{brain_size_normalize, minmax_normalize};
use tractshape::stats::{paired_t_test, pearson_r, reg_inc_beta, rm_anova, student_t_two_tailed};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn measure_vector() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0.01f64..500.0, prop::bool::weighted(0.2)), 2..80)
        .prop_filter("needs a present cluster", |v| v.iter().any(|(_, m)| !m))
        .prop_map(|v| {
            let missing: Vec<bool> = v.iter().map(|(_, m)| *m).collect();
            let values = v.iter().map(|(x, m)| if *m { 0.0 } else { *x }).collect();
            (values, missing)
        })
}

fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, 3..40)
        .prop_filter("not constant", |v| v.iter().any(|x| (x - v[0]).abs() > 1e-3))
}

proptest! {
    #[test]
    fn brain_size_normalized_mean_is_one((values, missing) in measure_vector()) {
        let v = FeatureVector::new(MeasureKind::Length, values).unwrap();
        let n = brain_size_normalize(&v, &missing).unwrap();
        prop_assert_eq!(n.measure, MeasureKind::LengthN);
        let present: Vec<f64> = n.values.iter().zip(&missing).filter(|(_, m)| !**m).map(|(x, _)| *x).collect();
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        prop_assert!((mean - 1.0).abs() < 1e-12, "mean {mean}");
        prop_assert!(n.values.iter().zip(&missing).all(|(x, m)| !m || *x == 0.0));
    }

    #[test]
    fn brain_size_normalize_ignores_global_scale((values, missing) in measure_vector(), c in 1e-3f64..1e3) {
        let v = FeatureVector::new(MeasureKind::Diameter, values.clone()).unwrap();
        let scaled = FeatureVector::new(MeasureKind::Diameter, values.iter().map(|x| c * x).collect()).unwrap();
        let (a, b) = (brain_size_normalize(&v, &missing).unwrap(), brain_size_normalize(&scaled, &missing).unwrap());
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!(close(*x, *y, 1e-12), "{x} vs {y}");
        }
    }

    #[test]
    fn minmax_is_idempotent(values in series()) {
        let once = minmax_normalize(&FeatureVector::new(MeasureKind::Fa, values).unwrap());
        let twice = minmax_normalize(&once);
        for (x, y) in once.values.iter().zip(&twice.values) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        let (lo, hi) = once.values.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        prop_assert!(lo == 0.0 && (hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pearson_is_bounded_and_affine_invariant(
        x in series(), seed in prop::collection::vec(-100.0f64..100.0, 40), a in 0.01f64..100.0, b in -1e3f64..1e3,
    ) {
        let y: Vec<f64> = x.iter().zip(&seed).map(|(u, s)| 0.3 * u + s).collect();
        prop_assume!(y.iter().any(|v| (v - y[0]).abs() > 1e-3));
        let r = pearson_r(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r));
        let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let by: Vec<f64> = y.iter().map(|v| v / a - b).collect();
        prop_assert!((pearson_r(&ax, &y).unwrap() - r).abs() < 1e-12);
        prop_assert!((pearson_r(&x, &by).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn incomplete_beta_is_monotone(a in 0.1f64..50.0, b in 0.1f64..50.0, mut xs in prop::collection::vec(0.0f64..=1.0, 2..20)) {
        xs.sort_by(f64::total_cmp);
        let v: Vec<f64> = xs.iter().map(|&x| reg_inc_beta(x, a, b)).collect();
        prop_assert!(v.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!(v.windows(2).all(|w| w[0] <= w[1] + 1e-14), "{v:?}");
    }

    #[test]
    fn p_values_are_probabilities(t in -50.0f64..50.0, df in 1.0f64..200.0, a in series(), shift in -5.0f64..5.0) {
        let p = student_t_two_tailed(t, df);
        prop_assert!((0.0..=1.0).contains(&p));
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v + shift + (i % 3) as f64).collect();
        let test = paired_t_test(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&test.p_value));
    }

    #[test]
    fn rm_anova_absorbs_fold_offsets(
        table in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 4..10),
        offsets in prop::collection::vec(-1e3f64..1e3, 10),
    ) {
        let base = rm_anova(&table).unwrap();
        let shifted: Vec<Vec<f64>> = table.iter().zip(&offsets).map(|(row, o)| row.iter().map(|v| v + o).collect()).collect();
        let moved = rm_anova(&shifted).unwrap();
        prop_assert!(close(base.statistic, moved.statistic, 1e-9), "{} vs {}", base.statistic, moved.statistic);
        prop_assert!((base.p_value - moved.p_value).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&base.p_value));
    }
}
