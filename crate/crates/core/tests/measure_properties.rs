mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use common::{apply, lambda_max_oracle, random_cluster, random_rotation};
use tractshape::io::{FiberCluster, Streamline, FA, MD};
use tractshape::measures::{
    cluster_diameter, cluster_geometry, cluster_measures, cluster_scalar_mean, streamline_midpoint,
};
use tractshape::seed::rng;

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

fn with_channels(c: FiberCluster, r: &mut impl Rng) -> FiberCluster {
    let values = |r: &mut dyn rand::RngCore| -> Vec<Vec<f64>> {
        c.streamlines().iter().map(|s| (0..s.len()).map(|_| r.random_range(0.0..1.0)).collect()).collect()
    };
    let (fa, md) = (values(r), values(r));
    c.clone().with_scalars(FA, fa).unwrap().with_scalars(MD, md).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn diameter_matches_exact_eigenvalue_oracle(seed in any::<u64>(), n in 2usize..150) {
        let c = random_cluster(&mut rng(seed), n);
        let mids: Vec<[f64; 3]> = c.streamlines().iter().map(streamline_midpoint).collect();
        let (lambda, _) = lambda_max_oracle(&mids).map_err(TestCaseError::fail)?;
        let expected = 2.0 * lambda.sqrt();
        prop_assert!(rel(cluster_diameter(&c), expected) < 1e-9, "{} vs {expected}", cluster_diameter(&c));
    }

    #[test]
    fn rigid_motion_preserves_measures_and_midpoint_geometry(seed in any::<u64>(), n in 2usize..60) {
        let mut r = rng(seed);
        let c = random_cluster(&mut r, n);
        let rot = random_rotation(&mut r);
        let shift: [f64; 3] = std::array::from_fn(|_| r.random_range(-100.0..100.0));
        let moved = c.map_points(|p| {
            let q = apply(&rot, p);
            [q[0] + shift[0], q[1] + shift[1], q[2] + shift[2]]
        }).unwrap();
        let (a, b) = (cluster_geometry(&c), cluster_geometry(&moved));
        for (x, y) in [(a.length, b.length), (a.diameter, b.diameter), (a.elongation, b.elongation)] {
            prop_assert!(rel(x, y) < 1e-9, "{x} vs {y}");
        }
        let m0: Vec<_> = c.streamlines().iter().map(streamline_midpoint).collect();
        let m1: Vec<_> = moved.streamlines().iter().map(streamline_midpoint).collect();
        let scale = m0.iter().map(|p| dist(*p, m0[0])).fold(1.0, f64::max);
        for i in 0..m0.len() {
            for j in 0..i {
                prop_assert!((dist(m0[i], m0[j]) - dist(m1[i], m1[j])).abs() < 1e-9 * scale);
            }
        }
    }

    #[test]
    fn uniform_scaling(seed in any::<u64>(), n in 2usize..60, s in 1e-2f64..1e2) {
        let c = random_cluster(&mut rng(seed), n);
        let scaled = c.map_points(|p| p.map(|v| v * s)).unwrap();
        let (a, b) = (cluster_geometry(&c), cluster_geometry(&scaled));
        prop_assert!(rel(b.length, s * a.length) < 1e-9);
        prop_assert!(rel(b.diameter, s * a.diameter) < 1e-9);
        prop_assert!(rel(b.elongation, a.elongation) < 1e-9);
    }

    #[test]
    fn order_and_orientation_do_not_matter(seed in any::<u64>(), n in 1usize..60) {
        let mut r = rng(seed);
        let c = with_channels(random_cluster(&mut r, n), &mut r);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let permuted = c.permuted(&order);
        let flips: Vec<bool> = (0..n).map(|_| r.random()).collect();
        let flipped_lines: Vec<Streamline> = c.streamlines().iter().zip(&flips)
            .map(|(s, &f)| if f { s.reversed() } else { s.clone() })
            .collect();
        let flip_values = |name| -> Vec<Vec<f64>> {
            c.channel(name).unwrap().iter().zip(&flips)
                .map(|(v, &f)| if f { v.iter().rev().copied().collect() } else { v.clone() })
                .collect()
        };
        let flipped = FiberCluster::new(c.id(), flipped_lines)
            .with_scalars(FA, flip_values(FA)).unwrap()
            .with_scalars(MD, flip_values(MD)).unwrap();
        let base = cluster_measures(&c).unwrap();
        for other in [cluster_measures(&permuted).unwrap(), cluster_measures(&flipped).unwrap()] {
            for (x, y) in [
                (base.length, other.length), (base.diameter, other.diameter), (base.elongation, other.elongation),
                (base.nos, other.nos), (base.fa, other.fa), (base.md, other.md),
            ] {
                prop_assert!(rel(x, y) < 1e-12, "{x} vs {y}");
            }
        }
    }
}

#[test]
fn scalar_mean_pools_points_not_streamlines() {
    let line = |k: usize| Streamline::new((0..k).map(|i| [i as f64, 0.0, 0.0]).collect()).unwrap();
    let c = FiberCluster::new(1, vec![line(1), line(3)])
        .with_scalars(FA, vec![vec![0.9], vec![0.1, 0.1, 0.1]])
        .unwrap();
    let pooled = cluster_scalar_mean(&c, FA).unwrap();
    assert!((pooled - 1.2 / 4.0).abs() < 1e-15);
    let mean_of_means = (0.9 + 0.1) / 2.0;
    assert!((pooled - mean_of_means).abs() > 0.1);
}
