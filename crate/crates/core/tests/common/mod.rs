//! Oracles and generators shared by the integration tests and the
//! acceptance runner.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{float::FloatCore, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::StandardNormal;

use tractshape::io::{FiberCluster, Point3, Streamline};

pub fn normal(r: &mut impl Rng) -> f64 {
    r.sample(StandardNormal)
}

/// Random rotation from a normalized Gaussian quaternion.
pub fn random_rotation(r: &mut impl Rng) -> [[f64; 3]; 3] {
    let q: [f64; 4] = std::array::from_fn(|_| normal(r));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn apply(m: &[[f64; 3]; 3], p: Point3) -> Point3 {
    std::array::from_fn(|i| m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2])
}

/// A cluster of `n` wiggly streamlines whose centers form an anisotropic
/// Gaussian cloud with axis scales spanning four decades (some clusters
/// are flat or collinear).
pub fn random_cluster(r: &mut impl Rng, n: usize) -> FiberCluster {
    let rot = random_rotation(r);
    let mut scales: [f64; 3] = std::array::from_fn(|_| 10f64.powf(r.random_range(-2.0..1.0)));
    match r.random_range(0..8) {
        0 => scales[2] = 0.0,
        1 => (scales[1], scales[2]) = (0.0, 0.0),
        _ => {}
    }
    let center: Point3 = std::array::from_fn(|_| r.random_range(-80.0..80.0));
    let dir = apply(&random_rotation(r), [1.0, 0.0, 0.0]);
    let streamlines = (0..n)
        .map(|_| {
            let z: Point3 = std::array::from_fn(|k| scales[k] * normal(r));
            let offset = apply(&rot, z);
            let len = r.random_range(10.0..80.0);
            let k = r.random_range(2..7);
            let points = (0..k)
                .map(|i| {
                    let t = i as f64 / (k - 1) as f64 - 0.5;
                    let wiggle: Point3 = std::array::from_fn(|_| 0.3 * normal(r));
                    std::array::from_fn(|d| center[d] + offset[d] + t * len * dir[d] + wiggle[d])
                })
                .collect();
            Streamline::new(points).unwrap()
        })
        .collect();
    FiberCluster::new(1, streamlines)
}

fn decode(x: f64) -> (BigInt, i32) {
    let (mantissa, exponent, sign) = FloatCore::integer_decode(x);
    (BigInt::from(mantissa) * i64::from(sign), i32::from(exponent))
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Largest eigenvalue of the sample covariance (denominator n - 1) of
/// `points`, computed without any floating-point linear algebra.
///
/// Coordinates are lifted exactly to integers, the scaled covariance and its
/// characteristic polynomial `m^3 - t m^2 + c m - d` are formed in exact
/// integer arithmetic, a Newton estimate of the largest root is taken from
/// above, and the estimate is then certified by exact sign checks: `p(lo) <= 0
/// < p(hi)` with `p' > 0` and `p'' > 0` at `hi`, so the root lies in
/// `[lo, hi]` and nothing lies above. Returns the root with its certified
/// relative half-width.
pub fn lambda_max_oracle(points: &[Point3]) -> Result<(f64, f64), String> {
    let n = points.len();
    assert!(n >= 2);
    let emin = points
        .iter()
        .flatten()
        .filter(|v| **v != 0.0)
        .map(|&v| decode(v).1)
        .min()
        .unwrap_or(0);
    let lifted: Vec<[BigInt; 3]> = points
        .iter()
        .map(|p| {
            p.map(|v| {
                let (m, e) = decode(v);
                if v == 0.0 {
                    BigInt::zero()
                } else {
                    m << (e - emin) as usize
                }
            })
        })
        .collect();
    let nn = BigInt::from(n);
    let mut s1: [BigInt; 3] = Default::default();
    let mut s2: [[BigInt; 3]; 3] = Default::default();
    for p in &lifted {
        for i in 0..3 {
            s1[i] += &p[i];
            for j in 0..3 {
                s2[i][j] += &p[i] * &p[j];
            }
        }
    }
    let m: [[BigInt; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| &nn * &s2[i][j] - &s1[i] * &s1[j]));
    let t = &m[0][0] + &m[1][1] + &m[2][2];
    let c = &m[0][0] * &m[1][1] - &m[0][1] * &m[0][1] + &m[0][0] * &m[2][2] - &m[0][2] * &m[0][2]
        + &m[1][1] * &m[2][2]
        - &m[1][2] * &m[1][2];
    let d = &m[0][0] * (&m[1][1] * &m[2][2] - &m[1][2] * &m[2][1])
        - &m[0][1] * (&m[1][0] * &m[2][2] - &m[1][2] * &m[2][0])
        + &m[0][2] * (&m[1][0] * &m[2][1] - &m[1][1] * &m[2][0]);
    if t.is_zero() {
        return Ok((0.0, 0.0));
    }
    // covariance = m * 2^(2 emin) / (n (n - 1))
    let to_cov = |mu: f64| mu * 2f64.powi(2 * emin) / (n * (n - 1)) as f64;

    let (tq, cq, dq) = (BigRational::from(t.clone()), BigRational::from(c.clone()), BigRational::from(d.clone()));
    let p = |x: &BigRational| -> BigRational { x * x * x - &tq * x * x + &cq * x - &dq };
    let dp = |x: &BigRational| -> BigRational { BigRational::from(BigInt::from(3)) * x * x - BigRational::from(BigInt::from(2)) * &tq * x + &cq };

    // Newton on the polynomial rescaled so that t' = 1.
    let sigma = t.to_f64().filter(|v| v.is_finite()).ok_or("trace out of f64 range")?;
    let scale = BigRational::from(t.clone());
    let c1 = (BigRational::from(c.clone()) / (&scale * &scale)).to_f64().unwrap();
    let d1 = (BigRational::from(d.clone()) / (&scale * &scale * &scale)).to_f64().unwrap();
    let mut x = 1.0f64;
    for _ in 0..200 {
        let f = x * x * x - x * x + c1 * x - d1;
        let g = 3.0 * x * x - 2.0 * x + c1;
        if g <= 0.0 {
            break;
        }
        let next = x - f / g;
        if !(next < x) {
            break;
        }
        x = next;
    }
    let mu = x * sigma;
    for delta in [1e-13, 1e-12, 1e-11, 1e-10] {
        let lo = rational(mu * (1.0 - delta));
        let hi = rational(mu * (1.0 + delta));
        let third = BigRational::from(t.clone()) / BigRational::from(BigInt::from(3));
        if !p(&lo).is_positive() && p(&hi).is_positive() && dp(&hi).is_positive() && hi >= third {
            return Ok((to_cov(mu), delta));
        }
    }
    Err(format!("could not certify the largest root near {mu:e}"))
}

/// Closed-form ridge on z-scored columns (population sd) and centered y,
/// minimizing `(1/2n)||y - b - Zw||^2 + (alpha/2)||w||^2`. Returns
/// (weights on the original scale, intercept).
pub fn ridge_oracle(x: &DMatrix<f64>, y: &DVector<f64>, alpha: f64) -> (Vec<f64>, f64) {
    let n = x.nrows() as f64;
    let means: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    let sds: Vec<f64> = x
        .column_iter()
        .zip(&means)
        .map(|(c, m)| (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    let z = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - means[j]) / sds[j]);
    let ym = y.sum() / n;
    let yc = y.map(|v| v - ym);
    let a = z.transpose() * &z / n + DMatrix::identity(x.ncols(), x.ncols()) * alpha;
    let w = a.lu().solve(&(z.transpose() * yc / n)).expect("nonsingular");
    let weights: Vec<f64> = w.iter().zip(&sds).map(|(w, s)| w / s).collect();
    let intercept = ym - weights.iter().zip(&means).map(|(w, m)| w * m).sum::<f64>();
    (weights, intercept)
}

/// Ordinary least squares with an intercept, via SVD.
pub fn ols_oracle(x: &DMatrix<f64>, y: &DVector<f64>) -> (Vec<f64>, f64) {
    let design = DMatrix::from_fn(x.nrows(), x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let beta = design.svd(true, true).solve(y, 1e-14).expect("svd");
    (beta.iter().skip(1).copied().collect(), beta[0])
}
