//! Closed-form eigenvalues of symmetric 3×3 matrices.

use crate::error::{Error, Result};

pub type Sym3 = [[f64; 3]; 3];

const SYMMETRY_TOL: f64 = 1e-9;

fn check_symmetric(m: &Sym3) -> Result<f64> {
    let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        if (m[i][j] - m[j][i]).abs() > SYMMETRY_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "matrix is not symmetric: m[{i}][{j}] = {} vs m[{j}][{i}] = {}",
                m[i][j], m[j][i]
            )));
        }
    }
    Ok(scale)
}

/// All three eigenvalues in descending order, via the trigonometric
/// solution of the characteristic cubic.
pub fn sym3_eigenvalues(m: &Sym3) -> Result<[f64; 3]> {
    let scale = check_symmetric(m)?;
    if scale == 0.0 {
        return Ok([0.0; 3]);
    }
    // Work on A / scale so the squares below cannot overflow.
    let a = |i: usize, j: usize| 0.5 * (m[i][j] + m[j][i]) / scale;
    let (a00, a11, a22) = (a(0, 0), a(1, 1), a(2, 2));
    let (a01, a02, a12) = (a(0, 1), a(0, 2), a(1, 2));

    let off = a01 * a01 + a02 * a02 + a12 * a12;
    let q = (a00 + a11 + a22) / 3.0;
    let (d0, d1, d2) = (a00 - q, a11 - q, a22 - q);
    let p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * off;
    if p2 == 0.0 {
        return Ok([q * scale; 3]);
    }
    if off == 0.0 {
        let mut d = [a00, a11, a22];
        d.sort_by(|x, y| y.total_cmp(x));
        return Ok(d.map(|v| v * scale));
    }
    let p = (p2 / 6.0).sqrt();
    // det((A - qI) / p) / 2
    let (b00, b11, b22) = (d0 / p, d1 / p, d2 / p);
    let (b01, b02, b12) = (a01 / p, a02 / p, a12 / p);
    let det = b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02)
        + b02 * (b01 * b12 - b11 * b02);
    let r = (0.5 * det).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;

    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    let e2 = 3.0 * q - e1 - e3;
    let mut e = [e1, e2, e3];
    e.sort_by(|x, y| y.total_cmp(x));
    Ok(e.map(|v| v * scale))
}

/// Largest eigenvalue of a symmetric 3×3 matrix.
pub fn sym3_eig_max(m: &Sym3) -> Result<f64> {
    Ok(sym3_eigenvalues(m)?[0])
}
