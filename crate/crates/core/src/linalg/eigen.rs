use super::Matrix;
use crate::error::{Error, Result};

const SYMMETRY_TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
/// ascending.
pub fn symmetric_eigenvalues(g: &Matrix) -> Result<Vec<f64>> {
    let n = g.rows();
    if g.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} is not square",
            n,
            g.cols()
        )));
    }
    let scale = g.max_abs().max(1.0);
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            asym = asym.max((g[(i, j)] - g[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let mut a = g.clone();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= f64::EPSILON * f64::EPSILON * diag || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Smallest and largest eigenvalue of a small symmetric matrix.
pub fn extreme_eigen_sym(g: &Matrix) -> Result<(f64, f64)> {
    let eig = symmetric_eigenvalues(g)?;
    match (eig.first(), eig.last()) {
        (Some(&lo), Some(&hi)) => Ok((lo, hi)),
        _ => Err(Error::InvalidDimensions("empty matrix".into())),
    }
}
