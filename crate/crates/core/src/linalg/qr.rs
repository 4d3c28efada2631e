use super::Matrix;
use crate::error::{Error, Result};

/// Rank threshold on `|r_kk| / |r_11|` of the column-pivoted factorization.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Minimizes `‖A v − y‖₂` via column-pivoted Householder QR.
///
/// The Gram matrix is never formed. Rank deficiency is detected on the
/// pivoted triangular factor, whose diagonal ratio tracks the singular value
/// ratio to within a modest factor.
pub fn least_squares(a: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    let (m, k) = (a.rows(), a.cols());
    if y.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "rhs of length {} for {m} rows",
            y.len()
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    if k > m {
        return Err(Error::Singular {
            ratio: 0.0,
            threshold: RANK_TOLERANCE,
        });
    }

    // column-major working copy
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| a.column(j)).collect();
    let mut rhs = y.to_vec();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let mut diag = vec![0.0; k];

    for j in 0..k {
        // pivot: largest remaining column norm, recomputed for stability
        for (c, n) in cols.iter().zip(norms.iter_mut()).skip(j) {
            *n = c[j..].iter().map(|v| v * v).sum();
        }
        let p = (j..k)
            .max_by(|&x, &y| norms[x].total_cmp(&norms[y]))
            .unwrap_or(j);
        cols.swap(j, p);
        norms.swap(j, p);
        perm.swap(j, p);

        let col = &mut cols[j];
        let alpha = col[j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if alpha == 0.0 {
            return Err(Error::Singular {
                ratio: 0.0,
                threshold: RANK_TOLERANCE,
            });
        }
        let beta = if col[j] > 0.0 { -alpha } else { alpha };
        // v = x - beta e1, stored in place
        col[j] -= beta;
        let vnorm_sq: f64 = col[j..].iter().map(|v| v * v).sum();
        let v: Vec<f64> = col[j..].to_vec();
        diag[j] = beta;

        let reflect = |target: &mut [f64]| {
            let s: f64 = v.iter().zip(target.iter()).map(|(a, b)| a * b).sum();
            let f = 2.0 * s / vnorm_sq;
            for (t, vi) in target.iter_mut().zip(&v) {
                *t -= f * vi;
            }
        };
        for c in cols.iter_mut().skip(j + 1) {
            reflect(&mut c[j..]);
        }
        reflect(&mut rhs[j..]);
    }

    let lead = diag[0].abs();
    let ratio = diag.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min) / lead;
    if !(ratio >= RANK_TOLERANCE) {
        return Err(Error::Singular {
            ratio,
            threshold: RANK_TOLERANCE,
        });
    }

    // back substitution on R z = Qᵀ y; R above the diagonal lives in cols[c][r]
    let mut z = vec![0.0; k];
    for r in (0..k).rev() {
        let mut s = rhs[r];
        for c in r + 1..k {
            s -= cols[c][r] * z[c];
        }
        z[r] = s / diag[r];
    }
    let mut out = vec![0.0; k];
    for (j, &orig) in perm.iter().enumerate() {
        out[orig] = z[j];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matvec;

    #[test]
    fn mean_of_entries() {
        let a = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let v = least_squares(&a, &[1.0, 3.0]).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_columns_exact() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = Matrix::from_rows(&[vec![s, s], vec![s, -s], vec![0.0, 0.0]]).unwrap();
        let coeffs = [3.0, -1.5];
        let y = matvec(&a, &coeffs).unwrap();
        let v = least_squares(&a, &y).unwrap();
        for (got, want) in v.iter().zip(coeffs) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn square_system_is_solved() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let v = least_squares(&a, &[3.0, 5.0]).unwrap();
        assert!((v[0] - 0.8).abs() < 1e-14 && (v[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_is_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert!(matches!(
            least_squares(&a, &[1.0, 2.0, 3.0]),
            Err(Error::Singular { .. })
        ));
        let wide = Matrix::zeros(1, 2);
        assert!(least_squares(&wide, &[1.0]).is_err());
    }

    #[test]
    fn rhs_length_checked() {
        let a = Matrix::identity(2);
        assert!(matches!(
            least_squares(&a, &[1.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
