//! Dense real matrices and the handful of kernels the analysis needs:
//! products, orthogonal least squares and small symmetric eigenproblems.

mod eigen;
mod qr;

pub use eigen::{extreme_eigen_sym, symmetric_eigenvalues};
pub use qr::least_squares;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite entry at flat index {pos}"
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Matrix::from_vec(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.data[m * self.cols..(m + 1) * self.cols]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.cols..(m + 1) * self.cols]
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        (0..self.rows).map(|m| self[(m, n)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for m in 0..self.rows {
            for n in 0..self.cols {
                t.data[n * self.rows + m] = self.data[m * self.cols + n];
            }
        }
        t
    }

    /// Submatrix made of the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Matrix> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.cols) {
            return Err(Error::DimensionMismatch(format!(
                "column {bad} out of range for {} columns",
                self.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, columns.len());
        for m in 0..self.rows {
            let src = self.row(m);
            for (k, &c) in columns.iter().enumerate() {
                out.data[m * columns.len() + k] = src[c];
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `A Aᵀ` (rows × rows), exploiting symmetry.
    pub fn outer_gram(&self) -> Matrix {
        let mut g = Matrix::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in i..self.rows {
                let v = dot(self.row(i), self.row(j));
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// `Aᵀ A` (cols × cols).
    pub fn column_gram(&self) -> Matrix {
        self.transpose().outer_gram()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn map_columns_to_unit_norm(&self) -> Result<Matrix> {
        let mut norms = vec![0.0; self.cols];
        for m in 0..self.rows {
            for (acc, v) in norms.iter_mut().zip(self.row(m)) {
                *acc += v * v;
            }
        }
        if let Some(zero) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::ZeroColumn(zero));
        }
        let inv: Vec<f64> = norms.iter().map(|n| 1.0 / n.sqrt()).collect();
        let mut out = self.clone();
        for m in 0..self.rows {
            for (v, s) in out.row_mut(m).iter_mut().zip(&inv) {
                *v *= s;
            }
        }
        Ok(out)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm_sq(v: &[f64]) -> f64 {
    dot(v, v)
}

/// `A v`.
pub fn matvec(a: &Matrix, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} for a matrix with {} columns",
            v.len(),
            a.cols()
        )));
    }
    Ok((0..a.rows()).map(|m| dot(a.row(m), v)).collect())
}

/// Neumaier-compensated sum; insensitive to the magnitude ordering of terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_identity() {
        let i = Matrix::identity(3);
        assert_eq!(matvec(&i, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn matvec_hand_example() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, -1.0]]).unwrap();
        assert_eq!(matvec(&a, &[0.0, 0.0, 2.0]).unwrap(), vec![2.0, -2.0]);
    }

    #[test]
    fn matvec_zero_matrix() {
        let z = Matrix::zeros(4, 3);
        assert_eq!(matvec(&z, &[5.0, -1.0, 2.5]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            matvec(&a, &[1.0, 2.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![1.0]).is_err());
    }

    #[test]
    fn grams_agree_with_matmul() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 4.0]]).unwrap();
        let at = a.transpose();
        assert_eq!(a.outer_gram(), a.matmul(&at).unwrap());
        assert_eq!(a.column_gram(), at.matmul(&a).unwrap());
    }

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f64> = (0..11).map(|i| i as f64).collect();
        assert_eq!(dot(&a, &a), (0..11).map(|i| (i * i) as f64).sum::<f64>());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s: CompensatedSum = [1e16, 1.0, -1e16, 1.0].into_iter().collect();
        assert_eq!(s.value(), 2.0);
    }
}
