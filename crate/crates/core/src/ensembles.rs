//! Random sensing-matrix ensembles and matrix fitness metrics.
//!
//! Bernoulli entries are left unscaled in `{0, 1}`; normalization of the
//! SNR happens through `σ₀²`, which depends on `trace(A Aᵀ)`.
//!
//! `rip_constant` normalizes every column to unit ℓ₂ norm before
//! evaluating submatrix spectra. A Gaussian draw with variance `1/M` already
//! has columns of unit norm on average, so the normalization only removes
//! column-length jitter.

use crate::error::{Error, Result};
use crate::linalg::{dot, extreme_eigen_sym, Matrix};
use crate::random::{RandomStream, StreamId};
use crate::signals::{binomial, sample_support, KSubsets};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Default cap on `C(N, K)` for the exhaustive RIP constant.
pub const DEFAULT_RIP_BUDGET: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MatrixEnsemble {
    /// i.i.d. `N(0, variance)`; `None` means `1/M`.
    Gaussian { variance: Option<f64> },
    /// i.i.d. `{0, 1}` with success probability `p`.
    Bernoulli { p: f64 },
    /// i.i.d. `±amplitude`, equiprobable.
    Rademacher { amplitude: f64 },
    /// Orthonormalized Gaussian rows rescaled to norm `√(N/M)`.
    RowOrthogonal,
}

impl MatrixEnsemble {
    pub fn gaussian() -> Self {
        MatrixEnsemble::Gaussian { variance: None }
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        let e = MatrixEnsemble::Bernoulli { p };
        e.validate()?;
        Ok(e)
    }

    pub fn rademacher() -> Self {
        MatrixEnsemble::Rademacher { amplitude: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MatrixEnsemble::Gaussian { variance: Some(v) } if !(v > 0.0 && v.is_finite()) => Err(
                Error::InvalidParameter(format!("Gaussian variance must be positive, got {v}")),
            ),
            MatrixEnsemble::Bernoulli { p } if !(p > 0.0 && p < 1.0) => Err(
                Error::InvalidParameter(format!("Bernoulli p must lie in (0, 1), got {p}")),
            ),
            MatrixEnsemble::Rademacher { amplitude } if !(amplitude > 0.0 && amplitude.is_finite()) => {
                Err(Error::InvalidParameter(format!(
                    "Rademacher amplitude must be positive, got {amplitude}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MatrixEnsemble::Gaussian { .. } => "gaussian",
            MatrixEnsemble::Bernoulli { .. } => "bernoulli",
            MatrixEnsemble::Rademacher { .. } => "rademacher",
            MatrixEnsemble::RowOrthogonal => "row-orthogonal",
        }
    }

    /// Entry variance for the Gaussian family at a given `M`.
    pub fn gaussian_variance(&self, m: usize) -> Option<f64> {
        match *self {
            MatrixEnsemble::Gaussian { variance } => Some(variance.unwrap_or(1.0 / m as f64)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    pub matrix: Matrix,
    pub ensemble: MatrixEnsemble,
    pub seed: Option<StreamId>,
}

impl SensingMatrix {
    /// Wraps an arbitrary matrix (tests, files without a sidecar).
    pub fn from_matrix(matrix: Matrix, ensemble: MatrixEnsemble) -> Self {
        SensingMatrix {
            matrix,
            ensemble,
            seed: None,
        }
    }

    pub fn m(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n(&self) -> usize {
        self.matrix.cols()
    }
}

fn gaussian_fill(m: usize, n: usize, sd: f64, stream: &mut RandomStream) -> Matrix {
    let data: Vec<f64> = (0..m * n).map(|_| sd * stream.next_standard_normal()).collect();
    Matrix::from_vec(m, n, data).expect("sizes agree")
}

/// Draws an `M × N` matrix. Rows are filled in order, so each row is an
/// `N`-point sample from the entry distribution.
pub fn draw_matrix(
    ensemble: MatrixEnsemble,
    m: usize,
    n: usize,
    stream: &mut RandomStream,
) -> Result<SensingMatrix> {
    ensemble.validate()?;
    if m == 0 || n == 0 {
        return Err(Error::InvalidDimensions(format!("M={m}, N={n}")));
    }
    let seed = Some(stream.id().clone());
    let matrix = match ensemble {
        MatrixEnsemble::Gaussian { variance } => {
            let var = variance.unwrap_or(1.0 / m as f64);
            gaussian_fill(m, n, var.sqrt(), stream)
        }
        MatrixEnsemble::Bernoulli { p } => {
            let data = (0..m * n)
                .map(|_| if stream.next_uniform01() < p { 1.0 } else { 0.0 })
                .collect();
            Matrix::from_vec(m, n, data)?
        }
        MatrixEnsemble::Rademacher { amplitude } => {
            let data = (0..m * n)
                .map(|_| {
                    if stream.next_u64() >> 63 == 1 {
                        amplitude
                    } else {
                        -amplitude
                    }
                })
                .collect();
            Matrix::from_vec(m, n, data)?
        }
        MatrixEnsemble::RowOrthogonal => {
            if m > n {
                return Err(Error::InvalidDimensions(format!(
                    "row-orthogonal ensemble needs M <= N, got M={m}, N={n}"
                )));
            }
            let mut a = gaussian_fill(m, n, 1.0, stream);
            orthonormalize_rows(&mut a)?;
            a.scale((n as f64 / m as f64).sqrt());
            a
        }
    };
    Ok(SensingMatrix {
        matrix,
        ensemble,
        seed,
    })
}

/// Modified Gram–Schmidt over rows with one re-orthogonalization pass.
fn orthonormalize_rows(a: &mut Matrix) -> Result<()> {
    let (m, n) = (a.rows(), a.cols());
    for i in 0..m {
        for _pass in 0..2 {
            for j in 0..i {
                let (head, tail) = a.as_rows_split(j, i);
                let proj = dot(head, tail);
                for (t, h) in tail.iter_mut().zip(head.iter()) {
                    *t -= proj * h;
                }
            }
        }
        let norm = dot(a.row(i), a.row(i)).sqrt();
        if !(norm > 1e-12 * (n as f64).sqrt()) {
            return Err(Error::Singular {
                ratio: norm,
                threshold: 1e-12,
            });
        }
        a.row_mut(i).iter_mut().for_each(|v| *v /= norm);
    }
    Ok(())
}

impl Matrix {
    /// Borrow row `j` immutably and row `i` mutably (`j < i`).
    fn as_rows_split(&mut self, j: usize, i: usize) -> (&[f64], &mut [f64]) {
        debug_assert!(j < i);
        let cols = self.cols();
        let (lo, hi) = self.data_mut().split_at_mut(i * cols);
        (&lo[j * cols..(j + 1) * cols], &mut hi[..cols])
    }
}

/// `trace(A Aᵀ) = Σ a_{m,n}²`.
pub fn trace_gram(a: &SensingMatrix) -> f64 {
    a.matrix.frobenius_norm_sq()
}

/// Largest normalized inner product between two distinct columns.
pub fn coherence(a: &SensingMatrix) -> Result<f64> {
    let unit = a.matrix.map_columns_to_unit_norm()?;
    let cols = unit.transpose();
    let n = cols.rows();
    let mut mu: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            mu = mu.max(dot(cols.row(i), cols.row(j)).abs());
        }
    }
    Ok(mu.min(1.0))
}

fn support_deviation(gram: &Matrix, support: &[usize]) -> Result<f64> {
    let k = support.len();
    let mut sub = Matrix::zeros(k, k);
    for (r, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            sub[(r, c)] = gram[(i, j)];
        }
    }
    let (lo, hi) = extreme_eigen_sym(&sub)?;
    Ok((1.0 - lo).max(hi - 1.0))
}

fn unit_column_gram(a: &SensingMatrix) -> Result<Matrix> {
    Ok(a.matrix.map_columns_to_unit_norm()?.column_gram())
}

/// Restricted isometry constant of order K over all `C(N, K)` supports,
/// evaluated on the column-normalized matrix.
pub fn rip_constant(a: &SensingMatrix, k: usize) -> Result<f64> {
    rip_constant_with_budget(a, k, DEFAULT_RIP_BUDGET)
}

pub fn rip_constant_with_budget(a: &SensingMatrix, k: usize, budget: u128) -> Result<f64> {
    let n = a.n();
    if k == 0 || k > n {
        return Err(Error::InvalidDimensions(format!("K={k} for N={n}")));
    }
    let count = binomial(n, k);
    if count > budget {
        return Err(Error::BudgetExceeded {
            what: "exhaustive RIP constant",
            count,
            budget,
            suggest_sampling: true,
        });
    }
    let gram = unit_column_gram(a)?;
    let mut delta: f64 = 0.0;
    for support in KSubsets::new(n, k) {
        delta = delta.max(support_deviation(&gram, &support)?);
    }
    Ok(delta)
}

/// Lower bound on the RIP constant from `n_samples` uniformly drawn supports.
/// Samples are taken in stream order, so a longer run extends a shorter one.
pub fn monte_carlo_rip_lower_bound(
    a: &SensingMatrix,
    k: usize,
    n_samples: usize,
    stream: &mut RandomStream,
) -> Result<f64> {
    let n = a.n();
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidDimensions(format!("K={k} for N={n}")));
    }
    let gram = unit_column_gram(a)?;
    let mut delta: f64 = 0.0;
    for _ in 0..n_samples {
        let support = sample_support(n, k, stream)?;
        delta = delta.max(support_deviation(&gram, &support)?);
    }
    Ok(delta)
}

/// JSON sidecar written next to a matrix CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub kind: String,
    pub params: serde_json::Value,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: Option<StreamId>,
}

impl MatrixSidecar {
    pub fn describe(a: &SensingMatrix) -> Self {
        let params = match a.ensemble {
            MatrixEnsemble::Gaussian { variance } => {
                serde_json::json!({ "variance": variance.unwrap_or(1.0 / a.m() as f64) })
            }
            MatrixEnsemble::Bernoulli { p } => serde_json::json!({ "p": p }),
            MatrixEnsemble::Rademacher { amplitude } => {
                serde_json::json!({ "amplitude": amplitude })
            }
            MatrixEnsemble::RowOrthogonal => {
                serde_json::json!({ "row_norm": (a.n() as f64 / a.m() as f64).sqrt() })
            }
        };
        MatrixSidecar {
            kind: a.ensemble.name().to_string(),
            params,
            m: a.m(),
            n: a.n(),
            seed: a.seed.clone(),
        }
    }

    pub fn ensemble(&self) -> Result<MatrixEnsemble> {
        let num = |key: &str| {
            self.params
                .get(key)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| Error::Parse(format!("sidecar missing params.{key}")))
        };
        let e = match self.kind.as_str() {
            "gaussian" => MatrixEnsemble::Gaussian {
                variance: Some(num("variance")?),
            },
            "bernoulli" => MatrixEnsemble::Bernoulli { p: num("p")? },
            "rademacher" => MatrixEnsemble::Rademacher {
                amplitude: num("amplitude")?,
            },
            "row-orthogonal" => MatrixEnsemble::RowOrthogonal,
            other => return Err(Error::Parse(format!("unknown ensemble kind '{other}'"))),
        };
        e.validate()?;
        Ok(e)
    }
}

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 22);
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            // shortest representation that round-trips exactly
            write!(out, "{v:?}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Matrix::from_rows(&rows)
}

/// Writes `<stem>.csv` and `<stem>.json`.
pub fn save_matrix(a: &SensingMatrix, csv_path: &Path) -> Result<()> {
    std::fs::write(csv_path, matrix_to_csv(&a.matrix))?;
    let sidecar = MatrixSidecar::describe(a);
    std::fs::write(
        csv_path.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)? + "\n",
    )?;
    Ok(())
}

/// Reads a matrix CSV and its sidecar (if present; otherwise the ensemble is
/// recorded as Gaussian with the default variance).
pub fn load_matrix(csv_path: &Path) -> Result<SensingMatrix> {
    let matrix = matrix_from_csv(&std::fs::read_to_string(csv_path)?)?;
    let sidecar_path = csv_path.with_extension("json");
    if !sidecar_path.exists() {
        return Ok(SensingMatrix::from_matrix(matrix, MatrixEnsemble::gaussian()));
    }
    let sidecar: MatrixSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
    if sidecar.m != matrix.rows() || sidecar.n != matrix.cols() {
        return Err(Error::DimensionMismatch(format!(
            "sidecar says {}x{}, CSV holds {}x{}",
            sidecar.m,
            sidecar.n,
            matrix.rows(),
            matrix.cols()
        )));
    }
    Ok(SensingMatrix {
        matrix,
        ensemble: sidecar.ensemble()?,
        seed: sidecar.seed,
    })
}
