//! Population moments of `β = ‖A x‖²` over all `C(N, K)` supports when every
//! nonzero value equals `c`.
//!
//! With `G = AᵀA` and `1_S` the support indicator, `β = c² 1_Sᵀ G 1_S`.
//! Averaging over uniform supports needs `P(i₁..i_r all in S) = (K)_r/(N)_r`
//! for distinct indices, so sums over index tuples are split by their
//! coincidence pattern (a set partition) and recovered from unrestricted
//! sums by Möbius inversion on the partition lattice.

use super::sweeps::ensure_noise;
use crate::ensembles::SensingMatrix;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq, Matrix};
use crate::signals::binomial;
use crate::snr::{sigma0_sq, NoiseSpec};
use crate::stats::SnrStats;

/// Support-independent sums of `G = AᵀA`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportAggregates {
    pub n: usize,
    /// `trace G`.
    pub trace: f64,
    /// `1ᵀ G 1`.
    pub total: f64,
    /// `‖G‖_F²`.
    pub frobenius: f64,
    /// `Σ G_ii²`.
    pub diag_sq: f64,
    /// `Σ (G 1)_i²`.
    pub row_sum_sq: f64,
    /// `Σ G_ii (G 1)_i`.
    pub diag_row_sum: f64,
}

impl SupportAggregates {
    pub fn from_matrix(a: &Matrix) -> Self {
        let (m, n) = (a.rows(), a.cols());
        let mut col_norms = vec![0.0; n];
        let mut r = vec![0.0; m];
        for (mi, rm) in r.iter_mut().enumerate() {
            let row = a.row(mi);
            *rm = row.iter().sum();
            for (c, &v) in col_norms.iter_mut().zip(row) {
                *c += v * v;
            }
        }
        let mut g = vec![0.0; n];
        for (mi, &rm) in r.iter().enumerate() {
            for (gi, &v) in g.iter_mut().zip(a.row(mi)) {
                *gi += v * rm;
            }
        }
        let frobenius = if m <= n {
            let mut gram = vec![0.0; m * m];
            // SAFETY: `a` is m×n row-major and `gram` holds m×m; the strides
            // describe A·Aᵀ within those buffers.
            unsafe {
                matrixmultiply::dgemm(
                    m,
                    n,
                    m,
                    1.0,
                    a.as_slice().as_ptr(),
                    n as isize,
                    1,
                    a.as_slice().as_ptr(),
                    1,
                    n as isize,
                    0.0,
                    gram.as_mut_ptr(),
                    m as isize,
                    1,
                );
            }
            norm_sq(&gram)
        } else {
            a.column_gram().frobenius_norm_sq()
        };
        SupportAggregates {
            n,
            trace: col_norms.iter().sum(),
            total: norm_sq(&r),
            frobenius,
            diag_sq: norm_sq(&col_norms),
            row_sum_sq: norm_sq(&g),
            diag_row_sum: dot(&col_norms, &g),
        }
    }

    /// `E β / c²` and `E β² / c⁴` over uniform K-supports.
    pub fn beta_moments(&self, k: usize) -> (f64, f64) {
        let pi = inclusion_probabilities(self.n, k);
        let first = self.total * pi[2] + self.trace * (pi[1] - pi[2]);
        let second = partitions4()
            .iter()
            .map(|sigma| self.tuple_sum(sigma) * lattice_weight(sigma, &pi))
            .sum();
        (first, second)
    }

    /// Sum of `G_{t0 t1} G_{t2 t3}` over index tuples constant on the blocks of `sigma`.
    fn tuple_sum(&self, sigma: &[usize; 4]) -> f64 {
        let blocks = block_count(sigma);
        let same = |a: usize, b: usize| sigma[a] == sigma[b];
        match blocks {
            4 => self.total * self.total,
            1 => self.diag_sq,
            3 if same(0, 1) || same(2, 3) => self.trace * self.total,
            3 => self.row_sum_sq,
            2 if same(0, 1) && same(2, 3) => self.trace * self.trace,
            2 if (same(0, 2) && same(1, 3)) || (same(0, 3) && same(1, 2)) => self.frobenius,
            _ => self.diag_row_sum,
        }
    }
}

/// `π_r = (K)_r / (N)_r` for r = 0..=4.
fn inclusion_probabilities(n: usize, k: usize) -> [f64; 5] {
    let mut pi = [1.0; 5];
    for r in 1..5 {
        pi[r] = if r > k {
            0.0
        } else {
            pi[r - 1] * (k - r + 1) as f64 / (n - r + 1) as f64
        };
    }
    pi
}

/// The 15 set partitions of four positions as restricted growth strings.
fn partitions4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(15);
    for b in 0..2 {
        for c in 0..=b + 1 {
            let max_c = b.max(c);
            for d in 0..=max_c + 1 {
                out.push([0, b, c, d]);
            }
        }
    }
    out
}

fn block_count(p: &[usize; 4]) -> usize {
    p.iter().max().map_or(0, |m| m + 1)
}

/// `Σ_{κ ≤ σ} μ(κ, σ) π_{|κ|}`, with `μ(κ, σ) = Π_B (−1)^{n_B−1} (n_B−1)!`
/// over blocks `B` of `σ`, `n_B` counting the blocks of `κ` inside `B`.
fn lattice_weight(sigma: &[usize; 4], pi: &[f64; 5]) -> f64 {
    let mut w = 0.0;
    for kappa in partitions4() {
        let refines = (0..4).all(|a| (0..4).all(|b| kappa[a] != kappa[b] || sigma[a] == sigma[b]));
        if !refines {
            continue;
        }
        let mut mu = 1.0;
        for block in 0..block_count(sigma) {
            let mut inner: Vec<usize> = (0..4).filter(|&a| sigma[a] == block).map(|a| kappa[a]).collect();
            inner.sort_unstable();
            inner.dedup();
            let nb = inner.len();
            let factorial: f64 = (1..nb).map(|x| x as f64).product();
            mu *= if nb % 2 == 1 { factorial } else { -factorial };
        }
        w += mu * pi[block_count(&kappa)];
    }
    w
}

/// Mean and unbiased variance of `η_O` over every K-support for equal
/// magnitudes `c`, without enumerating supports.
///
/// The variance uses the `C/(C−1)` correction so it agrees with
/// [`SnrStats::from_values`] applied to the exhaustive sample.
pub fn exact_equal_magnitude_stats(
    a: &SensingMatrix,
    k: usize,
    magnitude: f64,
    noise: &NoiseSpec,
) -> Result<SnrStats> {
    ensure_noise(a, noise)?;
    if k == 0 || k > a.n() {
        return Err(Error::InvalidParameter(format!(
            "K={k} must lie in [1, N={}]",
            a.n()
        )));
    }
    let agg = SupportAggregates::from_matrix(&a.matrix);
    Ok(stats_from_aggregates(&agg, k, magnitude, a.m(), sigma0_sq(a, noise)))
}

pub(crate) fn stats_from_aggregates(
    agg: &SupportAggregates,
    k: usize,
    magnitude: f64,
    m: usize,
    sigma0_sq: f64,
) -> SnrStats {
    let (e1, e2) = agg.beta_moments(k);
    let c2 = magnitude * magnitude;
    let scale = c2 / (m as f64 * sigma0_sq);
    let count = binomial(agg.n, k);
    let mean = e1 * scale;
    let variance = if count < 2 {
        0.0
    } else {
        let c = count as f64;
        (e2 - e1 * e1).max(0.0) * scale * scale * c / (c - 1.0)
    };
    SnrStats::from_moments(count.min(u64::MAX as u128) as u64, mean, variance)
}
