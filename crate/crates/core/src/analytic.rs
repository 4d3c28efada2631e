//! Closed-form output-SNR laws and coefficients of variation.
//!
//! Gaussian `A` (entries `N(0, 1/M)`): conditional on the nonzero values,
//! `η_O` is Gamma with shape `M/2` and scale `2‖x‖²/(M²σ₀²)`. The scale is
//! `2c` for `c·χ²_L` (a chi-square with `L` degrees of freedom has scale 2).
//!
//! Bernoulli and Rademacher `A`: with equal nonzero magnitudes each
//! `d_m = Σ_k a_{m,k} x_k` is a scaled Binomial (resp. a sum of signs), so
//! the moments of `d_m²` have closed forms. The same moments are available
//! by exhaustive enumeration of the `2^K` entry patterns; the two routes are
//! kept separate so either can check the other.
//!
//! Power conventions differ between the two discrete formulas and are kept
//! apart by name: the Bernoulli moments take the *total* power `‖x‖²`, the
//! Rademacher moments take the *per-entry* power `x_k²`.

use crate::ensembles::MatrixEnsemble;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Largest `K` accepted by the `2^K` pattern enumerations.
pub const MAX_ENUMERATION_K: usize = 24;

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, nine terms).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection keeps the series in its accurate range
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS_COEFFS[0];
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // power series
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut denom = a;
        for _ in 0..100_000 {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (sum.ln() + log_prefix).exp().min(1.0)
    } else {
        // continued fraction for Q(a, x), modified Lentz
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..100_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (1.0 - (h.ln() + log_prefix).exp()).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub scale: f64,
}

impl GammaParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Gamma parameters must be positive, got shape {shape}, scale {scale}"
            )));
        }
        Ok(GammaParams { shape, scale })
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }
}

fn check_support(x: f64) -> Result<()> {
    if x < 0.0 || x.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "Gamma density evaluated at {x} < 0"
        )));
    }
    Ok(())
}

pub fn gamma_pdf(params: &GammaParams, x: f64) -> Result<f64> {
    check_support(x)?;
    let GammaParams { shape: k, scale } = *params;
    if x == 0.0 {
        return Ok(match k.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => 1.0 / scale,
            _ => 0.0,
        });
    }
    Ok(((k - 1.0) * x.ln() - x / scale - ln_gamma(k) - k * scale.ln()).exp())
}

pub fn gamma_cdf(params: &GammaParams, x: f64) -> Result<f64> {
    check_support(x)?;
    Ok(regularized_lower_gamma(params.shape, x / params.scale))
}

/// Conditional law of `η_O` for Gaussian `A` with entry variance `1/M`.
pub fn gaussian_conditional_snr_dist(
    m: usize,
    x_norm_sq: f64,
    sigma0_sq: f64,
) -> Result<GammaParams> {
    gaussian_conditional_snr_dist_with_variance(m, x_norm_sq, sigma0_sq, 1.0 / m as f64)
}

/// As [`gaussian_conditional_snr_dist`] for an arbitrary entry variance `v`:
/// `β = v‖x‖² χ²_M`, so `η_O ~ Γ(M/2, 2v‖x‖²/(M σ₀²))`.
pub fn gaussian_conditional_snr_dist_with_variance(
    m: usize,
    x_norm_sq: f64,
    sigma0_sq: f64,
    entry_variance: f64,
) -> Result<GammaParams> {
    if m == 0 {
        return Err(Error::InvalidParameter("M must be at least 1".into()));
    }
    if !(x_norm_sq > 0.0 && sigma0_sq > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need ‖x‖² > 0 and σ₀² > 0, got {x_norm_sq} and {sigma0_sq}"
        )));
    }
    let mf = m as f64;
    GammaParams::new(mf / 2.0, 2.0 * entry_variance * x_norm_sq / (mf * sigma0_sq))
}

/// Coefficient of variation of `η_O` across supports.
///
/// Gaussian: `√(2/M)` for any nonzero values. Bernoulli and Rademacher
/// formulas hold for equal magnitudes only (see [`cv_requires_equal_magnitudes`]).
pub fn analytic_cv(ensemble: &MatrixEnsemble, m: usize, k: usize) -> Result<f64> {
    ensemble.validate()?;
    if m == 0 || k == 0 {
        return Err(Error::InvalidParameter(format!("M={m}, K={k}")));
    }
    let (mf, kf) = (m as f64, k as f64);
    match *ensemble {
        MatrixEnsemble::Gaussian { .. } => Ok((2.0 / mf).sqrt()),
        MatrixEnsemble::Bernoulli { p } => {
            let num = (1.0 + 2.0 * p * (kf - 1.0) * ((2.0 * kf - 3.0) * p + 3.0)) * (1.0 - p);
            let den = kf * ((kf - 1.0) * p + 1.0).powi(2) * p;
            Ok((num / den / mf).sqrt())
        }
        MatrixEnsemble::Rademacher { .. } => Ok((2.0 * (kf - 1.0) / (mf * kf)).sqrt()),
        MatrixEnsemble::RowOrthogonal => Err(Error::InvalidParameter(
            "no closed-form c_v for the row-orthogonal ensemble".into(),
        )),
    }
}

pub fn cv_requires_equal_magnitudes(ensemble: &MatrixEnsemble) -> bool {
    !matches!(ensemble, MatrixEnsemble::Gaussian { .. })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePmf {
    pub atoms: Vec<(f64, f64)>,
}

impl DiscretePmf {
    /// Sorts atoms by value and merges exactly equal values.
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        DiscretePmf { atoms: merged }
    }

    pub fn total_probability(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// `E[f(D)]`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|&(v, p)| p * f(v)).sum()
    }

    /// Mean and variance of `D²`.
    pub fn square_moments(&self) -> (f64, f64) {
        let m2 = self.expect(|v| v * v);
        let m4 = self.expect(|v| v.powi(4));
        (m2, m4 - m2 * m2)
    }
}

fn check_enumeration(k: usize) -> Result<()> {
    if k > MAX_ENUMERATION_K {
        return Err(Error::BudgetExceeded {
            what: "2^K pattern enumeration",
            count: 1u128 << k.min(127),
            budget: 1u128 << MAX_ENUMERATION_K,
            suggest_sampling: false,
        });
    }
    Ok(())
}

/// Exact law of `d_m = Σ_k b_k x_k` for i.i.d. `b_k ∈ {0,1}`, `P(b_k=1) = p`.
pub fn bernoulli_dm_pmf(k: usize, p: f64, magnitudes: &[f64]) -> Result<DiscretePmf> {
    check_enumeration(k)?;
    if magnitudes.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} magnitudes for K={k}",
            magnitudes.len()
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("p must lie in (0,1), got {p}")));
    }
    let atoms = (0u32..1 << k)
        .map(|pattern| {
            let ones = pattern.count_ones() as i32;
            let value: f64 = (0..k)
                .filter(|&j| pattern >> j & 1 == 1)
                .map(|j| magnitudes[j])
                .sum();
            (value, p.powi(ones) * (1.0 - p).powi(k as i32 - ones))
        })
        .collect();
    Ok(DiscretePmf::from_atoms(atoms))
}

/// Exact law of `d_m = Σ_k s_k x_k` for i.i.d. equiprobable signs `s_k`.
pub fn rademacher_dm_pmf(magnitudes: &[f64]) -> Result<DiscretePmf> {
    let k = magnitudes.len();
    check_enumeration(k)?;
    let prob = 0.5f64.powi(k as i32);
    let atoms = (0u32..1 << k)
        .map(|pattern| {
            let value: f64 = (0..k)
                .map(|j| {
                    if pattern >> j & 1 == 1 {
                        magnitudes[j]
                    } else {
                        -magnitudes[j]
                    }
                })
                .sum();
            (value, prob)
        })
        .collect();
    Ok(DiscretePmf::from_atoms(atoms))
}

/// Mean and variance of `d_m²` for a Bernoulli row and equal magnitudes
/// `x_k = √(P_s/K)`, with `P_s = ‖x‖²` the total power.
pub fn bernoulli_dm2_moments(k: usize, p: f64, total_power: f64) -> (f64, f64) {
    let kf = k as f64;
    let mean = ((kf - 1.0) * p + 1.0) * p * total_power;
    let var = (1.0 + 2.0 * p * (kf - 1.0) * ((2.0 * kf - 3.0) * p + 3.0)) / kf
        * (1.0 - p)
        * p
        * total_power
        * total_power;
    (mean, var)
}

/// Mean and variance of `d_m²` for a Rademacher row and equal magnitudes
/// with `x_k² = per_entry_power`.
pub fn rademacher_dm2_moments(k: usize, per_entry_power: f64) -> (f64, f64) {
    let kf = k as f64;
    (
        kf * per_entry_power,
        2.0 * kf * (kf - 1.0) * per_entry_power * per_entry_power,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentRegime {
    Conditional,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticMoments {
    pub mean: f64,
    pub variance: f64,
    pub cv: f64,
    pub ensemble: String,
    pub regime: MomentRegime,
    /// The variance is exact only when `‖x‖²` is deterministic.
    pub variance_exact_for_equal_magnitudes_only: bool,
}

/// Marginal moments for Gaussian `A`: mean `ϑ = P_s/(Mσ₀²)`, variance
/// `(2/M)ϑ²`, c_v `√(2/M)`.
pub fn marginal_gaussian_moments(m: usize, total_power: f64, sigma0_sq: f64) -> Result<AnalyticMoments> {
    if m == 0 || !(total_power > 0.0) || !(sigma0_sq > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need positive M, P_s, σ₀²; got {m}, {total_power}, {sigma0_sq}"
        )));
    }
    let mf = m as f64;
    let theta = total_power / (mf * sigma0_sq);
    let variance = 2.0 / mf * theta * theta;
    Ok(AnalyticMoments {
        mean: theta,
        variance,
        cv: variance.sqrt() / theta,
        ensemble: "gaussian".into(),
        regime: MomentRegime::Marginal,
        variance_exact_for_equal_magnitudes_only: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        // ln(10!) = ln Γ(11)
        let ln_fact: f64 = (1..=10).map(|i| (i as f64).ln()).sum();
        assert!((ln_gamma(11.0) - ln_fact).abs() < 1e-12);
    }

    #[test]
    fn exponential_special_case() {
        let g = GammaParams::new(1.0, 2.0).unwrap();
        assert_eq!(gamma_pdf(&g, 0.0).unwrap(), 0.5);
        let c = gamma_cdf(&g, 2.0).unwrap();
        assert!((c - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
        assert!(gamma_pdf(&g, -1.0).is_err());
        assert!(gamma_cdf(&g, -1.0).is_err());
    }

    #[test]
    fn pdf_at_zero() {
        assert_eq!(gamma_pdf(&GammaParams::new(0.5, 1.0).unwrap(), 0.0).unwrap(), f64::INFINITY);
        assert_eq!(gamma_pdf(&GammaParams::new(3.0, 1.0).unwrap(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn cdf_edges() {
        let g = GammaParams::new(4.0, 0.5).unwrap();
        assert_eq!(gamma_cdf(&g, 0.0).unwrap(), 0.0);
        assert!((gamma_cdf(&g, 1e4).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn conditional_dist_examples() {
        let g = gaussian_conditional_snr_dist(2, 1.0, 1.0).unwrap();
        assert_eq!(g, GammaParams::new(1.0, 0.5).unwrap());
        assert_eq!(g.mean(), 0.5);
        for (m, xn, s0) in [(7, 2.0, 0.3), (100, 0.5, 4.0), (1, 1.0, 1.0)] {
            let g = gaussian_conditional_snr_dist(m, xn, s0).unwrap();
            assert!((g.mean() - xn / (m as f64 * s0)).abs() < 1e-15);
            assert!((g.variance() / g.mean().powi(2) - 2.0 / m as f64).abs() < 1e-14);
        }
        assert!(gaussian_conditional_snr_dist(0, 1.0, 1.0).is_err());
    }

    #[test]
    fn gaussian_cv_values() {
        let g = MatrixEnsemble::gaussian();
        assert!((analytic_cv(&g, 100, 3).unwrap() - 0.02f64.sqrt()).abs() < 1e-15);
        assert!((analytic_cv(&g, 100, 3).unwrap() - 0.141421).abs() < 5e-7);
        for m in [1, 7, 30, 513] {
            let r = analytic_cv(&g, 2 * m, 1).unwrap() / analytic_cv(&g, m, 1).unwrap();
            assert!((r - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        }
    }

    #[test]
    fn rademacher_cv_k1_is_zero() {
        assert_eq!(analytic_cv(&MatrixEnsemble::rademacher(), 50, 1).unwrap(), 0.0);
    }

    #[test]
    fn bernoulli_cv_k1() {
        for m in [1, 10, 64] {
            let cv = analytic_cv(&MatrixEnsemble::bernoulli(0.5).unwrap(), m, 1).unwrap();
            assert!((cv - (1.0 / m as f64).sqrt()).abs() < 1e-15);
            // enumeration over the two patterns
            let pmf = bernoulli_dm_pmf(1, 0.5, &[1.0]).unwrap();
            let (mean, var) = pmf.square_moments();
            assert!((cv - (var / (m as f64 * mean * mean)).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn row_orthogonal_has_no_formula() {
        assert!(analytic_cv(&MatrixEnsemble::RowOrthogonal, 10, 2).is_err());
    }

    #[test]
    fn bernoulli_pmf_examples() {
        let pmf = bernoulli_dm_pmf(1, 0.3, &[2.0]).unwrap();
        assert_eq!(pmf.atoms.len(), 2);
        assert_eq!(pmf.atoms[0], (0.0, 0.7));
        assert!((pmf.atoms[1].0 - 2.0).abs() < 1e-15 && (pmf.atoms[1].1 - 0.3).abs() < 1e-15);
        let c = 0.5f64.sqrt();
        let pmf = bernoulli_dm_pmf(2, 0.5, &[c, c]).unwrap();
        assert_eq!(pmf.atoms.len(), 3);
        let (m2, _) = pmf.square_moments();
        assert!((m2 - 0.75).abs() < 1e-15);
        assert!(bernoulli_dm_pmf(25, 0.5, &[1.0; 25]).is_err());
        assert!(bernoulli_dm_pmf(2, 0.5, &[1.0]).is_err());
    }

    #[test]
    fn pmf_probabilities_sum_to_one() {
        for k in 0..12 {
            for p in [0.05, 0.3, 0.77] {
                let mags: Vec<f64> = (0..k).map(|i| 0.3 + i as f64 * 0.17).collect();
                let pmf = bernoulli_dm_pmf(k, p, &mags).unwrap();
                assert!((pmf.total_probability() - 1.0).abs() < 1e-12);
                let pmf = rademacher_dm_pmf(&mags).unwrap();
                assert!((pmf.total_probability() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bernoulli_moment_examples() {
        let (m, v) = bernoulli_dm2_moments(1, 0.5, 1.0);
        assert!((m - 0.5).abs() < 1e-15 && (v - 0.25).abs() < 1e-15);
        let (m, v) = bernoulli_dm2_moments(2, 0.5, 1.0);
        assert!((m - 0.75).abs() < 1e-15 && (v - 0.5625).abs() < 1e-15);
        let (_, v) = bernoulli_dm2_moments(5, 1.0, 1.0);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn rademacher_moment_examples() {
        assert_eq!(rademacher_dm2_moments(1, 0.7), (0.7, 0.0));
        assert_eq!(rademacher_dm2_moments(2, 1.0), (2.0, 4.0));
        assert_eq!(rademacher_dm2_moments(3, 1.0), (3.0, 12.0));
        // d² over the sign patterns of K=2: {4, 0, 0, 4}
        let (m, v) = rademacher_dm_pmf(&[1.0, 1.0]).unwrap().square_moments();
        assert_eq!((m, v), (2.0, 4.0));
    }

    #[test]
    fn marginal_moments() {
        let a = marginal_gaussian_moments(30, 2.0, 0.5).unwrap();
        assert!((a.cv * 30f64.sqrt() - 2f64.sqrt()).abs() < 1e-14);
        assert!((a.mean - 2.0 / 15.0).abs() < 1e-15);
        assert_eq!(a.regime, MomentRegime::Marginal);
        let b = marginal_gaussian_moments(30, 17.0, 0.01).unwrap();
        assert!((a.cv - b.cv).abs() < 1e-15);
        assert!((b.variance - 2.0 / 30.0 * b.mean * b.mean).abs() < 1e-12 * b.variance);
    }
}
