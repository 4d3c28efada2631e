//! Monte Carlo harness: SNR spread over supports, the normalized RMSE
//! sweep over N and the `c_v·√M` sweep over K.

mod exact;
mod output;
mod sweeps;

pub use exact::{exact_equal_magnitude_stats, SupportAggregates};
pub use output::{write_curves, Curve, CurveAxis, CurveManifest};
pub use sweeps::{cv_vs_k_sweep, rmse_sweep, CvCell, CvTable, RmseRow, RmseTable};

use crate::analytic::{gamma_cdf, GammaParams};
use crate::ensembles::{MatrixEnsemble, SensingMatrix};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::random::RandomStream;
use crate::signals::{
    binomial, draw_magnitudes, enumerate_supports, sample_support, MagnitudeKind, MagnitudeModel,
    DEFAULT_ENUMERATION_BUDGET,
};
use crate::snr::{sigma0_sq, NoiseSpec};
use crate::stats::{ks_distance, SnrStats};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SUPPORT_SAMPLES: usize = 2000;
pub const HISTOGRAM_BINS: usize = 50;

/// Where the supports of a frequency distribution come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SupportSource {
    /// All `C(N, K)` supports in lexicographic order.
    Exhaustive,
    /// `count` uniform draws, with replacement across draws.
    Sampled { count: usize },
}

/// How a sweep estimates the per-matrix `c_v^e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SupportPlan {
    /// Closed-form population moments over all supports (equal magnitudes only).
    ExactMoments,
    /// Every support, evaluated one by one.
    Exhaustive,
    /// Uniformly sampled supports; falls back to enumeration when
    /// `C(N, K) ≤ count`.
    Sampled { count: usize },
}

/// Pairing of random magnitudes with supports in the `c_v` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MagnitudePairing {
    /// One magnitude draw per matrix realization, shared by all supports.
    PerRealization,
    /// A fresh magnitude draw for every sampled support.
    PerSupport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_values: Vec<usize>,
    pub rho_values: Vec<f64>,
    pub k_values: Vec<usize>,
    pub ensembles: Vec<MatrixEnsemble>,
    pub models: Vec<MagnitudeKind>,
    pub realizations: usize,
    pub supports: SupportPlan,
    pub pairing: MagnitudePairing,
    pub noise: NoiseSpec,
    pub total_power: f64,
    pub master_seed: u64,
}

/// `M = round(ρN)`.
pub fn measurements_for(n: usize, rho: f64) -> usize {
    (rho * n as f64).round() as usize
}

impl ExperimentConfig {
    fn default_ensembles() -> Vec<MatrixEnsemble> {
        vec![
            MatrixEnsemble::gaussian(),
            MatrixEnsemble::Bernoulli { p: 0.5 },
            MatrixEnsemble::rademacher(),
        ]
    }

    /// Normalized RMSE sweep: K=2, equal magnitudes, N from 300 to 1900.
    pub fn rmse_default() -> Self {
        ExperimentConfig {
            n_values: vec![300, 700, 1100, 1500, 1900],
            rho_values: vec![0.1, 0.3],
            k_values: vec![2],
            ensembles: Self::default_ensembles(),
            models: vec![MagnitudeKind::Equal],
            realizations: 200,
            supports: SupportPlan::ExactMoments,
            pairing: MagnitudePairing::PerRealization,
            noise: NoiseSpec {
                sigma_s_sq: 1.0,
                sigma_m_sq: 0.0,
            },
            total_power: 1.0,
            master_seed: 0,
        }
    }

    /// `c_v·√M` versus K: N=300, ρ=0.1, K from 1 to 10, all magnitude models.
    pub fn cv_default() -> Self {
        ExperimentConfig {
            n_values: vec![300],
            rho_values: vec![0.1],
            k_values: (1..=10).collect(),
            models: MagnitudeKind::ALL.to_vec(),
            realizations: 1000,
            supports: SupportPlan::Sampled {
                count: DEFAULT_SUPPORT_SAMPLES,
            },
            ..Self::rmse_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_values.is_empty() || self.rho_values.is_empty() || self.k_values.is_empty() {
            return bad("N, ρ and K lists must be non-empty".into());
        }
        if self.ensembles.is_empty() || self.models.is_empty() {
            return bad("ensemble and magnitude model lists must be non-empty".into());
        }
        if self.realizations == 0 {
            return bad("need at least one matrix realization".into());
        }
        if let SupportPlan::Sampled { count: 0 } = self.supports {
            return bad("support sample count must be at least 1".into());
        }
        if !(self.total_power > 0.0 && self.total_power.is_finite()) {
            return bad(format!("total power must be positive, got {}", self.total_power));
        }
        NoiseSpec::new(self.noise.sigma_s_sq, self.noise.sigma_m_sq)?;
        for e in &self.ensembles {
            e.validate()?;
        }
        for &rho in &self.rho_values {
            if !(rho > 0.0 && rho <= 1.0) {
                return bad(format!("ρ must lie in (0, 1], got {rho}"));
            }
        }
        for &n in &self.n_values {
            for &rho in &self.rho_values {
                if measurements_for(n, rho) == 0 {
                    return bad(format!("N={n}, ρ={rho} gives M=0"));
                }
            }
            for &k in &self.k_values {
                if k == 0 || k > n {
                    return bad(format!("K={k} must lie in [1, N={n}]"));
                }
            }
        }
        Ok(())
    }
}

/// Column-major copy of `A` so a support's columns are contiguous, plus the
/// normalization `1/(M σ₀²)`.
pub(crate) struct SupportEvaluator {
    columns: Matrix,
    m: usize,
    inv_scale: f64,
}

impl SupportEvaluator {
    pub(crate) fn new(a: &SensingMatrix, noise: &NoiseSpec) -> Result<Self> {
        let s0 = sigma0_sq(a, noise);
        if s0 <= 0.0 {
            return Err(Error::ZeroNoisePower);
        }
        Ok(SupportEvaluator {
            columns: a.matrix.transpose(),
            m: a.m(),
            inv_scale: 1.0 / (a.m() as f64 * s0),
        })
    }

    pub(crate) fn n(&self) -> usize {
        self.columns.rows()
    }

    /// `η_O` of the signal with `magnitudes[j]` at `support[j]`.
    pub(crate) fn eta(&self, support: &[usize], magnitudes: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        scratch.resize(self.m, 0.0);
        for (&i, &v) in support.iter().zip(magnitudes) {
            for (s, &c) in scratch.iter_mut().zip(self.columns.row(i)) {
                *s += v * c;
            }
        }
        crate::linalg::norm_sq(scratch) * self.inv_scale
    }
}

/// η_O samples together with their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrSamples {
    pub values: Vec<f64>,
    pub stats: SnrStats,
}

impl SnrSamples {
    fn from_values(values: Vec<f64>) -> Self {
        let stats = SnrStats::from_values(&values).with_histogram(&values, HISTOGRAM_BINS);
        SnrSamples { values, stats }
    }
}

fn check_magnitudes(a: &SensingMatrix, k: usize) -> Result<()> {
    if k == 0 || k > a.n() {
        return Err(Error::InvalidParameter(format!(
            "K={k} must lie in [1, N={}]",
            a.n()
        )));
    }
    Ok(())
}

fn conditional_with(
    eval: &SupportEvaluator,
    magnitudes: &[f64],
    source: SupportSource,
    stream: &RandomStream,
) -> Result<Vec<f64>> {
    let (n, k) = (eval.n(), magnitudes.len());
    let mut scratch = Vec::new();
    match source {
        SupportSource::Exhaustive => Ok(enumerate_supports(n, k, DEFAULT_ENUMERATION_BUDGET)?
            .map(|s| eval.eta(&s, magnitudes, &mut scratch))
            .collect()),
        SupportSource::Sampled { count } => {
            let mut rng = stream.derive("supports", 0);
            (0..count)
                .map(|_| {
                    let s = sample_support(n, k, &mut rng)?;
                    Ok(eval.eta(&s, magnitudes, &mut scratch))
                })
                .collect()
        }
    }
}

/// Frequency distribution of `η_O` over supports for fixed nonzero values.
///
/// `magnitudes[j]` lands on the j-th smallest support index. The stream is
/// only consumed by a sampled source.
pub fn conditional_snr_samples(
    a: &SensingMatrix,
    magnitudes: &[f64],
    source: SupportSource,
    noise: &NoiseSpec,
    stream: &RandomStream,
) -> Result<SnrSamples> {
    check_magnitudes(a, magnitudes.len())?;
    let eval = SupportEvaluator::new(a, noise)?;
    Ok(SnrSamples::from_values(conditional_with(
        &eval, magnitudes, source, stream,
    )?))
}

/// Pools the conditional distributions of `n_magnitude_draws` magnitude
/// draws. Equal magnitudes collapse to a single conditional distribution.
pub fn marginal_snr_stats(
    a: &SensingMatrix,
    model: &MagnitudeModel,
    k: usize,
    n_magnitude_draws: usize,
    source: SupportSource,
    noise: &NoiseSpec,
    stream: &RandomStream,
) -> Result<SnrSamples> {
    check_magnitudes(a, k)?;
    if n_magnitude_draws == 0 {
        return Err(Error::InvalidParameter(
            "need at least one magnitude draw".into(),
        ));
    }
    let eval = SupportEvaluator::new(a, noise)?;
    let draws = if model.kind == MagnitudeKind::Equal {
        1
    } else {
        n_magnitude_draws
    };
    let mut pooled = Vec::new();
    for d in 0..draws as u64 {
        let mut mag_stream = stream.derive("magnitudes", d);
        let magnitudes = draw_magnitudes(model, k, &mut mag_stream)?;
        let support_stream = if draws == 1 {
            stream.clone()
        } else {
            stream.derive("draw", d)
        };
        pooled.extend(conditional_with(&eval, &magnitudes, source, &support_stream)?);
    }
    Ok(SnrSamples::from_values(pooled))
}

/// Sampled source, or exhaustive enumeration when it is no larger.
pub(crate) fn resolve_source(n: usize, k: usize, count: usize) -> SupportSource {
    if binomial(n, k) <= count as u128 {
        SupportSource::Exhaustive
    } else {
        SupportSource::Sampled { count }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub n_samples: usize,
    /// Sup-norm distance between the empirical CDF and the Gamma CDF.
    pub ks_distance: f64,
    pub mean_rel_err: f64,
    pub var_rel_err: f64,
}

/// Compares samples with a Gamma law through the CDF distance and the
/// relative errors of the sample mean and variance against `kθ`, `kθ²`.
pub fn gamma_fit_check(samples: &[f64], params: &GammaParams) -> Result<GammaFit> {
    if samples.len() < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 samples, got {}",
            samples.len()
        )));
    }
    let stats = SnrStats::from_values(samples);
    let ks = ks_distance(samples, |x| gamma_cdf(params, x.max(0.0)).unwrap_or(0.0));
    Ok(GammaFit {
        n_samples: samples.len(),
        ks_distance: ks,
        mean_rel_err: (stats.mean - params.mean()).abs() / params.mean(),
        var_rel_err: (stats.variance - params.variance()).abs() / params.variance(),
    })
}
