//! The two parameter sweeps. Matrix realizations run in parallel; results
//! are collected in realization order and reduced sequentially, so output is
//! independent of the thread count.

use super::exact::{stats_from_aggregates, SupportAggregates};
use super::output::{Curve, CurveAxis};
use super::{
    conditional_with, measurements_for, resolve_source, ExperimentConfig, MagnitudePairing,
    SupportEvaluator, SupportPlan, SupportSource,
};
use crate::analytic::{analytic_cv, cv_requires_equal_magnitudes};
use crate::ensembles::{draw_matrix, MatrixEnsemble, SensingMatrix};
use crate::error::{Error, Result};
use crate::random::RandomStream;
use crate::signals::{
    draw_magnitudes, enumerate_supports, sample_support, MagnitudeKind, MagnitudeModel,
    DEFAULT_ENUMERATION_BUDGET,
};
use crate::snr::{sigma0_sq, NoiseSpec};
use crate::stats::{RunningStats, SnrStats};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub(crate) fn ensure_noise(a: &SensingMatrix, noise: &NoiseSpec) -> Result<()> {
    if sigma0_sq(a, noise) <= 0.0 {
        return Err(Error::ZeroNoisePower);
    }
    Ok(())
}

fn realization_stream(prefix: &str, e: &MatrixEnsemble, rho: f64, n: usize, seed: u64, r: usize) -> RandomStream {
    RandomStream::new(seed, &format!("{prefix}/{}/rho={rho}/n={n}", e.name()), r as u64)
}

/// Per-matrix `c_v^e` for equal magnitudes.
fn equal_magnitude_cv(
    a: &SensingMatrix,
    k: usize,
    config: &ExperimentConfig,
    agg: Option<&SupportAggregates>,
    stream: &RandomStream,
) -> Result<f64> {
    let c = (config.total_power / k as f64).sqrt();
    match (config.supports, agg) {
        (SupportPlan::ExactMoments, Some(agg)) => {
            let s0 = sigma0_sq(a, &config.noise);
            Ok(stats_from_aggregates(agg, k, c, a.m(), s0).cv)
        }
        _ => {
            let eval = SupportEvaluator::new(a, &config.noise)?;
            let source = plan_source(config.supports, a.n(), k);
            let values = conditional_with(&eval, &vec![c; k], source, stream)?;
            Ok(SnrStats::from_values(&values).cv)
        }
    }
}

fn plan_source(plan: SupportPlan, n: usize, k: usize) -> SupportSource {
    match plan {
        SupportPlan::Sampled { count } => resolve_source(n, k, count),
        SupportPlan::Exhaustive | SupportPlan::ExactMoments => SupportSource::Exhaustive,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub ensemble: String,
    pub rho: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub analytic_cv: f64,
    pub mean_empirical_cv: f64,
    /// `√(mean ((c_v^e − c_v)/c_v)²)` over realizations.
    pub rmse: f64,
    /// `mean |c_v^e − c_v| / c_v` over realizations.
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseTable {
    pub rows: Vec<RmseRow>,
}

/// Normalized RMSE of the empirical against the analytic `c_v`, equal
/// magnitudes, for every (ensemble, ρ, N, K) cell of the config.
pub fn rmse_sweep(config: &ExperimentConfig) -> Result<RmseTable> {
    config.validate()?;
    if config.models.iter().any(|&m| m != MagnitudeKind::Equal) {
        return Err(Error::InvalidParameter(
            "the RMSE sweep compares against formulas valid for equal magnitudes only".into(),
        ));
    }
    let mut rows = Vec::new();
    for ensemble in &config.ensembles {
        for &rho in &config.rho_values {
            for &n in &config.n_values {
                let m = measurements_for(n, rho);
                let analytic: Vec<f64> = config
                    .k_values
                    .iter()
                    .map(|&k| analytic_cv(ensemble, m, k))
                    .collect::<Result<_>>()?;
                if let Some(pos) = analytic.iter().position(|&c| c == 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "analytic c_v is zero for {} at K={}; the normalized error is undefined",
                        ensemble.name(),
                        config.k_values[pos]
                    )));
                }
                let per_realization: Vec<Vec<f64>> = (0..config.realizations)
                    .into_par_iter()
                    .map(|r| {
                        let base = realization_stream("rmse", ensemble, rho, n, config.master_seed, r);
                        let a = draw_matrix(*ensemble, m, n, &mut base.derive("matrix", 0))?;
                        ensure_noise(&a, &config.noise)?;
                        let agg = (config.supports == SupportPlan::ExactMoments)
                            .then(|| SupportAggregates::from_matrix(&a.matrix));
                        config
                            .k_values
                            .iter()
                            .map(|&k| {
                                let s = base.derive("k", k as u64);
                                equal_magnitude_cv(&a, k, config, agg.as_ref(), &s)
                            })
                            .collect()
                    })
                    .collect::<Result<_>>()?;
                for (ki, &k) in config.k_values.iter().enumerate() {
                    let cv = analytic[ki];
                    let mut sq = RunningStats::default();
                    let mut abs = RunningStats::default();
                    let mut emp = RunningStats::default();
                    for cvs in &per_realization {
                        let err = (cvs[ki] - cv) / cv;
                        sq.push(err * err);
                        abs.push(err.abs());
                        emp.push(cvs[ki]);
                    }
                    rows.push(RmseRow {
                        ensemble: ensemble.name().into(),
                        rho,
                        n,
                        m,
                        k,
                        analytic_cv: cv,
                        mean_empirical_cv: emp.mean(),
                        rmse: sq.mean().sqrt(),
                        mae: abs.mean(),
                    });
                }
            }
        }
    }
    Ok(RmseTable { rows })
}

impl RmseTable {
    /// One RMSE and one mean-absolute curve over N per (ensemble, ρ, K).
    pub fn curves(&self) -> Vec<Curve> {
        let mut keys: Vec<(String, f64, usize)> = Vec::new();
        for r in &self.rows {
            let key = (r.ensemble.clone(), r.rho, r.k);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let mut out = Vec::new();
        for (ensemble, rho, k) in keys {
            let rows: Vec<&RmseRow> = self
                .rows
                .iter()
                .filter(|r| r.ensemble == ensemble && r.rho == rho && r.k == k)
                .collect();
            for (metric, pick) in [("rmse", (|r: &RmseRow| r.rmse) as fn(&RmseRow) -> f64), ("mae", |r| r.mae)] {
                out.push(Curve {
                    file: format!("{metric}_{ensemble}_rho{rho}_k{k}.dat"),
                    ensemble: ensemble.clone(),
                    model: Some(MagnitudeKind::Equal.name().into()),
                    rho,
                    n: None,
                    k: Some(k),
                    x_axis: CurveAxis::N,
                    y: format!("normalized-{metric}"),
                    points: rows.iter().map(|r| (r.n as f64, pick(r))).collect(),
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub ensemble: String,
    pub model: MagnitudeKind,
    pub rho: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub mean_cv: f64,
    pub mean_cv_sqrt_m: f64,
    /// Spread of the per-matrix `c_v^e` across realizations.
    pub sd_cv: f64,
    /// Present when a closed form applies to this ensemble and model.
    pub analytic_cv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTable {
    pub cells: Vec<CvCell>,
}

fn per_support_values(
    eval: &SupportEvaluator,
    model: &MagnitudeModel,
    k: usize,
    source: SupportSource,
    stream: &RandomStream,
) -> Result<Vec<f64>> {
    let mut mags = stream.derive("magnitudes", 0);
    let mut scratch = Vec::new();
    let mut eval_one = |s: &[usize]| -> Result<f64> {
        let x = draw_magnitudes(model, k, &mut mags)?;
        Ok(eval.eta(s, &x, &mut scratch))
    };
    match source {
        SupportSource::Exhaustive => enumerate_supports(eval.n(), k, DEFAULT_ENUMERATION_BUDGET)?
            .map(|s| eval_one(&s))
            .collect(),
        SupportSource::Sampled { count } => {
            let mut rng = stream.derive("supports", 0);
            (0..count)
                .map(|_| eval_one(&sample_support(eval.n(), k, &mut rng)?))
                .collect()
        }
    }
}

fn cell_cv(
    a: &SensingMatrix,
    eval: &SupportEvaluator,
    agg: Option<&SupportAggregates>,
    kind: MagnitudeKind,
    k: usize,
    config: &ExperimentConfig,
    stream: &RandomStream,
) -> Result<f64> {
    if kind == MagnitudeKind::Equal {
        return equal_magnitude_cv(a, k, config, agg, stream);
    }
    let model = MagnitudeModel::new(kind, config.total_power)?;
    let source = plan_source(config.supports, a.n(), k);
    let values = match config.pairing {
        MagnitudePairing::PerRealization => {
            let x = draw_magnitudes(&model, k, &mut stream.derive("magnitudes", 0))?;
            conditional_with(eval, &x, source, stream)?
        }
        MagnitudePairing::PerSupport => per_support_values(eval, &model, k, source, stream)?,
    };
    Ok(SnrStats::from_values(&values).cv)
}

/// Mean `c_v^e` over matrix realizations for every (ensemble, model, ρ, N, K).
///
/// Each realization draws one matrix shared by all models and K.
pub fn cv_vs_k_sweep(config: &ExperimentConfig) -> Result<CvTable> {
    config.validate()?;
    if config.supports == SupportPlan::ExactMoments
        && config.models.iter().any(|&m| m != MagnitudeKind::Equal)
    {
        return Err(Error::InvalidParameter(
            "exact support moments need equal magnitudes; use a sampled plan".into(),
        ));
    }
    let mut cells = Vec::new();
    for ensemble in &config.ensembles {
        for &rho in &config.rho_values {
            for &n in &config.n_values {
                let m = measurements_for(n, rho);
                let grid: Vec<(MagnitudeKind, usize)> = config
                    .models
                    .iter()
                    .flat_map(|&model| config.k_values.iter().map(move |&k| (model, k)))
                    .collect();
                let per_realization: Vec<Vec<f64>> = (0..config.realizations)
                    .into_par_iter()
                    .map(|r| {
                        let base = realization_stream("cv", ensemble, rho, n, config.master_seed, r);
                        let a = draw_matrix(*ensemble, m, n, &mut base.derive("matrix", 0))?;
                        let eval = SupportEvaluator::new(&a, &config.noise)?;
                        let agg = (config.supports == SupportPlan::ExactMoments)
                            .then(|| SupportAggregates::from_matrix(&a.matrix));
                        grid.iter()
                            .map(|&(kind, k)| {
                                let s = base.derive(&format!("{}/k", kind.name()), k as u64);
                                cell_cv(&a, &eval, agg.as_ref(), kind, k, config, &s)
                            })
                            .collect()
                    })
                    .collect::<Result<_>>()?;
                for (gi, &(model, k)) in grid.iter().enumerate() {
                    let stats: RunningStats = per_realization.iter().map(|v| v[gi]).collect();
                    let closed_form = model == MagnitudeKind::Equal || !cv_requires_equal_magnitudes(ensemble);
                    cells.push(CvCell {
                        ensemble: ensemble.name().into(),
                        model,
                        rho,
                        n,
                        m,
                        k,
                        mean_cv: stats.mean(),
                        mean_cv_sqrt_m: stats.mean() * (m as f64).sqrt(),
                        sd_cv: stats.variance().sqrt(),
                        analytic_cv: if closed_form { analytic_cv(ensemble, m, k).ok() } else { None },
                    });
                }
            }
        }
    }
    Ok(CvTable { cells })
}

impl CvTable {
    /// One `c_v·√M` curve over K per (ensemble, model, ρ, N).
    pub fn curves(&self) -> Vec<Curve> {
        let mut keys: Vec<(String, MagnitudeKind, f64, usize)> = Vec::new();
        for c in &self.cells {
            let key = (c.ensemble.clone(), c.model, c.rho, c.n);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|(ensemble, model, rho, n)| Curve {
                file: format!("cv_{ensemble}_{}_rho{rho}_n{n}.dat", model.name()),
                points: self
                    .cells
                    .iter()
                    .filter(|c| c.ensemble == ensemble && c.model == model && c.rho == rho && c.n == n)
                    .map(|c| (c.k as f64, c.mean_cv_sqrt_m))
                    .collect(),
                ensemble,
                model: Some(model.name().into()),
                rho,
                n: Some(n),
                k: None,
                x_axis: CurveAxis::K,
                y: "mean-cv-sqrt-m".into(),
            })
            .collect()
    }
}
