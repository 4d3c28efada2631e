use super::analysis::noise_spec;
use super::{obtain_matrix, usage, Ctx};
use crate::args::{CvArgs, CvSweepArgs, EnsembleKind, ModelArg, MomentsArgs, RmseSweepArgs, SweepArgs};
use crate::format::sig6;
use crate::CliResult;
use serde::Serialize;
use snrspread_core::analytic::{
    analytic_cv, bernoulli_dm2_moments, bernoulli_dm_pmf, cv_requires_equal_magnitudes,
    gaussian_conditional_snr_dist_with_variance, rademacher_dm2_moments, rademacher_dm_pmf,
};
use snrspread_core::experiments::{
    conditional_snr_samples, cv_vs_k_sweep, exact_equal_magnitude_stats, gamma_fit_check,
    marginal_snr_stats, rmse_sweep as run_rmse_sweep, write_curves, Curve, ExperimentConfig,
    GammaFit, SupportPlan, SupportSource,
};
use snrspread_core::snr::sigma0_sq;
use snrspread_core::{GammaParams, MagnitudeKind, MagnitudeModel, MatrixEnsemble, SnrStats};
use std::fmt::Write as _;

#[derive(Serialize)]
struct CvReport {
    ensemble: String,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: Option<usize>,
    #[serde(rename = "K")]
    k: usize,
    model: MagnitudeKind,
    analytic_cv: Option<f64>,
    /// False when the closed form assumes equal magnitudes but the model is random.
    analytic_applies: Option<bool>,
    empirical: Option<SnrStats>,
    empirical_cv_sqrt_m: Option<f64>,
    gamma: Option<GammaParams>,
    gamma_fit: Option<GammaFit>,
}

fn ensemble_of_flags(args: &CvArgs) -> CliResult<MatrixEnsemble> {
    super::ensemble_for(
        args.matrix.draw.ensemble.unwrap_or(EnsembleKind::Gaussian),
        &args.matrix.draw,
    )
}

pub fn cv(ctx: &mut Ctx, args: &CvArgs) -> CliResult<()> {
    let analytic = args.analytic || !args.empirical;
    let kind: MagnitudeKind = args.model.into();
    if args.k == 0 {
        return Err(usage("--k must be positive"));
    }
    let mut report = CvReport {
        ensemble: String::new(),
        m: 0,
        n: None,
        k: args.k,
        model: kind,
        analytic_cv: None,
        analytic_applies: None,
        empirical: None,
        empirical_cv_sqrt_m: None,
        gamma: None,
        gamma_fit: None,
    };
    let mut samples = None;
    let ensemble = if args.empirical {
        let a = obtain_matrix(ctx, &args.matrix, EnsembleKind::Gaussian, "cv")?;
        if args.k > a.n() {
            return Err(usage(format!("K={} exceeds N={}", args.k, a.n())));
        }
        let noise = noise_spec(&args.noise)?;
        let model = MagnitudeModel::new(kind, args.power).map_err(|e| usage(e.to_string()))?;
        let stream = ctx.stream("cv/supports");
        let source = match args.supports.0 {
            SupportPlan::ExactMoments => None,
            SupportPlan::Exhaustive => Some(SupportSource::Exhaustive),
            SupportPlan::Sampled { count } => Some(SupportSource::Sampled { count }),
        };
        let c = (args.power / args.k as f64).sqrt();
        let stats = match (source, kind) {
            (None, MagnitudeKind::Equal) => exact_equal_magnitude_stats(&a, args.k, c, &noise)?,
            (None, _) => return Err(usage("--supports exact needs --model equal")),
            (Some(src), MagnitudeKind::Equal) => {
                let r = conditional_snr_samples(&a, &vec![c; args.k], src, &noise, &stream)?;
                samples = Some(r.values);
                r.stats
            }
            (Some(src), _) => {
                let r = marginal_snr_stats(&a, &model, args.k, args.magnitude_draws, src, &noise, &stream)?;
                samples = Some(r.values);
                r.stats
            }
        };
        let stats = match &samples {
            Some(v) => stats.with_histogram(v, args.bins),
            None => stats,
        };
        if args.gamma_fit {
            let variance = a
                .ensemble
                .gaussian_variance(a.m())
                .ok_or_else(|| usage("--gamma-fit needs a Gaussian matrix"))?;
            if kind != MagnitudeKind::Equal {
                return Err(usage("--gamma-fit needs --model equal (fixed ‖x‖²)"));
            }
            let values = samples
                .as_ref()
                .ok_or_else(|| usage("--gamma-fit needs support samples, not --supports exact"))?;
            let g = gaussian_conditional_snr_dist_with_variance(a.m(), args.power, sigma0_sq(&a, &noise), variance)?;
            report.gamma = Some(g);
            report.gamma_fit = Some(gamma_fit_check(values, &g)?);
        }
        report.m = a.m();
        report.n = Some(a.n());
        report.empirical_cv_sqrt_m = Some(stats.cv * (a.m() as f64).sqrt());
        report.empirical = Some(stats);
        a.ensemble
    } else {
        report.m = args
            .matrix
            .draw
            .m
            .filter(|&m| m > 0)
            .ok_or_else(|| usage("--analytic needs --m"))?;
        report.n = args.matrix.draw.n;
        ensemble_of_flags(args)?
    };
    report.ensemble = ensemble.name().to_string();
    if analytic {
        let cv = analytic_cv(&ensemble, report.m, args.k).map_err(|e| usage(e.to_string()))?;
        report.analytic_cv = Some(cv);
        report.analytic_applies = Some(kind == MagnitudeKind::Equal || !cv_requires_equal_magnitudes(&ensemble));
    }
    if let Some(values) = &samples {
        let mut text = String::with_capacity(values.len() * 22);
        for v in values {
            writeln!(text, "{v}").unwrap();
        }
        ctx.write_text("cv_samples.dat", &text)?;
    }
    ctx.write_json("cv.json", &report)?;
    ctx.report(&report, || {
        if let Some(cv) = report.analytic_cv {
            let caveat = if report.analytic_applies == Some(false) {
                " (formula assumes equal magnitudes)"
            } else {
                ""
            };
            println!("analytic c_v = {}{caveat}", sig6(cv));
        }
        if let Some(s) = &report.empirical {
            println!(
                "empirical c_v = {} over {} supports (mean η_O {}, c_v·√M {})",
                sig6(s.cv),
                s.n_samples,
                sig6(s.mean),
                sig6(report.empirical_cv_sqrt_m.unwrap_or(f64::NAN))
            );
        }
        if let Some(f) = &report.gamma_fit {
            println!(
                "Gamma fit: CDF distance {}, mean rel. error {}, variance rel. error {}",
                sig6(f.ks_distance),
                sig6(f.mean_rel_err),
                sig6(f.var_rel_err)
            );
        }
    })
}

#[derive(Serialize)]
struct MomentRow {
    ensemble: &'static str,
    p: Option<f64>,
    #[serde(rename = "K")]
    k: usize,
    formula_mean: f64,
    enumerated_mean: f64,
    formula_variance: f64,
    enumerated_variance: f64,
    max_rel_err: f64,
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn moments(ctx: &mut Ctx, args: &MomentsArgs) -> CliResult<()> {
    if args.k_max == 0 || args.k_max > snrspread_core::analytic::MAX_ENUMERATION_K {
        return Err(usage(format!(
            "--k-max must lie in [1, {}]",
            snrspread_core::analytic::MAX_ENUMERATION_K
        )));
    }
    if !(args.power > 0.0) {
        return Err(usage("--power must be positive"));
    }
    let row = |ensemble, p, k, (fm, fv): (f64, f64), (em, ev): (f64, f64)| MomentRow {
        ensemble,
        p,
        k,
        formula_mean: fm,
        enumerated_mean: em,
        formula_variance: fv,
        enumerated_variance: ev,
        max_rel_err: rel_err(fm, em).max(if fv == 0.0 && ev.abs() < 1e-12 * em * em { 0.0 } else { rel_err(fv, ev) }),
    };
    let mut rows = Vec::new();
    for &p in &args.p {
        if !(p > 0.0 && p < 1.0) {
            return Err(usage(format!("p must lie in (0, 1), got {p}")));
        }
        for k in 1..=args.k_max {
            let c = (args.power / k as f64).sqrt();
            let enumerated = bernoulli_dm_pmf(k, p, &vec![c; k])?.square_moments();
            rows.push(row("bernoulli", Some(p), k, bernoulli_dm2_moments(k, p, args.power), enumerated));
        }
    }
    for k in 1..=args.k_max {
        let per_entry = args.power / k as f64;
        let enumerated = rademacher_dm_pmf(&vec![per_entry.sqrt(); k])?.square_moments();
        rows.push(row("rademacher", None, k, rademacher_dm2_moments(k, per_entry), enumerated));
    }
    let mut csv = String::from("ensemble,p,K,formula_mean,enumerated_mean,formula_variance,enumerated_variance,max_rel_err\n");
    for r in &rows {
        let p = r.p.map(|p| p.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{},{p},{},{},{},{},{},{}",
            r.ensemble, r.k, r.formula_mean, r.enumerated_mean, r.formula_variance, r.enumerated_variance, r.max_rel_err
        )
        .unwrap();
    }
    ctx.write_text("moments.csv", &csv)?;
    ctx.write_json("moments.json", &rows)?;
    let worst = rows.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    ctx.report(&rows, || {
        println!("{} cells; largest relative difference {}", rows.len(), sig6(worst));
    })
}

fn sweep_ensembles(args: &SweepArgs) -> CliResult<Vec<MatrixEnsemble>> {
    args.ensembles
        .iter()
        .map(|&k| {
            let e = match k {
                EnsembleKind::Gaussian => MatrixEnsemble::gaussian(),
                EnsembleKind::Bernoulli => MatrixEnsemble::Bernoulli { p: args.p },
                EnsembleKind::Rademacher => MatrixEnsemble::rademacher(),
                EnsembleKind::RowOrthogonal => MatrixEnsemble::RowOrthogonal,
            };
            e.validate().map_err(|e| usage(e.to_string()))?;
            Ok(e)
        })
        .collect()
}

fn apply_sweep_args(mut c: ExperimentConfig, args: &SweepArgs, seed: u64) -> CliResult<ExperimentConfig> {
    if let Some(n) = &args.n {
        c.n_values = n.0.clone();
    }
    if let Some(rho) = &args.rho {
        c.rho_values = rho.clone();
    }
    if let Some(k) = &args.k {
        c.k_values = k.0.clone();
    }
    if let Some(s) = args.supports {
        c.supports = s.0;
    }
    c.ensembles = sweep_ensembles(args)?;
    c.noise = noise_spec(&args.noise)?;
    c.total_power = args.power;
    c.master_seed = seed;
    Ok(c)
}

fn write_curve_set(ctx: &mut Ctx, manifest: &str, curves: &[Curve]) -> CliResult<()> {
    for c in curves {
        ctx.path(&c.file)?;
    }
    ctx.path(manifest)?;
    write_curves(ctx.out_dir(), manifest, curves)?;
    Ok(())
}

pub fn rmse_sweep(ctx: &mut Ctx, args: &RmseSweepArgs) -> CliResult<()> {
    let mut config = apply_sweep_args(ExperimentConfig::rmse_default(), &args.sweep, ctx.seed)?;
    config.realizations = args.realizations;
    config.validate().map_err(|e| usage(e.to_string()))?;
    let table = run_rmse_sweep(&config)?;
    let mut csv = String::from("ensemble,rho,N,M,K,analytic_cv,mean_empirical_cv,rmse,mae\n");
    for r in &table.rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.ensemble, r.rho, r.n, r.m, r.k, r.analytic_cv, r.mean_empirical_cv, r.rmse, r.mae
        )
        .unwrap();
    }
    ctx.write_text("rmse_table.csv", &csv)?;
    ctx.write_json("rmse_table.json", &table)?;
    write_curve_set(ctx, "rmse_curves.json", &table.curves())?;
    ctx.report(&table, || {
        println!("{:<12} {:>5} {:>6} {:>5} {:>3} {:>10} {:>10}", "ensemble", "rho", "N", "M", "K", "RMSE", "MAE");
        for r in &table.rows {
            println!(
                "{:<12} {:>5} {:>6} {:>5} {:>3} {:>10} {:>10}",
                r.ensemble,
                r.rho,
                r.n,
                r.m,
                r.k,
                sig6(r.rmse),
                sig6(r.mae)
            );
        }
    })
}

pub fn cv_sweep(ctx: &mut Ctx, args: &CvSweepArgs) -> CliResult<()> {
    let mut config = apply_sweep_args(ExperimentConfig::cv_default(), &args.sweep, ctx.seed)?;
    config.models = args.models.iter().map(|&m: &ModelArg| m.into()).collect();
    config.realizations = args.trials;
    config.pairing = args.pairing.into();
    config.validate().map_err(|e| usage(e.to_string()))?;
    let table = cv_vs_k_sweep(&config)?;
    let mut csv = String::from("ensemble,model,rho,N,M,K,mean_cv,mean_cv_sqrt_m,sd_cv,analytic_cv\n");
    for c in &table.cells {
        let analytic = c.analytic_cv.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{analytic}",
            c.ensemble,
            c.model.name(),
            c.rho,
            c.n,
            c.m,
            c.k,
            c.mean_cv,
            c.mean_cv_sqrt_m,
            c.sd_cv
        )
        .unwrap();
    }
    ctx.write_text("cv_table.csv", &csv)?;
    ctx.write_json("cv_table.json", &table)?;
    write_curve_set(ctx, "cv_curves.json", &table.curves())?;
    ctx.report(&table, || {
        println!("{:<12} {:<9} {:>4} {:>3} {:>12}", "ensemble", "model", "N", "K", "c_v·√M");
        for c in &table.cells {
            println!(
                "{:<12} {:<9} {:>4} {:>3} {:>12}",
                c.ensemble,
                c.model.name(),
                c.n,
                c.k,
                sig6(c.mean_cv_sqrt_m)
            );
        }
    })
}
