use super::{obtain_matrix, usage, Ctx};
use crate::args::{EnsembleKind, NoiseArgs, NoiseFoldingArgs, RecoverArgs, SnrArgs};
use crate::format::{db, sig6};
use crate::CliResult;
use serde::{Deserialize, Serialize};
use snrspread_core::analytic::gaussian_conditional_snr_dist_with_variance;
use snrspread_core::ensembles::{load_matrix, rip_constant};
use snrspread_core::linalg::Matrix;
use snrspread_core::signals::{draw_magnitudes, sample_support};
use snrspread_core::snr::{
    compressed_power, empirical_noise_covariance, noise_covariance, oracle_error_power,
    output_snr, recovered_snr, rsnr_osnr_bounds, sigma0_sq,
};
use snrspread_core::{
    GammaParams, MagnitudeModel, NoiseSpec, SensingMatrix, SnrContext, SnrValue, SparseSignal,
};

pub fn noise_spec(args: &NoiseArgs) -> CliResult<NoiseSpec> {
    NoiseSpec::new(args.sigma_s, args.sigma_m).map_err(|e| usage(e.to_string()))
}

/// dB value, or `"-inf"` for a zero SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Decibels {
    Finite(f64),
    Sentinel(String),
}

impl Decibels {
    fn of(eta: f64) -> Self {
        if eta == 0.0 {
            Decibels::Sentinel("-inf".into())
        } else if eta.is_infinite() {
            Decibels::Sentinel("inf".into())
        } else {
            Decibels::Finite(10.0 * eta.log10())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    pub output_snr: SnrValue,
    pub db: Decibels,
    pub sigma0_sq: f64,
    pub compressed_power: f64,
    pub signal_power: f64,
    /// Law of η_O over supports for a Gaussian matrix and this ‖x‖².
    pub gamma: Option<GammaParams>,
}

pub fn snr(ctx: &mut Ctx, args: &SnrArgs) -> CliResult<()> {
    let a = load_matrix(&args.matrix)?;
    let x = SparseSignal::load_json(&args.signal)?;
    let noise = noise_spec(&args.noise)?;
    let eta = output_snr(&a, &x, &noise)?;
    let s0 = sigma0_sq(&a, &noise);
    let gamma = match a.ensemble.gaussian_variance(a.m()) {
        Some(v) if x.norm_sq() > 0.0 => Some(gaussian_conditional_snr_dist_with_variance(
            a.m(),
            x.norm_sq(),
            s0,
            v,
        )?),
        _ => None,
    };
    let report = SnrReport {
        output_snr: eta,
        db: Decibels::of(eta.eta),
        sigma0_sq: s0,
        compressed_power: compressed_power(&a, &x),
        signal_power: x.norm_sq(),
        gamma,
    };
    ctx.write_json("snr.json", &report)?;
    ctx.report(&report, || {
        println!("η_O = {} ({} dB)", sig6(eta.eta), db(eta.eta));
        println!("σ₀² = {}", sig6(s0));
        if let Some(g) = gamma {
            println!(
                "Gamma law over supports: shape {}, scale {} (mean {})",
                sig6(g.shape),
                sig6(g.scale),
                sig6(g.mean())
            );
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BracketStatus {
    Pass,
    Fail,
    /// No noise: both SNRs are unbounded.
    TriviallySatisfied,
    /// δ ≥ 1, so the bracket has no finite form.
    UndefinedBracket,
}

#[derive(Debug, Clone, Serialize)]
struct RecoverReport {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    delta: f64,
    bracket: Option<(f64, f64)>,
    slack: f64,
    output_snr: SnrValue,
    recovered_snr: SnrValue,
    /// η_R with the expectation evaluated in closed form.
    recovered_snr_exact: SnrValue,
    ratio: Option<f64>,
    ratio_exact: Option<f64>,
    trials: usize,
    status: BracketStatus,
}

fn recover_signal(ctx: &mut Ctx, args: &RecoverArgs, n: usize) -> CliResult<SparseSignal> {
    if let Some(path) = &args.signal {
        return Ok(SparseSignal::load_json(path)?);
    }
    let k = args.k.ok_or_else(|| usage("recover needs --k or --signal"))?;
    if k == 0 || k > n {
        return Err(usage(format!("need 1 ≤ K ≤ N, got K={k} N={n}")));
    }
    let model = MagnitudeModel::new(args.model.into(), args.power).map_err(|e| usage(e.to_string()))?;
    let mut s = ctx.stream("recover/signal");
    let support = sample_support(n, k, &mut s)?;
    let x = SparseSignal::new(n, support, draw_magnitudes(&model, k, &mut s)?)?;
    let path = ctx.path("recover_signal.json")?;
    x.save_json(&path)?;
    Ok(x)
}

pub fn recover(ctx: &mut Ctx, args: &RecoverArgs) -> CliResult<()> {
    let mut a = obtain_matrix(ctx, &args.matrix, EnsembleKind::Gaussian, "recover")?;
    if args.normalize_columns {
        a = SensingMatrix::from_matrix(a.matrix.map_columns_to_unit_norm()?, a.ensemble);
    }
    let noise = noise_spec(&args.noise)?;
    if args.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    let x = recover_signal(ctx, args, a.n())?;
    if x.ambient_dim() != a.n() {
        return Err(usage(format!("signal has N={} but the matrix has {} columns", x.ambient_dim(), a.n())));
    }
    let k = x.sparsity();
    let delta = rip_constant(&a, k)?;
    let bracket = rsnr_osnr_bounds(delta, a.m(), k).ok();
    let unbounded = |context| SnrValue {
        eta: f64::INFINITY,
        context,
    };
    let (eta_o, eta_r, eta_r_exact) = if noise.is_noiseless() {
        (unbounded(SnrContext::Output), unbounded(SnrContext::Recovered), unbounded(SnrContext::Recovered))
    } else {
        let eta_r = recovered_snr(&a, &x, &noise, args.trials, &ctx.stream("recover/trials"))?;
        let exact = x.norm_sq() / oracle_error_power(&a, x.support(), &noise)?;
        (
            output_snr(&a, &x, &noise)?,
            eta_r,
            SnrValue {
                eta: exact,
                context: SnrContext::Recovered,
            },
        )
    };
    let (ratio, ratio_exact) = if noise.is_noiseless() {
        (None, None)
    } else {
        (Some(eta_r.eta / eta_o.eta), Some(eta_r_exact.eta / eta_o.eta))
    };
    let status = match (noise.is_noiseless(), bracket, ratio) {
        (true, _, _) => BracketStatus::TriviallySatisfied,
        (false, None, _) => BracketStatus::UndefinedBracket,
        (false, Some((lo, hi)), Some(r)) if r >= lo * (1.0 - args.slack) && r <= hi * (1.0 + args.slack) => {
            BracketStatus::Pass
        }
        _ => BracketStatus::Fail,
    };
    let report = RecoverReport {
        m: a.m(),
        n: a.n(),
        k,
        delta,
        bracket,
        slack: args.slack,
        output_snr: eta_o,
        recovered_snr: eta_r,
        recovered_snr_exact: eta_r_exact,
        ratio,
        ratio_exact,
        trials: args.trials,
        status,
    };
    ctx.write_json("recover.json", &report)?;
    ctx.report(&report, || {
        println!("δ_{k} = {}", sig6(delta));
        println!("η_O = {} ({} dB)", sig6(eta_o.eta), db(eta_o.eta));
        println!("η_R = {} ({} dB) over {} trials", sig6(eta_r.eta), db(eta_r.eta), args.trials);
        if let Some(r) = ratio {
            println!("η_R/η_O = {} (closed form {})", sig6(r), sig6(ratio_exact.unwrap_or(f64::NAN)));
        }
        match bracket {
            Some((lo, hi)) => println!("bracket = [{}, {}]", sig6(lo), sig6(hi)),
            None => println!("bracket undefined (δ ≥ 1)"),
        }
        let verdict = match status {
            BracketStatus::Pass => "PASS",
            BracketStatus::Fail => "FAIL",
            BracketStatus::TriviallySatisfied => "trivially satisfied (noiseless)",
            BracketStatus::UndefinedBracket => "not applicable (δ ≥ 1)",
        };
        println!("bracket check: {verdict}");
    })
}

#[derive(Debug, Clone, Serialize)]
struct NoiseFoldingReport {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    draws: usize,
    sigma_s_sq: f64,
    sigma_m_sq: f64,
    /// `σ_s² N/M + σ_m²`, the white level for a row-orthogonal matrix.
    folded_level: f64,
    diag_mean: f64,
    diag_min: f64,
    diag_max: f64,
    /// Largest `|Ĉ_ii/Σ_ii − 1|` against the model covariance.
    diag_max_rel_err: f64,
    diag_ok: bool,
    offdiag_mean_err: Option<f64>,
    offdiag_se: Option<f64>,
    offdiag_z: Option<f64>,
    offdiag_ok: bool,
}

pub fn noise_folding(ctx: &mut Ctx, args: &NoiseFoldingArgs) -> CliResult<()> {
    let a = obtain_matrix(ctx, &args.matrix, EnsembleKind::RowOrthogonal, "noise_folding")?;
    let noise = noise_spec(&args.noise)?;
    if args.draws < 2 {
        return Err(usage("--draws must be at least 2"));
    }
    let emp = empirical_noise_covariance(&a, &noise, args.draws, &ctx.stream("noise-folding/noise"))?;
    let model = noise_covariance(&a, &noise);
    let m = a.m();
    let diag: Vec<f64> = (0..m).map(|i| emp[(i, i)]).collect();
    let diag_max_rel_err = (0..m)
        .map(|i| (emp[(i, i)] / model[(i, i)] - 1.0).abs())
        .fold(0.0, f64::max);
    // Gaussian fourth moments: var(y_i y_j) = Σ_ii Σ_jj + Σ_ij²
    let (mut err_sum, mut var_sum, mut pairs) = (0.0, 0.0, 0usize);
    for i in 0..m {
        for j in i + 1..m {
            err_sum += emp[(i, j)] - model[(i, j)];
            var_sum += model[(i, i)] * model[(j, j)] + model[(i, j)].powi(2);
            pairs += 1;
        }
    }
    let (mean_err, se) = if pairs > 0 {
        let l = pairs as f64;
        (Some(err_sum / l), Some((var_sum / args.draws as f64).sqrt() / l))
    } else {
        (None, None)
    };
    let z = mean_err.zip(se).map(|(e, s)| e / s);
    let report = NoiseFoldingReport {
        m,
        n: a.n(),
        draws: args.draws,
        sigma_s_sq: noise.sigma_s_sq,
        sigma_m_sq: noise.sigma_m_sq,
        folded_level: noise.sigma_s_sq * a.n() as f64 / m as f64 + noise.sigma_m_sq,
        diag_mean: diag.iter().sum::<f64>() / m as f64,
        diag_min: diag.iter().copied().fold(f64::INFINITY, f64::min),
        diag_max: diag.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        diag_max_rel_err,
        diag_ok: diag_max_rel_err <= args.diag_tolerance,
        offdiag_mean_err: mean_err,
        offdiag_se: se,
        offdiag_z: z,
        offdiag_ok: z.is_none_or(|z| z.abs() <= 3.0),
    };
    write_covariance(ctx, "noise_covariance.csv", &emp)?;
    ctx.write_json("noise_folding.json", &report)?;
    ctx.report(&report, || {
        println!("folded level σ_s²N/M + σ_m² = {}", sig6(report.folded_level));
        println!(
            "empirical diagonal: mean {}, range [{}, {}], max rel. error {}",
            sig6(report.diag_mean),
            sig6(report.diag_min),
            sig6(report.diag_max),
            sig6(diag_max_rel_err)
        );
        if let (Some(e), Some(z)) = (mean_err, z) {
            println!("off-diagonal mean error {} (z = {})", sig6(e), sig6(z));
        }
    })
}

fn write_covariance(ctx: &mut Ctx, name: &str, c: &Matrix) -> CliResult<()> {
    ctx.write_text(name, &snrspread_core::ensembles::matrix_to_csv(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_report_round_trips() {
        let r = SnrReport {
            output_snr: SnrValue {
                eta: 0.0,
                context: SnrContext::Output,
            },
            db: Decibels::of(0.0),
            sigma0_sq: 1.0,
            compressed_power: 0.0,
            signal_power: 0.0,
            gamma: None,
        };
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains(r#""db":"-inf""#));
        assert_eq!(serde_json::from_str::<SnrReport>(&json).unwrap(), r);
        let r2 = SnrReport {
            db: Decibels::of(2.0),
            gamma: Some(GammaParams::new(1.0, 2.0).unwrap()),
            ..r
        };
        let back: SnrReport = serde_json::from_str(&serde_json::to_string(&r2).unwrap()).unwrap();
        assert_eq!(back, r2);
    }
}
