use super::{dims, ensemble_for, obtain_matrix, usage, Ctx};
use crate::args::{EnsembleKind, GenerateArgs, RipArgs, SignalArgs};
use crate::format::sig6;
use crate::CliResult;
use serde::Serialize;
use snrspread_core::ensembles::{
    coherence, monte_carlo_rip_lower_bound, rip_constant_with_budget, MatrixSidecar,
    DEFAULT_RIP_BUDGET,
};
use snrspread_core::signals::{draw_magnitudes, sample_support};
use snrspread_core::snr::rsnr_osnr_bounds;
use snrspread_core::{draw_matrix, MagnitudeModel, SparseSignal};

pub fn generate(ctx: &mut Ctx, args: &GenerateArgs) -> CliResult<()> {
    let kind = args
        .draw
        .ensemble
        .ok_or_else(|| usage("generate needs --ensemble"))?;
    let e = ensemble_for(kind, &args.draw)?;
    let (m, n) = dims(&args.draw)?;
    if kind == EnsembleKind::RowOrthogonal && m > n {
        return Err(usage(format!("row-orthogonal needs M ≤ N, got {m}×{n}")));
    }
    let a = draw_matrix(e, m, n, &mut ctx.stream("generate/matrix"))?;
    ctx.save_matrix(&a, &args.name)?;
    let sidecar = MatrixSidecar::describe(&a);
    ctx.report(&sidecar, || {
        println!("wrote {m}×{n} {} matrix to {}.csv", e.name(), args.name);
    })
}

pub fn signal(ctx: &mut Ctx, args: &SignalArgs) -> CliResult<()> {
    if args.k == 0 || args.k > args.n {
        return Err(usage(format!("need 1 ≤ K ≤ N, got K={} N={}", args.k, args.n)));
    }
    let model = MagnitudeModel::new(args.model.into(), args.power).map_err(|e| usage(e.to_string()))?;
    let mut s = ctx.stream("signal");
    let support = sample_support(args.n, args.k, &mut s)?;
    let values = draw_magnitudes(&model, args.k, &mut s)?;
    let x = SparseSignal::new(args.n, support, values)?;
    let path = ctx.path(&format!("{}.json", args.name))?;
    x.save_json(&path)?;
    ctx.report(&x, || {
        println!("wrote K={} signal with ‖x‖² = {}", args.k, sig6(x.norm_sq()));
    })
}

#[derive(Serialize)]
struct RipReport {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    delta: f64,
    method: &'static str,
    samples: Option<usize>,
    coherence: f64,
    /// Bracket on η_R/η_O when δ < 1.
    bracket: Option<(f64, f64)>,
}

pub fn rip(ctx: &mut Ctx, args: &RipArgs) -> CliResult<()> {
    let a = obtain_matrix(ctx, &args.matrix, EnsembleKind::Gaussian, "rip")?;
    if args.k == 0 || args.k > a.n() {
        return Err(usage(format!("need 1 ≤ K ≤ N, got K={}", args.k)));
    }
    let (delta, method) = match args.samples {
        Some(0) => return Err(usage("--samples must be positive")),
        Some(count) => (
            monte_carlo_rip_lower_bound(&a, args.k, count, &mut ctx.stream("rip/supports"))?,
            "sampled-lower-bound",
        ),
        None => (rip_constant_with_budget(&a, args.k, DEFAULT_RIP_BUDGET)?, "exhaustive"),
    };
    let report = RipReport {
        m: a.m(),
        n: a.n(),
        k: args.k,
        delta,
        method,
        samples: args.samples,
        coherence: coherence(&a)?,
        bracket: rsnr_osnr_bounds(delta, a.m(), args.k).ok(),
    };
    ctx.write_json("rip.json", &report)?;
    ctx.report(&report, || {
        let kind = if method == "exhaustive" { "δ" } else { "δ ≥" };
        println!("{kind}_{} = {}", args.k, sig6(delta));
        println!("coherence = {}", sig6(report.coherence));
        match report.bracket {
            Some((lo, hi)) => println!("η_R/η_O bracket = [{}, {}]", sig6(lo), sig6(hi)),
            None => println!("η_R/η_O bracket undefined (δ ≥ 1)"),
        }
    })
}
