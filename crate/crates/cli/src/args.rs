use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use snrspread_core::experiments::{MagnitudePairing, SupportPlan, DEFAULT_SUPPORT_SAMPLES};
use snrspread_core::MagnitudeKind;
use std::path::PathBuf;
use std::str::FromStr;

/// Output-SNR spread in noisy compressed sensing.
///
/// SNR values in dB are 10·log10 of the linear power ratio. Noise levels
/// `--sigma-s` and `--sigma-m` are variances.
#[derive(Debug, Parser)]
#[command(name = "snrspread", version, args_override_self = true)]
pub struct Cli {
    /// Directory for every file written by the command.
    #[arg(long, global = true, env = "SNRSPREAD_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Master seed of all random streams.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for the parallel parts (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON object of flag values; flags on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the machine-readable report instead of the summary.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Draw a sensing matrix and write it as CSV with a JSON sidecar.
    Generate(GenerateArgs),
    /// Draw a sparse signal and write it as JSON.
    Signal(SignalArgs),
    /// Output SNR of a signal measured by a matrix.
    Snr(SnrArgs),
    /// Analytic and empirical coefficient of variation of the output SNR.
    Cv(CvArgs),
    /// Closed-form moments of d² against exhaustive sign/pattern enumeration.
    Moments(MomentsArgs),
    /// Normalized RMSE of the empirical c_v against the formula, over N.
    RmseSweep(RmseSweepArgs),
    /// Mean empirical c_v·√M over K for several ensembles and magnitude models.
    CvSweep(CvSweepArgs),
    /// Restricted isometry constant of a matrix.
    Rip(RipArgs),
    /// Oracle recovery SNR against the output SNR and its RIP bracket.
    Recover(RecoverArgs),
    /// Empirical covariance of the folded noise A·n_s + n_m.
    NoiseFolding(NoiseFoldingArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    Gaussian,
    Bernoulli,
    Rademacher,
    RowOrthogonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Equal,
    Gaussian,
    Uniform,
}

impl From<ModelArg> for MagnitudeKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Equal => MagnitudeKind::Equal,
            ModelArg::Gaussian => MagnitudeKind::Gaussian,
            ModelArg::Uniform => MagnitudeKind::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingArg {
    PerRealization,
    PerSupport,
}

impl From<PairingArg> for MagnitudePairing {
    fn from(p: PairingArg) -> Self {
        match p {
            PairingArg::PerRealization => MagnitudePairing::PerRealization,
            PairingArg::PerSupport => MagnitudePairing::PerSupport,
        }
    }
}

/// `exact`, `exhaustive`, or a support sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(into = "String")]
pub struct SupportArg(pub SupportPlan);

impl FromStr for SupportArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(SupportArg(SupportPlan::ExactMoments)),
            "exhaustive" => Ok(SupportArg(SupportPlan::Exhaustive)),
            n => match n.parse::<usize>() {
                Ok(count) if count > 0 => Ok(SupportArg(SupportPlan::Sampled { count })),
                _ => Err(format!("expected 'exact', 'exhaustive' or a positive count, got '{n}'")),
            },
        }
    }
}

impl From<SupportArg> for String {
    fn from(s: SupportArg) -> String {
        match s.0 {
            SupportPlan::ExactMoments => "exact".into(),
            SupportPlan::Exhaustive => "exhaustive".into(),
            SupportPlan::Sampled { count } => count.to_string(),
        }
    }
}

/// Integers as `a,b,c`, inclusive ranges `a..b`, or stepped ranges `a..b:s`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct IntList(pub Vec<usize>);

impl FromStr for IntList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("'{t}': {e}"));
        let mut out = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            match part.split_once("..") {
                Some((lo, rest)) => {
                    let (hi, step) = match rest.split_once(':') {
                        Some((hi, step)) => (parse(hi)?, parse(step)?),
                        None => (parse(rest)?, 1),
                    };
                    let lo = parse(lo)?;
                    if step == 0 || hi < lo {
                        return Err(format!("empty or invalid range '{part}'"));
                    }
                    out.extend((lo..=hi).step_by(step));
                }
                None => out.push(parse(part)?),
            }
        }
        if out.is_empty() {
            return Err("empty list".into());
        }
        Ok(IntList(out))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnsembleArgs {
    /// Matrix ensemble.
    #[arg(long, value_enum)]
    pub ensemble: Option<EnsembleKind>,
    /// Bernoulli success probability (required for `bernoulli`).
    #[arg(long)]
    pub p: Option<f64>,
    /// Gaussian entry variance (default 1/M).
    #[arg(long)]
    pub variance: Option<f64>,
    /// Rademacher entry magnitude (default 1).
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Number of measurements M.
    #[arg(long)]
    pub m: Option<usize>,
    /// Ambient dimension N.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MatrixArgs {
    /// Matrix CSV to load instead of drawing one.
    #[arg(long, conflicts_with_all = ["ensemble", "variance", "amplitude", "p"])]
    pub matrix: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub draw: EnsembleArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NoiseArgs {
    /// Input (signal-domain) noise variance σ_s².
    #[arg(long, default_value_t = 1.0)]
    pub sigma_s: f64,
    /// Measurement noise variance σ_m².
    #[arg(long, default_value_t = 0.0)]
    pub sigma_m: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub draw: EnsembleArgs,
    /// File stem of the CSV and sidecar.
    #[arg(long, default_value = "matrix")]
    pub name: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SignalArgs {
    /// Ambient dimension N.
    #[arg(long)]
    pub n: usize,
    /// Sparsity K.
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "equal")]
    pub model: ModelArg,
    /// Total power P_s = E‖x‖².
    #[arg(long, default_value_t = 1.0)]
    pub power: f64,
    /// File stem of the JSON output.
    #[arg(long, default_value = "signal")]
    pub name: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SnrArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub signal: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub noise: NoiseArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub matrix: MatrixArgs,
    /// Sparsity K.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Report the closed-form c_v.
    #[arg(long)]
    pub analytic: bool,
    /// Estimate c_v from the frequency distribution over supports.
    #[arg(long)]
    pub empirical: bool,
    #[arg(long, value_enum, default_value = "equal")]
    pub model: ModelArg,
    /// `exact`, `exhaustive` or a number of sampled supports.
    #[arg(long, default_value_t = SupportArg(SupportPlan::Sampled { count: DEFAULT_SUPPORT_SAMPLES }))]
    pub supports: SupportArg,
    /// Magnitude draws pooled for random magnitude models.
    #[arg(long, default_value_t = 1)]
    pub magnitude_draws: usize,
    /// Compare the samples with the Gamma law of a Gaussian matrix.
    #[arg(long)]
    pub gamma_fit: bool,
    /// Histogram bins in the report.
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    #[arg(long, default_value_t = 1.0)]
    pub power: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub noise: NoiseArgs,
}

impl std::fmt::Display for SupportArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&String::from(*self))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MomentsArgs {
    /// Largest K enumerated.
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
    /// Bernoulli probabilities.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9")]
    pub p: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub power: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// Ambient dimensions, e.g. `300..1900:400`.
    #[arg(long)]
    pub n: Option<IntList>,
    /// Compression ratios ρ = M/N.
    #[arg(long, value_delimiter = ',')]
    pub rho: Option<Vec<f64>>,
    /// Sparsities, e.g. `1..10`.
    #[arg(long)]
    pub k: Option<IntList>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "gaussian,bernoulli,rademacher")]
    pub ensembles: Vec<EnsembleKind>,
    /// Bernoulli success probability.
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    /// `exact`, `exhaustive` or a number of sampled supports per matrix.
    #[arg(long)]
    pub supports: Option<SupportArg>,
    #[arg(long, default_value_t = 1.0)]
    pub power: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub noise: NoiseArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RmseSweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sweep: SweepArgs,
    /// Matrix realizations per cell.
    #[arg(long, default_value_t = 200)]
    pub realizations: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CvSweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sweep: SweepArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "equal,gaussian,uniform")]
    pub models: Vec<ModelArg>,
    /// Matrix realizations per cell.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, value_enum, default_value = "per-realization")]
    pub pairing: PairingArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RipArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub matrix: MatrixArgs,
    /// Order K.
    #[arg(long)]
    pub k: usize,
    /// Lower bound from this many sampled supports instead of all of them.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RecoverArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub matrix: MatrixArgs,
    /// Signal JSON to load instead of drawing one.
    #[arg(long)]
    pub signal: Option<PathBuf>,
    /// Sparsity of a drawn signal.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub model: ModelArg,
    #[arg(long, default_value_t = 1.0)]
    pub power: f64,
    /// Noise draws averaged for the recovered SNR.
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    /// Rescale columns to unit norm before anything else.
    #[arg(long)]
    pub normalize_columns: bool,
    /// Relative slack allowed on each side of the bracket.
    #[arg(long, default_value_t = 0.01)]
    pub slack: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub noise: NoiseArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NoiseFoldingArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub matrix: MatrixArgs,
    /// Independent noise draws.
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
    /// Relative tolerance on the covariance diagonal.
    #[arg(long, default_value_t = 0.03)]
    pub diag_tolerance: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub noise: NoiseArgs,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int_lists() {
        assert_eq!("1..4".parse::<IntList>().unwrap().0, vec![1, 2, 3, 4]);
        assert_eq!("300..1900:400".parse::<IntList>().unwrap().0, vec![300, 700, 1100, 1500, 1900]);
        assert_eq!("2, 5,7..8".parse::<IntList>().unwrap().0, vec![2, 5, 7, 8]);
        assert!("5..1".parse::<IntList>().is_err());
        assert!("".parse::<IntList>().is_err());
        assert!("a".parse::<IntList>().is_err());
    }

    #[test]
    fn support_args() {
        assert_eq!("exact".parse::<SupportArg>().unwrap().0, SupportPlan::ExactMoments);
        assert_eq!("exhaustive".parse::<SupportArg>().unwrap().0, SupportPlan::Exhaustive);
        assert_eq!("12".parse::<SupportArg>().unwrap().0, SupportPlan::Sampled { count: 12 });
        assert!("0".parse::<SupportArg>().is_err());
        assert_eq!(SupportArg(SupportPlan::Sampled { count: 5 }).to_string(), "5");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
