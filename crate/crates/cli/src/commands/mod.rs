mod analysis;
mod matrix;
mod sweeps;

use crate::args::{Cli, Command, EnsembleArgs, EnsembleKind, MatrixArgs};
use crate::manifest::{Execution, RunManifest};
use crate::{CliError, CliResult};
use serde::Serialize;
use snrspread_core::ensembles::{load_matrix, save_matrix};
use snrspread_core::random::NORMAL_TRANSFORM;
use snrspread_core::{draw_matrix, MatrixEnsemble, RandomStream, SensingMatrix};
use std::path::{Component, Path, PathBuf};
use std::time::Instant;

/// State shared by every subcommand: output directory, seed and the list of
/// files written so far.
pub struct Ctx {
    out: PathBuf,
    pub seed: u64,
    pub json: bool,
    started: Instant,
    outputs: Vec<String>,
}

impl Ctx {
    fn new(cli: &Cli) -> Self {
        Ctx {
            out: cli.out.clone(),
            seed: cli.seed,
            json: cli.json,
            started: Instant::now(),
            outputs: Vec::new(),
        }
    }

    pub fn stream(&self, label: &str) -> RandomStream {
        RandomStream::new(self.seed, label, 0)
    }

    fn ensure_out(&self) -> CliResult<()> {
        std::fs::create_dir_all(&self.out)?;
        Ok(())
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    /// Path for a bare file name inside the output directory.
    pub fn path(&mut self, name: &str) -> CliResult<PathBuf> {
        let mut parts = Path::new(name).components();
        if !matches!((parts.next(), parts.next()), (Some(Component::Normal(_)), None)) {
            return Err(CliError::Usage(format!("'{name}' must be a plain file name")));
        }
        self.ensure_out()?;
        self.record(name);
        Ok(self.out.join(name))
    }

    pub fn record(&mut self, name: &str) {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let path = self.path(name)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        self.write_text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    pub fn save_matrix(&mut self, a: &SensingMatrix, stem: &str) -> CliResult<()> {
        let csv = self.path(&format!("{stem}.csv"))?;
        self.record(&format!("{stem}.json"));
        save_matrix(a, &csv)?;
        Ok(())
    }

    /// Prints the report as JSON or through `human`.
    pub fn report<T: Serialize>(&self, value: &T, human: impl FnOnce()) -> CliResult<()> {
        if self.json {
            println!("{}", serde_json::to_string_pretty(value)?);
        } else {
            human();
        }
        Ok(())
    }

    fn finish(mut self, command: &Command) -> CliResult<()> {
        let name = command_name(command);
        let manifest_name = format!("{name}.manifest.json");
        self.record(&manifest_name);
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: name.to_string(),
            config: serde_json::to_value(command)?,
            master_seed: self.seed,
            normal_transform: NORMAL_TRANSFORM.to_string(),
            outputs: self.outputs.clone(),
            execution: Execution {
                threads: rayon::current_num_threads(),
                wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            },
        };
        let path = self.path(&manifest_name)?;
        std::fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Generate(_) => "generate",
        Command::Signal(_) => "signal",
        Command::Snr(_) => "snr",
        Command::Cv(_) => "cv",
        Command::Moments(_) => "moments",
        Command::RmseSweep(_) => "rmse-sweep",
        Command::CvSweep(_) => "cv-sweep",
        Command::Rip(_) => "rip",
        Command::Recover(_) => "recover",
        Command::NoiseFolding(_) => "noise-folding",
    }
}

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    let mut ctx = Ctx::new(cli);
    match &cli.command {
        Command::Generate(a) => matrix::generate(&mut ctx, a)?,
        Command::Signal(a) => matrix::signal(&mut ctx, a)?,
        Command::Rip(a) => matrix::rip(&mut ctx, a)?,
        Command::Snr(a) => analysis::snr(&mut ctx, a)?,
        Command::Recover(a) => analysis::recover(&mut ctx, a)?,
        Command::NoiseFolding(a) => analysis::noise_folding(&mut ctx, a)?,
        Command::Cv(a) => sweeps::cv(&mut ctx, a)?,
        Command::Moments(a) => sweeps::moments(&mut ctx, a)?,
        Command::RmseSweep(a) => sweeps::rmse_sweep(&mut ctx, a)?,
        Command::CvSweep(a) => sweeps::cv_sweep(&mut ctx, a)?,
    }
    ctx.finish(&cli.command)
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn ensemble_for(kind: EnsembleKind, args: &EnsembleArgs) -> CliResult<MatrixEnsemble> {
    let e = match kind {
        EnsembleKind::Gaussian => MatrixEnsemble::Gaussian {
            variance: args.variance,
        },
        EnsembleKind::Bernoulli => MatrixEnsemble::Bernoulli {
            p: args
                .p
                .ok_or_else(|| usage("--ensemble bernoulli requires --p"))?,
        },
        EnsembleKind::Rademacher => MatrixEnsemble::Rademacher {
            amplitude: args.amplitude.unwrap_or(1.0),
        },
        EnsembleKind::RowOrthogonal => MatrixEnsemble::RowOrthogonal,
    };
    e.validate().map_err(|e| usage(e.to_string()))?;
    Ok(e)
}

pub fn dims(args: &EnsembleArgs) -> CliResult<(usize, usize)> {
    match (args.m, args.n) {
        (Some(m), Some(n)) if m > 0 && n > 0 => Ok((m, n)),
        (Some(_), Some(_)) => Err(usage("--m and --n must be positive")),
        _ => Err(usage("drawing a matrix needs --m and --n (or pass --matrix)")),
    }
}

/// Loads `--matrix`, or draws one from the ensemble flags and saves it as
/// `<label>_matrix.csv`.
pub fn obtain_matrix(
    ctx: &mut Ctx,
    args: &MatrixArgs,
    default: EnsembleKind,
    label: &str,
) -> CliResult<SensingMatrix> {
    if let Some(path) = &args.matrix {
        return Ok(load_matrix(path)?);
    }
    let e = ensemble_for(args.draw.ensemble.unwrap_or(default), &args.draw)?;
    let (m, n) = dims(&args.draw)?;
    if e == MatrixEnsemble::RowOrthogonal && m > n {
        return Err(usage(format!("row-orthogonal needs M ≤ N, got {m}×{n}")));
    }
    let a = draw_matrix(e, m, n, &mut ctx.stream(&format!("{label}/matrix")))?;
    ctx.save_matrix(&a, &format!("{label}_matrix"))?;
    Ok(a)
}
