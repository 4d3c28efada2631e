#![allow(clippy::neg_cmp_op_on_partial_ord)]
mod args;
mod commands;
mod format;
mod manifest;

use args::Cli;
use clap::{CommandFactory, Parser};
use std::ffi::OsString;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or inputs; exit code 2.
    Usage(String),
    /// Failure while running; exit code 3.
    Runtime(anyhow::Error),
}

impl From<snrspread_core::Error> for CliError {
    fn from(e: snrspread_core::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Splices the flags of a `--config` JSON file in right after the
/// subcommand, so that flags given on the command line win.
fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::Usage(format!("cannot read config {}: {e}", path.to_string_lossy()))
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config is not valid JSON: {e}")))?;
    let serde_json::Value::Object(map) = value else {
        return Err(CliError::Usage("config must be a JSON object".into()));
    };
    let mut flags: Vec<OsString> = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &serde_json::Value| match v {
            serde_json::Value::String(s) => Ok(s.clone()),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            serde_json::Value::Bool(b) => Ok(b.to_string()),
            other => Err(CliError::Usage(format!("unsupported value for {key}: {other}"))),
        };
        match &v {
            serde_json::Value::Null | serde_json::Value::Bool(false) => {}
            serde_json::Value::Bool(true) => flags.push(flag.into()),
            serde_json::Value::Array(items) => {
                let joined: Vec<String> = items.iter().map(scalar).collect::<CliResult<_>>()?;
                flags.push(flag.into());
                flags.push(joined.join(",").into());
            }
            other => {
                flags.push(flag.into());
                flags.push(scalar(other)?.into());
            }
        }
    }
    let names: Vec<String> = Cli::command()
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .collect();
    let at = args
        .iter()
        .position(|a| names.iter().any(|n| a.to_string_lossy() == *n))
        .map_or(args.len(), |i| i + 1);
    let mut out = args[..at].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

fn run(argv: Vec<OsString>) -> CliResult<()> {
    let argv = expand_config(argv)?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                Err(CliError::Usage(String::new()))
            } else {
                Ok(())
            };
        }
    };
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Runtime(e.into()))?
            .install(|| commands::dispatch(&cli)),
        None => commands::dispatch(&cli),
    }
}

fn main() -> ExitCode {
    // Exit quietly when stdout is closed early, e.g. piped into `head`.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_flags_go_after_the_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"m": 30, "analytic": true, "empirical": false, "sigma_s": 0.5}"#).unwrap();
        let p = path.to_str().unwrap();
        let out = expand_config(os(&["snrspread", "--seed", "3", "cv", "--config", p, "--m", "40"])).unwrap();
        let s: Vec<String> = out.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(s[..4], ["snrspread", "--seed", "3", "cv"]);
        assert!(s.contains(&"--analytic".to_string()) && !s.contains(&"--empirical".to_string()));
        assert_eq!(s[s.len() - 2..], ["--m", "40"]);
        let cli = Cli::try_parse_from(out).unwrap();
        let args::Command::Cv(cv) = cli.command else { panic!() };
        assert_eq!(cv.matrix.draw.m, Some(40));
        assert_eq!(cv.noise.sigma_s, 0.5);
    }

    #[test]
    fn bad_config_is_a_usage_error() {
        assert!(matches!(
            expand_config(os(&["snrspread", "cv", "--config", "/nonexistent/c.json"])),
            Err(CliError::Usage(_))
        ));
    }
}
