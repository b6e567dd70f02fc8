mod args;
mod commands;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context as _, Result};
use clap::Parser;
use serde::Serialize;
use serde_json::Value;

use args::{Cli, Command, SUBCOMMANDS};
use commands::Run;
use modspace::error::Error;

const USAGE_ERROR: u8 = 1;
const NUMERICAL_FAILURE: u8 = 2;

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    argv: &'a [String],
    config: Value,
    version: &'static str,
    seed: Option<u64>,
    wall_time_s: f64,
    outputs: &'a [String],
    status: &'static str,
    exit_code: u8,
    error: Option<String>,
    failing_stage: Option<&'static str>,
}

/// Value of `--config` in raw arguments, if any.
fn config_path(argv: &[String]) -> Option<&str> {
    let mut it = argv.iter();
    while let Some(arg) = it.next() {
        if arg == "--config" {
            return it.next().map(String::as_str);
        }
        if let Some(path) = arg.strip_prefix("--config=") {
            return Some(path);
        }
    }
    None
}

/// Flag tokens for every key of a JSON config object.
fn config_tokens(config: &Value) -> Result<Vec<String>> {
    let Value::Object(map) = config else {
        bail!("config must be a JSON object keyed by flag name");
    };
    let scalar = |key: &str, v: &Value| -> Result<String> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => bail!("config key `{key}` must hold a string, number, boolean or list of those"),
        }
    };
    let mut tokens = Vec::new();
    for (key, value) in map {
        if key == "config" {
            continue;
        }
        let flag = format!("--{key}");
        match value {
            Value::Bool(true) => tokens.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                for item in items {
                    tokens.push(flag.clone());
                    tokens.push(scalar(key, item)?);
                }
            }
            other => {
                tokens.push(flag);
                tokens.push(scalar(key, other)?);
            }
        }
    }
    Ok(tokens)
}

/// Splices config values in right after the subcommand so flags given on the
/// command line, which come later, override them.
fn merge_config(argv: &[String]) -> Result<Vec<String>> {
    let Some(path) = config_path(argv) else {
        return Ok(argv.to_vec());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {path}"))?;
    let config: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {path}"))?;
    let tokens = config_tokens(&config)?;
    let mut merged = argv.to_vec();
    if let Some(at) = argv.iter().skip(1).position(|a| SUBCOMMANDS.contains(&a.as_str())) {
        merged.splice(at + 2..at + 2, tokens);
    }
    Ok(merged)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::NonConvergence(_) | Error::NonFinite(_)) => NUMERICAL_FAILURE,
        _ => USAGE_ERROR,
    }
}

fn dispatch(run: &mut Run, command: &Command) -> Result<Value> {
    match command {
        Command::Norm(a) => commands::norm(run, a),
        Command::Stft(a) => commands::stft_command(run, a),
        Command::Propagate(a) => commands::propagate(run, a),
        Command::Solve(a) => commands::solve(run, a),
        Command::Verify(a) => commands::verify(run, a),
        Command::Probe(a) => commands::probe(run, a),
    }
}

fn write_manifest(out: &Path, manifest: &RunManifest<'_>) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(out.join("manifest.json"), text).context("writing manifest.json")
}

fn main() -> ExitCode {
    let started = Instant::now();
    let argv: Vec<String> = std::env::args().collect();
    let merged = match merge_config(&argv) {
        Ok(merged) => merged,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(USAGE_ERROR);
        }
    };
    let cli = match Cli::try_parse_from(&merged) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE_ERROR);
        }
    }

    let mut run = Run::new(cli.out.clone());
    let result = dispatch(&mut run, &cli.command);
    let code = result.as_ref().map_or_else(exit_code, |_| 0);
    let error = result.as_ref().err().map(|e| format!("{e:#}"));
    let manifest = RunManifest {
        command: cli.command.name(),
        argv: &argv,
        config: serde_json::to_value(&cli).unwrap_or(Value::Null),
        version: env!("CARGO_PKG_VERSION"),
        seed: cli.command.seed(),
        wall_time_s: started.elapsed().as_secs_f64(),
        outputs: run.outputs(),
        status: if code == 0 { "ok" } else { "error" },
        exit_code: code,
        error: error.clone(),
        failing_stage: (code != 0).then(|| run.current_stage()),
    };
    if let Err(e) = write_manifest(&cli.out, &manifest) {
        eprintln!("error: {e:#}");
        return ExitCode::from(USAGE_ERROR);
    }
    match result {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(_) => {
            eprintln!("error: {}", error.unwrap_or_default());
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn strings(args: &[&str]) -> Vec<String> {
        args.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn config_becomes_flags() {
        let tokens = config_tokens(&json!({ "n": 256, "fn": "triangle", "param": ["c=1"], "config": "x" })).unwrap();
        assert_eq!(tokens, strings(&["--fn", "triangle", "--n", "256", "--param", "c=1"]));
        assert!(config_tokens(&json!([1, 2])).is_err());
        assert!(config_tokens(&json!({ "n": { "a": 1 } })).is_err());
    }

    #[test]
    fn command_line_beats_config() {
        let dir = std::env::temp_dir().join(format!("modspace-config-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        fs::write(&path, r#"{"n": 64, "L": 8}"#).unwrap();
        let argv = strings(&["modspace", "--config", path.to_str().unwrap(), "norm", "--n", "128"]);
        let cli = Cli::try_parse_from(merge_config(&argv).unwrap()).unwrap();
        match cli.command {
            Command::Norm(a) => {
                assert_eq!(a.grid.n, 128);
                assert_eq!(a.grid.l, 8.0);
            }
            _ => unreachable!(),
        }
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn numerical_failures_exit_two() {
        assert_eq!(exit_code(&Error::NonFinite("x".into()).into()), 2);
        assert_eq!(exit_code(&Error::NonConvergence("x".into()).into()), 2);
        assert_eq!(exit_code(&Error::UnknownFunction("x".into()).into()), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), 1);
    }
}
