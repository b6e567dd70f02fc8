use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "modspace", version, about = "Modulation-space norms, propagators, Picard solvers and verification suites")]
pub struct Cli {
    /// Output directory for reports and artifacts.
    #[arg(long, global = true, env = "MODSPACE_OUT", default_value = "modspace-out")]
    pub out: PathBuf,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON object of flag defaults, keyed by long flag name.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Modulation-space norm of one field.
    #[command(args_override_self = true)]
    Norm(NormArgs),
    /// Short-time Fourier transform magnitudes and spectrogram.
    #[command(args_override_self = true)]
    Stft(StftArgs),
    /// Apply a linear propagator at one time.
    #[command(args_override_self = true)]
    Propagate(PropagateArgs),
    /// Solve NLS, NLW or NLKG by windowed Picard iteration.
    #[command(args_override_self = true)]
    Solve(SolveArgs),
    /// Run a verification suite over a seeded battery.
    #[command(args_override_self = true)]
    Verify(VerifyArgs),
    /// Sweep propagator bound ratios over a battery.
    #[command(args_override_self = true)]
    Probe(ProbeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Norm(_) => "norm",
            Command::Stft(_) => "stft",
            Command::Propagate(_) => "propagate",
            Command::Solve(_) => "solve",
            Command::Verify(_) => "verify",
            Command::Probe(_) => "probe",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Solve(a) => Some(a.seed),
            Command::Verify(a) => Some(a.seed),
            Command::Probe(a) => Some(a.seed),
            _ => None,
        }
    }
}

pub const SUBCOMMANDS: [&str; 6] = ["norm", "stft", "propagate", "solve", "verify", "probe"];

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Samples per axis (power of two).
    #[arg(long = "n", default_value_t = 512)]
    pub n: usize,
    /// Box extent per axis.
    #[serde(rename = "L")]
    #[arg(long = "L", default_value_t = 32.0)]
    pub l: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FieldArgs {
    /// Catalog function: gaussian, triangle, jump, plane_wave, random_bandlimited.
    #[serde(rename = "fn")]
    #[arg(long = "fn", default_value = "gaussian")]
    pub function: String,
    /// Catalog parameter as key=value (repeatable).
    #[serde(rename = "param")]
    #[arg(long = "param", value_parser = parse_key_value)]
    pub params: Vec<(String, f64)>,
    /// Read the field from a binary container instead of the catalog.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Multiply the field by this factor.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExponentArgs {
    /// Space exponent (`inf` allowed).
    #[arg(long, default_value = "1")]
    pub p: String,
    /// Frequency exponent (`inf` allowed).
    #[arg(long, default_value = "1")]
    pub q: String,
    /// Frequency weight exponent.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub s: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct NormArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub exponents: ExponentArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct StftArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Spectrogram cells per axis.
    #[arg(long, default_value_t = 128)]
    pub cells: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct PropagateArgs {
    /// schrodinger, wave_sine, wave_cosine, kg_sine or kg_cosine.
    #[arg(long)]
    pub kind: String,
    #[arg(long, allow_hyphen_values = true)]
    pub t: f64,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub exponents: ExponentArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    /// nls, nlw or nlkg.
    #[arg(long, default_value = "nls")]
    pub eq: String,
    /// Preset name (quadratic, cubic, quintic) or a JSON series file.
    #[arg(long, default_value = "cubic")]
    pub nonlinearity: String,
    /// Initial value, a catalog function.
    #[arg(long, default_value = "gaussian")]
    pub u0: String,
    #[arg(long = "u0-param", value_parser = parse_key_value)]
    pub u0_params: Vec<(String, f64)>,
    /// Initial velocity for nlw/nlkg (zero when omitted).
    #[arg(long)]
    pub u1: Option<String>,
    #[arg(long = "u1-param", value_parser = parse_key_value)]
    pub u1_params: Vec<(String, f64)>,
    /// Multiplies u0 and u1.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub exponents: ExponentArgs,
    #[arg(long = "t-end", default_value_t = 1.0, allow_hyphen_values = true)]
    pub t_end: f64,
    /// Quadrature step.
    #[arg(long, default_value_t = 5e-3)]
    pub dt: f64,
    /// Picard stopping tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Propagator constant; measured on the battery when omitted.
    #[arg(long)]
    pub c1: Option<f64>,
    /// Battery seed used to measure c1.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Write every k-th state as a binary container (0 = none).
    #[arg(long, default_value_t = 0)]
    pub snapshots: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    /// all, algebra, convolution, approx_identity, isometry, embeddings,
    /// counterexample, analyticity, localization, torus, composition, lipschitz.
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long = "n", default_value_t = 512)]
    pub n: usize,
    #[serde(rename = "L")]
    #[arg(long = "L", default_value_t = 32.0)]
    pub l: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long = "battery-size", default_value_t = 12)]
    pub battery_size: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ProbeArgs {
    /// A propagator family or `all`.
    #[arg(long, default_value = "all")]
    pub kind: String,
    /// Comma-separated times.
    #[arg(long = "t-grid", default_value = "0,0.5,1,2,5,10")]
    pub t_grid: String,
    #[arg(long = "n", default_value_t = 512)]
    pub n: usize,
    #[serde(rename = "L")]
    #[arg(long = "L", default_value_t = 32.0)]
    pub l: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long = "battery-size", default_value_t = 12)]
    pub battery_size: usize,
    #[command(flatten)]
    pub exponents: ExponentArgs,
}

fn parse_key_value(text: &str) -> Result<(String, f64), String> {
    let (key, value) = text.split_once('=').ok_or_else(|| format!("expected key=value, got `{text}`"))?;
    let value: f64 = value.trim().parse().map_err(|e| format!("`{value}`: {e}"))?;
    Ok((key.trim().to_string(), value))
}
