use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use num_complex::Complex64;
use serde_json::{json, Value};

use modspace::catalog::{sample_builtin, Builtin};
use modspace::error::Error;
use modspace::grid::{inverse_transform, Domain, GridSpec, SampledField};
use modspace::io::{field_csv, load_field, save_field, tf_magnitude_csv};
use modspace::norm::{mod_norm, Exponent, ModParams};
use modspace::plot::spectrogram;
use modspace::propagator::{bound_ratio, Family, PropagatorKind};
use modspace::series::{RealEntireSeries, PRESETS};
use modspace::solver::{continue_solution, measure_c1, CauchyData, Equation, SolverConfig};
use modspace::stft::{canonical_window, stft};
use modspace::verify::{run_suite, Battery, SuiteConfig, SUITES};

use crate::args::{ExponentArgs, FieldArgs, GridArgs, NormArgs, ProbeArgs, PropagateArgs, SolveArgs, StftArgs, VerifyArgs};

/// Cells per axis in the spectrogram written by `stft`.
const SPECTROGRAM_CELLS: usize = 256;

/// Output directory, the current pipeline stage and every file written so far.
pub struct Run {
    out: PathBuf,
    stage: &'static str,
    outputs: Vec<String>,
}

impl Run {
    pub fn new(out: PathBuf) -> Self {
        Run {
            out,
            stage: "setup",
            outputs: Vec::new(),
        }
    }

    pub fn stage(&mut self, stage: &'static str) {
        self.stage = stage;
    }

    pub fn current_stage(&self) -> &'static str {
        self.stage
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    fn path(&mut self, name: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        self.outputs.push(name.to_string());
        Ok(path)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name)?;
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn write_json(&mut self, name: &str, value: &impl serde::Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    fn save_field(&mut self, name: &str, f: &SampledField) -> Result<()> {
        let path = self.path(name)?;
        save_field(f, &path).with_context(|| format!("writing {}", path.display()))
    }

    fn finite(&self, what: &str, value: f64) -> Result<f64> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFinite(format!("{what} during {}", self.stage)).into())
        }
    }

    fn finite_field(&self, what: &str, f: &SampledField) -> Result<()> {
        if f.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("{what} during {}", self.stage)).into())
        }
    }
}

fn grid_of(args: &GridArgs) -> Result<GridSpec> {
    Ok(GridSpec::new(args.dim, args.n, args.l)?)
}

fn params_of(args: &ExponentArgs) -> Result<ModParams> {
    let p: Exponent = args.p.parse()?;
    let q: Exponent = args.q.parse()?;
    Ok(ModParams::new(p.value(), q.value(), args.s)?)
}

fn params_record(params: ModParams) -> Value {
    json!({ "p": params.p, "q": params.q, "s": params.s })
}

fn catalog_field(name: &str, grid: &GridSpec, params: &[(String, f64)]) -> Result<SampledField> {
    let map: BTreeMap<String, f64> = params.iter().cloned().collect();
    Ok(sample_builtin(name, grid, &map)?)
}

/// The input field in the space domain, from a container or the catalog.
fn load_input(run: &mut Run, field: &FieldArgs, grid: &GridArgs) -> Result<SampledField> {
    run.stage("sampling");
    let f = match &field.input {
        Some(path) => {
            let f = load_field(path).with_context(|| format!("reading {}", path.display()))?;
            match f.domain() {
                Domain::Space => f,
                Domain::Frequency => inverse_transform(&f)?,
            }
        }
        None => catalog_field(&field.function, &grid_of(grid)?, &field.params)?,
    };
    let f = if field.scale == 1.0 {
        f
    } else {
        f.scale(Complex64::new(field.scale, 0.0))
    };
    run.finite_field("input field", &f)?;
    Ok(f)
}

fn grid_record(grid: &GridSpec) -> Value {
    json!({ "dim": grid.dim(), "N": grid.samples(), "L": grid.extent() })
}

/// Named reference fields for measured constants: the verification battery
/// in one dimension, the dimension-free catalog members otherwise.
fn reference_fields(grid: &GridSpec, seed: u64, size: usize) -> Result<Vec<(String, SampledField)>> {
    if grid.dim() == 1 {
        return Ok(Battery::new(*grid, seed, size)?.named_fields());
    }
    let mut sources = vec![Builtin::gaussian(), Builtin::plane_wave(1)];
    sources.extend((0..size.saturating_sub(2) as u64).map(|i| Builtin::random_bandlimited(seed.wrapping_add(i))));
    sources
        .iter()
        .enumerate()
        .map(|(i, b)| Ok((format!("{}_{i}", b.name()), b.sample(grid)?)))
        .collect()
}

pub fn norm(run: &mut Run, args: &NormArgs) -> Result<Value> {
    let params = params_of(&args.exponents)?;
    let f = load_input(run, &args.field, &args.grid)?;
    run.stage("norm");
    let value = run.finite("norm", mod_norm(&f, params)?)?;
    let record = json!({
        "p": params.p,
        "q": params.q,
        "s": params.s,
        "N": f.grid().samples(),
        "L": f.grid().extent(),
        "value": value,
    });
    run.write_json("norm.json", &record)?;
    Ok(record)
}

pub fn stft_command(run: &mut Run, args: &StftArgs) -> Result<Value> {
    let f = load_input(run, &args.field, &args.grid)?;
    run.stage("stft");
    let g = canonical_window(f.grid());
    let tf = stft(&f, &g)?;
    let max_abs = run.finite("STFT magnitude", tf.max_abs())?;
    run.stage("export");
    run.write("stft.csv", tf_magnitude_csv(&tf))?;
    if f.grid().dim() == 1 {
        let title = format!("|V_g f|, {}", args.field.input.as_ref().map_or(args.field.function.clone(), |p| p.display().to_string()));
        run.write("stft.svg", spectrogram(&tf, &title, args.cells.min(SPECTROGRAM_CELLS))?)?;
    }
    let summary = json!({
        "grid": grid_record(f.grid()),
        "window": tf.window_id(),
        "entries": tf.size(),
        "max_abs": max_abs,
    });
    run.write_json("stft.json", &summary)?;
    Ok(summary)
}

pub fn propagate(run: &mut Run, args: &PropagateArgs) -> Result<Value> {
    let family: Family = args.kind.parse()?;
    let params = params_of(&args.exponents)?;
    let f = load_input(run, &args.field, &args.grid)?;
    run.stage("propagate");
    let kind = PropagatorKind::new(family, args.t);
    let out = kind.apply(&f)?;
    run.finite_field("propagated field", &out)?;
    run.stage("norm");
    let input_norm = run.finite("input norm", mod_norm(&f, params)?)?;
    let output_norm = run.finite("output norm", mod_norm(&out, params)?)?;
    run.stage("export");
    run.save_field("output.bin", &out)?;
    run.write("output.csv", field_csv(&out))?;
    let summary = json!({
        "kind": family,
        "t": args.t,
        "grid": grid_record(f.grid()),
        "params": params_record(params),
        "input_norm": input_norm,
        "output_norm": output_norm,
        "ratio": if input_norm > 0.0 { output_norm / input_norm } else { 0.0 },
        "max_abs_change": out.max_abs_diff(&f)?,
    });
    run.write_json("propagate.json", &summary)?;
    Ok(summary)
}

fn nonlinearity(spec: &str) -> Result<RealEntireSeries> {
    if PRESETS.contains(&spec) {
        return Ok(RealEntireSeries::preset(spec)?);
    }
    let path = Path::new(spec);
    if !path.exists() {
        bail!(Error::InvalidParameter(format!(
            "nonlinearity `{spec}` is neither a preset ({}) nor a readable file",
            PRESETS.join(", ")
        )));
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {spec}"))?;
    Ok(RealEntireSeries::from_json(&text)?)
}

pub fn solve(run: &mut Run, args: &SolveArgs) -> Result<Value> {
    let equation: Equation = args.eq.parse()?;
    let params = params_of(&args.exponents)?;
    let series = nonlinearity(&args.nonlinearity)?;
    let grid = grid_of(&args.grid)?;

    run.stage("sampling");
    let scale = Complex64::new(args.scale, 0.0);
    let u0 = catalog_field(&args.u0, &grid, &args.u0_params)?.scale(scale);
    run.finite_field("u0", &u0)?;
    let u1 = if equation.is_second_order() {
        let u1 = match &args.u1 {
            Some(name) => catalog_field(name, &grid, &args.u1_params)?.scale(scale),
            None => SampledField::zeros(grid, Domain::Space),
        };
        run.finite_field("u1", &u1)?;
        Some(u1)
    } else {
        None
    };
    let data = CauchyData::new(equation, u0, u1, 0.0)?;

    run.stage("c1");
    let (c1, c1_measured) = match args.c1 {
        Some(c1) => (c1, false),
        None => {
            let fields = reference_fields(&grid, args.seed, 12)?;
            (run.finite("c1", measure_c1(equation, &fields, params)?)?, true)
        }
    };
    let cfg = SolverConfig {
        nonlinearity: series,
        params,
        quadrature_step: args.dt,
        picard_tol: args.tol,
        c1,
        ..SolverConfig::default()
    };

    run.stage("solve");
    let path = continue_solution(&data, &cfg, args.t_end)?;

    run.stage("diagnostics");
    // Node 0 opens the first window; window k owns the next `steps` nodes.
    let mut owner = vec![0usize];
    for (k, w) in path.windows.iter().enumerate() {
        owner.extend(std::iter::repeat(k).take(w.steps));
    }
    let mut csv = String::from("t,mod_norm,L2_norm,T_window,contraction_factor\n");
    for (i, (t, u)) in path.times.iter().zip(&path.states).enumerate() {
        run.finite_field("solution state", u)?;
        let norm = run.finite("state norm", mod_norm(u, params)?)?;
        let (window, contraction) = match path.windows.get(owner[i]) {
            Some(w) => (w.t_used, w.contraction_factor),
            None => (f64::NAN, f64::NAN),
        };
        let _ = writeln!(csv, "{t},{norm},{},{window},{contraction}", u.l2_norm());
    }

    run.stage("export");
    run.write("solve.csv", csv)?;
    run.write_json(
        "windows.json",
        &json!({ "termination": path.termination, "windows": path.windows }),
    )?;
    if args.snapshots > 0 {
        let last = path.states.len() - 1;
        for (i, u) in path.states.iter().enumerate() {
            if i % args.snapshots == 0 || i == last {
                run.save_field(&format!("snapshots/u_{i:06}.bin"), u)?;
            }
        }
    }
    let halvings: u32 = path.windows.iter().map(|w| w.halvings).sum();
    let summary = json!({
        "equation": equation,
        "nonlinearity": args.nonlinearity,
        "grid": grid_record(&grid),
        "params": params_record(params),
        "c1": c1,
        "c1_measured": c1_measured,
        "t_end": args.t_end,
        "final_time": path.final_time(),
        "windows": path.windows.len(),
        "halvings": halvings,
        "blow_up": path.blow_up(),
        "termination": path.termination,
        "final_mod_norm": mod_norm(path.final_state(), params)?,
    });
    run.write_json("solve.json", &summary)?;
    Ok(summary)
}

pub fn verify(run: &mut Run, args: &VerifyArgs) -> Result<Value> {
    if !SUITES.contains(&args.suite.as_str()) {
        bail!(Error::InvalidParameter(format!(
            "unknown suite `{}`; expected one of {}",
            args.suite,
            SUITES.join(", ")
        )));
    }
    let config = SuiteConfig {
        samples: args.n,
        extent: args.l,
        seed: args.seed,
        battery_size: args.battery_size,
    };
    run.stage("battery");
    let battery = config.battery()?;
    let mut battery_csv = String::from("function,p,q,s,N,L,value\n");
    for params in [ModParams::new(1.0, 1.0, 0.0)?, ModParams::new(2.0, 2.0, 0.0)?] {
        for m in battery.members() {
            let value = run.finite("battery norm", mod_norm(&m.field, params)?)?;
            let _ = writeln!(
                battery_csv,
                "{},{},{},{},{},{},{value}",
                m.name,
                params.p,
                params.q,
                params.s,
                args.n,
                args.l
            );
        }
    }

    run.stage("suite");
    let mut reports = run_suite(&args.suite, &config)?;

    run.stage("export");
    let artifacts = run.out().join("artifacts");
    for report in &mut reports {
        report.write_artifacts(&artifacts)?;
        for name in &report.artifacts {
            run.outputs.push(format!("artifacts/{name}"));
        }
    }
    run.write("battery.csv", battery_csv)?;
    run.write_json("reports.json", &reports)?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    Ok(json!({
        "suite": args.suite,
        "checks": reports.len(),
        "failed": failed,
    }))
}

fn parse_times(text: &str) -> Result<Vec<f64>> {
    let times: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::InvalidParameter(format!("time `{t}`: {e}"))))
        .collect::<Result<_, _>>()?;
    if times.is_empty() || times.iter().any(|t| !t.is_finite()) {
        bail!(Error::InvalidParameter(format!("bad time grid `{text}`")));
    }
    Ok(times)
}

pub fn probe(run: &mut Run, args: &ProbeArgs) -> Result<Value> {
    let params = params_of(&args.exponents)?;
    let families: Vec<Family> = if args.kind == "all" {
        Family::ALL.to_vec()
    } else {
        vec![args.kind.parse()?]
    };
    let times = parse_times(&args.t_grid)?;
    run.stage("battery");
    let grid = GridSpec::new(1, args.n, args.l)?;
    let fields = Battery::new(grid, args.seed, args.battery_size)?.named_fields();

    let mut summary = Vec::new();
    for family in families {
        run.stage("probe");
        let report = bound_ratio(family, &times, &fields, params)?;
        for row in &report.rows {
            run.finite("bound ratio", row.ratio)?;
        }
        run.stage("export");
        run.write(&format!("probe_{family}.csv"), report.to_csv())?;
        run.write(&format!("probe_{family}.svg"), report.to_svg())?;
        let mut entry = serde_json::to_value(&report)?;
        entry["trend_bounded"] = json!(report.trend_bounded(1.2));
        summary.push(entry);
    }
    let summary = Value::Array(summary);
    run.write_json("probe.json", &summary)?;
    Ok(summary)
}
