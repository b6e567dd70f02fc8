//! The fifteen acceptance criteria, one status line each.
//!
//! Lines go straight to stderr so they show up without `--nocapture`. The
//! test fails at the end if any criterion fails.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use serde_json::Value;

use modspace::catalog::Builtin;
use modspace::grid::{Domain, GridSpec, SampledField};
use modspace::norm::{mod_norm, ModParams};
use modspace::propagator::{bound_ratio, Family, PropagatorKind};
use modspace::series::RealEntireSeries;
use modspace::solver::{
    continue_solution, measure_c1, residual, solve_window_for, CauchyData, Equation, SolverConfig, Termination,
};
use modspace::stft::{canonical_window, stft};
use modspace::verify::Battery;

const N: usize = 512;
const L: f64 = 32.0;
const SEED: u64 = 7;
const BATTERY_SIZE: usize = 12;

const NORM_REL_TOL: f64 = 0.01;
const STFT_TOL: f64 = 1e-7;
const ISOMETRY_TOL: f64 = 1e-4;
const ISOMETRY_SHRINK: f64 = 4.0;
const ROUNDING_FLOOR: f64 = 1e-12;
const ALGEBRA_STABILITY: f64 = 0.05;
const CONVOLUTION_SLACK: f64 = 1e-6;
const TREND_FACTOR: f64 = 1.2;
const IDENTITY_TOL: f64 = 1e-12;
const FREE_TOL: f64 = 1e-8;
const CONTRACTION_LIMIT: f64 = 0.55;
const HORIZON_TOL: f64 = 1e-12;
const QUADRATURE_RANGE: (f64, f64) = (3.5, 4.5);
const PERTURBATION_RANGE: (f64, f64) = (7.0, 9.0);
const JUMP_MIN_INCREMENT: f64 = 0.1;
const JUMP_INCREMENT_DRIFT: f64 = 0.3;
const CERTIFICATE_HEADROOM: f64 = 1.1;
const CERTIFICATE_STABILITY: f64 = 0.1;
const TORUS_STABILITY: f64 = 0.1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn grid() -> GridSpec {
    GridSpec::new(1, N, L).unwrap()
}

fn params(p: f64, q: f64, s: f64) -> ModParams {
    ModParams::new(p, q, s).unwrap()
}

fn battery() -> Vec<(String, SampledField)> {
    Battery::new(grid(), SEED, BATTERY_SIZE).unwrap().named_fields()
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_modspace")
}

fn report<'a>(reports: &'a [Value], name: &str) -> &'a Value {
    reports
        .iter()
        .find(|r| r["name"] == name)
        .unwrap_or_else(|| panic!("report {name} missing"))
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn nums(v: &Value) -> Vec<f64> {
    v.as_array().map(|a| a.iter().map(num).collect()).unwrap_or_default()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn gaussian_norms() -> Outcome {
    let g = Builtin::gaussian().sample(&grid()).unwrap();
    let n11 = mod_norm(&g, params(1.0, 1.0, 0.0)).unwrap();
    let n22 = mod_norm(&g, params(2.0, 2.0, 0.0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(binary())
        .args(["--out", dir.path().to_str().unwrap(), "norm", "--fn", "gaussian"])
        .args(["--p", "1", "--q", "1", "--s", "0", "--n", "512", "--L", "32"])
        .output()
        .unwrap();
    let cli: Value = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    let cli_value = num(&cli["value"]);
    let (e11, e22) = (2f64.sqrt(), 0.5f64.sqrt());
    let pass = out.status.success()
        && rel(n11, e11) <= NORM_REL_TOL
        && rel(n22, e22) <= NORM_REL_TOL
        && rel(cli_value, e11) <= NORM_REL_TOL;
    outcome(
        pass,
        format!("M11 = {n11:.6} (sqrt2), M22 = {n22:.6} (2^-1/2), cli {cli_value:.6}; tol {NORM_REL_TOL} rel"),
    )
}

fn stft_oracle() -> Outcome {
    let grid = grid();
    let g = canonical_window(&grid);
    let v = stft(&g, &g).unwrap();
    let mut err: f64 = 0.0;
    for j in 0..grid.len() {
        let w = grid.frequency(j);
        for k in 0..grid.len() {
            let x = grid.node(k);
            let exact = real((-PI * (x * x + w * w) / 2.0).exp() / 2f64.sqrt()) * Complex64::cis(-PI * x * w);
            err = err.max((v.get(j, k) - exact).norm());
        }
    }
    outcome(err <= STFT_TOL, format!("max error {err:.2e}; tol {STFT_TOL:.0e}"))
}

fn fourier_isometry(reports: &[Value]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [1, 2] {
        let m = &report(reports, &format!("fourier_isometry_p{p}"))["measurements"];
        let (dev, fine) = (num(&m["max_deviation"]), num(&m["refined_max_deviation"]));
        let shrinks = fine <= dev / ISOMETRY_SHRINK || dev <= ROUNDING_FLOOR;
        pass &= dev < ISOMETRY_TOL && shrinks;
        let how = if dev <= ROUNDING_FLOOR { " (at rounding floor)" } else { "" };
        parts.push(format!("p={p}: {dev:.1e} -> {fine:.1e}{how}"));
    }
    outcome(pass, format!("{}; tol {ISOMETRY_TOL:.0e}, shrink {ISOMETRY_SHRINK}x", parts.join(", ")))
}

fn algebra(reports: &[Value]) -> (Outcome, f64) {
    let r = report(reports, "algebra_p1_q1_s0");
    let (c, stability) = (num(&r["measured_constant"]), num(&r["stability"]));
    let control = report(reports, "algebra_p2_q2_s0");
    let flagged = control["status"] == "outside_hypothesis" && control["outside_hypothesis"] == true;
    let pairs = r["measurements"]["pairs"].as_u64().unwrap_or(0);
    let pass = c.is_finite() && stability < ALGEBRA_STABILITY && flagged && pairs == 50;
    (
        outcome(
            pass,
            format!(
                "C = {c:.6} over {pairs} pairs, stability {stability:.1e} (tol {ALGEBRA_STABILITY}); (2,2,0) control {}",
                control["status"].as_str().unwrap_or("?")
            ),
        ),
        c,
    )
}

fn convolution(reports: &[Value]) -> Outcome {
    let r = report(reports, "convolution");
    let worst = num(&r["measured_constant"]).max(num(&r["refined_constant"]));
    let violations = r["measurements"]["violations"].as_u64().unwrap_or(u64::MAX);
    outcome(
        worst <= 1.0 + CONVOLUTION_SLACK && violations == 0,
        format!("max ||k*f||/(||k||_1 ||f||) = {worst:.12}, violations {violations}; slack {CONVOLUTION_SLACK:.0e}"),
    )
}

fn multiplier_bounds() -> Outcome {
    let battery = battery();
    let p = params(1.0, 1.0, 0.0);
    let ts = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0];
    let mut pass = true;
    let mut parts = Vec::new();
    for family in Family::ALL {
        let report = bound_ratio(family, &ts, &battery, p).unwrap();
        let normalized: Vec<f64> = report.rows.iter().map(|r| r.normalized_ratio).collect();
        let head = normalized[..3].iter().cloned().fold(0.0, f64::max);
        let last = *normalized.last().unwrap();
        let bounded = last <= TREND_FACTOR * head;
        let mut identity = true;
        if family.is_identity_at_zero() {
            let kind = PropagatorKind::new(family, 0.0);
            for (_, f) in &battery {
                identity &= kind.apply(f).unwrap().max_abs_diff(f).unwrap() <= IDENTITY_TOL;
            }
        }
        pass &= bounded && identity;
        let mark = if bounded && identity { "ok" } else { "FAIL" };
        parts.push(format!("{family} {mark} (last {last:.3} vs head {head:.3})"));
    }
    outcome(pass, format!("{}; factor {TREND_FACTOR}, t=0 identity tol {IDENTITY_TOL:.0e}", parts.join(", ")))
}

fn free_gaussian(grid: GridSpec, t: f64) -> SampledField {
    let a = Complex64::new(1.0, 4.0 * PI * t);
    SampledField::from_fn(grid, Domain::Space, |x| (-PI * x[0] * x[0] / a).exp() / a.sqrt())
}

fn free_evolution() -> Outcome {
    let u0 = Builtin::gaussian().sample(&grid()).unwrap();
    let cfg = SolverConfig {
        quadrature_step: 0.01,
        ..SolverConfig::new(RealEntireSeries::zero(), 1.0)
    };
    let fwd = continue_solution(&CauchyData::nls(u0.clone()).unwrap(), &cfg, 0.1).unwrap();
    let forward_err = fwd.final_state().max_abs_diff(&free_gaussian(grid(), 0.1)).unwrap();
    let back_data = CauchyData::nls(fwd.final_state().clone()).unwrap().with_t0(0.1);
    let back = continue_solution(&back_data, &cfg, 0.0).unwrap();
    let back_err = back.final_state().max_abs_diff(&u0).unwrap();
    outcome(
        forward_err <= FREE_TOL && back_err <= FREE_TOL && back.final_time() == 0.0,
        format!("forward {forward_err:.1e}, backward {back_err:.1e}; tol {FREE_TOL:.0e}"),
    )
}

fn nls_c1() -> f64 {
    measure_c1(Equation::Nls, &battery(), params(1.0, 1.0, 0.0)).unwrap()
}

fn cubic_nls(eps: f64) -> CauchyData {
    CauchyData::nls(Builtin::gaussian().sample(&grid()).unwrap().scale(real(eps))).unwrap()
}

fn contraction(c1: f64) -> Outcome {
    let p = params(1.0, 1.0, 0.0);
    let cfg = SolverConfig {
        params: p,
        quadrature_step: 0.01,
        ..SolverConfig::new(RealEntireSeries::preset("cubic").unwrap(), c1)
    };
    let path = continue_solution(&cubic_nls(0.1), &cfg, 0.05).unwrap();
    let mut pass = path.termination == Termination::Reached && !path.windows.is_empty();
    let (mut worst_contraction, mut worst_horizon): (f64, f64) = (0.0, 0.0);
    let mut node = 0;
    for (k, w) in path.windows.iter().enumerate() {
        // |a_mn| for |z|^2 z: F~(x, x) = 4x^3, (d_x F~ + d_y F~)(x, x) = 12x^2.
        let m = 2.0 * c1 * mod_norm(&path.states[node], p).unwrap();
        let t1 = (1.0 / (2.0 * c1 * 4.0 * m * m)).min(1.0);
        let t2 = (1.0 / (4.0 * c1 * 12.0 * (2.0 * m) * (2.0 * m))).min(1.0);
        let horizon = 0.9 * t1.min(t2);
        worst_horizon = worst_horizon.max(rel(w.m, m)).max(rel(w.t1, t1)).max(rel(w.t2, t2));
        if k + 1 < path.windows.len() {
            worst_horizon = worst_horizon.max(rel(w.t_used, horizon));
        }
        worst_contraction = worst_contraction.max(w.contraction_factor);
        pass &= w.contraction_factor <= CONTRACTION_LIMIT && w.halvings == 0;
        node += w.steps;
    }
    pass &= worst_horizon <= HORIZON_TOL;
    outcome(
        pass,
        format!(
            "{} windows, max contraction {worst_contraction:.1e} (limit {CONTRACTION_LIMIT}), \
             T1/T2 rel error {worst_horizon:.1e} (tol {HORIZON_TOL:.0e})",
            path.windows.len()
        ),
    )
}

fn quadrature_order() -> Outcome {
    let data = cubic_nls(0.5);
    let residual_at = |dt: f64| {
        let cfg = SolverConfig {
            quadrature_step: dt,
            picard_tol: 1e-13,
            ..SolverConfig::new(RealEntireSeries::preset("cubic").unwrap(), 1.0)
        };
        let w = solve_window_for(&data, &cfg, 0.1).unwrap();
        residual(&w.path, &data, &cfg).unwrap()
    };
    let (coarse, fine) = (residual_at(0.01), residual_at(0.005));
    let ratio = coarse / fine;
    outcome(
        (QUADRATURE_RANGE.0..=QUADRATURE_RANGE.1).contains(&ratio),
        format!("residual {coarse:.2e} -> {fine:.2e}, ratio {ratio:.3} in {QUADRATURE_RANGE:?}"),
    )
}

fn perturbation(c1: f64) -> Outcome {
    let p = params(1.0, 1.0, 0.0);
    let cfg = SolverConfig {
        params: p,
        quadrature_step: 0.01,
        picard_tol: 1e-14,
        ..SolverConfig::new(RealEntireSeries::preset("cubic").unwrap(), c1)
    };
    let deviation = |eps: f64| {
        let data = cubic_nls(eps);
        let path = continue_solution(&data, &cfg, 0.1).unwrap();
        let free = PropagatorKind::new(Family::Schrodinger, 0.1).apply(data.u0()).unwrap();
        mod_norm(&path.final_state().sub(&free).unwrap(), p).unwrap()
    };
    let (big, small) = (deviation(0.1), deviation(0.05));
    let ratio = big / small;
    outcome(
        (PERTURBATION_RANGE.0..=PERTURBATION_RANGE.1).contains(&ratio),
        format!("deviation {big:.3e} / {small:.3e} = {ratio:.3} in {PERTURBATION_RANGE:?}"),
    )
}

fn increments(partial: &[f64]) -> Vec<f64> {
    partial.windows(2).map(|w| w[1] - w[0]).collect()
}

fn counterexample(reports: &[Value]) -> Outcome {
    let m = &report(reports, "counterexample")["measurements"];
    let tri = increments(&nums(&m["triangle_partial"]));
    let jump = increments(&nums(&m["jump_partial"]));
    let tri_ok = tri.len() >= 2 && tri[tri.len() - 1] < tri[0] / 4.0;
    let jump_ok = jump.len() >= 2
        && jump.iter().all(|&d| d >= JUMP_MIN_INCREMENT)
        && jump.windows(2).all(|w| (w[1] / w[0] - 1.0).abs() <= JUMP_INCREMENT_DRIFT);
    let fmt = |v: &[f64]| v.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>().join(" ");
    outcome(
        tri_ok && jump_ok,
        format!("triangle increments [{}], jump increments [{}]", fmt(&tri), fmt(&jump)),
    )
}

fn certificate(reports: &[Value], name: &str, c_alg: f64) -> Outcome {
    let m = &report(reports, name)["measurements"];
    let mut pass = true;
    let mut parts = Vec::new();
    for preset in m["presets"].as_array().cloned().unwrap_or_default() {
        let degree = preset["degree"].as_i64().unwrap_or(0) as i32;
        let c = num(&preset["constant"]);
        let stability = num(&preset["stability"]);
        let allowed = c_alg.powi(degree - 1) * CERTIFICATE_HEADROOM;
        pass &= c <= allowed && stability < CERTIFICATE_STABILITY;
        parts.push(format!(
            "{} C {c:.4} <= {allowed:.4}, stab {stability:.0e}",
            preset["preset"].as_str().unwrap_or("?")
        ));
    }
    pass &= parts.len() == 3;
    outcome(pass, format!("{}; headroom {CERTIFICATE_HEADROOM}, stability {CERTIFICATE_STABILITY}", parts.join(", ")))
}

fn torus(reports: &[Value]) -> Outcome {
    let r = report(reports, "torus_restriction");
    let (c, fine, stability) = (num(&r["measured_constant"]), num(&r["refined_constant"]), num(&r["stability"]));
    let recomputed = rel(fine, c);
    outcome(
        c.is_finite() && recomputed < TORUS_STABILITY,
        format!("C = {c:.4} -> {fine:.4}, stability {stability:.1e} (tol {TORUS_STABILITY})"),
    )
}

fn verify_all(out: &Path) -> std::process::Child {
    Command::new(binary())
        .args(["--out", out.to_str().unwrap(), "verify", "--suite", "all", "--seed", "7"])
        .stdout(std::process::Stdio::null())
        .spawn()
        .unwrap()
}

#[test]
fn acceptance() {
    let mut log = std::io::stderr();
    let _ = writeln!(log);
    let mut failed = Vec::new();
    let mut record = |id: u32, name: &str, started: Instant, o: Outcome| {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        let secs = started.elapsed().as_secs_f64();
        let _ = writeln!(log, "criterion {id:>2} {verdict} {name}: {} [{secs:.1}s]", o.detail);
        if !o.pass {
            failed.push(id);
        }
    };

    // Both runs of the determinism check also supply the suite reports.
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut runs = [verify_all(&a), verify_all(&b)];
    let ok = runs.iter_mut().all(|c| c.wait().unwrap().success());
    let bytes_a = std::fs::read(a.join("reports.json")).unwrap_or_default();
    let bytes_b = std::fs::read(b.join("reports.json")).unwrap_or_default();
    let identical = ok && !bytes_a.is_empty() && bytes_a == bytes_b;
    let suite_secs = started.elapsed();
    let reports: Vec<Value> = serde_json::from_slice(&bytes_a).unwrap_or_default();

    let t = Instant::now();
    record(1, "gaussian norm oracle", t, gaussian_norms());
    let t = Instant::now();
    record(2, "STFT oracle", t, stft_oracle());
    let t = Instant::now();
    record(3, "Fourier isometry", t, fourier_isometry(&reports));
    let t = Instant::now();
    let (o, c_alg) = algebra(&reports);
    record(4, "algebra inequality", t, o);
    let t = Instant::now();
    record(5, "convolution bound", t, convolution(&reports));
    let t = Instant::now();
    record(6, "multiplier bounds", t, multiplier_bounds());
    let t = Instant::now();
    record(7, "free evolution", t, free_evolution());
    let t = Instant::now();
    let c1 = nls_c1();
    record(8, "contraction", t, contraction(c1));
    let t = Instant::now();
    record(9, "quadrature order", t, quadrature_order());
    let t = Instant::now();
    record(10, "small-data perturbation", t, perturbation(c1));
    let t = Instant::now();
    record(11, "counterexample signature", t, counterexample(&reports));
    let t = Instant::now();
    record(12, "composition certificate", t, certificate(&reports, "composition", c_alg));
    let t = Instant::now();
    record(13, "Lipschitz estimate", t, certificate(&reports, "lipschitz", c_alg));
    let t = Instant::now();
    record(14, "torus restriction", t, torus(&reports));
    let o = outcome(
        identical,
        format!("two concurrent `verify --suite all --seed 7` runs, {} bytes each, identical: {identical}", bytes_a.len()),
    );
    let _ = writeln!(
        std::io::stderr(),
        "criterion 15 {} determinism: {} [{:.1}s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        suite_secs.as_secs_f64()
    );
    if !o.pass {
        failed.push(15);
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
