use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;

use super::{relative_change, Battery, CheckReport};
use crate::catalog::Builtin;
use crate::error::{Error, Result};
use crate::grid::{Domain, GridSpec, SampledField};
use crate::norm::{frequency_profile, mod_norm, pairwise_sum, periodize, torus_algebra_norm, Exponent, ModParams};
use crate::plot::{line_plot, Series};

fn unit_params() -> ModParams {
    ModParams::new(1.0, 1.0, 0.0).expect("valid exponents")
}

/// Smooth radial plateau: 1 for `r ≤ inner`, 0 for `r ≥ outer`, `C^∞` in
/// between.
pub fn plateau(r: f64, inner: f64, outer: f64) -> f64 {
    let r = r.abs();
    if r <= inner {
        return 1.0;
    }
    if r >= outer {
        return 0.0;
    }
    let bump = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let s = (r - inner) / (outer - inner);
    bump(1.0 - s) / (bump(1.0 - s) + bump(s))
}

/// `e^{1 - 1/(1 - 4|x|²)}` inside the ball of radius ½, zero outside: a
/// smooth bump supported in the unit cube with peak 1.
pub fn torus_bump(x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if 4.0 * r2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - 4.0 * r2)).exp()
    }
}

/// Sums `sup_x |V_g f(x, w)| dw` over `|w| ≤ W` for each cutoff.
fn partial_norms(f: &SampledField, cutoffs: &[f64]) -> Result<Vec<f64>> {
    let grid = *f.grid();
    let profile = frequency_profile(f, Exponent::Infinite)?;
    let dw = grid.cell(Domain::Frequency);
    Ok(cutoffs
        .iter()
        .map(|&w_max| {
            let kept: Vec<f64> = profile
                .iter()
                .enumerate()
                .filter(|(j, _)| grid.frequency(*j).abs() <= w_max)
                .map(|(_, v)| *v)
                .collect();
            dw * pairwise_sum(&kept)
        })
        .collect())
}

fn increments(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Frequency-truncated `M^{∞,1}` partial norms for the triangle, the jump
/// and a Gaussian control.
///
/// The triangle's partial sums must be Cauchy (last increment below a
/// quarter of the first); the jump's must keep growing by at least 0.1 per
/// cutoff step, each step within 30% of the previous one, which is the
/// signature of its `1/|w|` tail. The probe runs on its own box of extent 16
/// with at least four samples per unit of the largest cutoff.
pub fn counterexample_probe(w_sequence: &[f64]) -> Result<CheckReport> {
    if w_sequence.len() < 3 || w_sequence.windows(2).any(|w| !(w[1] > w[0])) || !(w_sequence[0] > 0.0) {
        return Err(Error::InvalidParameter(
            "w_sequence needs at least three positive increasing cutoffs".into(),
        ));
    }
    const EXTENT: f64 = 16.0;
    let w_max = *w_sequence.last().expect("nonempty");
    let samples = ((4.0 * w_max * EXTENT).ceil() as usize).next_power_of_two().max(256);
    let grid = GridSpec::new(1, samples, EXTENT)?;
    let run = |grid: &GridSpec| -> Result<[Vec<f64>; 3]> {
        Ok([
            partial_norms(&Builtin::triangle().sample(grid)?, w_sequence)?,
            partial_norms(&Builtin::jump().sample(grid)?, w_sequence)?,
            partial_norms(&Builtin::gaussian().sample(grid)?, w_sequence)?,
        ])
    };
    let [tri, jump, gauss] = run(&grid)?;
    let [tri_fine, jump_fine, _] = run(&grid.refined())?;
    let gauss_norm = mod_norm(&Builtin::gaussian().sample(&grid)?, ModParams::new(f64::INFINITY, 1.0, 0.0)?)?;
    let gauss_error = relative_change(gauss_norm, *gauss.last().expect("nonempty"));

    let tri_inc = increments(&tri);
    let jump_inc = increments(&jump);
    let cauchy = tri_inc.last() < Some(&(0.25 * tri_inc[0]));
    let log_growth = jump_inc.iter().all(|&d| d >= 0.1)
        && jump_inc.windows(2).all(|w| (w[1] - w[0]).abs() <= 0.3 * w[0]);
    let converges = gauss_error < 1e-6;

    let last_jump = *jump_inc.last().expect("at least two increments");
    let last_jump_fine = *increments(&jump_fine).last().expect("at least two increments");
    let pts = |v: &[f64]| w_sequence.iter().map(|w| w.log2()).zip(v.iter().copied()).collect();
    let plot = line_plot(
        "frequency-truncated M^{inf,1} partial norms",
        "log2 W",
        "partial norm",
        &[Series::new("triangle", pts(&tri)), Series::new("jump", pts(&jump)), Series::new("gaussian", pts(&gauss))],
    );
    let rows = (0..w_sequence.len()).map(|k| {
        format!("{},{},{},{},{},{}", w_sequence[k], tri[k], jump[k], gauss[k], tri_fine[k], jump_fine[k])
    });
    let mut csv_text = String::from("w,triangle,jump,gaussian,triangle_refined,jump_refined\n");
    for r in rows {
        csv_text.push_str(&r);
        csv_text.push('\n');
    }
    Ok(CheckReport::new("counterexample", json!({ "w": w_sequence, "grid": grid.to_string() }), last_jump, last_jump_fine)
        .criterion("triangle: last increment < 1/4 of the first")
        .criterion("jump: every increment >= 0.1 and within 30% of the previous increment")
        .criterion("gaussian: partial sum at the largest cutoff matches the M^{inf,1} norm to 1e-6")
        .measurements(json!({
            "triangle_partial": tri,
            "jump_partial": jump,
            "gaussian_partial": gauss,
            "triangle_increments": tri_inc,
            "jump_increments": jump_inc,
            "refined_triangle_partial": tri_fine,
            "refined_jump_partial": jump_fine,
            "gaussian_norm": gauss_norm,
            "gaussian_error": gauss_error,
            "triangle_cauchy": cauchy,
            "jump_log_growth": log_growth,
        }))
        .file("csv", csv_text)
        .file("svg", plot)
        .verdict(cauchy && log_growth && converges))
}

fn power_nonlinearity(f: &SampledField, alpha: f64) -> SampledField {
    f.map(|z| z * z.norm().powf(alpha))
}

/// Exploratory: tabulates `‖f|f|^α‖ / ‖f‖^{α+1}` in `M^{1,1}` for
/// amplitude-scaled Gaussians and odd Gaussians `x e^{-π x²}` at two
/// resolutions, flagging drift above 5%. No verdict: a finite grid cannot
/// exhibit an infinite norm.
pub fn analyticity_probe(alpha: f64) -> Result<CheckReport> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let grid = GridSpec::new(1, 512, 16.0)?;
    let amplitudes = [0.5, 1.0, 2.0];
    let family = |grid: &GridSpec| -> Vec<(String, SampledField)> {
        let mut out = Vec::new();
        for a in amplitudes {
            out.push((
                format!("{a} gaussian"),
                SampledField::from_fn(*grid, Domain::Space, |x| Complex64::new(a * (-std::f64::consts::PI * x[0] * x[0]).exp(), 0.0)),
            ));
            out.push((
                format!("{a} odd gaussian"),
                SampledField::from_fn(*grid, Domain::Space, |x| {
                    Complex64::new(a * x[0] * (-std::f64::consts::PI * x[0] * x[0]).exp(), 0.0)
                }),
            ));
        }
        out
    };
    let ratios = |grid: &GridSpec| -> Result<Vec<(String, f64)>> {
        family(grid)
            .par_iter()
            .map(|(name, f)| {
                let lhs = mod_norm(&power_nonlinearity(f, alpha), unit_params())?;
                Ok((name.clone(), lhs / mod_norm(f, unit_params())?.powf(alpha + 1.0)))
            })
            .collect()
    };
    let coarse = ratios(&grid)?;
    let fine = ratios(&grid.refined())?;
    let table: Vec<_> = coarse
        .iter()
        .zip(&fine)
        .map(|((name, a), (_, b))| {
            let drift = relative_change(*a, *b);
            json!({ "member": name, "ratio": a, "refined_ratio": b, "drift": drift, "flagged": drift > 0.05 })
        })
        .collect();
    let max_ratio = coarse.iter().map(|(_, r)| *r).fold(0.0, f64::max);
    let max_fine = fine.iter().map(|(_, r)| *r).fold(0.0, f64::max);
    let worst_drift = coarse
        .iter()
        .zip(&fine)
        .map(|((_, a), (_, b))| relative_change(*a, *b))
        .fold(0.0, f64::max);
    let even = alpha.fract() == 0.0 && (alpha as u64) % 2 == 0;
    let mut csv_text = String::from("member,ratio,refined_ratio\n");
    for ((name, a), (_, b)) in coarse.iter().zip(&fine) {
        csv_text.push_str(&format!("{name},{a},{b}\n"));
    }
    let mut report = CheckReport::new(format!("analyticity_alpha{alpha}"), json!({ "alpha": alpha, "p": "1", "q": "1", "s": 0.0 }), max_ratio, max_fine)
        .criterion("exploratory: numerical evidence only, no verdict")
        .criterion("drift above 0.05 under N -> 2N is flagged")
        .measurements(json!({
            "even_integer_alpha": even,
            "members": table,
            "any_flagged": worst_drift > 0.05,
        }))
        .file("csv", csv_text)
        .exploratory();
    report.stability = worst_drift;
    Ok(report)
}

fn lattice_index(grid: &GridSpec, x0: f64) -> Result<usize> {
    let k = (x0 + 0.5 * grid.extent()) / grid.spacing();
    if (k - k.round()).abs() > 1e-9 || k.round() < 0.0 || k.round() as usize >= grid.samples() {
        return Err(Error::OffLattice(format!("x0 = {x0} is not a node of {grid}")));
    }
    Ok(k.round() as usize)
}

/// `mod_norm(φ^λ(· − x₀)(f − f(x₀)); 1,1,0)` with `φ^λ(x) = plateau(λx, ½, 1)`.
fn localized_norm(f: &SampledField, x0: f64, lambda: f64) -> Result<f64> {
    let grid = *f.grid();
    let centre = f.values()[lattice_index(&grid, x0)?];
    let g = SampledField::from_fn(grid, Domain::Space, |x| {
        Complex64::new(plateau(lambda * (x[0] - x0), 0.5, 1.0), 0.0)
    });
    let shifted = f.map(|z| z - centre);
    mod_norm(&g.mul(&shifted)?, unit_params())
}

fn tail_norm(f: &SampledField, radius: f64) -> Result<f64> {
    let cut = SampledField::from_fn(*f.grid(), Domain::Space, |x| {
        Complex64::new(1.0 - plateau(x[0], radius, radius + 1.0), 0.0)
    });
    mod_norm(&cut.mul(f)?, unit_params())
}

/// [`localization_probe`] for any field recipe.
///
/// Sweeps `λ = 1, 2, 4, …, 32` on a box of extent 16 with spacing 1/128, so
/// the smallest localizer still spans eight nodes, and checks the tail
/// outside `[−4, 4]`.
pub fn localization_probe_with<F>(name: &str, sample: F, x0: f64, eps: f64) -> Result<CheckReport>
where
    F: Fn(&GridSpec) -> Result<SampledField>,
{
    const TAIL_RADIUS: f64 = 4.0;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let grid = GridSpec::new(1, 2048, 16.0)?;
    let f = sample(&grid)?;
    let fine = sample(&grid.refined())?;
    let lambdas: Vec<f64> = (0..6).map(|k| f64::from(1u32 << k)).collect();
    let sweep: Vec<f64> = lambdas
        .par_iter()
        .map(|&l| localized_norm(&f, x0, l))
        .collect::<Result<_>>()?;
    let found = lambdas.iter().zip(&sweep).find(|(_, &n)| n < eps).map(|(&l, _)| l);
    let tail = tail_norm(&f, TAIL_RADIUS)?;
    let tail_fine = tail_norm(&fine, TAIL_RADIUS)?;
    let probe_lambda = found.unwrap_or(*lambdas.last().expect("nonempty"));
    let measured = localized_norm(&f, x0, probe_lambda)?;
    let refined = localized_norm(&fine, x0, probe_lambda)?;
    let plot = line_plot(
        &format!("localized norm for {name} at x0 = {x0}"),
        "log2 lambda",
        "norm",
        &[Series::new("norm", lambdas.iter().map(|l| l.log2()).zip(sweep.iter().copied()).collect())],
    );
    let mut csv_text = String::from("lambda,norm\n");
    for (l, n) in lambdas.iter().zip(&sweep) {
        csv_text.push_str(&format!("{l},{n}\n"));
    }
    let pass = found.is_some() && tail < eps;
    Ok(CheckReport::new(
        format!("localization_{name}_eps{eps}"),
        json!({ "x0": x0, "eps": eps, "tail_radius": TAIL_RADIUS, "grid": grid.to_string() }),
        measured,
        refined,
    )
    .criterion(format!("some lambda in 1..32 gives a localized norm < eps = {eps}"))
    .criterion(format!("tail norm outside [-{TAIL_RADIUS}, {TAIL_RADIUS}] < eps"))
    .measurements(json!({
        "lambda": found,
        "sweep_lambda": lambdas,
        "sweep_norm": sweep,
        "tail": tail,
        "refined_tail": tail_fine,
    }))
    .file("csv", csv_text)
    .file("svg", plot)
    .verdict(pass))
}

/// Searches the dilation `λ` making `φ^λ(· − x₀)(f − f(x₀))` small in
/// `M^{1,1}`, and checks that `f` is small outside `[−4, 4]`.
pub fn localization_probe(source: &Builtin, x0: f64, eps: f64) -> Result<CheckReport> {
    localization_probe_with(source.name(), |g| source.sample(g), x0, eps)
}

fn torus_ratio(f: &SampledField, phi: &dyn Fn(&[f64]) -> f64) -> Result<(f64, f64)> {
    let dim = f.grid().dim();
    let cut = SampledField::from_fn(*f.grid(), Domain::Space, |x| Complex64::new(phi(&x[..dim]), 0.0));
    let a_norm = torus_algebra_norm(&periodize(&cut.mul(f)?)?)?;
    Ok((a_norm, mod_norm(f, unit_params())?))
}

/// `‖φf‖_{A(𝕋ⁿ)} / ‖f‖_{M^{1,1}}` for one field at `N` and `2N`; `phi` must be
/// supported in the unit cube.
pub fn torus_restriction_check(source: &Builtin, grid: &GridSpec, phi: &dyn Fn(&[f64]) -> f64) -> Result<CheckReport> {
    let (a, m) = torus_ratio(&source.sample(grid)?, phi)?;
    let (a_fine, m_fine) = torus_ratio(&source.sample(&grid.refined())?, phi)?;
    let ratio = if a == 0.0 { 0.0 } else { a / m };
    let ratio_fine = if a_fine == 0.0 { 0.0 } else { a_fine / m_fine };
    let report = CheckReport::new(format!("torus_{}", source.name()), json!({ "grid": grid.to_string() }), ratio, ratio_fine)
        .criterion("ratio changes by < 0.10 under N -> 2N")
        .measurements(json!({ "torus_norm": a, "modulation_norm": m, "refined_torus_norm": a_fine, "refined_modulation_norm": m_fine }));
    let pass = ratio.is_finite() && report.stability < 0.10;
    Ok(report.verdict(pass))
}

/// The torus restriction constant `max ‖φf‖_{A(𝕋)} / ‖f‖_{M^{1,1}}` over the
/// battery members in `M^{1,1}`, with [`torus_bump`] as `φ`.
pub fn torus_restriction_battery(battery: &Battery) -> Result<CheckReport> {
    let ratios = |b: &Battery| -> Result<Vec<(String, f64)>> {
        b.admissible(unit_params())
            .par_iter()
            .map(|m| {
                let (a, n) = torus_ratio(&m.field, &torus_bump)?;
                Ok((m.name.clone(), a / n))
            })
            .collect()
    };
    let coarse = ratios(battery)?;
    let fine = ratios(&battery.refined()?)?;
    let c = coarse.iter().map(|(_, r)| *r).fold(0.0, f64::max);
    let c_fine = fine.iter().map(|(_, r)| *r).fold(0.0, f64::max);
    let mut csv_text = String::from("field,ratio,refined_ratio\n");
    for ((name, a), (_, b)) in coarse.iter().zip(&fine) {
        csv_text.push_str(&format!("{name},{a},{b}\n"));
    }
    let argmax = coarse.iter().find(|(_, r)| *r == c).map(|(n, _)| n.clone());
    let report = CheckReport::new("torus_restriction", json!({ "p": "1", "q": "1", "s": 0.0 }), c, c_fine)
        .criterion("constant changes by < 0.10 under N -> 2N")
        .measurements(json!({ "argmax": argmax, "members": coarse.len() }))
        .file("csv", csv_text);
    let pass = c.is_finite() && report.stability < 0.10;
    Ok(report.verdict(pass))
}
