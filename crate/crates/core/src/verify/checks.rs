use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{params_json, relative_change, Battery, CheckReport, Member};
use crate::catalog::Builtin;
use crate::error::{Error, Result};
use crate::grid::{convolve, transform, Domain, GridSpec, SampledField};
use crate::norm::{mod_norm, Exponent, ModParams};
use crate::plot::{line_plot, Series};
use crate::series::{compose, BoundInstance, RealEntireSeries, PRESETS};

/// Deviations at or below this are rounding noise, too small to shrink further.
const ROUNDOFF_FLOOR: f64 = 1e-12;

fn unit_params() -> ModParams {
    ModParams::new(1.0, 1.0, 0.0).expect("valid exponents")
}

fn norms(fields: &[&SampledField], params: ModParams) -> Result<Vec<f64>> {
    fields.par_iter().map(|f| mod_norm(f, params)).collect()
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = format!("{header}\n");
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

/// `‖fg‖ ≤ C ‖f‖ ‖g‖` is claimed for `(p, 1, s ≥ 0)` and for `s > n/q'`.
fn algebra_hypothesis(params: ModParams, dim: usize) -> bool {
    let q_is_one = params.q == Exponent::Finite(1.0);
    let q_conj = params.q.conjugate().value();
    (q_is_one && params.s >= 0.0) || params.s > dim as f64 / q_conj
}

/// One sampled product in [`check_algebra`].
#[derive(Debug, Clone, Serialize)]
pub struct AlgebraPair {
    pub left: String,
    pub right: String,
    pub ratio: f64,
    pub refined_ratio: f64,
}

/// Factors tried for each member: the field, its real part (the imaginary
/// part when the real part vanishes) and that part squared. The squares
/// matter: composition bounds chain products of such monomials.
fn algebra_pool(members: &[&Member]) -> Vec<(String, SampledField)> {
    let mut pool = Vec::with_capacity(3 * members.len());
    for m in members {
        let (label, part) = if m.field.real_part().l2_norm() > 0.0 {
            ("re", m.field.real_part())
        } else {
            ("im", m.field.imag_part())
        };
        let square = part.mul(&part).expect("same grid");
        pool.push((m.name.clone(), m.field.clone()));
        pool.push((format!("{label} {}", m.name), part));
        pool.push((format!("({label} {})^2", m.name), square));
    }
    pool
}

/// Index pairs into [`algebra_pool`]: five structured pairs per member, then
/// cross products of distinct members.
fn algebra_pairs(members: usize, count: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..members {
        let (f, r, r2) = (3 * i, 3 * i + 1, 3 * i + 2);
        let next = 3 * ((i + 1) % members);
        pairs.extend([(f, f), (f, next), (r, r), (r2, r), (r2, r2)]);
    }
    for i in 0..members {
        for j in i + 2..members {
            pairs.push((3 * i, 3 * j));
        }
    }
    pairs.truncate(count);
    pairs
}

fn algebra_ratios(battery: &Battery, params: ModParams, pairs: &[(usize, usize)]) -> Result<Vec<Option<f64>>> {
    let members = battery.admissible(params);
    let pool = algebra_pool(&members);
    let fields: Vec<&SampledField> = pool.iter().map(|(_, f)| f).collect();
    let single = norms(&fields, params)?;
    pairs
        .par_iter()
        .map(|&(a, b)| {
            if single[a] == 0.0 || single[b] == 0.0 {
                return Ok(None);
            }
            let product = fields[a].mul(fields[b])?;
            Ok(Some(mod_norm(&product, params)? / (single[a] * single[b])))
        })
        .collect()
}

/// Measures the multiplication-algebra constant `max ‖fg‖ / (‖f‖ ‖g‖)` over
/// `pairs` products drawn from the battery, at `N` and `2N`.
pub fn check_algebra(battery: &Battery, params: ModParams, pairs: usize) -> Result<CheckReport> {
    let members = battery.admissible(params);
    if members.len() < 2 {
        return Err(Error::InvalidParameter(format!("fewer than two battery fields lie in {params}")));
    }
    let names: Vec<String> = algebra_pool(&members).into_iter().map(|(n, _)| n).collect();
    let index = algebra_pairs(members.len(), pairs);
    let coarse = algebra_ratios(battery, params, &index)?;
    let fine = algebra_ratios(&battery.refined()?, params, &index)?;
    let table: Vec<AlgebraPair> = index
        .iter()
        .zip(coarse.iter().zip(&fine))
        .filter_map(|(&(a, b), (c, f))| {
            Some(AlgebraPair {
                left: names[a].clone(),
                right: names[b].clone(),
                ratio: (*c)?,
                refined_ratio: (*f)?,
            })
        })
        .collect();
    let c = max_of(table.iter().map(|p| p.ratio));
    let c_fine = max_of(table.iter().map(|p| p.refined_ratio));
    let argmax = table.iter().find(|p| p.ratio == c).map(|p| format!("{} * {}", p.left, p.right));
    let inside = algebra_hypothesis(params, battery.grid().dim());
    let name = format!("algebra_p{}_q{}_s{}", params.p.value(), params.q.value(), params.s);
    let rows = table
        .iter()
        .map(|p| format!("{},{},{},{}", p.left, p.right, p.ratio, p.refined_ratio));
    let report = CheckReport::new(name, params_json(params), c, c_fine)
        .criterion("C = max ||fg|| / (||f|| ||g||) is finite")
        .criterion("relative change of C under N -> 2N < 0.05")
        .measurements(json!({ "pairs": table.len(), "argmax": argmax, "table": table }))
        .file("csv", csv("left,right,ratio,refined_ratio", rows));
    if !inside {
        return Ok(report
            .criterion("parameters outside the algebra hypothesis: growth under refinement permitted")
            .outside_hypothesis());
    }
    let pass = c.is_finite() && report.stability < 0.05;
    Ok(report.verdict(pass))
}

fn kernels(grid: &GridSpec) -> Result<Vec<(&'static str, SampledField)>> {
    let h = grid.cell(Domain::Space);
    let origin = grid.origin_index();
    let mut delta = vec![Complex64::default(); grid.len()];
    delta[origin] = Complex64::new(1.0 / h, 0.0);
    Ok(vec![
        ("gaussian", Builtin::gaussian().sample(grid)?),
        (
            "box",
            SampledField::from_fn(*grid, Domain::Space, |x| {
                let inside = x[..grid.dim()].iter().all(|v| v.abs() <= 0.5);
                Complex64::new(if inside { 1.0 } else { 0.0 }, 0.0)
            }),
        ),
        ("delta", SampledField::new(*grid, Domain::Space, delta)?),
    ])
}

fn l1_norm(k: &SampledField) -> f64 {
    k.grid().cell(Domain::Space) * k.values().iter().map(|z| z.norm()).sum::<f64>()
}

#[derive(Debug, Clone, Serialize)]
struct ConvolutionRow {
    kernel: String,
    field: String,
    params: String,
    ratio: f64,
}

fn convolution_rows(battery: &Battery, params_list: &[ModParams]) -> Result<Vec<ConvolutionRow>> {
    let grid = battery.grid();
    let mut rows = Vec::new();
    for &params in params_list {
        let fields: Vec<&SampledField> = battery.members().iter().map(|m| &m.field).collect();
        let base = norms(&fields, params)?;
        for (kname, k) in kernels(grid)? {
            let k1 = l1_norm(&k);
            let ratios: Vec<f64> = fields
                .par_iter()
                .zip(&base)
                .map(|(f, &nf)| Ok(mod_norm(&convolve(f, &k)?, params)? / (k1 * nf)))
                .collect::<Result<_>>()?;
            for (m, ratio) in battery.members().iter().zip(ratios) {
                rows.push(ConvolutionRow {
                    kernel: kname.to_string(),
                    field: m.name.clone(),
                    params: params.to_string(),
                    ratio,
                });
            }
        }
    }
    Ok(rows)
}

/// Checks `‖k∗f‖ ≤ ‖k‖_{L¹} ‖f‖` for Gaussian, box and delta kernels over
/// the battery, and homogeneity under scaling the kernel by 3.
pub fn check_convolution(battery: &Battery) -> Result<CheckReport> {
    const SLACK: f64 = 1e-6;
    let params_list = [unit_params(), ModParams::new(2.0, 2.0, 0.0)?];
    let coarse = convolution_rows(battery, &params_list)?;
    let fine = convolution_rows(&battery.refined()?, &params_list)?;
    let c = max_of(coarse.iter().map(|r| r.ratio));
    let c_fine = max_of(fine.iter().map(|r| r.ratio));
    let violations: Vec<&ConvolutionRow> = coarse.iter().chain(&fine).filter(|r| r.ratio > 1.0 + SLACK).collect();
    let delta_error = max_of(coarse.iter().filter(|r| r.kernel == "delta").map(|r| (r.ratio - 1.0).abs()));

    let grid = battery.grid();
    let k = Builtin::gaussian().sample(grid)?;
    let k3 = k.scale(Complex64::new(3.0, 0.0));
    let mut scaling_error: f64 = 0.0;
    for m in battery.members().iter().take(3) {
        let one = mod_norm(&convolve(&m.field, &k)?, unit_params())?;
        let three = mod_norm(&convolve(&m.field, &k3)?, unit_params())?;
        scaling_error = scaling_error.max(relative_change(3.0 * one, three));
    }

    let pass = violations.is_empty() && delta_error <= 1e-10 && scaling_error <= 1e-10;
    let rows = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| format!("{},{},{},{},{}", a.kernel, a.field, a.params, a.ratio, b.ratio));
    Ok(CheckReport::new("convolution", json!(["1,1,0", "2,2,0"]), c, c_fine)
        .criterion(format!("||k*f|| / (||k||_1 ||f||) <= 1 + {SLACK:e} for every kernel and field at N and 2N"))
        .criterion("delta kernel reproduces the norm to 1e-10")
        .criterion("scaling the kernel by 3 scales the norm by 3 to 1e-10")
        .measurements(json!({
            "violations": violations.len(),
            "delta_error": delta_error,
            "scaling_error": scaling_error,
        }))
        .file("csv", csv("kernel,field,params,ratio,refined_ratio", rows))
        .verdict(pass))
}

fn identity_errors(f: &SampledField, r_sequence: &[f64], params: ModParams) -> Result<Vec<f64>> {
    let grid = f.grid();
    r_sequence
        .par_iter()
        .map(|&r| {
            let phi = Builtin::Gaussian {
                center: 0.0,
                width: r,
                amplitude: 1.0,
            }
            .sample(grid)?;
            mod_norm(&convolve(f, &phi)?.sub(f)?, params)
        })
        .collect()
}

/// Sweeps `‖f ∗ φ_r − f‖` along a decreasing `r_sequence`, where
/// `φ_r = r^{-n} e^{-π|x/r|²}` has unit mass.
///
/// Passes when the error decreases monotonically and ends below `eps`;
/// `delta` in the measurements is the largest `r` from which on every error
/// is below `eps`.
pub fn check_approx_identity(
    source: &Builtin,
    grid: &GridSpec,
    r_sequence: &[f64],
    params: ModParams,
    eps: f64,
) -> Result<CheckReport> {
    if r_sequence.is_empty() || r_sequence.windows(2).any(|w| !(w[1] < w[0])) || r_sequence.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidParameter("r_sequence must be positive and strictly decreasing".into()));
    }
    let coarse = identity_errors(&source.sample(grid)?, r_sequence, params)?;
    let fine = identity_errors(&source.sample(&grid.refined())?, r_sequence, params)?;
    let monotone = coarse.windows(2).all(|w| w[1] < w[0]);
    let last = *coarse.last().expect("nonempty");
    let delta = r_sequence
        .iter()
        .zip(&coarse)
        .rev()
        .take_while(|(_, &e)| e < eps)
        .last()
        .map(|(&r, _)| r);
    let name = format!("approx_identity_{}", source.name());
    let rows = r_sequence
        .iter()
        .zip(coarse.iter().zip(&fine))
        .map(|(r, (a, b))| format!("{r},{a},{b}"));
    let plot = line_plot(
        &format!("||f*phi_r - f|| for {}", source.name()),
        "r",
        "error",
        &[Series::new("N", r_sequence.iter().copied().zip(coarse.iter().copied()).collect()),
          Series::new("2N", r_sequence.iter().copied().zip(fine.iter().copied()).collect())],
    );
    Ok(CheckReport::new(name, params_json(params), last, *fine.last().expect("nonempty"))
        .criterion("error strictly decreasing along the r sequence")
        .criterion(format!("final error < eps = {eps}"))
        .measurements(json!({ "r": r_sequence, "error": coarse, "refined_error": fine, "delta": delta, "eps": eps }))
        .file("csv", csv("r,error,refined_error", rows))
        .file("svg", plot)
        .verdict(monotone && last < eps))
}

fn isometry_deviation(battery: &Battery, params: ModParams) -> Result<Vec<(String, f64)>> {
    battery
        .admissible(params)
        .par_iter()
        .map(|m| {
            let direct = mod_norm(&m.field, params)?;
            let dual = mod_norm(&transform(&m.field)?, params)?;
            Ok((m.name.clone(), dual / direct))
        })
        .collect()
}

/// Measures `max |‖f̂‖_{M^{p,p}} / ‖f‖_{M^{p,p}} − 1|` over the battery, with
/// an `s = 1` negative control on a shifted Gaussian whose weighted norm is
/// not preserved.
pub fn check_fourier_isometry(battery: &Battery, p: f64) -> Result<CheckReport> {
    const TOLERANCE: f64 = 1e-4;
    const CONTROL_GAP: f64 = 1e-2;
    let params = ModParams::new(p, p, 0.0)?;
    let coarse = isometry_deviation(battery, params)?;
    let fine = isometry_deviation(&battery.refined()?, params)?;
    let dev = max_of(coarse.iter().map(|(_, r)| (r - 1.0).abs()));
    let dev_fine = max_of(fine.iter().map(|(_, r)| (r - 1.0).abs()));

    let shifted = Builtin::Gaussian {
        center: 3.0,
        width: 1.0,
        amplitude: 1.0,
    }
    .sample(battery.grid())?;
    let weighted = ModParams::new(p, p, 1.0)?;
    let control = mod_norm(&transform(&shifted)?, weighted)? / mod_norm(&shifted, weighted)?;

    let shrinks = dev_fine <= dev / 4.0 || dev <= ROUNDOFF_FLOOR;
    let pass = dev < TOLERANCE && shrinks && (control - 1.0).abs() > CONTROL_GAP;
    let rows = coarse
        .iter()
        .zip(&fine)
        .map(|((name, a), (_, b))| format!("{name},{a},{b}"));
    Ok(CheckReport::new(format!("fourier_isometry_p{p}"), params_json(params), dev, dev_fine)
        .criterion(format!("max |ratio - 1| < {TOLERANCE:e}"))
        .criterion(format!(
            "deviation shrinks by 4x under N -> 2N, or is already at the rounding floor {ROUNDOFF_FLOOR:e}"
        ))
        .criterion(format!("s = 1 control on a shifted gaussian deviates from 1 by more than {CONTROL_GAP}"))
        .measurements(json!({
            "max_deviation": dev,
            "refined_max_deviation": dev_fine,
            "at_rounding_floor": dev <= ROUNDOFF_FLOOR,
            "control_ratio_s1": control,
        }))
        .file("csv", csv("field,ratio,refined_ratio", rows))
        .verdict(pass))
}

fn embedding_constant(battery: &Battery, source: ModParams, target: ModParams) -> Result<f64> {
    let members = battery.admissible(source);
    let ratios: Vec<f64> = members
        .par_iter()
        .map(|m| Ok(mod_norm(&m.field, target)? / mod_norm(&m.field, source)?))
        .collect::<Result<_>>()?;
    Ok(max_of(ratios))
}

/// Measures `sup ‖f‖_{target} / ‖f‖_{source}` for `(1,1)→(2,1)`,
/// `(1,1)→(∞,1)` and `M^{2,2}_1 → M^{∞,1}`, plus the identity embedding.
pub fn check_embeddings(battery: &Battery) -> Result<CheckReport> {
    let p = |p: f64, q: f64, s: f64| ModParams::new(p, q, s);
    let inf = f64::INFINITY;
    let pairs = [
        (p(1.0, 1.0, 0.0)?, p(2.0, 1.0, 0.0)?),
        (p(1.0, 1.0, 0.0)?, p(inf, 1.0, 0.0)?),
        (p(2.0, 2.0, 1.0)?, p(inf, 1.0, 0.0)?),
    ];
    let refined = battery.refined()?;
    let mut table = Vec::new();
    for (source, target) in pairs {
        let c = embedding_constant(battery, source, target)?;
        let c_fine = embedding_constant(&refined, source, target)?;
        table.push(json!({
            "source": source.to_string(),
            "target": target.to_string(),
            "constant": c,
            "refined_constant": c_fine,
            "stability": relative_change(c, c_fine),
        }));
    }
    let identity = embedding_constant(battery, unit_params(), unit_params())?;
    let constant = |key: &str| max_of(table.iter().map(|row| row[key].as_f64().unwrap_or(f64::INFINITY)));
    let worst_stability = constant("stability");
    let pass = table.iter().all(|r| r["constant"].as_f64().is_some_and(f64::is_finite))
        && worst_stability < 0.05
        && (identity - 1.0).abs() <= 1e-12;
    let rows = table.iter().map(|r| {
        format!("{},{},{},{}", r["source"].as_str().unwrap_or(""), r["target"].as_str().unwrap_or(""), r["constant"], r["refined_constant"])
    });
    let csv_text = csv("source,target,constant,refined_constant", rows);
    let mut report = CheckReport::new("embeddings", json!(["1,1,0->2,1,0", "1,1,0->inf,1,0", "2,2,1->inf,1,0"]), constant("constant"), constant("refined_constant"))
        .criterion("every embedding constant finite")
        .criterion("every constant changes by < 0.05 under N -> 2N")
        .criterion("identity embedding constant = 1 to 1e-12")
        .measurements(json!({ "embeddings": table, "identity": identity }))
        .file("csv", csv_text);
    report.stability = worst_stability;
    Ok(report.verdict(pass))
}

/// Resolves the algebra constant the certificate bounds are judged against.
fn algebra_constant(battery: &Battery, given: Option<f64>) -> Result<f64> {
    match given {
        Some(c) => Ok(c),
        None => Ok(check_algebra(battery, unit_params(), 50)?.measured_constant),
    }
}

fn presets() -> Result<Vec<(String, RealEntireSeries)>> {
    PRESETS.iter().map(|&n| Ok((n.to_string(), RealEntireSeries::preset(n)?))).collect()
}

/// Per preset, the largest `lhs / rhs` over the battery.
fn composition_constants(battery: &Battery, series: &[(String, RealEntireSeries)]) -> Result<Vec<f64>> {
    let params = unit_params();
    let members = battery.admissible(params);
    let per_member: Vec<Vec<f64>> = members
        .par_iter()
        .map(|m| {
            let re = mod_norm(&m.field.real_part(), params)?;
            let im = mod_norm(&m.field.imag_part(), params)?;
            series
                .iter()
                .map(|(_, s)| {
                    let lhs = mod_norm(&compose(s, &m.field)?, params)?;
                    Ok(BoundInstance::new(lhs, s.majorant_value(re, im)).constant)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..series.len()).map(|k| max_of(per_member.iter().map(|row| row[k]))).collect())
}

fn certificate_report(
    name: &str,
    series: &[(String, RealEntireSeries)],
    coarse: &[f64],
    fine: &[f64],
    c_alg: f64,
) -> CheckReport {
    const HEADROOM: f64 = 1.1;
    const STABILITY: f64 = 0.1;
    let mut table = Vec::new();
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut worst_fine: f64 = 0.0;
    let mut worst_stability: f64 = 0.0;
    for (k, (preset, s)) in series.iter().enumerate() {
        let allowed = c_alg.powi(s.degree() as i32 - 1) * HEADROOM;
        let stability = relative_change(coarse[k], fine[k]);
        let ok = coarse[k] <= allowed && stability < STABILITY;
        pass &= ok;
        worst = worst.max(coarse[k] / allowed * HEADROOM);
        worst_fine = worst_fine.max(fine[k] / allowed * HEADROOM);
        worst_stability = worst_stability.max(stability);
        table.push(json!({
            "preset": preset,
            "degree": s.degree(),
            "constant": coarse[k],
            "refined_constant": fine[k],
            "allowed": allowed,
            "stability": stability,
            "pass": ok,
        }));
    }
    let rows = table.iter().map(|r| {
        format!("{},{},{},{},{}", r["preset"].as_str().unwrap_or(""), r["degree"], r["constant"], r["refined_constant"], r["allowed"])
    });
    let mut report = CheckReport::new(name, json!({ "p": "1", "q": "1", "s": 0.0 }), worst, worst_fine)
        .criterion(format!("per preset, C <= C_alg^(degree - 1) * {HEADROOM} with C_alg = {c_alg}"))
        .criterion(format!("per preset, C changes by < {STABILITY} under N -> 2N"))
        .measurements(json!({ "algebra_constant": c_alg, "presets": table }))
        .file("csv", csv("preset,degree,constant,refined_constant,allowed", rows));
    report.stability = worst_stability;
    report.verdict(pass)
}

/// Checks `‖F(f)‖ ≤ C F̃(‖Re f‖, ‖Im f‖)` for the preset nonlinearities.
///
/// `measured_constant` is the worst `C / C_alg^{deg−1}`; `algebra_constant`
/// defaults to a fresh [`check_algebra`] at `(1,1,0)`.
pub fn check_composition(battery: &Battery, algebra_constant_value: Option<f64>) -> Result<CheckReport> {
    let c_alg = algebra_constant(battery, algebra_constant_value)?;
    let series = presets()?;
    let coarse = composition_constants(battery, &series)?;
    let fine = composition_constants(&battery.refined()?, &series)?;
    Ok(certificate_report("composition", &series, &coarse, &fine, c_alg))
}

/// Pairs `(u, v)`: neighbouring admissible members, and each member against
/// `0.9` times itself.
fn lipschitz_pairs(members: &[&Member]) -> Vec<(SampledField, SampledField)> {
    let k = members.len();
    let mut pairs = Vec::with_capacity(2 * k);
    for i in 0..k {
        let u = &members[i].field;
        pairs.push((u.clone(), members[(i + 1) % k].field.clone()));
        pairs.push((u.clone(), u.scale(Complex64::new(0.9, 0.0))));
    }
    pairs
}

fn lipschitz_constants(battery: &Battery, series: &[(String, RealEntireSeries)]) -> Result<Vec<f64>> {
    let params = unit_params();
    let pairs = lipschitz_pairs(&battery.admissible(params));
    let per_pair: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|(u, v)| {
            let radius = mod_norm(u, params)? + mod_norm(v, params)?;
            let gap = mod_norm(&u.sub(v)?, params)?;
            series
                .iter()
                .map(|(_, s)| {
                    let lhs = mod_norm(&compose(s, u)?.sub(&compose(s, v)?)?, params)?;
                    let rhs = 2.0 * gap * s.derivative_majorant(radius);
                    Ok(BoundInstance::new(lhs, rhs).constant)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..series.len()).map(|k| max_of(per_pair.iter().map(|row| row[k]))).collect())
}

/// Checks `‖F(u) − F(v)‖ ≤ C · 2‖u − v‖ (∂̃_x F + ∂̃_y F)(‖u‖+‖v‖, ‖u‖+‖v‖)`
/// for the preset nonlinearities, judged like [`check_composition`].
pub fn check_lipschitz(battery: &Battery, algebra_constant_value: Option<f64>) -> Result<CheckReport> {
    let c_alg = algebra_constant(battery, algebra_constant_value)?;
    let series = presets()?;
    let coarse = lipschitz_constants(battery, &series)?;
    let fine = lipschitz_constants(&battery.refined()?, &series)?;
    Ok(certificate_report("lipschitz", &series, &coarse, &fine, c_alg))
}
