//! Modulation-space norms, the torus Fourier-algebra norm and weighted L²
//! membership.
//!
//! All continuum integrals become Riemann sums on the truncated lattice:
//! `dx = (L/N)^n` and `dw = (1/L)^n`. Infinite exponents become lattice maxima.
//! Every reduction is a fixed pairwise tree, so a norm is bit-reproducible no
//! matter how many worker threads evaluated its rows.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{transform, translate, Domain, GridSpec, SampledField, MAX_DIM};
use crate::stft::{canonical_window, norm_of_rows, StftPlan, TFMatrix};

/// A Lebesgue exponent in `[1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinite,
}

impl Exponent {
    pub fn new(value: f64) -> Result<Self> {
        if value == f64::INFINITY {
            Ok(Exponent::Infinite)
        } else if value.is_finite() && value >= 1.0 {
            Ok(Exponent::Finite(value))
        } else {
            Err(Error::InvalidParameter(format!("exponent must lie in [1, ∞], got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(v) => v,
            Exponent::Infinite => f64::INFINITY,
        }
    }

    /// Hölder conjugate `p'` with `1/p + 1/p' = 1`.
    pub fn conjugate(self) -> Exponent {
        match self {
            Exponent::Infinite => Exponent::Finite(1.0),
            Exponent::Finite(v) if v == 1.0 => Exponent::Infinite,
            Exponent::Finite(v) => Exponent::Finite(v / (v - 1.0)),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(v) => write!(f, "{v}"),
            Exponent::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Exponent::Infinite),
            other => Exponent::new(
                other
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("cannot parse exponent `{s}`")))?,
            ),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(v) => serializer.serialize_f64(*v),
            Exponent::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Exponent::new(v).map_err(serde::de::Error::custom),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Exponents and weight of `M^{p,q}_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModParams {
    pub p: Exponent,
    pub q: Exponent,
    pub s: f64,
}

impl ModParams {
    /// Pass `f64::INFINITY` for an infinite exponent.
    pub fn new(p: f64, q: f64, s: f64) -> Result<Self> {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::InvalidParameter(format!("weight s must be finite and ≥ 0, got {s}")));
        }
        Ok(ModParams {
            p: Exponent::new(p)?,
            q: Exponent::new(q)?,
            s,
        })
    }

    /// The weight `⟨w⟩_s = (1 + |w|²)^{s/2}`.
    pub fn weight(&self, w: &[f64]) -> f64 {
        if self.s == 0.0 {
            return 1.0;
        }
        let w2: f64 = w.iter().map(|v| v * v).sum();
        (1.0 + w2).powf(0.5 * self.s)
    }
}

impl fmt::Display for ModParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M^{{{},{}}}_{}", self.p, self.q, self.s)
    }
}

/// Sum in a fixed balanced-tree order.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

fn lp_norm(values: &[f64], p: Exponent, cell: f64) -> f64 {
    match p {
        Exponent::Infinite => values.iter().copied().fold(0.0, f64::max),
        Exponent::Finite(p) if p == 1.0 => cell * pairwise_sum(values),
        Exponent::Finite(p) => {
            let powered: Vec<f64> = values.iter().map(|v| v.powf(p)).collect();
            (cell * pairwise_sum(&powered)).powf(1.0 / p)
        }
    }
}

/// `‖V(·, w_j)‖_{L^p}` for one row of magnitudes.
pub(crate) fn row_norm(grid: &GridSpec, row: &[f64], params: ModParams) -> f64 {
    lp_norm(row, params.p, grid.cell(Domain::Space))
}

/// Weighted `L^q` norm over frequency of per-row `L^p` norms (row = frequency node).
pub(crate) fn combine_row_norms(grid: &GridSpec, row_norms: &[f64], params: ModParams) -> f64 {
    let dw = grid.cell(Domain::Frequency);
    let weighted: Vec<f64> = row_norms
        .iter()
        .enumerate()
        .map(|(j, n)| {
            let w = grid.coords(Domain::Frequency, j);
            n * params.weight(&w[..grid.dim()])
        })
        .collect();
    lp_norm(&weighted, params.q, dw)
}

/// Riemann-sum approximation of the weighted mixed `L^{p,q}_s` norm of `V`.
pub fn mixed_norm(v: &TFMatrix, params: ModParams) -> f64 {
    let row_norms: Vec<f64> = v
        .rows()
        .map(|r| row_norm(v.grid(), &r.iter().map(|z| z.norm()).collect::<Vec<_>>(), params))
        .collect();
    combine_row_norms(v.grid(), &row_norms, params)
}

/// `‖f‖_{M^{p,q}_s}` with the canonical window `e^{-π|x|²}`.
///
/// A frequency-domain field is measured as the function `w ↦ f(w)` on the
/// dual grid, so `mod_norm(&transform(&f)?, ..)` is the norm of `f̂`.
pub fn mod_norm(f: &SampledField, params: ModParams) -> Result<f64> {
    let f = f.as_spatial();
    let g = canonical_window(f.grid());
    mod_norm_with_window(&f, &g, params)
}

pub fn mod_norm_with_window(f: &SampledField, g: &SampledField, params: ModParams) -> Result<f64> {
    let plan = StftPlan::new(f, g)?;
    Ok(norm_of_rows(&plan, params))
}

/// `‖V_g f(·, w_j)‖_{L^p}` for every frequency node, canonical window, in
/// row order. Summing `dw ·` these with weights gives the `q = 1` norm.
pub fn frequency_profile(f: &SampledField, p: Exponent) -> Result<Vec<f64>> {
    let f = f.as_spatial();
    let plan = StftPlan::new(&f, &canonical_window(f.grid()))?;
    let dx = f.grid().cell(Domain::Space);
    Ok((0..f.grid().len())
        .into_par_iter()
        .map(|j| lp_norm(&plan.row_magnitudes(j), p, dx))
        .collect())
}

fn integer_extent(grid: &GridSpec) -> Result<i64> {
    let l = grid.extent();
    if (l - l.round()).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "torus content needs an integer box extent, got L = {l}"
        )));
    }
    Ok(l.round() as i64)
}

/// Largest integer frequency representable on the lattice.
fn integer_band_limit(grid: &GridSpec, l: i64) -> i64 {
    // Index m·L + N/2 must lie in [0, N).
    ((grid.samples() / 2 - 1) as i64) / l
}

/// Sums the translates `f(x - k)` over every integer `k` in the box, giving
/// the 1-periodic function whose Fourier series is `f̂` restricted to ℤⁿ.
pub fn periodize(f: &SampledField) -> Result<SampledField> {
    f.expect_domain(Domain::Space)?;
    let grid = *f.grid();
    let l = integer_extent(&grid)?;
    let per_unit = grid.samples() as f64 / l as f64;
    if per_unit.fract() != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "unit shifts are not lattice shifts on {grid}"
        )));
    }
    let dim = grid.dim();
    let mut acc = SampledField::zeros(grid, Domain::Space);
    let shifts = (l as usize).pow(dim as u32);
    for flat in 0..shifts {
        let mut shift = [0.0; MAX_DIM];
        let mut rest = flat;
        for s in shift.iter_mut().take(dim) {
            *s = (rest % l as usize) as f64;
            rest /= l as usize;
        }
        acc = acc.add(&translate(f, &shift[..dim])?)?;
    }
    Ok(acc)
}

/// Fourier coefficients `f̂(m)`, `|m|∞ ≤ band`, of a 1-periodic field.
///
/// Fails with [`Error::NotPeriodic`] when the transform carries mass off the
/// integer frequencies above `1e-8` of its peak.
pub fn periodization_spectrum(f: &SampledField, band: i64) -> Result<BTreeMap<Vec<i64>, Complex64>> {
    f.expect_domain(Domain::Space)?;
    let grid = *f.grid();
    let l = integer_extent(&grid)?;
    let limit = integer_band_limit(&grid, l);
    if band < 0 || band > limit {
        return Err(Error::InvalidParameter(format!(
            "band {band} exceeds the Nyquist limit {limit} of {grid}"
        )));
    }
    let fh = transform(f)?;
    let dim = grid.dim();
    let volume = (l as f64).powi(dim as i32);
    let half = (grid.samples() / 2) as i64;
    let peak = fh.max_abs();
    let mut off_integer: f64 = 0.0;
    let mut coeffs = BTreeMap::new();
    for (j, z) in fh.values().iter().enumerate() {
        let idx = grid.unflatten(j);
        let rel: Vec<i64> = idx[..dim].iter().map(|&i| i as i64 - half).collect();
        if rel.iter().all(|r| r % l == 0) {
            let m: Vec<i64> = rel.iter().map(|r| r / l).collect();
            if m.iter().all(|v| v.abs() <= band) {
                coeffs.insert(m, z / volume);
            }
        } else {
            off_integer = off_integer.max(z.norm());
        }
    }
    if peak > 0.0 && off_integer > 1e-8 * peak {
        return Err(Error::NotPeriodic(off_integer / peak));
    }
    Ok(coeffs)
}

/// `Σ_{|m|∞ ≤ band} |f̂(m)|` for 1-periodic content.
pub fn torus_algebra_partial(f: &SampledField, band: i64) -> Result<f64> {
    let coeffs = periodization_spectrum(f, band)?;
    let abs: Vec<f64> = coeffs.values().map(|z| z.norm()).collect();
    Ok(pairwise_sum(&abs))
}

/// `‖f‖_{A(𝕋ⁿ)} = Σ_m |f̂(m)|` over every integer frequency on the lattice.
pub fn torus_algebra_norm(f: &SampledField) -> Result<f64> {
    let l = integer_extent(f.grid())?;
    torus_algebra_partial(f, integer_band_limit(f.grid(), l))
}

/// Outcome of a weighted-L² membership test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L2sMembership {
    /// `(∫|f|²(1+|x|)^{2s} dx)^{1/2}` at the finer resolution.
    pub norm_space: f64,
    /// Same for `f̂`.
    pub norm_freq: f64,
    /// Relative change of `norm_space` under `N → 2N`.
    pub change_space: f64,
    /// Relative change of `norm_freq` under `N → 2N`.
    pub change_freq: f64,
    pub certified: bool,
}

/// Relative change under refinement that still counts as converged.
pub const L2S_STABILITY: f64 = 0.02;

fn weighted_l2(f: &SampledField, s: f64) -> f64 {
    let grid = f.grid();
    let terms: Vec<f64> = f
        .values()
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let x = f.coords(k);
            let r = x[..grid.dim()].iter().map(|v| v * v).sum::<f64>().sqrt();
            z.norm_sqr() * (1.0 + r).powf(2.0 * s)
        })
        .collect();
    (grid.cell(f.domain()) * pairwise_sum(&terms)).sqrt()
}

/// Checks whether both `f` and `f̂` have finite `(1+|·|)^{s}`-weighted L² norm
/// by comparing the discrete norms on `grid` and on its refinement.
pub fn l2s_membership<S>(source: &S, grid: &GridSpec, s: f64) -> Result<L2sMembership>
where
    S: FieldSource + ?Sized,
{
    if !(s > grid.dim() as f64) {
        return Err(Error::InvalidParameter(format!(
            "weighted L² test needs s > dim = {}, got {s}",
            grid.dim()
        )));
    }
    let measure = |g: &GridSpec| -> Result<(f64, f64)> {
        let f = source.sample_on(g)?;
        let fh = transform(&f)?;
        Ok((weighted_l2(&f, s), weighted_l2(&fh, s)))
    };
    let (space0, freq0) = measure(grid)?;
    let (space1, freq1) = measure(&grid.refined())?;
    let change = |a: f64, b: f64| if a == b { 0.0 } else { (b - a).abs() / a.abs().max(b.abs()) };
    let change_space = change(space0, space1);
    let change_freq = change(freq0, freq1);
    let certified = [space1, freq1].iter().all(|v| v.is_finite())
        && change_space < L2S_STABILITY
        && change_freq < L2S_STABILITY;
    Ok(L2sMembership {
        norm_space: space1,
        norm_freq: freq1,
        change_space,
        change_freq,
        certified,
    })
}

/// Anything that can produce the same continuum function on any grid.
pub trait FieldSource {
    fn sample_on(&self, grid: &GridSpec) -> Result<SampledField>;
}

impl FieldSource for crate::catalog::Builtin {
    fn sample_on(&self, grid: &GridSpec) -> Result<SampledField> {
        self.sample(grid)
    }
}

impl<F> FieldSource for F
where
    F: Fn(&GridSpec) -> Result<SampledField>,
{
    fn sample_on(&self, grid: &GridSpec) -> Result<SampledField> {
        self(grid)
    }
}
