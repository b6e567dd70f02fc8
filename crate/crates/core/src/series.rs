//! Real-entire nonlinearities `F(s, t) = Σ a_{mn} s^m t^n` acting on fields
//! through `F(f) := F(Re f, Im f)`.
//!
//! Series are finite truncations. The estimates they feed are all driven by
//! the majorant `F̃(s, t) = Σ |a_{mn}| s^m t^n`, which is monotone in each
//! variable on `[0, ∞)²`; for a genuinely infinite series the neglected part
//! is accounted for by [`majorant_tail`].

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, SampledField};
use crate::norm::{mod_norm, ModParams};

/// Names accepted by [`RealEntireSeries::preset`].
pub const PRESETS: [&str; 3] = ["quadratic", "cubic", "quintic"];

/// Truncated double power series with complex coefficients.
///
/// Serializes as `{"coeffs": [[m, n, re, im], …]}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "SeriesFile", into = "SeriesFile")]
pub struct RealEntireSeries {
    coeffs: BTreeMap<(u32, u32), Complex64>,
}

#[derive(Serialize, Deserialize)]
struct SeriesFile {
    coeffs: Vec<(u32, u32, f64, f64)>,
}

impl From<SeriesFile> for RealEntireSeries {
    fn from(file: SeriesFile) -> Self {
        Self::from_terms(file.coeffs.into_iter().map(|(m, n, re, im)| (m, n, Complex64::new(re, im))))
    }
}

impl From<RealEntireSeries> for SeriesFile {
    fn from(series: RealEntireSeries) -> Self {
        SeriesFile {
            coeffs: series.terms().map(|(m, n, a)| (m, n, a.re, a.im)).collect(),
        }
    }
}

impl RealEntireSeries {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds a series from `(m, n, a_mn)` triples; repeated exponents add up.
    pub fn from_terms<I>(terms: I) -> Self
    where
        I: IntoIterator<Item = (u32, u32, Complex64)>,
    {
        let mut coeffs = BTreeMap::new();
        for (m, n, a) in terms {
            *coeffs.entry((m, n)).or_insert_with(Complex64::default) += a;
        }
        coeffs.retain(|_, a| *a != Complex64::default());
        RealEntireSeries { coeffs }
    }

    /// Truncates the series generated by `coefficient` to total degree `degree`.
    pub fn from_generator<G>(degree: u32, mut coefficient: G) -> Self
    where
        G: FnMut(u32, u32) -> Complex64,
    {
        Self::from_terms(
            (0..=degree)
                .flat_map(|k| (0..=k).map(move |m| (m, k - m)))
                .map(|(m, n)| (m, n, coefficient(m, n))),
        )
    }

    /// The variable `s` (real part).
    pub fn s() -> Self {
        Self::from_terms([(1, 0, Complex64::new(1.0, 0.0))])
    }

    /// The variable `t` (imaginary part).
    pub fn t() -> Self {
        Self::from_terms([(0, 1, Complex64::new(1.0, 0.0))])
    }

    /// `s + i t`, i.e. the identity `z ↦ z`.
    pub fn z() -> Self {
        Self::from_terms([(1, 0, Complex64::new(1.0, 0.0)), (0, 1, Complex64::new(0.0, 1.0))])
    }

    /// `s² + t² = |z|²`.
    pub fn modulus_squared() -> Self {
        Self::from_terms([(2, 0, Complex64::new(1.0, 0.0)), (0, 2, Complex64::new(1.0, 0.0))])
    }

    /// Named nonlinearities: `quadratic = |z|²`, `cubic = |z|² z`, `quintic = |z|⁴ z`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "quadratic" => Ok(Self::modulus_squared()),
            "cubic" => Ok(Self::modulus_squared().mul(&Self::z())),
            "quintic" => Ok(Self::modulus_squared().mul(&Self::modulus_squared()).mul(&Self::z())),
            other => Err(Error::InvalidParameter(format!(
                "unknown nonlinearity preset `{other}` (expected one of {PRESETS:?})"
            ))),
        }
    }

    /// Parses `{"coeffs": [[m, n, re, im], …]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain numbers serialize")
    }

    pub fn coeff(&self, m: u32, n: u32) -> Complex64 {
        self.coeffs.get(&(m, n)).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, u32, Complex64)> + '_ {
        self.coeffs.iter().map(|(&(m, n), &a)| (m, n, a))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest `m + n` with a nonzero coefficient (0 for the zero series).
    pub fn degree(&self) -> u32 {
        self.coeffs.keys().map(|&(m, n)| m + n).max().unwrap_or(0)
    }

    /// `a_00 = 0`, i.e. `F(0) = 0`.
    pub fn is_constant_free(&self) -> bool {
        self.coeff(0, 0) == Complex64::default()
    }

    pub(crate) fn require_constant_free(&self) -> Result<()> {
        if self.is_constant_free() {
            Ok(())
        } else {
            Err(Error::ConstantTerm(self.coeff(0, 0)))
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_terms(self.terms().chain(other.terms()))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::from_terms(self.terms().map(|(m, n, a)| (m, n, a * c)))
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::from_terms(
            self.terms()
                .flat_map(|(m1, n1, a)| other.terms().map(move |(m2, n2, b)| (m1 + m2, n1 + n2, a * b))),
        )
    }

    /// Horner evaluation over the finite support.
    pub fn evaluate(&self, s: Complex64, t: Complex64) -> Complex64 {
        let Some(max_m) = self.coeffs.keys().map(|&(m, _)| m).max() else {
            return Complex64::default();
        };
        // Inner polynomials in t, one per power of s.
        let mut inner = vec![Complex64::default(); max_m as usize + 1];
        let mut current: Option<u32> = None;
        let mut acc = Complex64::default();
        let mut last_n = 0u32;
        // BTreeMap order is (m asc, n asc); walk each m-block from high n down.
        for (&(m, n), &a) in self.coeffs.iter().rev() {
            if current != Some(m) {
                if let Some(prev) = current {
                    inner[prev as usize] = acc * t.powu(last_n);
                }
                current = Some(m);
                acc = a;
            } else {
                acc = acc * t.powu(last_n - n) + a;
            }
            last_n = n;
        }
        if let Some(prev) = current {
            inner[prev as usize] = acc * t.powu(last_n);
        }
        inner.iter().rev().fold(Complex64::default(), |acc, &c| acc * s + c)
    }

    /// `F` on real arguments.
    pub fn evaluate_real(&self, s: f64, t: f64) -> Complex64 {
        self.evaluate(Complex64::new(s, 0.0), Complex64::new(t, 0.0))
    }

    /// Coefficientwise modulus: `F̃(s, t) = Σ |a_{mn}| s^m t^n`.
    pub fn majorant(&self) -> Self {
        Self::from_terms(self.terms().map(|(m, n, a)| (m, n, Complex64::new(a.norm(), 0.0))))
    }

    /// `F̃(x, y)` for `x, y ≥ 0`, as a real number.
    pub fn majorant_value(&self, x: f64, y: f64) -> f64 {
        self.majorant().evaluate_real(x, y).re
    }

    /// Term-by-term `∂F/∂s`.
    pub fn partial_x(&self) -> Self {
        Self::from_terms(
            self.terms()
                .filter(|&(m, _, _)| m > 0)
                .map(|(m, n, a)| (m - 1, n, a * m as f64)),
        )
    }

    /// Term-by-term `∂F/∂t`.
    pub fn partial_y(&self) -> Self {
        Self::from_terms(
            self.terms()
                .filter(|&(_, n, _)| n > 0)
                .map(|(m, n, a)| (m, n - 1, a * n as f64)),
        )
    }

    /// `G` with `F̃(x, x) = x G(x)`; requires `F(0) = 0`.
    pub fn g_factor(&self) -> Result<Polynomial> {
        self.require_constant_free()?;
        let mut coeffs = vec![0.0; self.degree() as usize];
        for (m, n, a) in self.terms() {
            coeffs[(m + n - 1) as usize] += a.norm();
        }
        Ok(Polynomial { coeffs })
    }

    /// `(∂̃_x F + ∂̃_y F)(x, x)`, the factor in the Lipschitz and contraction bounds.
    pub fn derivative_majorant(&self, x: f64) -> f64 {
        self.partial_x().majorant_value(x, x) + self.partial_y().majorant_value(x, x)
    }
}

/// `Σ_{degree < m+n ≤ max_degree} |a_{mn}| R^{m+n}`: what a truncation at
/// `degree` leaves out of the majorant on the ball of radius `R`.
pub fn majorant_tail<G>(coefficient: G, degree: u32, radius: f64, max_degree: u32) -> f64
where
    G: Fn(u32, u32) -> Complex64,
{
    let mut total = 0.0;
    for k in degree + 1..=max_degree {
        let shell: f64 = (0..=k).map(|m| coefficient(m, k - m).norm()).sum();
        total += shell * radius.powi(k as i32);
    }
    total
}

/// One-variable polynomial with nonnegative coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn evaluate(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

/// Pointwise `F(Re f(x), Im f(x))` at every lattice node.
pub fn compose(series: &RealEntireSeries, f: &SampledField) -> Result<SampledField> {
    f.expect_domain(Domain::Space)?;
    let values: Vec<Complex64> = f
        .values()
        .par_iter()
        .with_min_len(1024)
        .map(|z| series.evaluate_real(z.re, z.im))
        .collect();
    SampledField::new(*f.grid(), Domain::Space, values)
}

/// Left side, right side and their ratio for one instance of a norm bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInstance {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, with `0/0` read as 0.
    pub constant: f64,
}

impl BoundInstance {
    pub(crate) fn new(lhs: f64, rhs: f64) -> Self {
        let constant = if lhs == 0.0 { 0.0 } else { lhs / rhs };
        BoundInstance { lhs, rhs, constant }
    }
}

/// `‖F(f)‖` against `F̃(‖Re f‖, ‖Im f‖)`.
pub fn norm_certificate(series: &RealEntireSeries, f: &SampledField, params: ModParams) -> Result<BoundInstance> {
    series.require_constant_free()?;
    let lhs = mod_norm(&compose(series, f)?, params)?;
    let re = mod_norm(&f.real_part(), params)?;
    let im = mod_norm(&f.imag_part(), params)?;
    Ok(BoundInstance::new(lhs, series.majorant_value(re, im)))
}

/// `‖F(u) − F(v)‖` against `2‖u − v‖ (∂̃_x F + ∂̃_y F)(‖u‖+‖v‖, ‖u‖+‖v‖)`.
pub fn lipschitz_bound(
    series: &RealEntireSeries,
    u: &SampledField,
    v: &SampledField,
    params: ModParams,
) -> Result<BoundInstance> {
    series.require_constant_free()?;
    let lhs = mod_norm(&compose(series, u)?.sub(&compose(series, v)?)?, params)?;
    let radius = mod_norm(u, params)? + mod_norm(v, params)?;
    let rhs = 2.0 * mod_norm(&u.sub(v)?, params)? * series.derivative_majorant(radius);
    Ok(BoundInstance::new(lhs, rhs))
}
