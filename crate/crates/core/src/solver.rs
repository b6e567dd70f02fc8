//! Picard iteration for the Duhamel form of NLS, NLW and NLKG.
//!
//! | equation | PDE                          | integral form                                   |
//! |----------|------------------------------|-------------------------------------------------|
//! | `nls`    | `i u_t + Δu = F(u)`          | `u = S(t)u₀ − i ∫₀ᵗ S(t−τ) F(u(τ)) dτ`          |
//! | `nlw`    | `u_tt − Δu = F(u)`           | `u = K̃(t)u₀ + K(t)u₁ + ∫₀ᵗ K(t−τ) F(u(τ)) dτ`   |
//! | `nlkg`   | `u_tt + (I − Δ)u = F(u)`     | same, with the Klein–Gordon `K`, `K̃`            |
//!
//! Each window `[t₀, t₀ + T]` is discretized at `t_k = t₀ + k·dt`. The time
//! integral uses the midpoint rule with the propagator applied at
//! `t_k − τ_{j+½}`; the sum is accumulated by the recursion
//! `D_{k+1} = U(dt) D_k + dt · K(dt/2) F_k`, which is algebraically the same
//! sum because the propagators form a group. Negative `dt` integrates backward.
//!
//! The step length comes from the contraction-mapping horizon
//! `T = safety · min{T₁, T₂}` with
//! `T₁ = min{1, 1/(2 c₁ G(M))}`, `T₂ = min{1, [4 c₁ (∂̃ₓF + ∂̃ᵧF)(2M, 2M)]⁻¹}`
//! and `M = 2 c₁ ‖u₀‖`, where `c₁` bounds the propagators on `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{inverse_transform, transform, Domain, GridSpec, SampledField};
use crate::norm::{mod_norm, ModParams};
use crate::propagator::{Family, PropagatorKind};
use crate::series::{compose, RealEntireSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    Nls,
    Nlw,
    Nlkg,
}

impl Equation {
    pub fn name(self) -> &'static str {
        match self {
            Equation::Nls => "nls",
            Equation::Nlw => "nlw",
            Equation::Nlkg => "nlkg",
        }
    }

    /// Second order in time: the state carries `∂ₜu`.
    pub fn is_second_order(self) -> bool {
        self != Equation::Nls
    }

    /// Multiplier families whose operator norms `c₁` must bound.
    pub fn families(self) -> &'static [Family] {
        match self {
            Equation::Nls => &[Family::Schrodinger],
            Equation::Nlw => &[Family::WaveCosine, Family::WaveSine],
            Equation::Nlkg => &[Family::KgCosine, Family::KgSine],
        }
    }

    /// `(K̃, K)` for the second-order equations.
    fn pair(self) -> (Family, Family) {
        match self {
            Equation::Nlkg => (Family::KgCosine, Family::KgSine),
            _ => (Family::WaveCosine, Family::WaveSine),
        }
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Equation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nls" => Ok(Equation::Nls),
            "nlw" => Ok(Equation::Nlw),
            "nlkg" => Ok(Equation::Nlkg),
            other => Err(Error::InvalidParameter(format!("unknown equation `{other}`"))),
        }
    }
}

/// Initial data at time `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyData {
    equation: Equation,
    u0: SampledField,
    u1: Option<SampledField>,
    t0: f64,
}

impl CauchyData {
    pub fn nls(u0: SampledField) -> Result<Self> {
        Self::new(Equation::Nls, u0, None, 0.0)
    }

    pub fn nlw(u0: SampledField, u1: SampledField) -> Result<Self> {
        Self::new(Equation::Nlw, u0, Some(u1), 0.0)
    }

    pub fn nlkg(u0: SampledField, u1: SampledField) -> Result<Self> {
        Self::new(Equation::Nlkg, u0, Some(u1), 0.0)
    }

    pub fn new(equation: Equation, u0: SampledField, u1: Option<SampledField>, t0: f64) -> Result<Self> {
        u0.expect_domain(Domain::Space)?;
        match (&u1, equation.is_second_order()) {
            (None, true) => {
                return Err(Error::InvalidParameter(format!("{equation} needs an initial velocity u1")))
            }
            (Some(_), false) => return Err(Error::InvalidParameter("nls takes no initial velocity".into())),
            (Some(v), true) => {
                v.expect_domain(Domain::Space)?;
                if v.grid() != u0.grid() {
                    return Err(Error::GridMismatch(format!("u0 on {} but u1 on {}", u0.grid(), v.grid())));
                }
            }
            (None, false) => {}
        }
        if !t0.is_finite() {
            return Err(Error::InvalidParameter(format!("t0 must be finite, got {t0}")));
        }
        Ok(CauchyData { equation, u0, u1, t0 })
    }

    pub fn with_t0(self, t0: f64) -> Self {
        CauchyData { t0, ..self }
    }

    pub fn equation(&self) -> Equation {
        self.equation
    }

    pub fn u0(&self) -> &SampledField {
        &self.u0
    }

    pub fn u1(&self) -> Option<&SampledField> {
        self.u1.as_ref()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn grid(&self) -> &GridSpec {
        self.u0.grid()
    }

    /// `‖u₀‖ + ‖u₁‖` (just `‖u₀‖` for NLS).
    pub fn norm(&self, params: ModParams) -> Result<f64> {
        let mut n = mod_norm(&self.u0, params)?;
        if let Some(u1) = &self.u1 {
            n += mod_norm(u1, params)?;
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialGuess {
    /// Free evolution of the data.
    Free,
    /// The zero path.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub nonlinearity: RealEntireSeries,
    /// Norm of the space `X = M^{p,q}_s`.
    pub params: ModParams,
    pub quadrature_step: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Replaces the `1` in `min{1, ·}` of both horizons.
    pub horizon_cap: f64,
    /// Measured propagator bound on `[0, 1]`.
    pub c1: f64,
    pub safety: f64,
    /// Accepted windows must have a measured contraction at most this.
    pub contraction_limit: f64,
    /// Blow-up once the state norm exceeds this multiple of the initial norm.
    pub ceiling_factor: f64,
    /// Absolute norm ceiling, overriding `ceiling_factor`.
    pub norm_ceiling: Option<f64>,
    /// Blow-up once the window length drops below this.
    pub window_floor: f64,
    pub max_halvings: u32,
    /// Midpoint sub-steps per step in the reference quadrature of [`residual`].
    pub reference_substeps: usize,
    pub initial_guess: InitialGuess,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            nonlinearity: RealEntireSeries::zero(),
            params: ModParams::new(1.0, 1.0, 0.0).expect("valid exponents"),
            quadrature_step: 5e-3,
            picard_tol: 1e-10,
            picard_max_iter: 60,
            horizon_cap: 1.0,
            c1: 1.0,
            safety: 0.9,
            contraction_limit: 0.55,
            ceiling_factor: 1e6,
            norm_ceiling: None,
            window_floor: 1e-8,
            max_halvings: 10,
            reference_substeps: 8,
            initial_guess: InitialGuess::Free,
        }
    }
}

impl SolverConfig {
    pub fn new(nonlinearity: RealEntireSeries, c1: f64) -> Self {
        SolverConfig {
            nonlinearity,
            c1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.nonlinearity.require_constant_free()?;
        let positive = [
            ("quadrature_step", self.quadrature_step),
            ("picard_tol", self.picard_tol),
            ("horizon_cap", self.horizon_cap),
            ("c1", self.c1),
            ("safety", self.safety),
            ("contraction_limit", self.contraction_limit),
            ("ceiling_factor", self.ceiling_factor),
            ("window_floor", self.window_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.safety > 1.0 {
            return Err(Error::InvalidParameter(format!("safety must lie in (0, 1], got {}", self.safety)));
        }
        if self.picard_max_iter == 0 || self.reference_substeps == 0 {
            return Err(Error::InvalidParameter("iteration and sub-step counts must be positive".into()));
        }
        Ok(())
    }
}

/// Largest battery ratio `‖H f‖/‖f‖` over `t ∈ [0, 1]` for every multiplier
/// the equation uses: a measured stand-in for `c₁`.
pub fn measure_c1(equation: Equation, battery: &[(String, SampledField)], params: ModParams) -> Result<f64> {
    let ts: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
    let mut c1: f64 = 0.0;
    for &family in equation.families() {
        let report = crate::propagator::bound_ratio(family, &ts, battery, params)?;
        c1 = report.rows.iter().map(|r| r.ratio).fold(c1, f64::max);
    }
    Ok(c1)
}

/// Inputs and outputs of the horizon formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Horizon {
    pub m: f64,
    pub t1: f64,
    pub t2: f64,
    /// `safety · min{T₁, T₂}`, or `horizon_cap` when `F ≡ 0`.
    pub t: f64,
}

/// `T₁`, `T₂` and the step for data of norm `norm_u0` (+ `norm_u1`).
pub fn step_horizon(
    norm_u0: f64,
    norm_u1: Option<f64>,
    nonlinearity: &RealEntireSeries,
    c1: f64,
    safety: f64,
    horizon_cap: f64,
) -> Result<Horizon> {
    if !(c1 > 0.0) {
        return Err(Error::InvalidParameter(format!("c1 must be positive, got {c1}")));
    }
    let m = 2.0 * c1 * (norm_u0 + norm_u1.unwrap_or(0.0));
    if nonlinearity.is_zero() {
        return Ok(Horizon {
            m,
            t1: horizon_cap,
            t2: horizon_cap,
            t: horizon_cap,
        });
    }
    let g = nonlinearity.g_factor()?.evaluate(m);
    let t1 = horizon_cap.min(1.0 / (2.0 * c1 * g));
    let t2 = horizon_cap.min(1.0 / (4.0 * c1 * nonlinearity.derivative_majorant(2.0 * m)));
    Ok(Horizon {
        m,
        t1,
        t2,
        t: safety * t1.min(t2),
    })
}

/// Samples of a path at `t0 + k·dt`, `k = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPath {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<SampledField>,
    /// `∂ₜu` at the same nodes (second-order equations only).
    pub derivatives: Option<Vec<SampledField>>,
}

impl TrialPath {
    pub fn steps(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len()).map(|k| self.time(k)).collect()
    }

    /// `sup_k ‖u(t_k)‖`.
    pub fn sup_norm(&self, params: ModParams) -> Result<f64> {
        let norms: Vec<f64> = self
            .values
            .par_iter()
            .map(|u| mod_norm(u, params))
            .collect::<Result<_>>()?;
        Ok(norms.into_iter().fold(0.0, f64::max))
    }

    /// `sup_k ‖u(t_k) − v(t_k)‖`.
    pub fn sup_distance(&self, other: &TrialPath, params: ModParams) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::InvalidParameter(format!(
                "paths have {} and {} nodes",
                self.values.len(),
                other.values.len()
            )));
        }
        let d: Vec<f64> = self
            .values
            .par_iter()
            .zip(&other.values)
            .map(|(a, b)| mod_norm(&a.sub(b)?, params))
            .collect::<Result<_>>()?;
        Ok(d.into_iter().fold(0.0, f64::max))
    }
}

type Spectrum = Vec<Complex64>;

fn hadamard(a: &[Complex64], b: &[Complex64]) -> Spectrum {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn axpy(y: &mut [Complex64], a: &[Complex64], x: &[Complex64]) {
    for ((yi, ai), xi) in y.iter_mut().zip(a).zip(x) {
        *yi += ai * xi;
    }
}

fn spectrum(f: &SampledField) -> Result<Spectrum> {
    Ok(transform(f)?.into_values())
}

fn to_space(grid: GridSpec, values: Spectrum) -> Result<SampledField> {
    inverse_transform(&SampledField::new(grid, Domain::Frequency, values)?)
}

/// Symbol tables of one time step of a first- or second-order flow.
struct Stepper {
    equation: Equation,
    grid: GridSpec,
}

impl Stepper {
    fn new(equation: Equation, grid: GridSpec) -> Self {
        Stepper { equation, grid }
    }

    fn table(&self, family: Family, t: f64) -> Spectrum {
        PropagatorKind::new(family, t).symbol_table(&self.grid)
    }

    fn dtable(&self, family: Family, t: f64) -> Spectrum {
        PropagatorKind::new(family, t).time_derivative_table(&self.grid)
    }

    /// Free solution `(u, ∂ₜu)` at relative time `t`.
    fn free(&self, u0: &[Complex64], u1: Option<&[Complex64]>, t: f64) -> (Spectrum, Option<Spectrum>) {
        match (self.equation, u1) {
            (Equation::Nls, _) | (_, None) => (hadamard(&self.table(Family::Schrodinger, t), u0), None),
            (eq, Some(u1)) => {
                let (cos, sin) = eq.pair();
                let mut u = hadamard(&self.table(cos, t), u0);
                axpy(&mut u, &self.table(sin, t), u1);
                let mut ut = hadamard(&self.dtable(cos, t), u0);
                axpy(&mut ut, &self.dtable(sin, t), u1);
                (u, Some(ut))
            }
        }
    }

    /// Duhamel sums `D_k = h Σ_{j < k·stride} K(t_k − τ_j) F_j` at every
    /// `stride`-th node, for forcing sampled at midpoints `τ_j = (j + ½) h`.
    /// For NLS the `−i` factor is included.
    fn duhamel_sums(&self, h: f64, forcing: &[Spectrum], stride: usize) -> (Vec<Spectrum>, Option<Vec<Spectrum>>) {
        let len = self.grid.len();
        let zero = vec![Complex64::default(); len];
        let mut d = zero.clone();
        let mut out = vec![d.clone()];
        match self.equation {
            Equation::Nls => {
                let full = self.table(Family::Schrodinger, h);
                let half: Spectrum = self
                    .table(Family::Schrodinger, h / 2.0)
                    .into_iter()
                    .map(|s| s * Complex64::new(0.0, -h))
                    .collect();
                for (j, f) in forcing.iter().enumerate() {
                    d = hadamard(&full, &d);
                    axpy(&mut d, &half, f);
                    if (j + 1) % stride == 0 {
                        out.push(d.clone());
                    }
                }
                (out, None)
            }
            eq => {
                let (cos, sin) = eq.pair();
                let (c, s) = (self.table(cos, h), self.table(sin, h));
                let (dc, ds) = (self.dtable(cos, h), self.dtable(sin, h));
                let scale = |v: Spectrum| -> Spectrum { v.into_iter().map(|z| z * h).collect() };
                let (ks, dks) = (scale(self.table(sin, h / 2.0)), scale(self.dtable(sin, h / 2.0)));
                let mut e = zero;
                let mut out_e = vec![e.clone()];
                for (j, f) in forcing.iter().enumerate() {
                    let mut nd = hadamard(&c, &d);
                    axpy(&mut nd, &s, &e);
                    let mut ne = hadamard(&dc, &d);
                    axpy(&mut ne, &ds, &e);
                    axpy(&mut nd, &ks, f);
                    axpy(&mut ne, &dks, f);
                    d = nd;
                    e = ne;
                    if (j + 1) % stride == 0 {
                        out.push(d.clone());
                        out_e.push(e.clone());
                    }
                }
                (out, Some(out_e))
            }
        }
    }
}

fn forcing_at(nonlinearity: &RealEntireSeries, u: &SampledField) -> Result<Spectrum> {
    spectrum(&compose(nonlinearity, u)?)
}

/// Assembles `𝒥(u)` at the nodes from the free solution and the Duhamel sums.
fn assemble(
    data: &CauchyData,
    stepper: &Stepper,
    dt: f64,
    steps: usize,
    sums: (Vec<Spectrum>, Option<Vec<Spectrum>>),
) -> Result<TrialPath> {
    let grid = *data.grid();
    let u0 = spectrum(&data.u0)?;
    let u1 = data.u1.as_ref().map(spectrum).transpose()?;
    let (d, e) = sums;
    let nodes: Vec<(SampledField, Option<SampledField>)> = (0..=steps)
        .into_par_iter()
        .map(|k| -> Result<_> {
            let (mut u, ut) = stepper.free(&u0, u1.as_deref(), k as f64 * dt);
            for (a, b) in u.iter_mut().zip(&d[k]) {
                *a += b;
            }
            let ut = match (ut, &e) {
                (Some(mut ut), Some(e)) => {
                    for (a, b) in ut.iter_mut().zip(&e[k]) {
                        *a += b;
                    }
                    Some(to_space(grid, ut)?)
                }
                _ => None,
            };
            Ok((to_space(grid, u)?, ut))
        })
        .collect::<Result<_>>()?;
    let (values, derivatives): (Vec<_>, Vec<_>) = nodes.into_iter().unzip();
    let derivatives = if data.equation.is_second_order() {
        Some(derivatives.into_iter().map(|d| d.expect("second-order node")).collect())
    } else {
        None
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Duhamel map produced NaN or infinity".into()));
    }
    Ok(TrialPath {
        t0: data.t0,
        dt,
        values,
        derivatives,
    })
}

fn check_trial(data: &CauchyData, trial: &TrialPath) -> Result<()> {
    if trial.values.len() < 2 {
        return Err(Error::InvalidParameter("trial path needs at least two nodes".into()));
    }
    if !(trial.dt != 0.0 && trial.dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("trial path step must be nonzero, got {}", trial.dt)));
    }
    if let Some(bad) = trial.values.iter().find(|v| v.grid() != data.grid()) {
        return Err(Error::GridMismatch(format!("trial path on {} but data on {}", bad.grid(), data.grid())));
    }
    Ok(())
}

/// `𝒥(u)` at the nodes of `trial`, by the midpoint rule.
///
/// The midpoint value is `½[S(dt/2)u_j + S(−dt/2)u_{j+1}]` for NLS and the plain
/// average for the wave equations.
pub fn duhamel_map(data: &CauchyData, cfg: &SolverConfig, trial: &TrialPath) -> Result<TrialPath> {
    check_trial(data, trial)?;
    let grid = *data.grid();
    let dt = trial.dt;
    let steps = trial.steps();
    let stepper = Stepper::new(data.equation, grid);
    let forcing: Vec<Spectrum> = if cfg.nonlinearity.is_zero() {
        vec![vec![Complex64::default(); grid.len()]; steps]
    } else {
        let (fwd, bwd) = match data.equation {
            Equation::Nls => (
                Some(stepper.table(Family::Schrodinger, dt / 2.0)),
                Some(stepper.table(Family::Schrodinger, -dt / 2.0)),
            ),
            _ => (None, None),
        };
        (0..steps)
            .into_par_iter()
            .map(|j| -> Result<Spectrum> {
                let (a, b) = (&trial.values[j], &trial.values[j + 1]);
                let mid = match (&fwd, &bwd) {
                    (Some(fwd), Some(bwd)) => {
                        let mut m = hadamard(fwd, &spectrum(a)?);
                        axpy(&mut m, bwd, &spectrum(b)?);
                        to_space(grid, m.into_iter().map(|z| z * 0.5).collect())?
                    }
                    _ => a.add(b)?.scale(Complex64::new(0.5, 0.0)),
                };
                forcing_at(&cfg.nonlinearity, &mid)
            })
            .collect::<Result<_>>()?
    };
    let sums = stepper.duhamel_sums(dt, &forcing, 1);
    assemble(data, &stepper, dt, steps, sums)
}

/// Interaction-picture cubic interpolation of a path between its nodes.
struct Interpolant<'a> {
    stepper: &'a Stepper,
    dt: f64,
    /// `U(−t_k)` applied to the node states.
    pulled: Vec<(Spectrum, Option<Spectrum>)>,
}

impl<'a> Interpolant<'a> {
    fn new(stepper: &'a Stepper, path: &TrialPath) -> Result<Self> {
        let dt = path.dt;
        let pulled = (0..path.values.len())
            .into_par_iter()
            .map(|k| -> Result<_> {
                let u = spectrum(&path.values[k])?;
                let ut = match &path.derivatives {
                    Some(d) => Some(spectrum(&d[k])?),
                    None => None,
                };
                Ok(stepper.free(&u, ut.as_deref(), -(k as f64) * dt))
            })
            .collect::<Result<_>>()?;
        Ok(Interpolant { stepper, dt, pulled })
    }

    /// `u(τ)` for relative time `τ`.
    fn at(&self, tau: f64) -> Spectrum {
        let n = self.pulled.len();
        let width = n.min(4);
        let x = tau / self.dt;
        let start = (x.floor() as isize - 1).clamp(0, (n - width) as isize) as usize;
        let nodes: Vec<usize> = (start..start + width).collect();
        let len = self.pulled[0].0.len();
        let mut u = vec![Complex64::default(); len];
        let mut ut = self.pulled[0].1.as_ref().map(|_| vec![Complex64::default(); len]);
        for &i in &nodes {
            let w: f64 = nodes
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (x - j as f64) / (i as f64 - j as f64))
                .product();
            for (a, b) in u.iter_mut().zip(&self.pulled[i].0) {
                *a += b * w;
            }
            if let (Some(ut), Some(src)) = (ut.as_mut(), self.pulled[i].1.as_ref()) {
                for (a, b) in ut.iter_mut().zip(src) {
                    *a += b * w;
                }
            }
        }
        self.stepper.free(&u, ut.as_deref(), tau).0
    }
}

/// `sup_k ‖u(t_k) − 𝒥(u)(t_k)‖` with `𝒥` evaluated by `substeps` midpoint
/// sub-steps per step. One sub-step is the solver's own quadrature (the
/// discrete fixed-point defect); more sub-steps approach the continuum
/// integral, with `u` between nodes from cubic interpolation in the
/// interaction picture.
pub fn residual_with(path: &TrialPath, data: &CauchyData, cfg: &SolverConfig, substeps: usize) -> Result<f64> {
    check_trial(data, path)?;
    if substeps == 0 {
        return Err(Error::InvalidParameter("substeps must be positive".into()));
    }
    let image = if substeps == 1 {
        duhamel_map(data, cfg, path)?
    } else {
        let grid = *data.grid();
        let stepper = Stepper::new(data.equation, grid);
        let interp = Interpolant::new(&stepper, path)?;
        let h = path.dt / substeps as f64;
        let fine = path.steps() * substeps;
        let forcing: Vec<Spectrum> = (0..fine)
            .into_par_iter()
            .map(|j| -> Result<Spectrum> {
                let u = to_space(grid, interp.at((j as f64 + 0.5) * h))?;
                forcing_at(&cfg.nonlinearity, &u)
            })
            .collect::<Result<_>>()?;
        let sums = stepper.duhamel_sums(h, &forcing, substeps);
        assemble(data, &stepper, path.dt, path.steps(), sums)?
    };
    path.sup_distance(&image, cfg.params)
}

/// [`residual_with`] at `cfg.reference_substeps`.
pub fn residual(path: &TrialPath, data: &CauchyData, cfg: &SolverConfig) -> Result<f64> {
    residual_with(path, data, cfg, cfg.reference_substeps)
}

/// Bookkeeping for one accepted window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    pub t_start: f64,
    /// Signed window length actually integrated.
    pub t_used: f64,
    pub t1: f64,
    pub t2: f64,
    pub m: f64,
    /// Largest ratio of successive Picard increments above the roundoff floor.
    pub contraction_factor: f64,
    pub picard_iters: usize,
    pub halvings: u32,
    pub steps: usize,
    /// `sup_t ‖u(t)‖` on the window.
    pub sup_norm: f64,
    /// `sup_norm ≤ M`: the iterates stayed in the ball of the proof.
    pub confined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSolution {
    pub data: CauchyData,
    pub path: TrialPath,
    pub record: WindowRecord,
    /// `sup_t ‖u^{k+1} − u^k‖` per Picard iteration.
    pub increments: Vec<f64>,
}

impl WindowSolution {
    /// Cauchy data at the end of the window.
    pub fn final_data(&self) -> Result<CauchyData> {
        let k = self.path.steps();
        CauchyData::new(
            self.data.equation,
            self.path.values[k].clone(),
            self.path.derivatives.as_ref().map(|d| d[k].clone()),
            self.path.time(k),
        )
    }
}

enum Attempt {
    Accepted(Box<WindowSolution>),
    Rejected,
}

fn contraction_factor(increments: &[f64], floor: f64) -> f64 {
    increments
        .windows(2)
        .filter(|w| w[0] > floor && w[1] > floor)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max)
}

fn steps_for(length: f64, dt: f64) -> usize {
    ((length.abs() / dt) - 1e-9).ceil().max(1.0) as usize
}

fn attempt_window(data: &CauchyData, cfg: &SolverConfig, length: f64, horizon: &Horizon, halvings: u32) -> Result<Attempt> {
    let steps = steps_for(length, cfg.quadrature_step);
    let dt = length / steps as f64;
    let grid = *data.grid();
    let mut current = match cfg.initial_guess {
        InitialGuess::Free => {
            let zero_cfg = SolverConfig {
                nonlinearity: RealEntireSeries::zero(),
                ..cfg.clone()
            };
            let seed = TrialPath {
                t0: data.t0,
                dt,
                values: vec![data.u0.clone(); steps + 1],
                derivatives: None,
            };
            duhamel_map(data, &zero_cfg, &seed)?
        }
        InitialGuess::Zero => TrialPath {
            t0: data.t0,
            dt,
            values: vec![SampledField::zeros(grid, Domain::Space); steps + 1],
            derivatives: data
                .equation
                .is_second_order()
                .then(|| vec![SampledField::zeros(grid, Domain::Space); steps + 1]),
        },
    };
    let mut increments = Vec::new();
    let floor = 1e3 * f64::EPSILON * horizon.m.max(data.norm(cfg.params)?).max(f64::MIN_POSITIVE);
    for iter in 1..=cfg.picard_max_iter {
        let next = duhamel_map(data, cfg, &current)?;
        let delta = next.sup_distance(&current, cfg.params)?;
        increments.push(delta);
        current = next;
        if delta < cfg.picard_tol {
            let contraction = contraction_factor(&increments, floor);
            if contraction > cfg.contraction_limit {
                return Ok(Attempt::Rejected);
            }
            let sup_norm = current.sup_norm(cfg.params)?;
            let record = WindowRecord {
                t_start: data.t0,
                t_used: length,
                t1: horizon.t1,
                t2: horizon.t2,
                m: horizon.m,
                contraction_factor: contraction,
                picard_iters: iter,
                halvings,
                steps,
                sup_norm,
                confined: sup_norm <= horizon.m,
            };
            return Ok(Attempt::Accepted(Box::new(WindowSolution {
                data: data.clone(),
                path: current,
                record,
                increments,
            })));
        }
    }
    Ok(Attempt::Rejected)
}

enum WindowResult {
    Solved(Box<WindowSolution>),
    Underflow,
}

/// Solves one window of signed length at most `max_length`, halving on rejection.
fn solve_window_capped(data: &CauchyData, cfg: &SolverConfig, max_length: f64) -> Result<WindowResult> {
    cfg.validate()?;
    let norm_u0 = mod_norm(&data.u0, cfg.params)?;
    let norm_u1 = data.u1.as_ref().map(|u1| mod_norm(u1, cfg.params)).transpose()?;
    let horizon = step_horizon(norm_u0, norm_u1, &cfg.nonlinearity, cfg.c1, cfg.safety, cfg.horizon_cap)?;
    let mut length = horizon.t.min(max_length.abs()).copysign(max_length);
    for halvings in 0..=cfg.max_halvings {
        if length.abs() < cfg.window_floor {
            return Ok(WindowResult::Underflow);
        }
        if let Attempt::Accepted(w) = attempt_window(data, cfg, length, &horizon, halvings)? {
            return Ok(WindowResult::Solved(w));
        }
        length /= 2.0;
    }
    Err(Error::NonConvergence(format!(
        "Picard iteration failed on a window at t = {} after {} halvings",
        data.t0, cfg.max_halvings
    )))
}

/// One forward window of length `T` from [`step_horizon`].
pub fn solve_window(data: &CauchyData, cfg: &SolverConfig) -> Result<WindowSolution> {
    match solve_window_capped(data, cfg, f64::INFINITY)? {
        WindowResult::Solved(w) => Ok(*w),
        WindowResult::Underflow => Err(Error::NonConvergence(format!(
            "window length fell below {} at t = {}",
            cfg.window_floor, data.t0
        ))),
    }
}

/// One window of prescribed signed `length`, bypassing the horizon (which is
/// still recorded). Used for convergence studies; no halving on rejection.
pub fn solve_window_for(data: &CauchyData, cfg: &SolverConfig, length: f64) -> Result<WindowSolution> {
    cfg.validate()?;
    if !(length != 0.0 && length.is_finite()) {
        return Err(Error::InvalidParameter(format!("window length must be nonzero, got {length}")));
    }
    let norm_u0 = mod_norm(&data.u0, cfg.params)?;
    let norm_u1 = data.u1.as_ref().map(|u1| mod_norm(u1, cfg.params)).transpose()?;
    let horizon = step_horizon(norm_u0, norm_u1, &cfg.nonlinearity, cfg.c1, cfg.safety, cfg.horizon_cap)?;
    match attempt_window(data, cfg, length, &horizon, 0)? {
        Attempt::Accepted(w) => Ok(*w),
        Attempt::Rejected => Err(Error::NonConvergence(format!(
            "Picard iteration failed on the prescribed window of length {length}"
        ))),
    }
}

/// Why a continuation stopped.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Reached,
    /// The state norm passed the ceiling.
    NormCeiling { t: f64, norm: f64, ceiling: f64 },
    /// The admissible window shrank below the floor.
    WindowUnderflow { t: f64 },
}

impl Termination {
    pub fn is_blow_up(&self) -> bool {
        !matches!(self, Termination::Reached)
    }
}

/// A continued solution: nodes of all accepted windows, shared endpoints once.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    pub equation: Equation,
    /// Monotone in the direction of integration.
    pub times: Vec<f64>,
    pub states: Vec<SampledField>,
    /// `∂ₜu` for the second-order equations.
    pub velocities: Option<Vec<SampledField>>,
    pub windows: Vec<WindowRecord>,
    pub termination: Termination,
}

impl SolutionPath {
    pub fn final_state(&self) -> &SampledField {
        self.states.last().expect("a path holds its initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("a path holds its initial time")
    }

    pub fn blow_up(&self) -> bool {
        self.termination.is_blow_up()
    }
}

/// Continues the solution from `data.t0` to `t_end` (either direction),
/// re-deriving the horizon from the current norm at each restart.
pub fn continue_solution(data: &CauchyData, cfg: &SolverConfig, t_end: f64) -> Result<SolutionPath> {
    cfg.validate()?;
    if !t_end.is_finite() || t_end == data.t0 {
        return Err(Error::InvalidParameter(format!("t_end = {t_end} must differ from t0 = {}", data.t0)));
    }
    let initial_norm = data.norm(cfg.params)?;
    let ceiling = cfg.norm_ceiling.unwrap_or(cfg.ceiling_factor * initial_norm);
    let second = data.equation.is_second_order();
    let mut path = SolutionPath {
        equation: data.equation,
        times: vec![data.t0],
        states: vec![data.u0.clone()],
        velocities: second.then(|| vec![data.u1.clone().expect("second-order data")]),
        windows: Vec::new(),
        termination: Termination::Reached,
    };
    let mut current = data.clone();
    let tiny = 1e-12 * (t_end - data.t0).abs();
    while (t_end - current.t0).abs() > tiny {
        let window = match solve_window_capped(&current, cfg, t_end - current.t0)? {
            WindowResult::Solved(w) => w,
            WindowResult::Underflow => {
                path.termination = Termination::WindowUnderflow { t: current.t0 };
                return Ok(path);
            }
        };
        let steps = window.path.steps();
        for k in 1..=steps {
            path.times.push(window.path.time(k));
            path.states.push(window.path.values[k].clone());
            if let (Some(v), Some(d)) = (path.velocities.as_mut(), window.path.derivatives.as_ref()) {
                v.push(d[k].clone());
            }
        }
        current = window.final_data()?;
        // Land exactly on t_end rather than a rounding away from it.
        if (t_end - current.t0).abs() <= tiny {
            current = current.with_t0(t_end);
            *path.times.last_mut().expect("nonempty") = t_end;
        }
        path.windows.push(window.record);
        let norm = current.norm(cfg.params)?;
        if norm > ceiling {
            path.termination = Termination::NormCeiling {
                t: current.t0,
                norm,
                ceiling,
            };
            return Ok(path);
        }
    }
    Ok(path)
}
