//! Fourier multipliers of the linear Schrödinger, wave and Klein–Gordon flows.
//!
//! `H_σ f = (σ f̂)ˇ`. With `r = 2π|ξ|` and `ρ = (1 + r²)^{1/2}`:
//!
//! | family        | symbol                 |
//! |---------------|------------------------|
//! | `schrodinger` | `e^{-i t r²}`          |
//! | `wave_sine`   | `sin(t r) / r`         |
//! | `wave_cosine` | `cos(t r)`             |
//! | `kg_sine`     | `sin(t ρ) / ρ`         |
//! | `kg_cosine`   | `cos(t ρ)`             |

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{inverse_transform, transform, Domain, GridSpec, SampledField};
use crate::norm::{mod_norm, ModParams};
use crate::plot::{line_plot, Series};

/// Below this value of `2π|ξ|` the sine symbol is evaluated by its Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Schrodinger,
    WaveSine,
    WaveCosine,
    KgSine,
    KgCosine,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Schrodinger,
        Family::WaveSine,
        Family::WaveCosine,
        Family::KgSine,
        Family::KgCosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Schrodinger => "schrodinger",
            Family::WaveSine => "wave_sine",
            Family::WaveCosine => "wave_cosine",
            Family::KgSine => "kg_sine",
            Family::KgCosine => "kg_cosine",
        }
    }

    /// Families whose symbol is identically 1 at `t = 0`.
    pub fn is_identity_at_zero(self) -> bool {
        !matches!(self, Family::WaveSine | Family::KgSine)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown propagator kind `{s}`")))
    }
}

/// A multiplier family frozen at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorKind {
    pub family: Family,
    pub t: f64,
}

/// `sin(t r) / r`, continuous through `r = 0`.
fn sinc_time(t: f64, r: f64) -> f64 {
    if r < SERIES_THRESHOLD {
        let tr2 = (t * r) * (t * r);
        t * (1.0 - tr2 / 6.0 * (1.0 - tr2 / 20.0))
    } else {
        (t * r).sin() / r
    }
}

impl PropagatorKind {
    pub fn new(family: Family, t: f64) -> Self {
        PropagatorKind { family, t }
    }

    pub fn at(self, t: f64) -> Self {
        PropagatorKind { t, ..self }
    }

    /// The symbol at frequency `xi` (extra components beyond the grid dimension are zero).
    pub fn symbol(&self, xi: &[f64]) -> Complex64 {
        let r2: f64 = xi.iter().map(|v| (2.0 * PI * v).powi(2)).sum();
        let r = r2.sqrt();
        let t = self.t;
        match self.family {
            Family::Schrodinger => Complex64::cis(-t * r2),
            Family::WaveSine => Complex64::new(sinc_time(t, r), 0.0),
            Family::WaveCosine => Complex64::new((t * r).cos(), 0.0),
            Family::KgSine => {
                let rho = (1.0 + r2).sqrt();
                Complex64::new((t * rho).sin() / rho, 0.0)
            }
            Family::KgCosine => Complex64::new((t * (1.0 + r2).sqrt()).cos(), 0.0),
        }
    }

    /// `∂σ/∂t` at frequency `xi`.
    pub fn time_derivative_symbol(&self, xi: &[f64]) -> Complex64 {
        let r2: f64 = xi.iter().map(|v| (2.0 * PI * v).powi(2)).sum();
        let r = r2.sqrt();
        let t = self.t;
        match self.family {
            Family::Schrodinger => Complex64::new(0.0, -r2) * Complex64::cis(-t * r2),
            Family::WaveSine => Complex64::new((t * r).cos(), 0.0),
            Family::WaveCosine => Complex64::new(-r * (t * r).sin(), 0.0),
            Family::KgSine => Complex64::new((t * (1.0 + r2).sqrt()).cos(), 0.0),
            Family::KgCosine => {
                let rho = (1.0 + r2).sqrt();
                Complex64::new(-rho * (t * rho).sin(), 0.0)
            }
        }
    }

    /// The symbol sampled on the frequency lattice of `grid`, in flat order.
    pub fn symbol_table(&self, grid: &GridSpec) -> Vec<Complex64> {
        (0..grid.len())
            .into_par_iter()
            .with_min_len(1024)
            .map(|j| self.symbol(&grid.coords(Domain::Frequency, j)[..grid.dim()]))
            .collect()
    }

    pub fn time_derivative_table(&self, grid: &GridSpec) -> Vec<Complex64> {
        (0..grid.len())
            .into_par_iter()
            .with_min_len(1024)
            .map(|j| self.time_derivative_symbol(&grid.coords(Domain::Frequency, j)[..grid.dim()]))
            .collect()
    }

    /// Multiplies a frequency-domain field by the symbol.
    pub fn apply_spectral(&self, fh: &SampledField) -> Result<SampledField> {
        fh.expect_domain(Domain::Frequency)?;
        let table = self.symbol_table(fh.grid());
        let values = fh.values().iter().zip(&table).map(|(a, s)| a * s).collect();
        SampledField::new(*fh.grid(), Domain::Frequency, values)
    }

    /// `H_σ f` for a space-domain field.
    pub fn apply(&self, f: &SampledField) -> Result<SampledField> {
        f.expect_domain(Domain::Space)?;
        inverse_transform(&self.apply_spectral(&transform(f)?)?)
    }
}

/// Free-function form of [`PropagatorKind::symbol`].
pub fn symbol(kind: PropagatorKind, xi: &[f64]) -> Complex64 {
    kind.symbol(xi)
}

/// Free-function form of [`PropagatorKind::apply`].
pub fn apply(kind: PropagatorKind, f: &SampledField) -> Result<SampledField> {
    kind.apply(f)
}

/// One time sample of a [`bound_ratio`] sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRatioRow {
    pub t: f64,
    /// `max_f ‖H f‖ / ‖f‖` over the battery.
    pub ratio: f64,
    /// `ratio / (1 + t²)^{n/4}`.
    pub normalized_ratio: f64,
    /// Battery member attaining the maximum.
    pub argmax: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRatioReport {
    pub family: Family,
    pub params: ModParams,
    pub dim: usize,
    pub rows: Vec<BoundRatioRow>,
    /// `max_t normalized_ratio`: the empirical `c_n`.
    pub empirical_constant: f64,
}

impl BoundRatioReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,ratio,normalized_ratio\n");
        for row in &self.rows {
            out.push_str(&format!("{},{},{}\n", row.t, row.ratio, row.normalized_ratio));
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let pts = |f: fn(&BoundRatioRow) -> f64| self.rows.iter().map(|r| (r.t, f(r))).collect();
        line_plot(
            &format!("{} on M^{}", self.family, self.params),
            "t",
            "battery ratio",
            &[
                Series::new("ratio", pts(|r| r.ratio)),
                Series::new("ratio / (1+t²)^{n/4}", pts(|r| r.normalized_ratio)),
            ],
        )
    }

    /// Whether the last normalized ratio stays within `factor` times the
    /// largest of the first three, i.e. no sustained upward trend.
    pub fn trend_bounded(&self, factor: f64) -> bool {
        let head = self.rows.iter().take(3).map(|r| r.normalized_ratio).fold(0.0, f64::max);
        match self.rows.last() {
            Some(last) => last.normalized_ratio <= factor * head,
            None => true,
        }
    }
}

/// Measures `‖H_σ(t) f‖ / ‖f‖` over a battery for every `t` in `t_grid`.
///
/// Fields with vanishing norm carry no information and are skipped.
pub fn bound_ratio(
    family: Family,
    t_grid: &[f64],
    battery: &[(String, SampledField)],
    params: ModParams,
) -> Result<BoundRatioReport> {
    if battery.is_empty() {
        return Err(Error::InvalidParameter("bound_ratio needs a nonempty battery".into()));
    }
    let dim = battery[0].1.grid().dim();
    let mut inputs = Vec::with_capacity(battery.len());
    for (name, f) in battery {
        let norm = mod_norm(f, params)?;
        if norm > 0.0 {
            inputs.push((name, transform(f)?, norm));
        }
    }
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let kind = PropagatorKind::new(family, t);
        let ratios: Vec<(f64, &String)> = inputs
            .par_iter()
            .map(|(name, fh, norm)| -> Result<(f64, &String)> {
                let out = inverse_transform(&kind.apply_spectral(fh)?)?;
                Ok((mod_norm(&out, params)? / norm, *name))
            })
            .collect::<Result<_>>()?;
        let (ratio, argmax) = ratios
            .into_iter()
            .fold((0.0, None), |best, (r, name)| if r > best.0 || best.1.is_none() { (r, Some(name)) } else { best });
        let envelope = (1.0 + t * t).powf(dim as f64 / 4.0);
        rows.push(BoundRatioRow {
            t,
            ratio,
            normalized_ratio: ratio / envelope,
            argmax: argmax.cloned().unwrap_or_default(),
        });
    }
    let empirical_constant = rows.iter().map(|r| r.normalized_ratio).fold(0.0, f64::max);
    Ok(BoundRatioReport {
        family,
        params,
        dim,
        rows,
        empirical_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Builtin;
    use crate::grid::translate;

    fn grid() -> GridSpec {
        GridSpec::new(1, 512, 32.0).unwrap()
    }

    #[test]
    fn symbol_examples() {
        for xi in [0.0, 0.3, 2.0] {
            assert_eq!(symbol(PropagatorKind::new(Family::Schrodinger, 0.0), &[xi]), Complex64::new(1.0, 0.0));
        }
        assert_eq!(PropagatorKind::new(Family::WaveSine, 0.7).symbol(&[0.0]).re, 0.7);
        assert_eq!(PropagatorKind::new(Family::KgCosine, 0.7).symbol(&[0.0]).re, 0.7f64.cos());
        assert_eq!(PropagatorKind::new(Family::WaveSine, 0.0).symbol(&[1.3]).re, 0.0);
        assert_eq!(PropagatorKind::new(Family::KgSine, 0.0).symbol(&[1.3]).re, 0.0);
        assert_eq!("kg_sine".parse::<Family>().unwrap(), Family::KgSine);
        assert!("heat".parse::<Family>().is_err());
    }

    #[test]
    fn sine_symbol_is_continuous_at_the_origin() {
        let kind = PropagatorKind::new(Family::WaveSine, 3.0);
        // Just below and just above the series cutoff.
        for xi in [SERIES_THRESHOLD / (2.0 * PI) * 0.999, SERIES_THRESHOLD / (2.0 * PI) * 1.001] {
            let r = 2.0 * PI * xi;
            let exact = 3.0 * (1.0 - (3.0 * r).powi(2) / 6.0);
            assert!((kind.symbol(&[xi]).re - exact).abs() < 1e-15);
        }
    }

    #[test]
    fn time_derivative_matches_difference_quotient() {
        let h = 1e-6;
        for family in Family::ALL {
            for xi in [0.0, 0.2, 1.1] {
                let k = PropagatorKind::new(family, 0.8);
                let fd = (k.at(0.8 + h).symbol(&[xi]) - k.at(0.8 - h).symbol(&[xi])) / (2.0 * h);
                let exact = k.time_derivative_symbol(&[xi]);
                assert!((fd - exact).norm() < 1e-6 * exact.norm().max(1.0), "{family} at {xi}");
            }
        }
    }

    #[test]
    fn identity_at_time_zero() {
        let f = Builtin::random_bandlimited(4).sample(&grid()).unwrap();
        for family in Family::ALL.into_iter().filter(|f| f.is_identity_at_zero()) {
            let out = apply(PropagatorKind::new(family, 0.0), &f).unwrap();
            assert!(out.max_abs_diff(&f).unwrap() < 1e-12);
        }
    }

    #[test]
    fn free_schrodinger_gaussian() {
        let g = grid();
        let t = 0.1;
        let out = PropagatorKind::new(Family::Schrodinger, t).apply(&Builtin::gaussian().sample(&g).unwrap()).unwrap();
        let a = Complex64::new(1.0, 4.0 * PI * t);
        let exact = SampledField::from_fn(g, Domain::Space, |x| {
            (-PI * x[0] * x[0] / a).exp() / a.sqrt()
        });
        assert!(out.max_abs_diff(&exact).unwrap() < 1e-8);
    }

    #[test]
    fn schrodinger_group_law_and_unitarity() {
        let f = Builtin::random_bandlimited(9).sample(&grid()).unwrap();
        let s = |t| PropagatorKind::new(Family::Schrodinger, t);
        let two_step = s(0.3).apply(&s(0.45).apply(&f).unwrap()).unwrap();
        let one_step = s(0.75).apply(&f).unwrap();
        assert!(two_step.max_abs_diff(&one_step).unwrap() < 1e-10);
        assert!((one_step.l2_norm() - f.l2_norm()).abs() < 1e-10 * f.l2_norm());
        let back = s(-0.75).apply(&one_step).unwrap();
        assert!(back.max_abs_diff(&f).unwrap() < 1e-10);
    }

    #[test]
    fn multipliers_commute_with_translation() {
        let g = grid();
        let f = Builtin::random_bandlimited(2).sample(&g).unwrap();
        let shift = [13.0 * g.spacing()];
        for family in Family::ALL {
            let k = PropagatorKind::new(family, 1.7);
            let a = k.apply(&translate(&f, &shift).unwrap()).unwrap();
            let b = translate(&k.apply(&f).unwrap(), &shift).unwrap();
            assert!(a.max_abs_diff(&b).unwrap() < 1e-10, "{family}");
        }
    }

    #[test]
    fn wave_pair_solves_the_wave_equation() {
        // u(t) = cos(t√-Δ) u0 + sin(t√-Δ)/√-Δ u1 satisfies u_tt = Δu.
        let g = grid();
        let u0 = Builtin::random_bandlimited(3).sample(&g).unwrap();
        let u1 = Builtin::random_bandlimited(8).sample(&g).unwrap();
        let u = |t: f64| {
            let a = PropagatorKind::new(Family::WaveCosine, t).apply(&u0).unwrap();
            let b = PropagatorKind::new(Family::WaveSine, t).apply(&u1).unwrap();
            a.add(&b).unwrap()
        };
        let (t, h) = (0.6, 1e-4);
        let utt = u(t + h).sub(&u(t).scale(Complex64::new(2.0, 0.0))).unwrap().add(&u(t - h)).unwrap();
        let utt = utt.scale(Complex64::new(1.0 / (h * h), 0.0));
        let uh = transform(&u(t)).unwrap();
        let lap = SampledField::new(
            g,
            Domain::Frequency,
            uh.values()
                .iter()
                .enumerate()
                .map(|(j, z)| z * -(2.0 * PI * g.frequency(j)).powi(2))
                .collect(),
        )
        .unwrap();
        let lap = inverse_transform(&lap).unwrap();
        // Relative truncation is h² (2π|ξ|)² / 12 ≈ 1.3e-7 at bandwidth 2.
        assert!(utt.max_abs_diff(&lap).unwrap() < 1e-6 * lap.max_abs());
    }

    #[test]
    fn bound_ratio_identity_and_csv() {
        let g = grid();
        let battery = vec![
            ("gaussian".to_string(), Builtin::gaussian().sample(&g).unwrap()),
            ("rb".to_string(), Builtin::random_bandlimited(1).sample(&g).unwrap()),
        ];
        let p = ModParams::new(1.0, 1.0, 0.0).unwrap();
        let report = bound_ratio(Family::WaveCosine, &[0.0, 0.05], &battery, p).unwrap();
        assert!((report.rows[0].ratio - 1.0).abs() < 1e-12);
        // cos(tr) is within O(t) of 1 on band-limited data.
        assert!(report.rows[1].ratio <= 1.0 + 0.05 * 2.0 * PI * 3.0);
        assert!(report.to_csv().starts_with("t,ratio,normalized_ratio\n0,"));
        assert!(report.to_svg().contains("<polyline"));
        assert!(bound_ratio(Family::WaveCosine, &[0.0], &[], p).is_err());
    }
}
