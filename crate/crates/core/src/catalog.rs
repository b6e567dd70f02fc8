//! Named test functions that can be sampled on any grid.
//!
//! Every entry describes a fixed function on ℝⁿ (or on the box, for the
//! periodic ones), so sampling the same [`Builtin`] on a grid and on its
//! refinement gives two discretizations of one continuum object. Refinement
//! studies throughout the crate depend on that.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{inverse_transform, Domain, GridSpec, SampledField, MAX_DIM};

/// Catalog identifiers accepted by [`sample_builtin`].
pub const CATALOG: [&str; 5] = ["gaussian", "triangle", "jump", "plane_wave", "random_bandlimited"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Builtin {
    /// `amplitude · r^{-n} e^{-π|x-c|²/r²}`; the default is `e^{-π|x|²}`.
    Gaussian {
        center: f64,
        width: f64,
        amplitude: f64,
    },
    /// `(1 - |x - c|)₊`, one dimension only.
    Triangle { center: f64 },
    /// `sign(x) (1 - |x|)₊`: `1 - x` on `[0, 1)`, `-1 - x` on `[-1, 0)` (one dimension).
    ///
    /// Its modulus is the triangle, but the jump of size 2 at the origin keeps
    /// it out of every `M^{p,1}`.
    Jump { center: f64 },
    /// `e^{2πi m·x}` for an integer frequency vector.
    PlaneWave { m: [i64; MAX_DIM] },
    /// Random sum of Gaussian bumps in frequency, cut off at `|w| ≤ bandwidth`.
    RandomBandlimited {
        seed: u64,
        bandwidth: f64,
        bumps: usize,
    },
}

impl Builtin {
    pub fn gaussian() -> Self {
        Builtin::Gaussian {
            center: 0.0,
            width: 1.0,
            amplitude: 1.0,
        }
    }

    pub fn gaussian_width(width: f64) -> Self {
        Builtin::Gaussian {
            center: 0.0,
            width,
            amplitude: 1.0,
        }
    }

    pub fn triangle() -> Self {
        Builtin::Triangle { center: 0.0 }
    }

    pub fn jump() -> Self {
        Builtin::Jump { center: 0.0 }
    }

    pub fn plane_wave(m: i64) -> Self {
        Builtin::PlaneWave { m: [m, 0, 0] }
    }

    pub fn random_bandlimited(seed: u64) -> Self {
        Builtin::RandomBandlimited {
            seed,
            bandwidth: 2.0,
            bumps: 3,
        }
    }

    /// Builds a catalog entry from its identifier and a parameter map.
    ///
    /// Recognized keys: `center`, `width`, `amplitude` (gaussian);
    /// `center` (triangle, jump); `m`, `m1`, `m2` (plane_wave);
    /// `seed`, `bandwidth`, `bumps` (random_bandlimited).
    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        let integer = |key: &str, default: f64| -> Result<i64> {
            let v = get(key, default);
            if v.fract() != 0.0 {
                return Err(Error::InvalidParameter(format!("`{key}` must be an integer, got {v}")));
            }
            Ok(v as i64)
        };
        match name {
            "gaussian" => Ok(Builtin::Gaussian {
                center: get("center", 0.0),
                width: get("width", 1.0),
                amplitude: get("amplitude", 1.0),
            }),
            "triangle" => Ok(Builtin::Triangle {
                center: get("center", 0.0),
            }),
            "jump" => Ok(Builtin::Jump {
                center: get("center", 0.0),
            }),
            "plane_wave" => Ok(Builtin::PlaneWave {
                m: [integer("m", 1.0)?, integer("m1", 0.0)?, integer("m2", 0.0)?],
            }),
            "random_bandlimited" => Ok(Builtin::RandomBandlimited {
                seed: integer("seed", 0.0)?.max(0) as u64,
                bandwidth: get("bandwidth", 2.0),
                bumps: integer("bumps", 3.0)?.max(1) as usize,
            }),
            other => Err(Error::UnknownFunction(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Builtin::Gaussian { .. } => "gaussian",
            Builtin::Triangle { .. } => "triangle",
            Builtin::Jump { .. } => "jump",
            Builtin::PlaneWave { .. } => "plane_wave",
            Builtin::RandomBandlimited { .. } => "random_bandlimited",
        }
    }

    pub fn sample(&self, grid: &GridSpec) -> Result<SampledField> {
        let one_dim = |name: &str| -> Result<()> {
            if grid.dim() != 1 {
                return Err(Error::InvalidParameter(format!(
                    "{name} is only defined in one dimension, grid has dim {}",
                    grid.dim()
                )));
            }
            Ok(())
        };
        match *self {
            Builtin::Gaussian {
                center,
                width,
                amplitude,
            } => {
                if !(width > 0.0) {
                    return Err(Error::InvalidParameter(format!("gaussian width {width}")));
                }
                let norm = amplitude * width.powi(-(grid.dim() as i32));
                Ok(SampledField::from_fn(*grid, Domain::Space, |x| {
                    let r2: f64 = x.iter().map(|v| (v - center) * (v - center)).sum();
                    Complex64::new(norm * (-PI * r2 / (width * width)).exp(), 0.0)
                }))
            }
            Builtin::Triangle { center } => {
                one_dim("triangle")?;
                Ok(SampledField::from_fn(*grid, Domain::Space, |x| {
                    Complex64::new((1.0 - (x[0] - center).abs()).max(0.0), 0.0)
                }))
            }
            Builtin::Jump { center } => {
                one_dim("jump")?;
                Ok(SampledField::from_fn(*grid, Domain::Space, |x| {
                    Complex64::new(jump(x[0] - center), 0.0)
                }))
            }
            Builtin::PlaneWave { m } => {
                for (axis, &ma) in m.iter().enumerate().take(grid.dim()) {
                    let cycles = ma as f64 * grid.extent();
                    if (cycles - cycles.round()).abs() > 1e-9 {
                        return Err(Error::InvalidParameter(format!(
                            "plane wave frequency {ma} on axis {axis} is not periodic on a box of extent {}",
                            grid.extent()
                        )));
                    }
                    if (ma.unsigned_abs() as f64) >= 0.5 * grid.dual_extent() {
                        return Err(Error::InvalidParameter(format!(
                            "plane wave frequency {ma} is above the Nyquist limit {}",
                            0.5 * grid.dual_extent()
                        )));
                    }
                }
                Ok(SampledField::from_fn(*grid, Domain::Space, |x| {
                    let phase: f64 = x.iter().zip(m.iter()).map(|(xa, &ma)| xa * ma as f64).sum();
                    Complex64::cis(2.0 * PI * phase)
                }))
            }
            Builtin::RandomBandlimited {
                seed,
                bandwidth,
                bumps,
            } => random_bandlimited(grid, seed, bandwidth, bumps),
        }
    }
}

fn jump(x: f64) -> f64 {
    if (0.0..1.0).contains(&x) {
        1.0 - x
    } else if (-1.0..0.0).contains(&x) {
        -1.0 - x
    } else {
        0.0
    }
}

fn random_bandlimited(grid: &GridSpec, seed: u64, bandwidth: f64, bumps: usize) -> Result<SampledField> {
    let nyquist = 0.5 * grid.dual_extent();
    if !(bandwidth > 0.0) || bandwidth >= nyquist {
        return Err(Error::InvalidParameter(format!(
            "bandwidth {bandwidth} must lie in (0, {nyquist}) for {grid}"
        )));
    }
    let dim = grid.dim();
    // Bump radius 3σ keeps every bump inside the band; the Gaussian tail
    // beyond 3σ is below 1e-12 and is cut off exactly.
    let sigma = bandwidth / 6.0;
    let reach = (bandwidth - 3.0 * sigma) / (dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::with_capacity(bumps);
    for _ in 0..bumps {
        let mut c = [0.0; MAX_DIM];
        let mut x0 = [0.0; MAX_DIM];
        for axis in 0..dim {
            c[axis] = rng.gen_range(-reach..=reach);
            x0[axis] = rng.gen_range(-2.0..=2.0);
        }
        let amp = Complex64::from_polar(rng.gen_range(0.5..1.5), rng.gen_range(0.0..2.0 * PI));
        terms.push((c, x0, amp));
    }
    let spectrum = SampledField::from_fn(*grid, Domain::Frequency, |w| {
        let mut acc = Complex64::default();
        for (c, x0, amp) in &terms {
            let d2: f64 = (0..dim).map(|a| (w[a] - c[a]).powi(2)).sum();
            if d2 <= (3.0 * sigma).powi(2) {
                let shift: f64 = (0..dim).map(|a| w[a] * x0[a]).sum();
                acc += amp * (-PI * d2 / (sigma * sigma)).exp() * Complex64::cis(-2.0 * PI * shift);
            }
        }
        acc
    });
    inverse_transform(&spectrum)
}

/// Samples the catalog function `name` on `grid`.
pub fn sample_builtin(name: &str, grid: &GridSpec, params: &BTreeMap<String, f64>) -> Result<SampledField> {
    Builtin::from_name(name, params)?.sample(grid)
}
