//! Periodic sampling lattices and the complex fields that live on them.
//!
//! A [`GridSpec`] describes the box `[-L/2, L/2)^n` sampled with `N` points
//! per axis. Its dual lattice holds the centered frequencies
//! `w_j = (j - N/2) / L`. Transforms are normalized so that they approximate
//! the continuum integrals
//!
//! ```text
//! f^(w) = ∫ f(x) e^{-2πi w·x} dx,      f(x) = ∫ f^(w) e^{2πi x·w} dw,
//! ```
//!
//! which means every closed-form identity on ℝⁿ carries over with no hidden
//! constants, up to truncation and aliasing.

use std::fmt;

use num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::fft_nd;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Relative tolerance used when deciding whether a point sits on a lattice.
const LATTICE_TOL: f64 = 1e-9;

/// Periodic sampling lattice of ℝⁿ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    samples: usize,
    extent: f64,
}

impl GridSpec {
    pub fn new(dim: usize, samples: usize, extent: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidGrid(format!(
                "dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if samples < 2 || !samples.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "samples per axis must be a power of two ≥ 2, got {samples}"
            )));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "extent must be positive and finite, got {extent}"
            )));
        }
        Ok(GridSpec {
            dim,
            samples,
            extent,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Spatial step `L / N`.
    pub fn spacing(&self) -> f64 {
        self.extent / self.samples as f64
    }

    /// Frequency step `1 / L`.
    pub fn dual_spacing(&self) -> f64 {
        1.0 / self.extent
    }

    /// Extent of the frequency lattice, `N / L`.
    pub fn dual_extent(&self) -> f64 {
        self.samples as f64 / self.extent
    }

    /// Total number of lattice points, `N^dim`.
    pub fn len(&self) -> usize {
        self.samples.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The grid whose spatial lattice is this grid's frequency lattice.
    pub fn dual(&self) -> GridSpec {
        GridSpec {
            dim: self.dim,
            samples: self.samples,
            extent: self.dual_extent(),
        }
    }

    /// Same box, twice as many samples per axis.
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            samples: self.samples * 2,
            ..*self
        }
    }

    /// Coordinate of spatial node `k` along one axis.
    pub fn node(&self, k: usize) -> f64 {
        -0.5 * self.extent + k as f64 * self.spacing()
    }

    /// Coordinate of frequency node `j` along one axis.
    pub fn frequency(&self, j: usize) -> f64 {
        (j as f64 - (self.samples / 2) as f64) / self.extent
    }

    /// Splits a flat row-major index into per-axis indices.
    pub fn unflatten(&self, mut flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        for axis in (0..self.dim).rev() {
            idx[axis] = flat % self.samples;
            flat /= self.samples;
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter()
            .take(self.dim)
            .fold(0, |acc, &i| acc * self.samples + i)
    }

    /// Coordinates of a flat index on the lattice belonging to `domain`.
    pub fn coords(&self, domain: Domain, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.unflatten(flat);
        let mut out = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            out[axis] = match domain {
                Domain::Space => self.node(idx[axis]),
                Domain::Frequency => self.frequency(idx[axis]),
            };
        }
        out
    }

    /// Volume element `spacing^dim` of the lattice belonging to `domain`.
    pub fn cell(&self, domain: Domain) -> f64 {
        match domain {
            Domain::Space => self.spacing().powi(self.dim as i32),
            Domain::Frequency => self.dual_spacing().powi(self.dim as i32),
        }
    }

    /// Index of the node closest to the origin along one axis.
    pub fn origin_index(&self) -> usize {
        self.samples / 2
    }

    fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self} vs {other}")))
        }
    }

    /// Converts a displacement into an integer number of lattice steps.
    fn lattice_steps(&self, domain: Domain, shift: &[f64]) -> Result<[i64; MAX_DIM]> {
        let step = match domain {
            Domain::Space => self.spacing(),
            Domain::Frequency => self.dual_spacing(),
        };
        let mut steps = [0i64; MAX_DIM];
        for axis in 0..self.dim {
            let v = shift.get(axis).copied().unwrap_or(0.0) / step;
            let r = v.round();
            if (v - r).abs() > LATTICE_TOL * v.abs().max(1.0) {
                return Err(Error::OffLattice(format!(
                    "shift {shift:?} (step {step}) on {domain} lattice of {self}"
                )));
            }
            steps[axis] = r as i64;
        }
        Ok(steps)
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "grid(dim={}, N={}, L={})", self.dim, self.samples, self.extent)
    }
}

/// Which lattice a field's samples are attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Space,
    Frequency,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Space => f.write_str("space"),
            Domain::Frequency => f.write_str("frequency"),
        }
    }
}

/// Complex samples of a function on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    grid: GridSpec,
    values: Vec<Complex64>,
    domain: Domain,
}

impl SampledField {
    pub fn new(grid: GridSpec, domain: Domain, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values supplied for {grid} ({} expected)",
                values.len(),
                grid.len()
            )));
        }
        Ok(SampledField {
            grid,
            values,
            domain,
        })
    }

    pub fn zeros(grid: GridSpec, domain: Domain) -> Self {
        SampledField {
            grid,
            values: vec![Complex64::default(); grid.len()],
            domain,
        }
    }

    /// Samples `f` at every node of the lattice belonging to `domain`.
    pub fn from_fn<F>(grid: GridSpec, domain: Domain, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64,
    {
        let values = (0..grid.len())
            .map(|k| {
                let x = grid.coords(domain, k);
                f(&x[..grid.dim])
            })
            .collect();
        SampledField {
            grid,
            values,
            domain,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Node coordinates of flat index `k`.
    pub fn coords(&self, k: usize) -> [f64; MAX_DIM] {
        self.grid.coords(self.domain, k)
    }

    /// Reinterprets a frequency-domain field as a spatial function on the dual
    /// grid, so that `w ↦ f^(w)` can be fed to the same machinery as `x ↦ f(x)`.
    pub fn as_spatial(&self) -> SampledField {
        match self.domain {
            Domain::Space => self.clone(),
            Domain::Frequency => SampledField {
                grid: self.grid.dual(),
                values: self.values.clone(),
                domain: Domain::Space,
            },
        }
    }

    pub(crate) fn expect_domain(&self, expected: Domain) -> Result<()> {
        if self.domain == expected {
            Ok(())
        } else {
            Err(Error::DomainMismatch {
                expected,
                found: self.domain,
            })
        }
    }

    fn check_compatible(&self, other: &SampledField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.domain != other.domain {
            return Err(Error::DomainMismatch {
                expected: self.domain,
                found: other.domain,
            });
        }
        Ok(())
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> SampledField {
        SampledField {
            values: self.values.iter().map(|&z| f(z)).collect(),
            ..self.clone()
        }
    }

    fn zip_with<F>(&self, other: &SampledField, f: F) -> Result<SampledField>
    where
        F: Fn(Complex64, Complex64) -> Complex64,
    {
        self.check_compatible(other)?;
        Ok(SampledField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            domain: self.domain,
        })
    }

    pub fn add(&self, other: &SampledField) -> Result<SampledField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SampledField) -> Result<SampledField> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product; only meaningful in physical space.
    pub fn mul(&self, other: &SampledField) -> Result<SampledField> {
        self.expect_domain(Domain::Space)?;
        self.zip_with(other, |a, b| a * b)
    }

    pub fn conj(&self) -> SampledField {
        self.map(|z| z.conj())
    }

    pub fn scale(&self, c: Complex64) -> SampledField {
        self.map(|z| z * c)
    }

    pub fn real_part(&self) -> SampledField {
        self.map(|z| Complex64::new(z.re, 0.0))
    }

    pub fn imag_part(&self) -> SampledField {
        self.map(|z| Complex64::new(z.im, 0.0))
    }

    /// Discrete L² norm, `(cell · Σ|f|²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let sum: f64 = self.values.iter().map(|z| z.norm_sqr()).sum();
        (self.grid.cell(self.domain) * sum).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest pointwise deviation from another field on the same grid.
    pub fn max_abs_diff(&self, other: &SampledField) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Returns the sample nearest to `x`.
    pub fn value_at(&self, x: &[f64]) -> Complex64 {
        let (origin, step) = match self.domain {
            Domain::Space => (-0.5 * self.grid.extent, self.grid.spacing()),
            Domain::Frequency => (
                -((self.grid.samples / 2) as f64) * self.grid.dual_spacing(),
                self.grid.dual_spacing(),
            ),
        };
        let n = self.grid.samples as i64;
        let mut idx = [0usize; MAX_DIM];
        for axis in 0..self.grid.dim {
            let k = ((x[axis] - origin) / step).round() as i64;
            idx[axis] = k.rem_euclid(n) as usize;
        }
        self.values[self.grid.flatten(&idx)]
    }
}

/// `(-1)^{Σ idx}` for a flat index.
fn checkerboard(grid: &GridSpec, flat: usize) -> f64 {
    let idx = grid.unflatten(flat);
    let parity: usize = idx[..grid.dim].iter().sum();
    if parity % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Continuum-normalized forward transform of a space-domain field.
pub fn transform(field: &SampledField) -> Result<SampledField> {
    field.expect_domain(Domain::Space)?;
    let grid = field.grid;
    // e^{-2πi w_j x_k} = (-1)^{j + N/2} (-1)^k e^{-2πi jk/N} per axis.
    let mut data: Vec<Complex64> = field
        .values
        .iter()
        .enumerate()
        .map(|(k, &z)| z * checkerboard(&grid, k))
        .collect();
    fft_nd(&mut data, grid.samples, grid.dim, FftDirection::Forward);
    let half_shift = if (grid.samples / 2 * grid.dim) % 2 == 0 { 1.0 } else { -1.0 };
    let cell = grid.cell(Domain::Space);
    for (j, z) in data.iter_mut().enumerate() {
        *z *= cell * half_shift * checkerboard(&grid, j);
    }
    SampledField::new(grid, Domain::Frequency, data)
}

/// Continuum-normalized inverse transform of a frequency-domain field.
pub fn inverse_transform(field: &SampledField) -> Result<SampledField> {
    field.expect_domain(Domain::Frequency)?;
    let grid = field.grid;
    let half_shift = if (grid.samples / 2 * grid.dim) % 2 == 0 { 1.0 } else { -1.0 };
    let mut data: Vec<Complex64> = field
        .values
        .iter()
        .enumerate()
        .map(|(j, &z)| z * (half_shift * checkerboard(&grid, j)))
        .collect();
    fft_nd(&mut data, grid.samples, grid.dim, FftDirection::Inverse);
    let cell = grid.cell(Domain::Frequency);
    for (k, z) in data.iter_mut().enumerate() {
        *z *= cell * checkerboard(&grid, k);
    }
    SampledField::new(grid, Domain::Space, data)
}

/// `T_{x0} f(t) = f(t - x0)`, realized as an exact index roll.
///
/// On a frequency-domain field the shift is measured in frequency units.
pub fn translate(field: &SampledField, shift: &[f64]) -> Result<SampledField> {
    let grid = field.grid;
    let steps = grid.lattice_steps(field.domain, shift)?;
    let n = grid.samples as i64;
    let mut out = vec![Complex64::default(); grid.len()];
    for (k, slot) in out.iter_mut().enumerate() {
        let idx = grid.unflatten(k);
        let mut src = [0usize; MAX_DIM];
        for axis in 0..grid.dim {
            src[axis] = (idx[axis] as i64 - steps[axis]).rem_euclid(n) as usize;
        }
        *slot = field.values[grid.flatten(&src)];
    }
    SampledField::new(grid, field.domain, out)
}

/// `M_{w0} f(t) = e^{2πi w0·t} f(t)`.
///
/// `w0` must lie on the lattice dual to the field's own lattice, so the phase
/// is periodic over the box.
pub fn modulate(field: &SampledField, w0: &[f64]) -> Result<SampledField> {
    let grid = field.grid;
    let dual_domain = match field.domain {
        Domain::Space => Domain::Frequency,
        Domain::Frequency => Domain::Space,
    };
    let dual_step = match dual_domain {
        Domain::Frequency => grid.dual_spacing(),
        Domain::Space => grid.spacing(),
    };
    let steps = grid.lattice_steps(dual_domain, w0)?;
    let out = field
        .values
        .iter()
        .enumerate()
        .map(|(k, &z)| {
            let x = grid.coords(field.domain, k);
            let phase: f64 = (0..grid.dim)
                .map(|a| steps[a] as f64 * dual_step * x[a])
                .sum();
            z * Complex64::cis(2.0 * std::f64::consts::PI * phase)
        })
        .collect();
    SampledField::new(grid, field.domain, out)
}

/// Approximates `∫ f(x - y) k(y) dy` by a spectral circular convolution.
pub fn convolve(f: &SampledField, k: &SampledField) -> Result<SampledField> {
    f.expect_domain(Domain::Space)?;
    k.expect_domain(Domain::Space)?;
    f.grid.check_same(&k.grid)?;
    let fh = transform(f)?;
    let kh = transform(k)?;
    inverse_transform(&fh.zip_with(&kh, |a, b| a * b)?)
}

/// Elementwise operations exposed by [`pointwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointwiseOp {
    Add,
    Sub,
    Mul,
    Conj,
    Scale,
}

/// Second argument of [`pointwise`].
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Field(&'a SampledField),
    Scalar(Complex64),
    None,
}

pub fn pointwise(op: PointwiseOp, a: &SampledField, b: Operand<'_>) -> Result<SampledField> {
    match (op, b) {
        (PointwiseOp::Conj, _) => Ok(a.conj()),
        (PointwiseOp::Scale, Operand::Scalar(c)) => Ok(a.scale(c)),
        (PointwiseOp::Add, Operand::Field(b)) => a.add(b),
        (PointwiseOp::Sub, Operand::Field(b)) => a.sub(b),
        (PointwiseOp::Mul, Operand::Field(b)) => a.mul(b),
        (PointwiseOp::Add, Operand::Scalar(c)) => Ok(a.map(|z| z + c)),
        (PointwiseOp::Sub, Operand::Scalar(c)) => Ok(a.map(|z| z - c)),
        (PointwiseOp::Mul, Operand::Scalar(c)) => Ok(a.scale(c)),
        (op, _) => Err(Error::InvalidParameter(format!(
            "operand missing or of the wrong kind for {op:?}"
        ))),
    }
}
