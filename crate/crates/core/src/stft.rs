//! Short-time Fourier transform on the full `(x, w)` product lattice.
//!
//! Each frequency row is computed from the convolution form
//! `V_g f(x, w) = e^{-2πi x·w} (f ∗ M_w g*)(x)` with `g*(y) = conj(g(-y))`.
//! In frequency space `M_w g*` is a lattice roll of `conj(ĝ)`, so a row costs
//! one pointwise product and one inverse transform.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::Builtin;
use crate::error::{Error, Result};
use rustfft::FftDirection;

use crate::fft::fft_nd;
use crate::grid::{transform, Domain, GridSpec, SampledField, MAX_DIM};
use crate::norm::{combine_row_norms, row_norm, ModParams};

/// Upper bound on stored time–frequency entries (`N^{2·dim}`), about 256 MiB.
pub const MAX_TF_ENTRIES: usize = 1 << 24;

/// Sampled `V_g f`; row `j` is frequency node `w_j`, column `k` is spatial node `x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TFMatrix {
    grid: GridSpec,
    values: Vec<Complex64>,
    window_id: String,
}

impl TFMatrix {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn window_id(&self) -> &str {
        &self.window_id
    }

    /// Number of rows (equal to the number of columns), `N^dim`.
    pub fn size(&self) -> usize {
        self.grid.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.values[row * self.size() + col]
    }

    pub fn row(&self, row: usize) -> &[Complex64] {
        let n = self.size();
        &self.values[row * n..(row + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Complex64]> {
        self.values.chunks(self.size())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Precomputed spectra for evaluating STFT rows on demand.
///
/// The continuum-normalized inverse transform is inlined: the input sign
/// pattern is folded into `f_signed` once, and the output pattern is a sign
/// per node, so magnitudes need only the raw inverse DFT.
pub(crate) struct StftPlan {
    grid: GridSpec,
    f_signed: Vec<Complex64>,
    g_hat_conj: Vec<Complex64>,
    /// Per-axis indices of every flat index.
    axes: Vec<[usize; MAX_DIM]>,
    /// `(-1)^{Σ k_a}` per spatial node.
    signs: Vec<f64>,
}

impl StftPlan {
    pub(crate) fn new(f: &SampledField, g: &SampledField) -> Result<Self> {
        f.expect_domain(Domain::Space)?;
        g.expect_domain(Domain::Space)?;
        if f.grid() != g.grid() {
            return Err(Error::GridMismatch(format!("{} vs {}", f.grid(), g.grid())));
        }
        if g.values().iter().all(|z| *z == Complex64::default()) {
            return Err(Error::ZeroWindow);
        }
        let grid = *f.grid();
        let axes: Vec<[usize; MAX_DIM]> = (0..grid.len()).map(|i| grid.unflatten(i)).collect();
        let signs: Vec<f64> = axes
            .iter()
            .map(|idx| if idx[..grid.dim()].iter().sum::<usize>() % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let half_shift = if (grid.samples() / 2 * grid.dim()) % 2 == 0 { 1.0 } else { -1.0 };
        let f_signed = transform(f)?
            .values()
            .iter()
            .zip(&signs)
            .map(|(z, s)| z * (half_shift * s))
            .collect();
        Ok(StftPlan {
            grid,
            f_signed,
            g_hat_conj: transform(g)?.values().iter().map(|z| z.conj()).collect(),
            axes,
            signs,
        })
    }

    /// Raw inverse DFT of the row spectrum; `cell · signs[k] · out[k]` is
    /// `(f ∗ M_{w_j} g*)(x_k)`.
    fn raw_row(&self, row: usize) -> Vec<Complex64> {
        let grid = self.grid;
        let n = grid.samples();
        let dim = grid.dim();
        let half = n / 2;
        let j = self.axes[row];
        // Roll offsets reduced mod n, so wrapping is one conditional subtract.
        let mut offset = [0usize; MAX_DIM];
        for a in 0..dim {
            offset[a] = (n + half - j[a]) % n;
        }
        let wrap = |v: usize| if v >= n { v - n } else { v };
        let mut data: Vec<Complex64> = if dim == 1 {
            (0..n)
                .map(|i| self.f_signed[i] * self.g_hat_conj[wrap(i + offset[0])])
                .collect()
        } else {
            self.axes
                .iter()
                .zip(&self.f_signed)
                .map(|(xi, f)| {
                    let src = (0..dim).fold(0, |acc, a| acc * n + wrap(xi[a] + offset[a]));
                    f * self.g_hat_conj[src]
                })
                .collect()
        };
        fft_nd(&mut data, n, dim, FftDirection::Inverse);
        data
    }

    pub(crate) fn row(&self, row: usize) -> Vec<Complex64> {
        let grid = self.grid;
        let cell = grid.cell(Domain::Frequency);
        let w = grid.coords(Domain::Frequency, row);
        let mut out = self.raw_row(row);
        for (k, z) in out.iter_mut().enumerate() {
            let x = grid.coords(Domain::Space, k);
            let xw: f64 = (0..grid.dim()).map(|a| x[a] * w[a]).sum();
            *z *= Complex64::cis(-2.0 * PI * xw) * (cell * self.signs[k]);
        }
        out
    }

    /// `|V_g f(x_k, w_j)|` over one row.
    pub(crate) fn row_magnitudes(&self, row: usize) -> Vec<f64> {
        let cell = self.grid.cell(Domain::Frequency);
        // norm_sqr().sqrt() rather than norm(): hypot dominates the cost otherwise.
        self.raw_row(row).iter().map(|z| cell * z.norm_sqr().sqrt()).collect()
    }

    pub(crate) fn grid(&self) -> &GridSpec {
        &self.grid
    }
}

/// Samples the canonical window `e^{-π|x|²}` on `grid`.
pub fn canonical_window(grid: &GridSpec) -> SampledField {
    Builtin::gaussian()
        .sample(grid)
        .expect("the gaussian is defined on every grid")
}

/// Computes the full time–frequency matrix `V_g f`.
pub fn stft(f: &SampledField, g: &SampledField) -> Result<TFMatrix> {
    stft_labeled(f, g, "custom")
}

/// [`stft`] with an explicit window descriptor recorded on the result.
pub fn stft_labeled(f: &SampledField, g: &SampledField, window_id: &str) -> Result<TFMatrix> {
    let entries = f.grid().len().saturating_mul(f.grid().len());
    if entries > MAX_TF_ENTRIES {
        return Err(Error::TooLarge {
            entries,
            limit: MAX_TF_ENTRIES,
        });
    }
    let plan = StftPlan::new(f, g)?;
    let rows: Vec<Vec<Complex64>> = (0..plan.grid.len()).into_par_iter().map(|j| plan.row(j)).collect();
    Ok(TFMatrix {
        grid: plan.grid,
        values: rows.concat(),
        window_id: window_id.to_string(),
    })
}

/// Result of comparing the norms produced by two windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowEquivalence {
    /// `‖V_{g1} f‖ / ‖V_{g2} f‖` in the requested mixed norm.
    pub ratio: f64,
    /// `‖V_{g2} g1‖` in the weighted `L^{1,1}_s` norm.
    pub bound: f64,
    /// `ratio / bound`, the constant the inequality needs on this input.
    pub constant: f64,
}

pub fn window_equivalence_ratio(
    f: &SampledField,
    g1: &SampledField,
    g2: &SampledField,
    params: ModParams,
) -> Result<WindowEquivalence> {
    let n1 = norm_of_rows(&StftPlan::new(f, g1)?, params);
    let n2 = norm_of_rows(&StftPlan::new(f, g2)?, params);
    let bound = norm_of_rows(&StftPlan::new(g1, g2)?, ModParams::new(1.0, 1.0, params.s)?);
    let ratio = if n1 == n2 { 1.0 } else { n1 / n2 };
    Ok(WindowEquivalence {
        ratio,
        bound,
        constant: ratio / bound,
    })
}

/// Mixed norm of `V_g f` computed row by row without storing the matrix.
pub(crate) fn norm_of_rows(plan: &StftPlan, params: ModParams) -> f64 {
    let grid = *plan.grid();
    let row_norms: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|j| row_norm(&grid, &plan.row_magnitudes(j), params))
        .collect();
    combine_row_norms(&grid, &row_norms, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, l: f64) -> GridSpec {
        GridSpec::new(1, n, l).unwrap()
    }

    fn closed_form_vgg(x: f64, w: f64) -> Complex64 {
        (-PI * (x * x + w * w) / 2.0).exp() / 2f64.sqrt() * Complex64::cis(-PI * x * w)
    }

    #[test]
    fn gaussian_stft_matches_closed_form() {
        let grid = grid(512, 32.0);
        let g = canonical_window(&grid);
        let v = stft(&g, &g).unwrap();
        let mut err: f64 = 0.0;
        for j in 0..grid.len() {
            for k in 0..grid.len() {
                let e = closed_form_vgg(grid.node(k), grid.frequency(j));
                err = err.max((v.get(j, k) - e).norm());
            }
        }
        assert!(err <= 1e-7, "max error {err}");
    }

    #[test]
    fn zero_frequency_row_is_a_convolution() {
        let grid = grid(128, 16.0);
        let f = Builtin::random_bandlimited(3).sample(&grid).unwrap();
        let g = Builtin::gaussian_width(1.5).sample(&grid).unwrap();
        let v = stft(&f, &g).unwrap();
        let g_star = SampledField::from_fn(grid, Domain::Space, |x| g.value_at(&[-x[0]]).conj());
        let conv = crate::grid::convolve(&f, &g_star).unwrap();
        let row = v.row(grid.origin_index());
        for (k, z) in row.iter().enumerate() {
            assert!((z - conv.values()[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn translation_shifts_columns_with_a_row_phase() {
        let grid = grid(128, 16.0);
        let f = Builtin::random_bandlimited(5).sample(&grid).unwrap();
        let g = canonical_window(&grid);
        let a = 1.5;
        let shifted = crate::grid::translate(&f, &[a]).unwrap();
        let v = stft(&f, &g).unwrap();
        let vs = stft(&shifted, &g).unwrap();
        let steps = (a / grid.spacing()).round() as usize;
        let n = grid.len();
        for j in 0..n {
            let phase = Complex64::cis(-2.0 * PI * grid.frequency(j) * a);
            for k in 0..n {
                let src = (k + n - steps) % n;
                assert!((vs.get(j, k) - phase * v.get(j, src)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn gaussian_magnitude_is_point_symmetric() {
        let grid = grid(64, 8.0);
        let g = canonical_window(&grid);
        let v = stft(&g, &g).unwrap();
        let n = grid.len();
        // Index 0 maps to itself under negation on the periodic lattice.
        for j in 1..n {
            for k in 1..n {
                assert!((v.get(j, k).norm() - v.get(n - j, n - k).norm()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn conjugation_reflects_frequency() {
        let grid = grid(128, 16.0);
        let f = Builtin::random_bandlimited(9).sample(&grid).unwrap();
        let g = canonical_window(&grid);
        let v = stft(&f, &g).unwrap();
        let vc = stft(&f.conj(), &g).unwrap();
        let n = grid.len();
        for j in 1..n {
            for k in 0..n {
                assert!((vc.get(j, k).norm() - v.get(n - j, k).norm()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fourier_side_identity() {
        // |V_g f(x, w)| = |V_ĝ f̂(w, -x)| with g = ĝ the gaussian.
        let grid = grid(128, 16.0);
        let f = Builtin::random_bandlimited(4).sample(&grid).unwrap();
        let fh = transform(&f).unwrap().as_spatial();
        let g = canonical_window(&grid);
        let gd = canonical_window(fh.grid());
        let v = stft(&f, &g).unwrap();
        let vh = stft(&fh, &gd).unwrap();
        let n = grid.len();
        for j in 0..n {
            for k in 0..n {
                let neg_k = (n - k) % n;
                assert!((v.get(j, k).norm() - vh.get(neg_k, j).norm()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn linear_in_f_conjugate_linear_in_g() {
        let grid = grid(64, 8.0);
        let f1 = Builtin::random_bandlimited(1).sample(&grid).unwrap();
        let f2 = Builtin::random_bandlimited(2).sample(&grid).unwrap();
        let g = Builtin::gaussian_width(0.7).sample(&grid).unwrap();
        let a = Complex64::new(0.3, -1.2);
        let lhs = stft(&f1.scale(a).add(&f2).unwrap(), &g).unwrap();
        let v1 = stft(&f1, &g).unwrap();
        let v2 = stft(&f2, &g).unwrap();
        for i in 0..lhs.values().len() {
            assert!((lhs.values()[i] - (a * v1.values()[i] + v2.values()[i])).norm() < 1e-12);
        }
        let vg = stft(&f1, &g.scale(a)).unwrap();
        for i in 0..vg.values().len() {
            assert!((vg.values()[i] - a.conj() * v1.values()[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_zero_window_and_mismatch() {
        let g = grid(32, 4.0);
        let f = canonical_window(&g);
        let zero = SampledField::zeros(g, Domain::Space);
        assert!(matches!(stft(&f, &zero), Err(Error::ZeroWindow)));
        let other = canonical_window(&grid(32, 8.0));
        assert!(matches!(stft(&f, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn oversized_matrices_are_refused() {
        let g = GridSpec::new(2, 128, 16.0).unwrap();
        let f = canonical_window(&g);
        assert!(matches!(stft(&f, &f), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn identical_windows_give_unit_ratio() {
        let grid = grid(128, 16.0);
        let f = Builtin::random_bandlimited(8).sample(&grid).unwrap();
        let g = canonical_window(&grid);
        let r = window_equivalence_ratio(&f, &g, &g, ModParams::new(1.0, 1.0, 0.0).unwrap()).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert!(r.bound > 0.0);
    }
}
