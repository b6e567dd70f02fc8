use std::f64::consts::PI;

use proptest::prelude::*;

use modspace::catalog::Builtin;
use modspace::grid::{convolve, transform, GridSpec};
use modspace::norm::{mod_norm, ModParams};
use modspace::verify::check_approx_identity;

fn grid() -> GridSpec {
    GridSpec::new(1, 512, 32.0).unwrap()
}

/// `‖e^{-π(x²+w²)/2}/√2‖_{L^{p,q}}` written out per factor:
/// `‖e^{-πx²/2}‖_p = (2/p)^{1/(2p)}`, and 1 at `p = ∞`.
fn gaussian_norm(p: f64, q: f64) -> f64 {
    let factor = |r: f64| if r.is_infinite() { 1.0 } else { (2.0 / r).powf(1.0 / (2.0 * r)) };
    factor(p) * factor(q) / 2f64.sqrt()
}

#[test]
fn gaussian_closed_forms() {
    let g = Builtin::gaussian().sample(&grid()).unwrap();
    for (p, q) in [(1.0, 1.0), (2.0, 2.0), (1.0, 2.0), (f64::INFINITY, 1.0), (2.0, f64::INFINITY), (3.0, 1.5)] {
        let value = mod_norm(&g, ModParams::new(p, q, 0.0).unwrap()).unwrap();
        let exact = gaussian_norm(p, q);
        assert!((value - exact).abs() <= 1e-9 * exact, "p={p} q={q}: {value} vs {exact}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gaussian_closed_form_random_exponents(p in 1.0f64..6.0, q in 1.0f64..6.0) {
        let g = Builtin::gaussian().sample(&GridSpec::new(1, 256, 16.0).unwrap()).unwrap();
        let value = mod_norm(&g, ModParams::new(p, q, 0.0).unwrap()).unwrap();
        prop_assert!((value - gaussian_norm(p, q)).abs() <= 1e-8);
    }

    #[test]
    fn homogeneous_of_degree_one(scale in -5.0f64..5.0, seed in 0u64..50) {
        let params = ModParams::new(1.0, 2.0, 0.5).unwrap();
        let f = Builtin::random_bandlimited(seed).sample(&GridSpec::new(1, 128, 16.0).unwrap()).unwrap();
        let base = mod_norm(&f, params).unwrap();
        let scaled = mod_norm(&f.scale(num_complex::Complex64::new(scale, 0.0)), params).unwrap();
        prop_assert!((scaled - scale.abs() * base).abs() <= 1e-12 * base.max(1.0) * scale.abs().max(1.0));
    }
}

#[test]
fn weight_raises_the_norm() {
    let f = Builtin::random_bandlimited(4).sample(&grid()).unwrap();
    let mut last = 0.0;
    for s in [0.0, 0.5, 1.0, 2.0] {
        let value = mod_norm(&f, ModParams::new(1.0, 1.0, s).unwrap()).unwrap();
        assert!(value > last);
        last = value;
    }
}

#[test]
fn transformed_gaussian_keeps_its_norm() {
    let g = Builtin::gaussian().sample(&grid()).unwrap();
    let gh = transform(&g).unwrap().as_spatial();
    let params = ModParams::new(1.0, 1.0, 0.0).unwrap();
    assert!((mod_norm(&gh, params).unwrap() - 2f64.sqrt()).abs() < 1e-9);
}

#[test]
fn gaussian_convolution_closed_form() {
    // e^{-πx²} * r⁻¹e^{-π(x/r)²} = A^{-1/2} e^{-πx²/A}, A = 1 + r².
    let grid = grid();
    let g = Builtin::gaussian().sample(&grid).unwrap();
    for r in [1.0, 0.5, 0.25] {
        let phi = Builtin::gaussian_width(r).sample(&grid).unwrap();
        let a = 1.0 + r * r;
        let conv = convolve(&g, &phi).unwrap();
        let mut err: f64 = 0.0;
        for k in 0..grid.len() {
            let x = grid.node(k);
            err = err.max((conv.values()[k].re - (-PI * x * x / a).exp() / a.sqrt()).abs());
        }
        assert!(err < 1e-12, "r={r}: {err}");
    }
}

#[test]
fn approx_identity_gaussian_matches_closed_form() {
    // ‖h‖_{M^{2,2}} = ‖g‖₂‖h‖₂ with h = a e^{-πx²/A} − e^{-πx²}, A = 1 + r², a = A^{-1/2}.
    let rs = [1.0, 0.5, 0.25, 0.125];
    let params = ModParams::new(2.0, 2.0, 0.0).unwrap();
    let report = check_approx_identity(&Builtin::gaussian(), &grid(), &rs, params, 0.1).unwrap();
    // At r = 2h the sampled kernel aliases at e^{-4π}; the 2N errors are clean.
    let coarse = report.measurements["error"].as_array().unwrap();
    let fine = report.measurements["refined_error"].as_array().unwrap();
    for (i, &r) in rs.iter().enumerate() {
        let big_a = 1.0 + r * r;
        let a = big_a.powf(-0.5);
        let h2 = a * a * (big_a / 2.0).sqrt() - 2.0 * a / (1.0 / big_a + 1.0).sqrt() + 0.5f64.sqrt();
        let exact = 2f64.powf(-0.25) * h2.sqrt();
        let refined = fine[i].as_f64().unwrap();
        assert!((refined - exact).abs() <= 1e-6, "r={r}: {refined} vs {exact}");
        if r >= 0.25 {
            assert!((coarse[i].as_f64().unwrap() - exact).abs() <= 1e-6, "r={r} at N");
        }
    }
    assert!(report.pass);
}

#[test]
fn approx_identity_plane_wave_is_a_multiplier() {
    // φ_r * e^{2πimx} = e^{-π r² m²} e^{2πimx}.
    let grid = grid();
    let rs = [1.0, 0.5, 0.25];
    let params = ModParams::new(f64::INFINITY, 1.0, 0.0).unwrap();
    let pw = Builtin::plane_wave(1);
    let norm = mod_norm(&pw.sample(&grid).unwrap(), params).unwrap();
    let report = check_approx_identity(&pw, &grid, &rs, params, 0.5).unwrap();
    for (&r, e) in rs.iter().zip(report.measurements["error"].as_array().unwrap()) {
        let exact = (1.0 - (-PI * r * r).exp()) * norm;
        assert!((e.as_f64().unwrap() - exact).abs() <= 1e-9 * norm, "r={r}");
    }
}
