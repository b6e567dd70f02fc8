pub mod catalog;
pub mod error;
mod fft;
pub mod grid;
pub mod io;
pub mod norm;
pub mod plot;
pub mod propagator;
pub mod series;
pub mod solver;
pub mod stft;
pub mod verify;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/norms.md")]
    mod norms {}
    #[doc = include_str!("../../../book/src/propagators.md")]
    mod propagators {}
    #[doc = include_str!("../../../book/src/nonlinearities.md")]
    mod nonlinearities {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
