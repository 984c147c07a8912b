#![allow(clippy::needless_range_loop)]

//! perturb2d: a 2D boundary-integral engine for the steady-state voltage
//! perturbation caused by small conductivity inclusions.
//!
//! The crate computes, for a disk background domain Ω with a small inclusion
//! D = z + εB of conductivity k:
//!
//! * layer potentials and Nyström matrices of the boundary operators K, K*
//!   on smooth curves ([`layer_potentials`], [`geometry`]);
//! * resolvent solves (λI − K*)φ = f and generalized polarization tensors
//!   M_ij of the pair (B, k) ([`transmission`]);
//! * the disk's Neumann function, Poisson kernel, and background potentials
//!   with closed-form z-derivatives ([`domain_functions`]);
//! * high-order asymptotic expansions of the boundary data perturbation,
//!   with the correction ladder that rewrites them in terms of the
//!   background field alone ([`asymptotics`]);
//! * an independent full-accuracy transmission solver used as ground truth,
//!   plus a closed-form concentric-annulus reference ([`forward_oracle`]).
//!
//! The `perturb2d` binary exposes the `gpt`, `forward`, `expand` and `study`
//! subcommands over a TOML configuration; see the book under `book/` (its
//! code snippets compile and run as doc-tests via the [`book`] module).

pub mod asymptotics;
pub mod cli;
pub mod config;
pub mod domain_functions;
pub mod error;
pub mod forward_oracle;
pub mod fourier;
pub mod geometry;
pub mod layer_potentials;
pub mod multiindex;
pub mod transmission;

pub use error::{Error, Result};

/// The guide under `book/`, compiled chapter by chapter so that every code
/// snippet in it runs as a doc-test and cannot drift from the library.
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/curves-and-quadrature.md")]
    pub mod curves_and_quadrature {}
    #[doc = include_str!("../../../book/src/layer-potentials.md")]
    pub mod layer_potentials {}
    #[doc = include_str!("../../../book/src/polarization-tensors.md")]
    pub mod polarization_tensors {}
    #[doc = include_str!("../../../book/src/domain-functions.md")]
    pub mod domain_functions {}
    #[doc = include_str!("../../../book/src/forward-solver.md")]
    pub mod forward_solver {}
    #[doc = include_str!("../../../book/src/expansions.md")]
    pub mod expansions {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
