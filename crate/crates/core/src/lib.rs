//! Frequency-domain finite integration (FIT) solver with matrix-free operators.
//!
//! The crate discretizes Maxwell's equations on a structured staggered grid
//! pair, builds the discrete curl with interleaved `(x, y, z)` unknown
//! ordering, and solves the symmetrized curl-curl system
//!
//! ```text
//! (A - omega^2 I) e' = -j omega M_eps^{-1/2} j,     A = M_eps^{-1/2} C^T M_mu^{-1} C M_eps^{-1/2}
//! ```
//!
//! with preconditioned Krylov methods. `A` can be applied assembled, through
//! a five-stage shell pipeline, or as `Aᵀ𝒜` with the scaled half operator
//! `𝒜 = M_mu^{-1/2} C M_eps^{-1/2}`.

pub mod error;
pub mod grid;
pub mod krylov;
pub mod materials;
pub mod operator;
pub mod oracle;
pub mod parallel;
pub mod ports;
pub mod presets;
pub mod results;
pub mod scalar;
pub mod scene;
pub mod sweep;
pub mod topology;

pub use error::{FitError, Result};
pub use grid::{Axis, Grid};
pub use scalar::Scalar;

pub use num_complex::Complex64;

/// Vacuum permeability in H/m.
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Speed of light in vacuum in m/s.
pub const C0: f64 = 299_792_458.0;
/// Vacuum permittivity in F/m, derived from `MU0` and `C0` so that
/// `EPS0 * MU0 * C0^2 == 1` up to rounding.
pub const EPS0: f64 = 1.0 / (MU0 * C0 * C0);
/// Default reference impedance for scattering parameters.
pub const Z0_DEFAULT: f64 = 50.0;
