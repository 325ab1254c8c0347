//! Self-contained numerical toolkit: dense complex matrices, a Hermitian
//! eigen-solver, an adaptive Runge-Kutta integrator and finite-difference
//! checks.

mod diff;
mod eigen;
mod matrix;
mod ode;

pub use diff::{complex_partial, gradient_mismatch};
pub use eigen::{hermitian_eig, HermitianEigen, HERMITIAN_TOLERANCE};
pub use matrix::{kron, kron_vec, small_inverse, ComplexMatrix, DEGENERACY_THRESHOLD};
pub use ode::{adaptive_rk, IntegratorConfig, OdeSolution, Sampling};

pub use num_complex::Complex64;

/// Shorthand for `Complex64::new`.
#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}
