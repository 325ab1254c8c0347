//! Exact evolution on the joint space and reduced-state entanglement measures.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{hermitian_eig, ComplexMatrix, HermitianEigen};
use crate::spin::{product_coherent, CoherentLabel, HamiltonianModel, SpinSystem};

/// Tolerance on the density-matrix invariants.
pub const DENSITY_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    X,
    Y,
}

/// A reduced (or full) density matrix; Hermitian, unit trace, positive
/// semidefinite up to [`DENSITY_TOLERANCE`].
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    entries: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates the invariants, including the spectrum.
    pub fn new(entries: ComplexMatrix) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch { expected: entries.rows(), found: entries.cols() });
        }
        let dev = entries.hermitian_deviation();
        if dev > DENSITY_TOLERANCE {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let tr = entries.trace();
        if (tr - 1.0).norm() > DENSITY_TOLERANCE {
            return Err(Error::validation("density.trace", format!("trace {tr} differs from 1")));
        }
        let eig = hermitian_eig(&entries)?;
        if eig.values.first().is_some_and(|&v| v < -DENSITY_TOLERANCE) {
            return Err(Error::validation("density.spectrum", format!("negative eigenvalue {}", eig.values[0])));
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.rows()
    }

    pub fn entries(&self) -> &ComplexMatrix {
        &self.entries
    }

    /// `Tr rho^2` in the Frobenius form `sum |rho_mn|^2`.
    pub fn purity(&self) -> f64 {
        self.entries.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn linear_entropy(&self) -> f64 {
        1.0 - self.purity()
    }
}

pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.purity()
}

pub fn linear_entropy(rho: &DensityMatrix) -> f64 {
    rho.linear_entropy()
}

fn reduced_entries(psi: &[Complex64], subsystem: Subsystem, dim: usize) -> Result<ComplexMatrix> {
    if psi.len() != dim * dim {
        return Err(Error::DimensionMismatch { expected: dim * dim, found: psi.len() });
    }
    let mut rho = ComplexMatrix::zeros(dim, dim);
    for a in 0..dim {
        for b in a..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..dim {
                acc += match subsystem {
                    Subsystem::X => psi[a * dim + k] * psi[b * dim + k].conj(),
                    Subsystem::Y => psi[k * dim + a] * psi[k * dim + b].conj(),
                };
            }
            rho[(a, b)] = acc;
            rho[(b, a)] = acc.conj();
        }
    }
    Ok(rho)
}

/// Partial trace of `|psi><psi|` over the complementary factor.
pub fn reduced_density(psi: &[Complex64], subsystem: Subsystem, dim: usize) -> Result<DensityMatrix> {
    DensityMatrix::new(reduced_entries(psi, subsystem, dim)?)
}

/// Purity of a reduced state without the spectral validation.
pub fn reduced_purity(psi: &[Complex64], subsystem: Subsystem, dim: usize) -> Result<f64> {
    Ok(reduced_entries(psi, subsystem, dim)?.as_slice().iter().map(|z| z.norm_sqr()).sum())
}

/// Cached spectral decomposition of a Hamiltonian.
#[derive(Clone, Debug)]
pub struct SpectralPropagator {
    eig: HermitianEigen,
    hbar: f64,
}

impl SpectralPropagator {
    pub fn new(h: &ComplexMatrix, hbar: f64) -> Result<Self> {
        Ok(Self { eig: hermitian_eig(h)?, hbar })
    }

    /// `exp(-i H t / hbar) psi`.
    pub fn evolve(&self, psi: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
        let v = &self.eig.vectors;
        let n = v.rows();
        if psi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: psi.len() });
        }
        let mut coeff = vec![Complex64::new(0.0, 0.0); n];
        for (i, &p) in psi.iter().enumerate() {
            if p == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (k, c) in v.row(i).iter().enumerate() {
                coeff[k] += c.conj() * p;
            }
        }
        for (k, c) in coeff.iter_mut().enumerate() {
            *c *= Complex64::from_polar(1.0, -self.eig.values[k] * t / self.hbar);
        }
        Ok(v.matvec(&coeff))
    }
}

/// `V exp(-i lambda t / hbar) V^dagger psi0`.
pub fn evolve_state(h: &ComplexMatrix, psi0: &[Complex64], t: f64, hbar: f64) -> Result<Vec<Complex64>> {
    SpectralPropagator::new(h, hbar)?.evolve(psi0, t)
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.first().is_some_and(|&t| t < 0.0) || times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::validation("times", "must be ascending and start at t >= 0"));
    }
    Ok(())
}

/// `(P(rho_x), P(rho_y))` at each time for the initial product coherent state.
pub fn exact_purity_pairs(
    sys: &SpinSystem,
    model: &HamiltonianModel,
    s0: &CoherentLabel,
    times: &[f64],
) -> Result<Vec<(f64, f64)>> {
    check_times(times)?;
    let prop = SpectralPropagator::new(&model.operator, sys.hbar())?;
    let psi0 = product_coherent(sys, s0)?;
    let d = sys.dim();
    times
        .par_iter()
        .map(|&t| {
            let psi = prop.evolve(&psi0, t)?;
            Ok((reduced_purity(&psi, Subsystem::X, d)?, reduced_purity(&psi, Subsystem::Y, d)?))
        })
        .collect()
}

/// `P(rho_x(t))` at each time.
pub fn exact_purity_curve(
    sys: &SpinSystem,
    model: &HamiltonianModel,
    s0: &CoherentLabel,
    times: &[f64],
) -> Result<Vec<f64>> {
    Ok(exact_purity_pairs(sys, model, s0, times)?.into_iter().map(|p| p.0).collect())
}

/// `<s_eta| exp(-i H t / hbar) |s0>` on the joint space.
pub fn exact_propagator_overlap(
    sys: &SpinSystem,
    h: &ComplexMatrix,
    s_eta: &CoherentLabel,
    s0: &CoherentLabel,
    t: f64,
) -> Result<Complex64> {
    let psi = evolve_state(h, &product_coherent(sys, s0)?, t, sys.hbar())?;
    let bra = product_coherent(sys, s_eta)?;
    Ok(bra.iter().zip(&psi).map(|(a, b)| a.conj() * b).sum())
}

/// Exact and semiclassical purity on a common time grid, with residuals.
///
/// Rows where the semiclassical formula is unavailable carry `NaN` in the
/// semiclassical columns and a reason in `flags`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PurityCurve {
    pub times: Vec<f64>,
    pub p_exact: Vec<f64>,
    pub p_sc: Vec<f64>,
    pub slin_exact: Vec<f64>,
    pub slin_sc: Vec<f64>,
    pub residual_det_m: Vec<f64>,
    pub residual_energy: Vec<f64>,
    pub residual_im_psc: Vec<f64>,
    pub flags: Vec<Option<String>>,
}

impl PurityCurve {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn flagged_rows(&self) -> usize {
        self.flags.iter().filter(|f| f.is_some()).count()
    }
}
