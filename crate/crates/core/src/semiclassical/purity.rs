//! Auxiliary determinants of the stability matrix and the semiclassical purity.
//!
//! Row permutations: `(A D; C B)` takes the rows of `M` in the order
//! `(1, 4, 3, 2)` and `(A' D'; C' B')` in the order `(1, 3, 2, 4)`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::StabilityMatrix;
use crate::numerics::{small_inverse, ComplexMatrix};

/// Largest tolerated `|Im P_sc|` before a row is flagged.
pub const IMAG_RESIDUAL_LIMIT: f64 = 1e-6;
const FORMULA_AGREEMENT: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuxDeterminants {
    pub det_uu: Complex64,
    pub det_uv: Complex64,
    pub det_vu: Complex64,
    pub det_vv: Complex64,
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d_blk: Complex64,
    pub a_p: Complex64,
    pub b_p: Complex64,
    pub c_p: Complex64,
    pub d_p: Complex64,
    pub d: Complex64,
    pub d_prime: Complex64,
    pub d_dprime: Complex64,
    pub tcal: Complex64,
}

impl AuxDeterminants {
    /// `d - d' - d''`, equal to `det M`.
    pub fn det_m(&self) -> Complex64 {
        self.d - self.d_prime - self.d_dprime
    }

    /// `det M_uu det M_vv`.
    pub fn diag_product(&self) -> Complex64 {
        self.det_uu * self.det_vv
    }
}

fn det2(m: &ComplexMatrix, rows: [usize; 2], c0: usize) -> Complex64 {
    m[(rows[0], c0)] * m[(rows[1], c0 + 1)] - m[(rows[0], c0 + 1)] * m[(rows[1], c0)]
}

/// All 2x2 block determinants of `M` and its two row permutations, with the
/// endpoint factor `tcal` carried along.
pub fn aux_determinants(m: &StabilityMatrix, tcal: Complex64) -> AuxDeterminants {
    let mm = m.matrix();
    let (top, bottom) = ([0, 1], [2, 3]);
    let (p1_top, p1_bottom) = ([0, 3], [2, 1]);
    let (p2_top, p2_bottom) = ([0, 2], [1, 3]);
    let det_uu = det2(mm, top, 0);
    let det_uv = det2(mm, top, 2);
    let det_vu = det2(mm, bottom, 0);
    let det_vv = det2(mm, bottom, 2);
    let a = det2(mm, p1_top, 0);
    let d_blk = det2(mm, p1_top, 2);
    let c = det2(mm, p1_bottom, 0);
    let b = det2(mm, p1_bottom, 2);
    let a_p = det2(mm, p2_top, 0);
    let d_p = det2(mm, p2_top, 2);
    let c_p = det2(mm, p2_bottom, 0);
    let b_p = det2(mm, p2_bottom, 2);
    AuxDeterminants {
        det_uu,
        det_uv,
        det_vu,
        det_vv,
        a,
        b,
        c,
        d_blk,
        a_p,
        b_p,
        c_p,
        d_p,
        d: det_uu * det_vv + det_uv * det_vu,
        d_prime: a * b + c * d_blk,
        d_dprime: a_p * b_p + c_p * d_p,
        tcal,
    }
}

/// Semiclassical purity and the diagnostics produced along the way.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PuritySc {
    /// Real part of `[1 + 2 d''/T]^{-1/2}`.
    pub value: f64,
    /// Imaginary part discarded from `value`.
    pub imag_residual: f64,
    /// `T / sqrt((d - d')^2 - d''^2)` on the branch closest to `value`.
    pub ratio_form: Complex64,
    /// `|det M - T| / |T|`.
    pub det_residual: f64,
}

/// `[1 + 2 d''/T]^{-1/2}` on the principal branch, unchecked.
pub fn purity_sc_raw(m: &StabilityMatrix, tcal: Complex64) -> Complex64 {
    (1.0 + 2.0 * aux_determinants(m, tcal).d_dprime / tcal).powf(-0.5)
}

/// `[1 + 2 d''/T]^{-1/2}` on the principal branch.
///
/// Fails with `ValidityBreakdown` when `Re(1 + 2 d''/T) <= 0`, when the
/// discarded imaginary part exceeds [`IMAG_RESIDUAL_LIMIT`], or when the
/// equivalent form `T / sqrt((d - d')^2 - d''^2)` disagrees.
pub fn purity_sc(m: &StabilityMatrix, tcal: Complex64) -> Result<PuritySc> {
    let aux = aux_determinants(m, tcal);
    if tcal.norm() == 0.0 || !tcal.is_finite() {
        return Err(Error::ValidityBreakdown { reason: format!("endpoint factor T = {tcal}") });
    }
    let radicand = 1.0 + 2.0 * aux.d_dprime / tcal;
    if !(radicand.re > 0.0) {
        return Err(Error::ValidityBreakdown { reason: format!("Re(1 + 2d''/T) = {:e} <= 0", radicand.re) });
    }
    let p = radicand.powf(-0.5);
    if p.im.abs() > IMAG_RESIDUAL_LIMIT {
        return Err(Error::ValidityBreakdown { reason: format!("|Im P_sc| = {:e}", p.im.abs()) });
    }
    let disc = (aux.d - aux.d_prime).powi(2) - aux.d_dprime * aux.d_dprime;
    let root = disc.sqrt();
    let cand = tcal / root;
    let ratio_form = if (cand - p).norm() <= (-cand - p).norm() { cand } else { -cand };
    if (ratio_form - p).norm() > FORMULA_AGREEMENT * p.norm() {
        return Err(Error::ValidityBreakdown {
            reason: format!("purity forms disagree: {} vs {} (det M = {}, T = {})", p, ratio_form, aux.det_m(), tcal),
        });
    }
    Ok(PuritySc { value: p.re, imag_residual: p.im.abs(), ratio_form, det_residual: (aux.det_m() - tcal).norm() / tcal.norm() })
}

/// The Gaussian-integral coefficients `(a1, a2)` with
/// `X = M_vu M_uu^{-1}`, `Y = M_uv M_vv^{-1}`.
pub fn gaussian_a1a2(m: &StabilityMatrix) -> Result<(Complex64, Complex64)> {
    let x = &m.m_vu() * &small_inverse(&m.m_uu())?;
    let y = &m.m_uv() * &small_inverse(&m.m_vv())?;
    let ratio = m.m_vu().det() / m.m_uu().det() * m.m_uv().det() / m.m_vv().det();
    let a1 = 1.0 + ratio - x[(0, 0)] * y[(0, 0)] - x[(1, 1)] * y[(1, 1)];
    let a2 = x[(0, 1)] * y[(1, 0)] + x[(1, 0)] * y[(0, 1)];
    Ok((a1, a2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::c64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng) -> StabilityMatrix {
        let data: Vec<Complex64> = (0..16).map(|_| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        StabilityMatrix::from_slice(&data)
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn identity_matrix() {
        let aux = aux_determinants(&StabilityMatrix::identity(), c64(1.0, 0.0));
        assert_eq!((aux.d, aux.d_prime, aux.d_dprime), (c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)));
        let p = purity_sc(&StabilityMatrix::identity(), c64(1.0, 0.0)).unwrap();
        assert_eq!(p.value, 1.0);
        assert_eq!(gaussian_a1a2(&StabilityMatrix::identity()).unwrap(), (c64(1.0, 0.0), c64(0.0, 0.0)));
    }

    #[test]
    fn block_diagonal_matrix_is_unentangling() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let r = random_matrix(&mut rng);
        let mut m = r.matrix().clone();
        for i in 0..2 {
            for k in 2..4 {
                m[(i, k)] = c64(0.0, 0.0);
                m[(k, i)] = c64(0.0, 0.0);
            }
        }
        let m = StabilityMatrix::new(m).unwrap();
        let (a1, a2) = gaussian_a1a2(&m).unwrap();
        assert!((a1 - 1.0).norm() < 1e-14 && a2.norm() < 1e-14);
        let aux = aux_determinants(&m, m.det());
        assert_eq!(aux.d_dprime, c64(0.0, 0.0));
        assert_eq!(purity_sc(&m, m.det()).unwrap().value, 1.0);
    }

    #[test]
    fn determinant_decomposition_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = random_matrix(&mut rng);
            let aux = aux_determinants(&m, c64(1.0, 0.0));
            let det = m.matrix().det_lu();
            assert!((aux.det_m() - det).norm() <= 1e-10 * (1.0 + det.norm()));
        }
    }

    #[test]
    fn block_quotients_from_auxiliary_determinants() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let m = random_matrix(&mut rng);
            let aux = aux_determinants(&m, c64(1.0, 0.0));
            let y = &m.m_uv() * &m.m_vv().inverse().unwrap();
            let x = &m.m_vu() * &m.m_uu().inverse().unwrap();
            let y_expected = ComplexMatrix::from_rows(&[[aux.d_blk, -aux.d_p], [aux.b_p, aux.b]]).scale(1.0 / aux.det_vv);
            let x_expected = ComplexMatrix::from_rows(&[[aux.c, aux.a_p], [-aux.c_p, aux.a]]).scale(1.0 / aux.det_uu);
            let sx = 1.0 + x.max_abs();
            let sy = 1.0 + y.max_abs();
            assert!(y.max_abs_diff(&y_expected) < 1e-10 * sy);
            assert!(x.max_abs_diff(&x_expected) < 1e-10 * sx);
        }
    }

    #[test]
    fn gaussian_coefficients_reproduce_discriminant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let m = random_matrix(&mut rng);
            let aux = aux_determinants(&m, c64(1.0, 0.0));
            let (a1, a2) = gaussian_a1a2(&m).unwrap();
            let lhs = (aux.d - aux.d_prime).powi(2) - aux.d_dprime.powi(2);
            let rhs = aux.diag_product().powi(2) * (a1 * a1 - a2 * a2);
            assert!(rel(rhs, lhs) < 1e-8);
        }
    }

    #[test]
    fn singular_blocks_reported() {
        let mut m = ComplexMatrix::identity(4);
        m[(2, 2)] = c64(0.0, 0.0);
        let m = StabilityMatrix::new(m).unwrap();
        assert!(matches!(gaussian_a1a2(&m), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn breakdown_outside_validity_window() {
        // det M = -1 and d'' = 1, so 1 + 2d''/T = -1.
        let m = StabilityMatrix::new(ComplexMatrix::from_real_rows(&[
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 1.0, 1.0],
            [0.0, 1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0],
        ]))
        .unwrap();
        let aux = aux_determinants(&m, m.det());
        assert!((aux.d_dprime - 1.0).norm() < 1e-15 && (m.det() + 1.0).norm() < 1e-15);
        assert!(matches!(purity_sc(&m, m.det()), Err(Error::ValidityBreakdown { .. })));
    }

    proptest! {
        #[test]
        fn decomposition_holds_for_arbitrary_entries(entries in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 16)) {
            let data: Vec<Complex64> = entries.iter().map(|&(r, i)| c64(r, i)).collect();
            let m = StabilityMatrix::from_slice(&data);
            let aux = aux_determinants(&m, c64(1.0, 0.0));
            let det = m.matrix().det_lu();
            prop_assert!((aux.det_m() - det).norm() <= 1e-10 * (1.0 + det.norm() + m.matrix().max_abs().powi(4)));
        }
    }
}
