//! Purity in the canonical (oscillator) limit and the contraction `s = z/sqrt(2j)`.

use num_complex::Complex64;
use serde::Serialize;

use super::purity::{aux_determinants, purity_sc, AuxDeterminants};
use crate::error::{Error, Result};
use crate::flow::{integrate_stability, PhaseSpaceState, StabilityMatrix};
use crate::models::{phase_coupling_model, PhaseCouplingParams};
use crate::numerics::{small_inverse, IntegratorConfig};
use crate::spin::{coherent_overlap, CoherentLabel, SpinSystem};

const BLOCK_IDENTITY_TOLERANCE: f64 = 1e-8;
const RADICAND_IMAG_LIMIT: f64 = 1e-8;

/// Block determinants of a stability matrix, checked against the block
/// quotient identity on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalPurityInputs {
    pub matrix: StabilityMatrix,
    pub aux: AuxDeterminants,
}

impl CanonicalPurityInputs {
    /// Fails with `SingularMatrix` if `M_uu` or `M_vv` is singular and with
    /// `ValidityBreakdown` if the block quotients disagree with the
    /// auxiliary determinants beyond `1e-8` relative.
    pub fn from_stability(m: &StabilityMatrix) -> Result<Self> {
        let aux = aux_determinants(m, m.det());
        let y = &m.m_uv() * &small_inverse(&m.m_vv())?;
        let x = &m.m_vu() * &small_inverse(&m.m_uu())?;
        let y_ref = [[aux.d_blk, -aux.d_p], [aux.b_p, aux.b]].map(|r| r.map(|z| z / aux.det_vv));
        let x_ref = [[aux.c, aux.a_p], [-aux.c_p, aux.a]].map(|r| r.map(|z| z / aux.det_uu));
        let scale = x.max_abs().max(y.max_abs()).max(1.0);
        for r in 0..2 {
            for c in 0..2 {
                let err = (y[(r, c)] - y_ref[r][c]).norm().max((x[(r, c)] - x_ref[r][c]).norm());
                if err > BLOCK_IDENTITY_TOLERANCE * scale {
                    return Err(Error::ValidityBreakdown { reason: format!("block identity violated by {err:e}") });
                }
            }
        }
        Ok(CanonicalPurityInputs { matrix: m.clone(), aux })
    }
}

/// `det M_uu det M_vv / sqrt(E)`.
///
/// Fails with `NegativeRadicand` when `Re E <= 0` or `E` carries an
/// imaginary part beyond `1e-8` relative.
pub fn canonical_purity(inputs: &CanonicalPurityInputs) -> Result<f64> {
    let q = &inputs.aux;
    let delta = q.diag_product();
    let ab_p = q.a_p * q.b_p;
    let e1 = -4.0 * (delta * ab_p).powi(2);
    let e2 = q.a_p * q.a_p * q.b * q.d_blk - ab_p * ab_p + q.b_p * q.b_p * q.a * q.c;
    let inner = (delta - q.a * q.b) * (delta - q.c * q.d_blk) - e2;
    let e = e1 + inner * inner;
    if !(e.re > 0.0) || e.im.abs() > RADICAND_IMAG_LIMIT * e.norm() {
        return Err(Error::NegativeRadicand { value: format!("{e}") });
    }
    let p = delta / e.sqrt();
    if p.im.abs() > RADICAND_IMAG_LIMIT * p.norm() {
        return Err(Error::NegativeRadicand { value: format!("{e} (purity {p})") });
    }
    Ok(p.re)
}

/// One `two_j` entry of a [`ContractionReport`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContractionRow {
    pub two_j: u32,
    /// `|<s_eta|s_mu> - <z_eta|z_mu>|` for both subsystems together.
    pub overlap_error: f64,
    pub purity_sc: f64,
    /// `1 - 2 |z_x|^2 |z_y|^2 (lambda T)^2`.
    pub purity_limit: f64,
    pub purity_error: f64,
    pub canonical_purity: f64,
    /// `|canonical_purity - purity_sc|`.
    pub canonical_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionReport {
    pub rows: Vec<ContractionRow>,
    /// Convergence orders in `1/j` from a log-log least-squares fit over all rows.
    pub overlap_order: f64,
    pub purity_order: f64,
}

/// `<z_eta|z_mu>` for oscillator coherent states `exp(z a^+ - |z|^2/2)|0>`.
fn canonical_overlap(z_eta: Complex64, z_mu: Complex64) -> Complex64 {
    (z_eta.conj() * z_mu - 0.5 * (z_eta.norm_sqr() + z_mu.norm_sqr())).exp()
}

/// Least-squares slope of `ln(error)` against `ln(two_j)`, negated.
fn fitted_order(two_js: &[u32], errors: &[f64]) -> f64 {
    let n = two_js.len() as f64;
    let xs: Vec<f64> = two_js.iter().map(|&k| (k as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    -sxy / sxx
}

/// Phase coupling with `s0 = z0/sqrt(2j)` over a growing sequence of `two_j`
/// at fixed `lambda` and `t`. The spin purity comes from the integrated
/// stability matrix; the overlap check uses `z_eta = 1.5 e^{i pi/5} z0`.
pub fn contraction_checks(two_js: &[u32], z0: (Complex64, Complex64), lambda: f64, t: f64, cfg: &IntegratorConfig) -> Result<ContractionReport> {
    if two_js.len() < 2 || two_js.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation("two_js", "need at least two strictly increasing values"));
    }
    let z_eta = (Complex64::from_polar(1.5, std::f64::consts::PI / 5.0) * z0.0, Complex64::from_polar(1.5, std::f64::consts::PI / 5.0) * z0.1);
    let limit = 1.0 - 2.0 * z0.0.norm_sqr() * z0.1.norm_sqr() * (lambda * t).powi(2);
    let mut rows = Vec::with_capacity(two_js.len());
    for &two_j in two_js {
        let sys = SpinSystem::new(two_j, 1.0)?;
        let scale = 1.0 / (2.0 * sys.j()).sqrt();
        let s0 = CoherentLabel::new(z0.0 * scale, z0.1 * scale)?;
        let overlap = coherent_overlap(&sys, z_eta.0 * scale, s0.sx) * coherent_overlap(&sys, z_eta.1 * scale, s0.sy);
        let overlap_error = (overlap - canonical_overlap(z_eta.0, z0.0) * canonical_overlap(z_eta.1, z0.1)).norm();

        let params = PhaseCouplingParams::new(sys, lambda)?;
        let model = phase_coupling_model(&params);
        let start = PhaseSpaceState::real(&s0);
        let ms = integrate_stability(&sys, &model, &start, &[t], cfg)?;
        let m = ms.last().expect("one sample requested");
        let p = purity_sc(m, m.det())?;
        let can = canonical_purity(&CanonicalPurityInputs::from_stability(m)?)?;
        rows.push(ContractionRow {
            two_j,
            overlap_error,
            purity_sc: p.value,
            purity_limit: limit,
            purity_error: (p.value - limit).abs(),
            canonical_purity: can,
            canonical_gap: (can - p.value).abs(),
        });
    }
    let overlap_errors: Vec<f64> = rows.iter().map(|r| r.overlap_error).collect();
    let purity_errors: Vec<f64> = rows.iter().map(|r| r.purity_error).collect();
    Ok(ContractionReport { overlap_order: fitted_order(two_js, &overlap_errors), purity_order: fitted_order(two_js, &purity_errors), rows })
}
