//! Hamilton's equations on the complexified phase space `(u, v)` and the
//! co-integrated stability matrix.
//!
//! The augmented state integrated by [`integrate_flow`] is
//! `[w (4), M (16, row-major), int I_S, int I_G]`, where `I_S` is the action
//! integrand and `I_G` the trace term of the Weyl-ordering correction. Both
//! quadratures therefore share the trajectory's error control.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{adaptive_rk, ComplexMatrix, IntegratorConfig, Sampling};
use crate::spin::{CoherentLabel, HamiltonianModel, PhasePoint, SpinSystem};

/// Chart singularity threshold on `|1 + u_k v_k|`.
pub const CHART_THRESHOLD: f64 = 1e-12;
/// Tolerance under which a drifting trajectory still counts as real.
pub const REALITY_TOLERANCE: f64 = 1e-8;

const AUGMENTED_LEN: usize = 22;
const S_SLOT: usize = 20;
const G_SLOT: usize = 21;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseSpaceState {
    pub u: [Complex64; 2],
    pub v: [Complex64; 2],
}

impl PhaseSpaceState {
    pub fn new(u: [Complex64; 2], v: [Complex64; 2]) -> Self {
        Self { u, v }
    }

    /// The real point `(s, s*)` at the centre of a coherent state.
    pub fn real(label: &CoherentLabel) -> Self {
        Self { u: [label.sx, label.sy], v: [label.sx.conj(), label.sy.conj()] }
    }

    pub fn from_array(w: &PhasePoint) -> Self {
        Self { u: [w[0], w[1]], v: [w[2], w[3]] }
    }

    pub fn to_array(&self) -> PhasePoint {
        [self.u[0], self.u[1], self.v[0], self.v[1]]
    }

    /// `max_k |v_k - conj(u_k)|`.
    pub fn reality_defect(&self) -> f64 {
        (0..2).map(|k| (self.v[k] - self.u[k].conj()).norm()).fold(0.0, f64::max)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.reality_defect() <= tol
    }

    /// `u_k v_k` for both subsystems.
    pub fn products(&self) -> [Complex64; 2] {
        [self.u[0] * self.v[0], self.u[1] * self.v[1]]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// 4x4 stability matrix ordered `(du_x, du_y, dv_x, dv_y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityMatrix {
    m: ComplexMatrix,
}

impl StabilityMatrix {
    pub fn identity() -> Self {
        Self { m: ComplexMatrix::identity(4) }
    }

    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if m.rows() != 4 || m.cols() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, found: m.rows() });
        }
        Ok(Self { m })
    }

    pub fn from_slice(data: &[Complex64]) -> Self {
        Self { m: ComplexMatrix::from_row_major(4, 4, data[..16].to_vec()) }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.m
    }

    pub fn m_uu(&self) -> ComplexMatrix {
        self.m.block(0, 0, 2, 2)
    }

    pub fn m_uv(&self) -> ComplexMatrix {
        self.m.block(0, 2, 2, 2)
    }

    pub fn m_vu(&self) -> ComplexMatrix {
        self.m.block(2, 0, 2, 2)
    }

    pub fn m_vv(&self) -> ComplexMatrix {
        self.m.block(2, 2, 2, 2)
    }

    pub fn det(&self) -> Complex64 {
        self.m.det()
    }

    pub fn compose(&self, earlier: &StabilityMatrix) -> StabilityMatrix {
        Self { m: &self.m * &earlier.m }
    }
}

/// Right-hand side of Hamilton's equations together with its Jacobian.
#[derive(Clone, Copy, Debug)]
pub struct FieldJet {
    pub rate: PhasePoint,
    pub jacobian: [[Complex64; 4]; 4],
    pub energy: Complex64,
}

fn check_spin(sys: &SpinSystem) -> Result<()> {
    if sys.two_j() == 0 {
        return Err(Error::validation("system.two_j", "classical flow needs two_j >= 1"));
    }
    Ok(())
}

fn chart_denominators(w: &PhasePoint) -> Result<[Complex64; 2]> {
    let den = [1.0 + w[0] * w[2], 1.0 + w[1] * w[3]];
    for (k, d) in den.iter().enumerate() {
        if d.norm() < CHART_THRESHOLD {
            return Err(Error::ChartSingularity { subsystem: if k == 0 { 'x' } else { 'y' }, modulus: d.norm() });
        }
    }
    Ok(den)
}

/// Field `w' = f(w)` and the exact Jacobian `df/dw`.
pub fn field_jet(sys: &SpinSystem, model: &HamiltonianModel, w: &PhasePoint) -> Result<FieldJet> {
    check_spin(sys)?;
    let den = chart_denominators(w)?;
    let jet = model.jet(w)?;
    let inv = 1.0 / Complex64::new(0.0, 2.0 * sys.hbar_j());
    let mut rate = [Complex64::new(0.0, 0.0); 4];
    let mut jac = [[Complex64::new(0.0, 0.0); 4]; 4];
    for k in 0..2 {
        let (u, v, d) = (w[k], w[k + 2], den[k]);
        let c = d * d * inv;
        // dc/du_k, dc/dv_k
        let dc_du = 2.0 * d * v * inv;
        let dc_dv = 2.0 * d * u * inv;
        rate[k] = c * jet.grad[k + 2];
        rate[k + 2] = -c * jet.grad[k];
        for l in 0..4 {
            jac[k][l] = c * jet.hess[k + 2][l];
            jac[k + 2][l] = -c * jet.hess[k][l];
        }
        jac[k][k] += dc_du * jet.grad[k + 2];
        jac[k][k + 2] += dc_dv * jet.grad[k + 2];
        jac[k + 2][k] -= dc_du * jet.grad[k];
        jac[k + 2][k + 2] -= dc_dv * jet.grad[k];
    }
    Ok(FieldJet { rate, jacobian: jac, energy: jet.value })
}

/// `(u', v')` per Hamilton's equations.
pub fn hamiltonian_field(sys: &SpinSystem, model: &HamiltonianModel, state: &PhaseSpaceState) -> Result<PhaseSpaceState> {
    let fj = field_jet(sys, model, &state.to_array())?;
    Ok(PhaseSpaceState::from_array(&fj.rate))
}

/// Exact 4x4 Jacobian of [`hamiltonian_field`].
pub fn jacobian(sys: &SpinSystem, model: &HamiltonianModel, state: &PhaseSpaceState) -> Result<ComplexMatrix> {
    let fj = field_jet(sys, model, &state.to_array())?;
    Ok(ComplexMatrix::from_rows(&fj.jacobian))
}

/// Action integrand `j sum_k (u_k v_k' - v_k u_k')/(1 + u_k v_k) - (i/hbar) H~`.
pub fn action_integrand(sys: &SpinSystem, w: &PhasePoint, fj: &FieldJet) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..2 {
        let (u, v) = (w[k], w[k + 2]);
        acc += (u * fj.rate[k + 2] - v * fj.rate[k]) / (1.0 + u * v);
    }
    acc * sys.j() - Complex64::new(0.0, 1.0 / sys.hbar()) * fj.energy
}

/// `sum_k (du_k'/du_k - dv_k'/dv_k)`.
pub fn trace_integrand(fj: &FieldJet) -> Complex64 {
    let j = &fj.jacobian;
    j[0][0] + j[1][1] - j[2][2] - j[3][3]
}

/// Sampled solution of the augmented flow.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub start_label: CoherentLabel,
    pub times: Vec<f64>,
    pub samples: Vec<PhaseSpaceState>,
    pub energy: Vec<Complex64>,
    pub stability: Vec<StabilityMatrix>,
    /// Running `int_0^t I_S dt`.
    pub action_quadrature: Vec<Complex64>,
    /// Running `int_0^t I_G dt`.
    pub trace_quadrature: Vec<Complex64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial(&self) -> &PhaseSpaceState {
        &self.samples[0]
    }

    pub fn final_state(&self) -> &PhaseSpaceState {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn final_stability(&self) -> &StabilityMatrix {
        self.stability.last().expect("trajectory has at least one sample")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    /// `max_t |H~(t) - H~(0)|`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        self.energy.iter().map(|e| (e - e0).norm()).fold(0.0, f64::max)
    }

    /// `max_t max_k |v_k(t) - conj(u_k(t))|`.
    pub fn reality_drift(&self) -> f64 {
        self.samples.iter().map(PhaseSpaceState::reality_defect).fold(0.0, f64::max)
    }

    /// The factor `prod_k (1 + u_k(t) v_k(t))^2 / (1 + u_k(0) v_k(0))^2` at sample `i`.
    pub fn tcal(&self, i: usize) -> Complex64 {
        tcal(self.initial(), &self.samples[i])
    }
}

/// `prod_k (1 + u''_k v''_k)^2 / (1 + u'_k v'_k)^2`.
pub fn tcal(start: &PhaseSpaceState, end: &PhaseSpaceState) -> Complex64 {
    let a = start.products();
    let b = end.products();
    (0..2).map(|k| ((1.0 + b[k]) / (1.0 + a[k])).powi(2)).product()
}

fn augmented_initial(start: &PhaseSpaceState) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); AUGMENTED_LEN];
    y[..4].copy_from_slice(&start.to_array());
    for i in 0..4 {
        y[4 + 5 * i] = Complex64::new(1.0, 0.0);
    }
    y
}

fn augmented_field(sys: &SpinSystem, model: &HamiltonianModel, y: &[Complex64], dy: &mut [Complex64]) -> Result<()> {
    let w: PhasePoint = [y[0], y[1], y[2], y[3]];
    let fj = field_jet(sys, model, &w)?;
    dy[..4].copy_from_slice(&fj.rate);
    let m = &y[4..20];
    for r in 0..4 {
        for c in 0..4 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..4 {
                acc += fj.jacobian[r][k] * m[4 * k + c];
            }
            dy[4 + 4 * r + c] = acc;
        }
    }
    dy[S_SLOT] = action_integrand(sys, &w, &fj);
    dy[G_SLOT] = trace_integrand(&fj);
    Ok(())
}

/// Integrates trajectory, stability matrix and action quadratures from `start`
/// at `t = 0`. With `times = None` every accepted step up to `t_end` is kept.
pub fn integrate_flow(
    sys: &SpinSystem,
    model: &HamiltonianModel,
    start: &PhaseSpaceState,
    start_label: CoherentLabel,
    t_end: f64,
    times: Option<&[f64]>,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_spin(sys)?;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::validation("time.t_max", "must be finite and >= 0"));
    }
    if !start.is_finite() {
        return Err(Error::validation("initial_state", "must be finite"));
    }
    chart_denominators(&start.to_array())?;
    let y0 = augmented_initial(start);
    let sampling = match times {
        Some(ts) => Sampling::At(ts),
        None => Sampling::Steps,
    };
    let sol = adaptive_rk(|_, y, dy| augmented_field(sys, model, y, dy), &y0, (0.0, t_end), cfg, sampling)?;

    let n = sol.times.len();
    let mut traj = Trajectory {
        start_label,
        times: sol.times,
        samples: Vec::with_capacity(n),
        energy: Vec::with_capacity(n),
        stability: Vec::with_capacity(n),
        action_quadrature: Vec::with_capacity(n),
        trace_quadrature: Vec::with_capacity(n),
        accepted_steps: sol.accepted_steps,
        rejected_steps: sol.rejected_steps,
    };
    for y in &sol.states {
        let w: PhasePoint = [y[0], y[1], y[2], y[3]];
        traj.samples.push(PhaseSpaceState::from_array(&w));
        traj.energy.push(model.htilde(&w)?);
        traj.stability.push(StabilityMatrix::from_slice(&y[4..20]));
        traj.action_quadrature.push(y[S_SLOT]);
        traj.trace_quadrature.push(y[G_SLOT]);
    }
    Ok(traj)
}

/// Trajectory from `(s0, s0*)` over `[0, t]`, sampled at every accepted step.
pub fn integrate_trajectory(
    sys: &SpinSystem,
    model: &HamiltonianModel,
    s0: &CoherentLabel,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    integrate_flow(sys, model, &PhaseSpaceState::real(s0), *s0, t, None, cfg)
}

/// Trajectory from `(s0, s0*)` sampled exactly at `times` (ascending, `>= 0`).
pub fn integrate_trajectory_at(
    sys: &SpinSystem,
    model: &HamiltonianModel,
    s0: &CoherentLabel,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let t_end = times.last().copied().unwrap_or(0.0);
    if times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::validation("times", "must be >= 0"));
    }
    integrate_flow(sys, model, &PhaseSpaceState::real(s0), *s0, t_end, Some(times), cfg)
}

/// Stability matrices along the flow started at `start`, sampled at `times`.
pub fn integrate_stability(
    sys: &SpinSystem,
    model: &HamiltonianModel,
    start: &PhaseSpaceState,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<StabilityMatrix>> {
    let label = CoherentLabel { sx: start.u[0], sy: start.u[1] };
    let t_end = times.last().copied().unwrap_or(0.0);
    Ok(integrate_flow(sys, model, start, label, t_end, Some(times), cfg)?.stability)
}
