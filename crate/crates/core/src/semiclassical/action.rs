//! Complex action, Weyl correction, normalisation and prefactor of the
//! coherent-state propagator along the real critical trajectory.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flow::{integrate_trajectory, Trajectory};
use crate::numerics::IntegratorConfig;
use crate::spin::{CoherentLabel, HamiltonianModel, SpinSystem};

/// Focal-point threshold on `|det M_vv|` (forward) or `|det M_uu|` (backward).
pub const CAUSTIC_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn xi(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// Exponent pieces of the propagator at one sample of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionBundle {
    /// The complex action itself.
    pub s_action: Complex64,
    /// The Weyl-ordering correction.
    pub g_corr: Complex64,
    /// `j sum_k ln[(1 + u'_k v'_k)(1 + u''_k v''_k)]`.
    pub lambda_tilde: Complex64,
    /// `j sum_k ln[(1 + |s_eta k|^2)(1 + |s_mu k|^2)]`.
    pub lambda_norm: f64,
    pub direction: Direction,
    pub hbar: f64,
}

impl ActionBundle {
    /// `(i/hbar) S`.
    pub fn scaled_action(&self) -> Complex64 {
        Complex64::new(0.0, 1.0 / self.hbar) * self.s_action
    }

    /// `(i/hbar) G`.
    pub fn scaled_correction(&self) -> Complex64 {
        Complex64::new(0.0, 1.0 / self.hbar) * self.g_corr
    }

    /// `(i/hbar)(S + G) - Lambda`, the log of the propagator without prefactor.
    pub fn exponent(&self) -> Complex64 {
        self.scaled_action() + self.scaled_correction() - self.lambda_norm
    }
}

/// Principal `ln(1 + u_k v_k)` along the samples, failing if the argument
/// crosses the branch cut between consecutive samples.
fn log_chart(traj: &Trajectory, upto: usize, k: usize) -> Result<(Complex64, Complex64)> {
    let mut prev_arg: Option<f64> = None;
    for i in 0..=upto {
        let z = 1.0 + traj.samples[i].products()[k];
        let arg = z.arg();
        if let Some(p) = prev_arg {
            if (arg - p).abs() > PI {
                return Err(Error::LogBranch { t: traj.times[i] });
            }
        }
        if z.re <= 0.0 && z.im == 0.0 {
            return Err(Error::LogBranch { t: traj.times[i] });
        }
        prev_arg = Some(arg);
    }
    let first = (1.0 + traj.samples[0].products()[k]).ln();
    let last = (1.0 + traj.samples[upto].products()[k]).ln();
    Ok((first, last))
}

/// Action, correction and normalisation at sample `index` of `traj`, with the
/// diagonal labels `s_mu = s0` and `s_eta = conj(v(T))`.
pub fn action_integrals(sys: &SpinSystem, traj: &Trajectory, index: usize, direction: Direction) -> Result<ActionBundle> {
    if index >= traj.len() {
        return Err(Error::DimensionMismatch { expected: traj.len(), found: index + 1 });
    }
    let j = sys.j();
    let xi = direction.xi();
    let mut lambda_tilde = Complex64::new(0.0, 0.0);
    for k in 0..2 {
        let (first, last) = log_chart(traj, index, k)?;
        lambda_tilde += j * (first + last);
    }
    let end = &traj.samples[index];
    let start = traj.initial();
    let mut lambda_norm = 0.0;
    for k in 0..2 {
        let eta = end.v[k].conj();
        let mu = start.u[k];
        lambda_norm += j * ((1.0 + eta.norm_sqr()) * (1.0 + mu.norm_sqr())).ln();
    }
    let hbar = sys.hbar();
    let minus_i_hbar = Complex64::new(0.0, -hbar);
    let scaled_s = xi * traj.action_quadrature[index] + lambda_tilde;
    let scaled_g = -0.25 * xi * traj.trace_quadrature[index];
    Ok(ActionBundle {
        s_action: minus_i_hbar * scaled_s,
        g_corr: minus_i_hbar * scaled_g,
        lambda_tilde,
        lambda_norm,
        direction,
        hbar,
    })
}

/// Prefactor `P` and its continuously tracked square root.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prefactor {
    pub value: Complex64,
    pub sqrt: Complex64,
    /// Net number of turns of `arg P` accumulated along the trajectory.
    pub turns: i64,
}

/// `P(t) = prod_k [(1 + u''_k v''_k)/(1 + u'_k v'_k)] / det M_vv` (forward) or
/// `/ det M_uu` (backward), for every sample.
pub fn prefactor_series(traj: &Trajectory, direction: Direction) -> Result<Vec<Prefactor>> {
    let start = traj.initial().products();
    let mut out = Vec::with_capacity(traj.len());
    let mut unwrapped = 0.0f64;
    let mut prev_arg: Option<f64> = None;
    for (i, m) in traj.stability.iter().enumerate() {
        let block = match direction {
            Direction::Forward => m.m_vv(),
            Direction::Backward => m.m_uu(),
        }
        .det();
        if block.norm() < CAUSTIC_THRESHOLD {
            return Err(Error::CausticEncountered { t: traj.times[i], modulus: block.norm() });
        }
        let end = traj.samples[i].products();
        let ratio: Complex64 = (0..2).map(|k| (1.0 + end[k]) / (1.0 + start[k])).product();
        let value = ratio / block;
        let arg = value.arg();
        if let Some(p) = prev_arg {
            let mut step = arg - p;
            while step > PI {
                step -= 2.0 * PI;
            }
            while step < -PI {
                step += 2.0 * PI;
            }
            unwrapped += step;
        } else {
            unwrapped = arg;
        }
        prev_arg = Some(arg);
        let sqrt = Complex64::from_polar(value.norm().sqrt(), 0.5 * unwrapped);
        let turns = ((unwrapped - arg) / (2.0 * PI)).round() as i64;
        out.push(Prefactor { value, sqrt, turns });
    }
    Ok(out)
}

/// Prefactor at the last sample of `traj`.
pub fn prefactor(traj: &Trajectory, direction: Direction) -> Result<Prefactor> {
    Ok(*prefactor_series(traj, direction)?.last().expect("trajectory has at least one sample"))
}

/// Diagonal propagator `<s_eta| exp(-i H T / hbar) |s0>` from the single real
/// trajectory, with `s_eta = conj(v(T))`. Returns the value and the endpoint
/// label `s_eta`.
pub fn semiclassical_propagator_real(
    sys: &SpinSystem,
    model: &HamiltonianModel,
    s0: &CoherentLabel,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<(Complex64, CoherentLabel)> {
    let traj = integrate_trajectory(sys, model, s0, t, cfg)?;
    let last = traj.len() - 1;
    let bundle = action_integrals(sys, &traj, last, Direction::Forward)?;
    let pre = prefactor(&traj, Direction::Forward)?;
    let end = traj.final_state();
    let s_eta = CoherentLabel { sx: end.v[0].conj(), sy: end.v[1].conj() };
    Ok((pre.sqrt * bundle.exponent().exp(), s_eta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::integrate_trajectory_at;
    use crate::models::{free_model, pc_trajectory, phase_coupling_model, PhaseCouplingParams};
    use crate::numerics::c64;
    use crate::quantum::exact_propagator_overlap;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::with_tolerances(1e-11, 1e-13).unwrap()
    }

    #[test]
    fn zero_time_reduces_to_overlap() {
        let sys = SpinSystem::with_two_j(6);
        let model = free_model(&sys, 0.4).unwrap();
        let s0 = CoherentLabel::new(c64(0.3, 0.8), c64(-1.2, 0.1)).unwrap();
        let (k, eta) = semiclassical_propagator_real(&sys, &model, &s0, 0.0, &cfg()).unwrap();
        assert!((k - 1.0).norm() < 1e-12);
        assert_eq!(eta, s0);
        let traj = integrate_trajectory(&sys, &model, &s0, 0.0, &cfg()).unwrap();
        let p = prefactor(&traj, Direction::Forward).unwrap();
        assert_eq!(p.value, c64(1.0, 0.0));
        assert_eq!(p.sqrt, c64(1.0, 0.0));
    }

    #[test]
    fn static_trajectory_action() {
        let p = PhaseCouplingParams::new(SpinSystem::new(4, 0.5).unwrap(), 1.0).unwrap();
        let model = phase_coupling_model(&p);
        // the south pole is a fixed point
        let s0 = CoherentLabel::new(c64(0.0, 0.0), c64(0.0, 0.0)).unwrap();
        let t = 0.8;
        let traj = integrate_trajectory(&p.sys, &model, &s0, t, &cfg()).unwrap();
        let b = action_integrals(&p.sys, &traj, traj.len() - 1, Direction::Forward).unwrap();
        let e = p.energy_scale();
        let expected = c64(0.0, -e * t / p.sys.hbar()) + b.lambda_tilde;
        assert!((b.scaled_action() - expected).norm() < 1e-10);
    }

    #[test]
    fn phase_coupling_action_matches_closed_form() {
        let p = PhaseCouplingParams::new(SpinSystem::new(5, 0.7).unwrap(), 0.6).unwrap();
        let model = phase_coupling_model(&p);
        let s0 = CoherentLabel::new(c64(0.5, -0.3), c64(0.9, 0.4)).unwrap();
        let times = [0.0, 0.4, 0.9];
        let num = integrate_trajectory_at(&p.sys, &model, &s0, &times, &cfg()).unwrap();
        let exact = pc_trajectory(&p, &s0, &times).unwrap();
        for i in 0..times.len() {
            for dir in [Direction::Forward, Direction::Backward] {
                let a = action_integrals(&p.sys, &num, i, dir).unwrap();
                let b = action_integrals(&p.sys, &exact, i, dir).unwrap();
                assert!((a.s_action - b.s_action).norm() < 1e-8);
                assert!((a.g_corr - b.g_corr).norm() < 1e-8);
            }
        }
        // The backward exponent is the conjugate of the forward one.
        let f = action_integrals(&p.sys, &exact, 2, Direction::Forward).unwrap();
        let b = action_integrals(&p.sys, &exact, 2, Direction::Backward).unwrap();
        assert!((f.scaled_action() + f.scaled_correction() - f.lambda_tilde - (b.scaled_action() + b.scaled_correction() - b.lambda_tilde).conj()).norm() < 1e-12);
    }

    #[test]
    fn diagonal_modulus_bounded() {
        let p = PhaseCouplingParams::new(SpinSystem::with_two_j(8), 0.9).unwrap();
        let model = phase_coupling_model(&p);
        let s0 = CoherentLabel::new(c64(0.7, 0.2), c64(0.3, -0.6)).unwrap();
        let traj = integrate_trajectory(&p.sys, &model, &s0, 1.0, &cfg()).unwrap();
        for i in 0..traj.len() {
            let b = action_integrals(&p.sys, &traj, i, Direction::Forward).unwrap();
            assert!(b.exponent().re <= 1e-6);
        }
    }

    /// `(i/hbar) S(T)` for phase coupling at fixed `u' = s0`, `v'' = v_end`,
    /// solving the mixed boundary problem by fixed-point iteration.
    fn pc_scaled_action_fixed_ends(p: &PhaseCouplingParams, s0: &CoherentLabel, v_end: [Complex64; 2], t: f64) -> (Complex64, Complex64) {
        let j = p.sys.j();
        let ilj = c64(0.0, p.lambda * j);
        let f = |q: Complex64| (1.0 - q) / (1.0 + q);
        let mut v = v_end;
        for _ in 0..200 {
            let (a, b) = (s0.sx * v[0], s0.sy * v[1]);
            v = [v_end[0] * (ilj * f(b) * t).exp(), v_end[1] * (ilj * f(a) * t).exp()];
        }
        let (a, b) = (s0.sx * v[0], s0.sy * v[1]);
        let (lx, ly) = (ilj * f(b), ilj * f(a));
        let energy = p.energy_scale() * f(a) * f(b);
        let integrand = -2.0 * j * (lx * a / (1.0 + a) + ly * b / (1.0 + b)) - c64(0.0, 1.0 / p.sys.hbar()) * energy;
        let boundary = 2.0 * j * ((1.0 + a).ln() + (1.0 + b).ln());
        (t * integrand + boundary, energy)
    }

    #[test]
    fn action_time_derivative_is_minus_energy() {
        let p = PhaseCouplingParams::new(SpinSystem::new(5, 0.8).unwrap(), 0.8).unwrap();
        let s0 = CoherentLabel::new(c64(0.4, 0.1), c64(-0.2, 0.9)).unwrap();
        let t0 = 0.6;
        let real = pc_trajectory(&p, &s0, &[t0]).unwrap();
        let v_end = real.samples[0].v;
        let bundle = action_integrals(&p.sys, &real, 0, Direction::Forward).unwrap();
        let (s_mid, energy) = pc_scaled_action_fixed_ends(&p, &s0, v_end, t0);
        assert!((s_mid - bundle.scaled_action()).norm() < 1e-12);
        let h = 1e-5;
        let ds = (pc_scaled_action_fixed_ends(&p, &s0, v_end, t0 + h).0 - pc_scaled_action_fixed_ends(&p, &s0, v_end, t0 - h).0) / (2.0 * h);
        assert!((ds + c64(0.0, 1.0 / p.sys.hbar()) * energy).norm() < 1e-6);
    }

    #[test]
    fn non_interacting_prefactor_is_unimodular_on_equator() {
        let sys = SpinSystem::with_two_j(4);
        let model = free_model(&sys, 1.1).unwrap();
        let s0 = CoherentLabel::new(c64(0.6, 0.8), c64(0.0, 1.0)).unwrap();
        let traj = integrate_trajectory(&sys, &model, &s0, 5.0, &cfg()).unwrap();
        for p in prefactor_series(&traj, Direction::Forward).unwrap() {
            assert!((p.value.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn prefactor_phase_is_grid_independent() {
        let p = PhaseCouplingParams::new(SpinSystem::with_two_j(6), 2.0).unwrap();
        let model = phase_coupling_model(&p);
        let s0 = CoherentLabel::new(c64(0.8, 0.3), c64(0.5, 0.5)).unwrap();
        let coarse = integrate_trajectory(&p.sys, &model, &s0, 2.0, &cfg()).unwrap();
        let fine_cfg = cfg().with_max_step(1e-3).unwrap();
        let fine = integrate_trajectory(&p.sys, &model, &s0, 2.0, &fine_cfg).unwrap();
        let a = prefactor(&coarse, Direction::Forward).unwrap();
        let b = prefactor(&fine, Direction::Forward).unwrap();
        assert!((a.sqrt - b.sqrt).norm() < 1e-6);
        let series = prefactor_series(&coarse, Direction::Forward).unwrap();
        for w in series.windows(2) {
            let d = (w[1].sqrt / w[0].sqrt).arg().abs();
            assert!(d < PI / 2.0);
        }
    }

    #[test]
    fn free_propagator_has_unit_modulus_and_converges() {
        let mut last = f64::INFINITY;
        for two_j in [2, 6, 12] {
            let sys = SpinSystem::with_two_j(two_j);
            let model = free_model(&sys, 0.9).unwrap();
            let s0 = CoherentLabel::new(c64(0.5, 0.1), c64(-0.3, 0.4)).unwrap();
            let (k, eta) = semiclassical_propagator_real(&sys, &model, &s0, 1.5, &cfg()).unwrap();
            assert!((k.norm() - 1.0).abs() < 1e-6);
            let exact = exact_propagator_overlap(&sys, &model.operator, &eta, &s0, 1.5).unwrap();
            let err = (k - exact).norm();
            assert!(err <= last + 1e-9);
            last = err;
        }
    }

    #[test]
    fn phase_coupling_propagator_close_to_exact() {
        let p = PhaseCouplingParams::new(SpinSystem::with_two_j(20), 1.0).unwrap();
        let model = phase_coupling_model(&p);
        let s0 = CoherentLabel::new(c64(0.5, 0.0), c64(0.0, 0.5)).unwrap();
        let t = 0.1 / p.sys.j();
        let (k, eta) = semiclassical_propagator_real(&p.sys, &model, &s0, t, &cfg()).unwrap();
        let exact = exact_propagator_overlap(&p.sys, &model.operator, &eta, &s0, t).unwrap();
        assert!((k - exact).norm() / exact.norm() < 5e-2);
    }
}
