//! Second derivatives of the action with respect to the mixed boundary data,
//! and the inverse map back to the stability matrix.

use num_complex::Complex64;

use super::action::Direction;
use crate::error::Result;
use crate::flow::{PhaseSpaceState, StabilityMatrix};
use crate::numerics::{small_inverse, ComplexMatrix};
use crate::spin::SpinSystem;

/// Diagonal endpoint weights, each carrying the factor `-2ij hbar`.
#[derive(Clone, Debug, PartialEq)]
pub struct EndpointWeights {
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
    pub c: ComplexMatrix,
    pub d: ComplexMatrix,
    pub direction: Direction,
}

/// Forward: `A = v'^2/(1+u'v')^2`, `B = 1/(1+u'v')^2`, `C = u''^2/(1+u''v'')^2`,
/// `D = 1/(1+u''v'')^2`. Backward swaps the roles of the two endpoints and
/// uses `v''^2` in `A` and `u'^2` in `C`.
pub fn endpoint_weights(sys: &SpinSystem, start: &PhaseSpaceState, end: &PhaseSpaceState, direction: Direction) -> EndpointWeights {
    let f = Complex64::new(0.0, -2.0 * sys.j() * sys.hbar());
    let diag = |g: &dyn Fn(usize) -> Complex64| ComplexMatrix::from_diagonal(&[f * g(0), f * g(1)]);
    let (first, second) = match direction {
        Direction::Forward => (start, end),
        Direction::Backward => (end, start),
    };
    let q1 = first.products();
    let q2 = second.products();
    EndpointWeights {
        a: diag(&|k| first.v[k] * first.v[k] / ((1.0 + q1[k]) * (1.0 + q1[k]))),
        b: diag(&|k| 1.0 / ((1.0 + q1[k]) * (1.0 + q1[k]))),
        c: diag(&|k| second.u[k] * second.u[k] / ((1.0 + q2[k]) * (1.0 + q2[k]))),
        d: diag(&|k| 1.0 / ((1.0 + q2[k]) * (1.0 + q2[k]))),
        direction,
    }
}

/// The four 2x2 Hessian blocks of the action.
///
/// Forward: `(s_aa, s_ab, s_ba, s_bb) = (S_u'u', S_u'v'', S_v''u', S_v''v'')`.
/// Backward: `(S_u''u'', S_u''v', S_v'u'', S_v'v')`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionHessians {
    pub s_aa: ComplexMatrix,
    pub s_ab: ComplexMatrix,
    pub s_ba: ComplexMatrix,
    pub s_bb: ComplexMatrix,
    pub direction: Direction,
}

impl ActionHessians {
    /// The mixed block whose determinant gives the prefactor.
    pub fn mixed(&self) -> &ComplexMatrix {
        match self.direction {
            Direction::Forward => &self.s_ab,
            Direction::Backward => &self.s_ba,
        }
    }
}

/// Action Hessians of the trajectory `start -> end` with stability matrix `m`.
/// Fails with `SingularMatrix` when `M_vv` (forward) or `M_uu` (backward) is
/// singular.
pub fn action_hessians_from_stability(
    sys: &SpinSystem,
    m: &StabilityMatrix,
    start: &PhaseSpaceState,
    end: &PhaseSpaceState,
    direction: Direction,
) -> Result<ActionHessians> {
    let w = endpoint_weights(sys, start, end, direction);
    let (muu, muv, mvu, mvv) = (m.m_uu(), m.m_uv(), m.m_vu(), m.m_vv());
    let h = match direction {
        Direction::Forward => {
            let ivv = small_inverse(&mvv)?;
            let muv_ivv = &muv * &ivv;
            ActionHessians {
                s_aa: &(&(&w.b * &ivv) * &mvu).scale((-1.0).into()) - &w.a,
                s_ab: &w.b * &ivv,
                s_ba: &w.d * &(&muu - &(&muv_ivv * &mvu)),
                s_bb: &(&w.d * &muv_ivv) - &w.c,
                direction,
            }
        }
        Direction::Backward => {
            let iuu = small_inverse(&muu)?;
            let mvu_iuu = &mvu * &iuu;
            ActionHessians {
                s_aa: &(&w.b * &mvu_iuu) - &w.a,
                s_ab: &w.b * &(&mvv - &(&mvu_iuu * &muv)),
                s_ba: &w.d * &iuu,
                s_bb: &(&(&w.d * &iuu) * &muv).scale((-1.0).into()) - &w.c,
                direction,
            }
        }
    };
    Ok(h)
}

/// Inverse of [`action_hessians_from_stability`] for the same weights.
pub fn stability_from_action_hessians(h: &ActionHessians, w: &EndpointWeights) -> Result<StabilityMatrix> {
    let (muu, muv, mvu, mvv) = match h.direction {
        Direction::Forward => {
            let a_t = &h.s_aa + &w.a;
            let c_t = &h.s_bb + &w.c;
            let i_ab = small_inverse(&h.s_ab)?;
            let i_d = small_inverse(&w.d)?;
            let i_ab_a = &i_ab * &a_t;
            let muu = &i_d * &(&h.s_ba - &(&c_t * &i_ab_a));
            let muv = &(&(&i_d * &c_t) * &i_ab) * &w.b;
            let mvu = i_ab_a.scale((-1.0).into());
            let mvv = &i_ab * &w.b;
            (muu, muv, mvu, mvv)
        }
        Direction::Backward => {
            let a_t = &h.s_aa + &w.a;
            let c_t = &h.s_bb + &w.c;
            let i_ba = small_inverse(&h.s_ba)?;
            let i_b = small_inverse(&w.b)?;
            let muu = &i_ba * &w.d;
            let muv = (&i_ba * &c_t).scale((-1.0).into());
            let mvu = &(&(&i_b * &a_t) * &i_ba) * &w.d;
            let mvv = &i_b * &(&h.s_ab - &(&(&a_t * &i_ba) * &c_t));
            (muu, muv, mvu, mvv)
        }
    };
    let mut full = ComplexMatrix::zeros(4, 4);
    for r in 0..2 {
        for c in 0..2 {
            full[(r, c)] = muu[(r, c)];
            full[(r, c + 2)] = muv[(r, c)];
            full[(r + 2, c)] = mvu[(r, c)];
            full[(r + 2, c + 2)] = mvv[(r, c)];
        }
    }
    StabilityMatrix::new(full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::flow::integrate_trajectory;
    use crate::models::exchange_model;
    use crate::numerics::{c64, kron, IntegratorConfig};
    use crate::semiclassical::action::prefactor;
    use crate::semiclassical::purity::aux_determinants;
    use crate::spin::{build_spin_operators, htilde_from_operator, CoherentLabel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng) -> PhaseSpaceState {
        let mut z = || c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        PhaseSpaceState::new([z(), z()], [z(), z()])
    }

    fn random_matrix(rng: &mut ChaCha8Rng) -> StabilityMatrix {
        let data: Vec<Complex64> = (0..16).map(|_| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        StabilityMatrix::from_slice(&data)
    }

    /// Exchange plus a tilted field: interacting, with real critical trajectories.
    fn interacting_trajectory() -> (SpinSystem, crate::flow::Trajectory) {
        let sys = SpinSystem::new(6, 0.9).unwrap();
        let ops = build_spin_operators(&sys);
        let id = ComplexMatrix::identity(sys.dim());
        let ex = exchange_model(&sys, 0.7).unwrap();
        let field = &kron(&ops.j1(), &id).scale(c64(0.4 * sys.hbar(), 0.0)) + &kron(&id, &ops.j3).scale(c64(0.3 * sys.hbar(), 0.0));
        let h = &ex.operator + &field;
        let model = htilde_from_operator(&sys, &h, "mixed").unwrap();
        let s0 = CoherentLabel::new(c64(0.5, 0.3), c64(-0.4, 0.7)).unwrap();
        let cfg = IntegratorConfig::with_tolerances(1e-11, 1e-13).unwrap();
        let traj = integrate_trajectory(&sys, &model, &s0, 0.7, &cfg).unwrap();
        (sys, traj)
    }

    #[test]
    fn round_trip_recovers_stability() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sys = SpinSystem::new(5, 0.6).unwrap();
        for _ in 0..100 {
            let m = random_matrix(&mut rng);
            let (start, end) = (random_state(&mut rng), random_state(&mut rng));
            for dir in [Direction::Forward, Direction::Backward] {
                let h = action_hessians_from_stability(&sys, &m, &start, &end, dir).unwrap();
                let w = endpoint_weights(&sys, &start, &end, dir);
                let back = stability_from_action_hessians(&h, &w).unwrap();
                let err = back.matrix().max_abs_diff(m.matrix());
                assert!(err < 1e-8 * m.matrix().max_abs(), "{dir:?}: {err}");
            }
        }
    }

    #[test]
    fn singular_block_is_reported() {
        let sys = SpinSystem::with_two_j(2);
        let s = PhaseSpaceState::real(&CoherentLabel::new(c64(0.2, 0.0), c64(0.0, 0.1)).unwrap());
        let mut m = StabilityMatrix::identity().matrix().clone();
        m[(2, 2)] = c64(0.0, 0.0);
        let m = StabilityMatrix::new(m).unwrap();
        assert!(matches!(action_hessians_from_stability(&sys, &m, &s, &s, Direction::Forward), Err(Error::SingularMatrix { .. })));
        assert!(action_hessians_from_stability(&sys, &m, &s, &s, Direction::Backward).is_ok());
    }

    #[test]
    fn mixed_hessian_reproduces_prefactor() {
        let (sys, traj) = interacting_trajectory();
        let (start, end) = (traj.initial(), traj.final_state());
        let m = traj.final_stability();
        let endpoint: Complex64 = (0..2).map(|k| (1.0 + end.products()[k]) * (1.0 + start.products()[k]) / (2.0 * sys.j())).product();
        for dir in [Direction::Forward, Direction::Backward] {
            let h = action_hessians_from_stability(&sys, m, start, end, dir).unwrap();
            let scaled = h.mixed().scale(c64(0.0, 1.0 / sys.hbar()));
            let from_hessian = scaled.det() * endpoint;
            let p = prefactor(&traj, dir).unwrap().value;
            assert!((from_hessian - p).norm() < 1e-8 * p.norm(), "{dir:?}: {from_hessian} vs {p}");
        }
    }

    #[test]
    fn hessians_are_symmetric_on_a_real_flow() {
        let (sys, traj) = interacting_trajectory();
        let m = traj.final_stability();
        for dir in [Direction::Forward, Direction::Backward] {
            let h = action_hessians_from_stability(&sys, m, traj.initial(), traj.final_state(), dir).unwrap();
            let scale = h.s_bb.max_abs().max(h.s_aa.max_abs());
            assert!((h.s_bb[(0, 1)] - h.s_bb[(1, 0)]).norm() < 1e-8 * scale);
            assert!((h.s_aa[(0, 1)] - h.s_aa[(1, 0)]).norm() < 1e-8 * scale);
            assert!(h.s_ab.max_abs_diff(&h.s_ba.transpose()) < 1e-8 * h.s_ab.max_abs());
        }
        let aux = aux_determinants(m, traj.tcal(traj.len() - 1));
        let lhs = aux.a_p * aux.b_p;
        let rhs = aux.c_p * aux.d_p;
        assert!((lhs - rhs).norm() < 1e-8 * lhs.norm().max(rhs.norm()).max(1e-3), "{lhs} vs {rhs}");
    }
}
