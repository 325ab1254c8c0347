//! Built-in two-spin Hamiltonians and the closed forms of the phase-coupling
//! model `lambda hbar J3 (x) J3`.
//!
//! Along a phase-coupling trajectory the products `a = u_x v_x` and
//! `b = u_y v_y` are conserved, so every quantity below is an explicit
//! function of the initial point and `t`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{PhaseSpaceState, StabilityMatrix, Trajectory, CHART_THRESHOLD};
use crate::numerics::{kron, ComplexMatrix};
use crate::spin::{
    build_spin_operators, htilde_from_operator, ClassicalSymbol, CoherentLabel, HamiltonianModel, PhasePoint,
    SpinSystem, SymbolJet,
};

/// Names accepted by the configuration front-end, with one-line summaries.
pub const BUILTIN_MODELS: &[(&str, &str)] = &[
    ("phase_coupling", "lambda hbar J3 (x) J3 (closed-form symbol); params: lambda"),
    ("free", "b3 hbar (J3 (x) I + I (x) J3), non-interacting; params: b3"),
    ("exchange", "(lambda hbar / 2)(J+ (x) J- + J- (x) J+); params: lambda"),
    ("operator_terms", "hbar * sum of c X^p (x) Y^q over a term list; params: terms"),
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseCouplingParams {
    pub lambda: f64,
    pub sys: SpinSystem,
}

impl PhaseCouplingParams {
    pub fn new(sys: SpinSystem, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::validation("hamiltonian.lambda", "must be finite"));
        }
        Ok(Self { lambda, sys })
    }

    /// `lambda hbar j^2`.
    pub fn energy_scale(&self) -> f64 {
        self.lambda * self.sys.hbar() * self.sys.j() * self.sys.j()
    }

    /// `(lambda_x, lambda_y)` at the phase point `w`:
    /// `lambda_x = i lambda j (1 - b)/(1 + b)`, `lambda_y = i lambda j (1 - a)/(1 + a)`.
    pub fn rates(&self, w: &PhasePoint) -> [Complex64; 2] {
        let (a, b) = (w[0] * w[2], w[1] * w[3]);
        let ilj = Complex64::new(0.0, self.lambda * self.sys.j());
        [ilj * ratio(b), ilj * ratio(a)]
    }
}

fn ratio(q: Complex64) -> Complex64 {
    (1.0 - q) / (1.0 + q)
}

/// `H~ = E F(a) G(b)` with `F = G = (1 - q)/(1 + q)`.
#[derive(Clone, Debug)]
struct PhaseCouplingSymbol {
    scale: f64,
}

impl PhaseCouplingSymbol {
    fn check(w: &PhasePoint) -> Result<(Complex64, Complex64)> {
        let (a, b) = (w[0] * w[2], w[1] * w[3]);
        for (k, q) in [a, b].iter().enumerate() {
            let m = (1.0 + q).norm();
            if m < CHART_THRESHOLD {
                return Err(Error::ChartSingularity { subsystem: if k == 0 { 'x' } else { 'y' }, modulus: m });
            }
        }
        Ok((a, b))
    }
}

impl ClassicalSymbol for PhaseCouplingSymbol {
    fn value(&self, w: &PhasePoint) -> Result<Complex64> {
        let (a, b) = Self::check(w)?;
        Ok(self.scale * ratio(a) * ratio(b))
    }

    fn jet(&self, w: &PhasePoint) -> Result<SymbolJet> {
        let (a, b) = Self::check(w)?;
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let derivs = |q: Complex64| {
            let d = 1.0 + q;
            (ratio(q), -2.0 / (d * d), 4.0 / (d * d * d))
        };
        let (f, f1, f2) = derivs(a);
        let (g, g1, g2) = derivs(b);
        // Gradients and Hessians of a = w0 w2 and b = w1 w3.
        let da = [w[2], zero, w[0], zero];
        let db = [zero, w[3], zero, w[1]];
        let dda = |i: usize, k: usize| if (i, k) == (0, 2) || (i, k) == (2, 0) { one } else { zero };
        let ddb = |i: usize, k: usize| if (i, k) == (1, 3) || (i, k) == (3, 1) { one } else { zero };
        let e = self.scale;
        let grad: [Complex64; 4] = std::array::from_fn(|i| e * (f1 * da[i] * g + f * g1 * db[i]));
        let hess: [[Complex64; 4]; 4] = std::array::from_fn(|i| {
            std::array::from_fn(|k| {
                e * (f2 * da[i] * da[k] * g
                    + f1 * dda(i, k) * g
                    + f1 * g1 * (da[i] * db[k] + da[k] * db[i])
                    + f * g2 * db[i] * db[k]
                    + f * g1 * ddb(i, k))
            })
        });
        Ok(SymbolJet { value: e * f * g, grad, hess })
    }
}

/// `lambda hbar J3 (x) J3` with its closed-form symbol.
pub fn phase_coupling_model(params: &PhaseCouplingParams) -> HamiltonianModel {
    let ops = build_spin_operators(&params.sys);
    let operator = kron(&ops.j3, &ops.j3).scale(Complex64::new(params.lambda * params.sys.hbar(), 0.0));
    HamiltonianModel {
        operator,
        symbol: Arc::new(PhaseCouplingSymbol { scale: params.energy_scale() }),
        label: format!("phase_coupling(lambda={})", params.lambda),
    }
}

/// `b3 hbar (J3 (x) I + I (x) J3)`.
pub fn free_model(sys: &SpinSystem, b3: f64) -> Result<HamiltonianModel> {
    let terms = [
        OperatorTerm::new(Complex64::new(b3, 0.0), (SpinFactor::J3, 1), (SpinFactor::Identity, 0)),
        OperatorTerm::new(Complex64::new(b3, 0.0), (SpinFactor::Identity, 0), (SpinFactor::J3, 1)),
    ];
    let mut m = build_operator_model(sys, &terms)?;
    m.label = format!("free(b3={b3})");
    Ok(m)
}

/// `(lambda hbar / 2)(J+ (x) J- + J- (x) J+)`.
pub fn exchange_model(sys: &SpinSystem, lambda: f64) -> Result<HamiltonianModel> {
    let c = Complex64::new(lambda / 2.0, 0.0);
    let terms = [
        OperatorTerm::new(c, (SpinFactor::Plus, 1), (SpinFactor::Minus, 1)),
        OperatorTerm::new(c, (SpinFactor::Minus, 1), (SpinFactor::Plus, 1)),
    ];
    let mut m = build_operator_model(sys, &terms)?;
    m.label = format!("exchange(lambda={lambda})");
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinFactor {
    Plus,
    Minus,
    J3,
    Identity,
}

/// `coefficient * hbar * X^p (x) Y^q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorTerm {
    pub coefficient: Complex64,
    pub factor_x: (SpinFactor, u32),
    pub factor_y: (SpinFactor, u32),
}

impl OperatorTerm {
    pub fn new(coefficient: Complex64, factor_x: (SpinFactor, u32), factor_y: (SpinFactor, u32)) -> Self {
        Self { coefficient, factor_x, factor_y }
    }
}

fn factor_power(sys: &SpinSystem, factor: (SpinFactor, u32)) -> ComplexMatrix {
    let ops = build_spin_operators(sys);
    let base = match factor.0 {
        SpinFactor::Plus => ops.plus,
        SpinFactor::Minus => ops.minus,
        SpinFactor::J3 => ops.j3,
        SpinFactor::Identity => return ComplexMatrix::identity(sys.dim()),
    };
    let mut acc = ComplexMatrix::identity(sys.dim());
    for _ in 0..factor.1 {
        acc = &acc * &base;
    }
    acc
}

/// Assembles `hbar * sum_t c_t X_t (x) Y_t`; the list must be closed under
/// conjugation.
pub fn build_operator_model(sys: &SpinSystem, terms: &[OperatorTerm]) -> Result<HamiltonianModel> {
    let n = sys.joint_dim();
    let mut h = ComplexMatrix::zeros(n, n);
    for t in terms {
        let piece = kron(&factor_power(sys, t.factor_x), &factor_power(sys, t.factor_y));
        h = &h + &piece.scale(t.coefficient * sys.hbar());
    }
    htilde_from_operator(sys, &h, format!("operator_terms({})", terms.len()))
}

fn rates_and_slopes(params: &PhaseCouplingParams, w: &PhasePoint) -> ([Complex64; 2], [Complex64; 2]) {
    let (a, b) = (w[0] * w[2], w[1] * w[3]);
    let ilj = Complex64::new(0.0, params.lambda * params.sys.j());
    // mu_x = -(1/2) d lambda_x / d b, mu_y = -(1/2) d lambda_y / d a
    let mu = [ilj / ((1.0 + b) * (1.0 + b)), ilj / ((1.0 + a) * (1.0 + a))];
    (params.rates(w), mu)
}

/// Closed-form trajectory, stability matrices and action quadratures at `times`.
pub fn pc_trajectory(params: &PhaseCouplingParams, s0: &CoherentLabel, times: &[f64]) -> Result<Trajectory> {
    let start = PhaseSpaceState::real(s0);
    let w0 = start.to_array();
    let model = PhaseCouplingSymbol { scale: params.energy_scale() };
    let energy = model.value(&w0)?;
    let [lx, ly] = params.rates(&w0);
    let (a, b) = (w0[0] * w0[2], w0[1] * w0[3]);
    let j = params.sys.j();
    // u v' - v u' = -2 lambda_k u_k v_k on every sample.
    let i_s = -2.0 * j * (lx * a / (1.0 + a) + ly * b / (1.0 + b)) - Complex64::new(0.0, 1.0 / params.sys.hbar()) * energy;
    let i_g = 2.0 * (lx + ly);

    let mut traj = Trajectory {
        start_label: *s0,
        times: times.to_vec(),
        samples: Vec::with_capacity(times.len()),
        energy: vec![energy; times.len()],
        stability: Vec::with_capacity(times.len()),
        action_quadrature: Vec::with_capacity(times.len()),
        trace_quadrature: Vec::with_capacity(times.len()),
        accepted_steps: 0,
        rejected_steps: 0,
    };
    for &t in times {
        let (ex, ey) = ((lx * t).exp(), (ly * t).exp());
        traj.samples.push(PhaseSpaceState::new([w0[0] * ex, w0[1] * ey], [w0[2] / ex, w0[3] / ey]));
        traj.stability.push(pc_stability(params, s0, t));
        traj.action_quadrature.push(i_s * t);
        traj.trace_quadrature.push(i_g * t);
    }
    Ok(traj)
}

/// Closed-form stability matrix in its regular form (no equator singularity).
pub fn pc_stability(params: &PhaseCouplingParams, s0: &CoherentLabel, t: f64) -> StabilityMatrix {
    let w = PhaseSpaceState::real(s0).to_array();
    let (lam, mu) = rates_and_slopes(params, &w);
    let (ux, uy, vx, vy) = (w[0], w[1], w[2], w[3]);
    let ex = (lam[0] * t).exp();
    let ey = (lam[1] * t).exp();
    let (ix, iy) = (1.0 / ex, 1.0 / ey);
    let z = Complex64::new(0.0, 0.0);
    let (cx, cy) = (2.0 * t * mu[0], 2.0 * t * mu[1]);
    let rows = [
        [ex, -cx * ux * vy * ex, z, -cx * ux * uy * ex],
        [-cy * uy * vx * ey, ey, -cy * uy * ux * ey, z],
        [z, cx * vx * vy * ix, ix, cx * vx * uy * ix],
        [cy * vy * vx * iy, z, cy * vy * ux * iy, iy],
    ];
    StabilityMatrix::from_slice(&rows.concat())
}

/// The product `M1 M2` exactly as factorised; undefined at `t = 0`, at
/// vanishing rates and on the equator `|u'v'| = 1`.
pub fn pc_stability_factored(params: &PhaseCouplingParams, s0: &CoherentLabel, t: f64) -> Result<StabilityMatrix> {
    let w = PhaseSpaceState::real(s0).to_array();
    let [lx, ly] = params.rates(&w);
    let (ux, uy, vx, vy) = (w[0], w[1], w[2], w[3]);
    let (a, b) = (ux * vx, uy * vy);
    let (dx, dy) = (1.0 - a * a, 1.0 - b * b);
    let tiny = |z: Complex64| z.norm() < 1e-14;
    if t == 0.0 || tiny(lx) || tiny(ly) || tiny(dx) || tiny(dy) {
        return Err(Error::SingularMatrix { determinant: 0.0 });
    }
    let z = Complex64::new(0.0, 0.0);
    let m1 = ComplexMatrix::from_diagonal(&[
        2.0 * t * lx * (lx * t).exp(),
        2.0 * t * ly * (ly * t).exp(),
        2.0 * t * lx * (-lx * t).exp(),
        2.0 * t * ly * (-ly * t).exp(),
    ]);
    let (hx, hy) = (1.0 / (2.0 * lx * t), 1.0 / (2.0 * ly * t));
    let m2 = ComplexMatrix::from_rows(&[
        [hx, -ux * vy / dy, z, -ux * uy / dy],
        [-uy * vx / dx, hy, -uy * ux / dx, z],
        [z, vx * vy / dy, hx, vx * uy / dy],
        [vy * vx / dx, z, vy * ux / dx, hy],
    ]);
    StabilityMatrix::new(&m1 * &m2)
}

/// Regular closed form
/// `[1 + 16 lambda^2 j^2 |s_x|^2 |s_y|^2 T^2 / ((1+|s_x|^2)^2 (1+|s_y|^2)^2)]^{-1/2}`.
pub fn pc_purity_sc(params: &PhaseCouplingParams, s0: &CoherentLabel, t: f64) -> f64 {
    let (x, y) = (s0.sx.norm_sqr(), s0.sy.norm_sqr());
    let lj = params.lambda * params.sys.j();
    let q = 16.0 * lj * lj * x * y * t * t / ((1.0 + x).powi(2) * (1.0 + y).powi(2));
    (1.0 + q).powf(-0.5)
}

/// The unsimplified form
/// `[1 - 16 a b lambda_x lambda_y T^2 / ((1 - a^2)(1 - b^2))]^{-1/2}`, principal
/// branch; `0/0` on the equator.
pub fn pc_purity_sc_raw(params: &PhaseCouplingParams, s0: &CoherentLabel, t: f64) -> Complex64 {
    let w = PhaseSpaceState::real(s0).to_array();
    let [lx, ly] = params.rates(&w);
    let (a, b) = (w[0] * w[2], w[1] * w[3]);
    let q = 1.0 - 16.0 * a * b * lx * ly * t * t / ((1.0 - a * a) * (1.0 - b * b));
    q.powf(-0.5)
}

/// Binomial weights `binom(2j, n) x^n / (1 + x)^{2j}` for `x = |s|^2`.
fn binomial_weights(two_j: u32, x: f64) -> Vec<f64> {
    let p = x / (1.0 + x);
    let q = 1.0 / (1.0 + x);
    let mut w = Vec::with_capacity(two_j as usize + 1);
    let mut binom = 1.0f64;
    for n in 0..=two_j {
        if n > 0 {
            binom *= (two_j - n + 1) as f64 / n as f64;
        }
        w.push(binom * p.powi(n as i32) * q.powi((two_j - n) as i32));
    }
    w
}

/// Exact purity of the phase-coupling model from the finite binomial sum.
///
/// The fourfold sum is regrouped by `delta_x = n_x - n'_x`: for fixed
/// `delta_x` the `y` sums factor into `|sum_n w_y(n) e^{-i lambda T delta_x n}|^2`.
pub fn pc_exact_purity(params: &PhaseCouplingParams, s0: &CoherentLabel, t: f64) -> f64 {
    let two_j = params.sys.two_j();
    let wx = binomial_weights(two_j, s0.sx.norm_sqr());
    let wy = binomial_weights(two_j, s0.sy.norm_sqr());
    let d = two_j as i64;
    let mut total = 0.0;
    for delta in -d..=d {
        let mut cx = 0.0;
        for (n, w) in wx.iter().enumerate() {
            let m = n as i64 - delta;
            if (0..=d).contains(&m) {
                cx += w * wx[m as usize];
            }
        }
        if cx == 0.0 {
            continue;
        }
        let theta = params.lambda * t * delta as f64;
        let amp: Complex64 = wy.iter().enumerate().map(|(n, w)| Complex64::from_polar(*w, -theta * n as f64)).sum();
        total += cx * amp.norm_sqr();
    }
    total
}

/// Short-time linear entropy `8 |s_x|^2 |s_y|^2 j^2 lambda^2 T^2 / ((1+|s_x|^2)(1+|s_y|^2))^2`.
pub fn pc_slin_short_time(params: &PhaseCouplingParams, s0: &CoherentLabel, t: f64) -> f64 {
    let (x, y) = (s0.sx.norm_sqr(), s0.sy.norm_sqr());
    let root = 8f64.sqrt() * (x * y).sqrt() * params.sys.j() * params.lambda * t / ((1.0 + x) * (1.0 + y));
    root * root
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{integrate_trajectory_at, tcal};
    use crate::numerics::{c64, gradient_mismatch, IntegratorConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(two_j: u32, lambda: f64) -> PhaseCouplingParams {
        PhaseCouplingParams::new(SpinSystem::with_two_j(two_j), lambda).unwrap()
    }

    fn label(sx: Complex64, sy: Complex64) -> CoherentLabel {
        CoherentLabel::new(sx, sy).unwrap()
    }

    fn random_label(rng: &mut ChaCha8Rng) -> CoherentLabel {
        label(c64(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)), c64(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)))
    }

    #[test]
    fn equator_and_south_pole_values() {
        let p = params(4, 0.7);
        let m = phase_coupling_model(&p);
        let eq = label(c64(0.6, 0.8), c64(-1.0, 0.0)).phase_point();
        assert!(m.htilde(&eq).unwrap().norm() < 1e-15);
        let pole = label(c64(0.0, 0.0), c64(0.0, 0.0)).phase_point();
        assert!((m.htilde(&pole).unwrap() - p.energy_scale()).norm() < 1e-15);
    }

    #[test]
    fn closed_form_symbol_matches_generic_path() {
        let p = PhaseCouplingParams::new(SpinSystem::new(5, 1.3).unwrap(), 0.9).unwrap();
        let closed = phase_coupling_model(&p);
        let generic = htilde_from_operator(&p.sys, &closed.operator, "generic").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let w: PhasePoint = std::array::from_fn(|_| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let (a, b) = (closed.jet(&w).unwrap(), generic.jet(&w).unwrap());
            let scale = 1.0 + a.value.norm();
            assert!((a.value - b.value).norm() < 1e-10 * scale);
            for i in 0..4 {
                assert!((a.grad[i] - b.grad[i]).norm() < 1e-9 * (1.0 + a.grad[i].norm()));
                for k in 0..4 {
                    assert!((a.hess[i][k] - b.hess[i][k]).norm() < 1e-8 * (1.0 + a.hess[i][k].norm()));
                }
            }
            let f = |x: &[Complex64]| closed.htilde(&[x[0], x[1], x[2], x[3]]).unwrap();
            assert!(gradient_mismatch(f, &a.grad, &w, 1e-5) < 1e-6);
        }
    }

    #[test]
    fn single_term_builder_reproduces_phase_coupling() {
        let p = params(3, 1.1);
        let built = build_operator_model(
            &p.sys,
            &[OperatorTerm::new(c64(1.1, 0.0), (SpinFactor::J3, 1), (SpinFactor::J3, 1))],
        )
        .unwrap();
        let closed = phase_coupling_model(&p);
        assert!(built.operator.max_abs_diff(&closed.operator) < 1e-14);
        let w = [c64(0.2, 0.1), c64(-0.3, 0.5), c64(0.7, 0.0), c64(0.1, -0.4)];
        assert!((built.htilde(&w).unwrap() - closed.htilde(&w).unwrap()).norm() < 1e-10);
    }

    #[test]
    fn empty_term_list_is_zero_operator() {
        let sys = SpinSystem::with_two_j(2);
        let m = build_operator_model(&sys, &[]).unwrap();
        assert_eq!(m.operator.max_abs(), 0.0);
        assert_eq!(m.htilde(&label(c64(0.3, 0.0), c64(1.0, 1.0)).phase_point()).unwrap(), c64(0.0, 0.0));
    }

    #[test]
    fn non_hermitian_terms_rejected() {
        let sys = SpinSystem::with_two_j(2);
        let bad = [OperatorTerm::new(c64(1.0, 0.0), (SpinFactor::Plus, 1), (SpinFactor::Identity, 0))];
        assert!(matches!(build_operator_model(&sys, &bad), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn exchange_conserves_total_j3() {
        let sys = SpinSystem::with_two_j(4);
        let m = exchange_model(&sys, 0.8).unwrap();
        let ops = build_spin_operators(&sys);
        let id = ComplexMatrix::identity(sys.dim());
        let jz = &kron(&ops.j3, &id) + &kron(&id, &ops.j3);
        assert!(m.operator.commutator(&jz).max_abs() < 1e-12);
    }

    #[test]
    fn closed_form_trajectory_properties() {
        let p = params(6, 0.5);
        let s0 = label(c64(0.4, 0.3), c64(-0.8, 1.1));
        let traj = pc_trajectory(&p, &s0, &[0.0, 0.5, 1.0, 4.0]).unwrap();
        let start = traj.samples[0];
        for s in &traj.samples {
            assert!((s.u[0].norm() - s0.sx.norm()).abs() < 1e-14);
            assert!((s.products()[0] - start.products()[0]).norm() < 1e-14);
            assert!((s.products()[1] - start.products()[1]).norm() < 1e-14);
        }
        let still = pc_trajectory(&params(6, 0.0), &s0, &[0.0, 3.0]).unwrap();
        assert_eq!(still.samples[0], still.samples[1]);
    }

    #[test]
    fn stability_identity_at_zero_and_unit_determinant() {
        let p = params(5, 1.2);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        assert_eq!(pc_stability(&p, &random_label(&mut rng), 0.0), StabilityMatrix::identity());
        for _ in 0..20 {
            let s0 = random_label(&mut rng);
            let m = pc_stability(&p, &s0, rng.gen_range(0.0..2.0));
            assert!((m.det() - 1.0).norm() < 1e-10);
        }
    }

    #[test]
    fn factored_form_matches_regular_form_off_equator() {
        let p = params(3, 0.9);
        let s0 = label(c64(0.5, 0.2), c64(1.4, -0.3));
        for t in [0.1, 0.7, 2.0] {
            let a = pc_stability(&p, &s0, t);
            let b = pc_stability_factored(&p, &s0, t).unwrap();
            assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-12);
            let raw = pc_purity_sc_raw(&p, &s0, t);
            assert!((raw.re - pc_purity_sc(&p, &s0, t)).abs() < 1e-12 && raw.im.abs() < 1e-12);
        }
        assert!(pc_stability_factored(&p, &s0, 0.0).is_err());
    }

    #[test]
    fn closed_forms_match_numerical_flow() {
        let p = PhaseCouplingParams::new(SpinSystem::new(7, 0.6).unwrap(), 0.8).unwrap();
        let model = phase_coupling_model(&p);
        let cfg = IntegratorConfig::with_tolerances(1e-11, 1e-13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let times = [0.0, 0.1, 0.3, 0.6];
        for _ in 0..5 {
            let s0 = random_label(&mut rng);
            let num = integrate_trajectory_at(&p.sys, &model, &s0, &times, &cfg).unwrap();
            let exact = pc_trajectory(&p, &s0, &times).unwrap();
            for i in 0..times.len() {
                let (a, b) = (num.samples[i].to_array(), exact.samples[i].to_array());
                for k in 0..4 {
                    assert!((a[k] - b[k]).norm() < 1e-9);
                }
                assert!(num.stability[i].matrix().max_abs_diff(exact.stability[i].matrix()) < 1e-8);
                assert!((num.action_quadrature[i] - exact.action_quadrature[i]).norm() < 1e-8);
                assert!((num.trace_quadrature[i] - exact.trace_quadrature[i]).norm() < 1e-8);
                assert!((tcal(&num.samples[0], &num.samples[i]) - 1.0).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn purity_closed_forms_at_spin_half() {
        let p = params(1, 1.7);
        let s0 = label(c64(1.0, 0.0), c64(1.0, 0.0));
        for t in [0.0, 0.3, 1.0, 2.5] {
            let lt = p.lambda * t;
            assert!((pc_exact_purity(&p, &s0, t) - (3.0 + lt.cos()) / 4.0).abs() < 1e-14);
            assert!((pc_purity_sc(&p, &s0, t) - (1.0 + lt * lt / 4.0).powf(-0.5)).abs() < 1e-14);
            assert!((pc_slin_short_time(&p, &s0, t) - lt * lt / 8.0).abs() < 1e-14);
        }
    }

    /// Direct fourfold sum over `(n_x, n'_x, n_y, n'_y)`.
    fn brute_force_purity(p: &PhaseCouplingParams, s0: &CoherentLabel, t: f64) -> f64 {
        let d = p.sys.two_j() as usize;
        let (x, y) = (s0.sx.norm_sqr(), s0.sy.norm_sqr());
        let binom = |n: usize| -> f64 { (0..n).map(|k| (d - k) as f64 / (k + 1) as f64).product() };
        let norm4 = ((1.0 + x) * (1.0 + y)).powf(2.0 * d as f64);
        let mut acc = c64(0.0, 0.0);
        for nx in 0..=d {
            for mx in 0..=d {
                for ny in 0..=d {
                    for my in 0..=d {
                        let w = binom(nx) * binom(mx) * binom(ny) * binom(my)
                            * x.powi((nx + mx) as i32)
                            * y.powi((ny + my) as i32);
                        let phase = -p.lambda * t * (nx as f64 - mx as f64) * (ny as f64 - my as f64);
                        acc += Complex64::from_polar(w, phase);
                    }
                }
            }
        }
        assert!(acc.im.abs() <= 1e-12 * acc.norm());
        acc.re / norm4
    }

    #[test]
    fn regrouped_sum_matches_fourfold_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for two_j in [1, 2, 3, 6] {
            let p = params(two_j, 0.9);
            let s0 = random_label(&mut rng);
            for t in [0.0, 0.4, 3.3] {
                let a = pc_exact_purity(&p, &s0, t);
                let b = brute_force_purity(&p, &s0, t);
                assert!((a - b).abs() < 1e-12, "two_j={two_j} t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn exact_purity_symmetry_and_periodicity() {
        let p = params(5, 1.0);
        let s0 = label(c64(0.3, 0.4), c64(1.2, 0.0));
        for t in [0.2, 1.1, 2.9] {
            let a = pc_exact_purity(&p, &s0, t);
            assert!((a - pc_exact_purity(&p, &s0.swapped(), t)).abs() < 1e-14);
            assert!((a - pc_exact_purity(&p, &s0, t + 2.0 * std::f64::consts::PI)).abs() < 1e-12);
        }
    }

    #[test]
    fn short_time_law_limits() {
        let p = params(8, 1.0);
        assert_eq!(pc_slin_short_time(&p, &label(c64(0.0, 0.0), c64(0.7, 0.1)), 0.5), 0.0);
        // s = z / sqrt(2j) with j -> infinity
        let (zx, zy) = (c64(1.0, 0.0), c64(0.5, 0.5));
        let lt: f64 = 0.01;
        let limit = 2.0 * zx.norm_sqr() * zy.norm_sqr() * lt * lt;
        let mut last = f64::INFINITY;
        for two_j in [10u32, 100, 1000, 10000] {
            let p = params(two_j, 1.0);
            let r = (two_j as f64).sqrt();
            let s = pc_slin_short_time(&p, &label(zx / r, zy / r), lt);
            let err = (s - limit).abs();
            assert!(err < last);
            last = err;
        }
        assert!(last < 1e-3 * limit);
    }
}
