//! Spin-j operator algebra, spin coherent states and the analytically
//! continued symbol `H~(u, v)` of a two-spin Hamiltonian.
//!
//! Basis convention: states `|-j + n>` for `n = 0..=2j`, ascending `J3`
//! eigenvalue. On the joint space subsystem `x` is the left Kronecker factor,
//! so the joint index is `n_x * (2j+1) + n_y`.
//!
//! Phase-space points are passed as `[u_x, u_y, v_x, v_y]`; on "real" points
//! `v = conj(u)`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{kron_vec, ComplexMatrix};

/// `[u_x, u_y, v_x, v_y]`.
pub type PhasePoint = [Complex64; 4];

/// Two spins of equal magnitude `j = two_j / 2` and the action unit `hbar`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    two_j: u32,
    hbar: f64,
}

impl SpinSystem {
    pub fn new(two_j: u32, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::validation("system.hbar", "must be finite and > 0"));
        }
        Ok(Self { two_j, hbar })
    }

    /// Spin `two_j / 2` with `hbar = 1`.
    pub fn with_two_j(two_j: u32) -> Self {
        Self { two_j, hbar: 1.0 }
    }

    pub fn two_j(&self) -> u32 {
        self.two_j
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// The semiclassical combination `hbar * j`.
    pub fn hbar_j(&self) -> f64 {
        self.hbar * self.j()
    }

    /// Single-spin dimension `2j + 1`.
    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    /// Joint dimension `(2j + 1)^2`.
    pub fn joint_dim(&self) -> usize {
        self.dim() * self.dim()
    }
}

/// Stereographic labels `(s_x, s_y)` of a product coherent state. The pole
/// `s = infinity` is not representable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentLabel {
    pub sx: Complex64,
    pub sy: Complex64,
}

impl CoherentLabel {
    pub fn new(sx: Complex64, sy: Complex64) -> Result<Self> {
        let finite = |z: Complex64| z.re.is_finite() && z.im.is_finite();
        if !finite(sx) || !finite(sy) {
            return Err(Error::validation("initial_state", "labels must be finite"));
        }
        Ok(Self { sx, sy })
    }

    /// The real phase-space point `(u, v) = (s, s*)`.
    pub fn phase_point(&self) -> PhasePoint {
        [self.sx, self.sy, self.sx.conj(), self.sy.conj()]
    }

    /// Labels with the two subsystems exchanged.
    pub fn swapped(&self) -> Self {
        Self { sx: self.sy, sy: self.sx }
    }
}

/// Dimensionless ladder and `J3` matrices of a single spin.
#[derive(Clone, Debug)]
pub struct SpinOperators {
    pub plus: ComplexMatrix,
    pub minus: ComplexMatrix,
    pub j3: ComplexMatrix,
}

impl SpinOperators {
    /// `J1 = (J+ + J-) / 2`.
    pub fn j1(&self) -> ComplexMatrix {
        (&self.plus + &self.minus).scale(Complex64::new(0.5, 0.0))
    }

    /// `J2 = (J+ - J-) / 2i`.
    pub fn j2(&self) -> ComplexMatrix {
        (&self.plus - &self.minus).scale(Complex64::new(0.0, -0.5))
    }
}

pub fn build_spin_operators(sys: &SpinSystem) -> SpinOperators {
    let d = sys.dim();
    let j = sys.j();
    let two_j = sys.two_j as f64;
    let mut plus = ComplexMatrix::zeros(d, d);
    let mut j3 = ComplexMatrix::zeros(d, d);
    for n in 0..d {
        j3[(n, n)] = Complex64::new(-j + n as f64, 0.0);
        if n + 1 < d {
            let nf = n as f64;
            plus[(n + 1, n)] = Complex64::new(((two_j - nf) * (nf + 1.0)).sqrt(), 0.0);
        }
    }
    let minus = plus.transpose();
    SpinOperators { plus, minus, j3 }
}

/// `sqrt(binom(2j, n))` for `n = 0..=2j`, by cumulative ratios.
pub fn sqrt_binomials(two_j: u32) -> Vec<f64> {
    let mut b = Vec::with_capacity(two_j as usize + 1);
    let mut acc = 1.0f64;
    b.push(1.0);
    for n in 0..two_j {
        acc *= (two_j - n) as f64 / (n + 1) as f64;
        b.push(acc.sqrt());
    }
    b
}

/// Normalised coherent state `|s>`: component `n` is
/// `binom(2j,n)^{1/2} s^n / (1 + |s|^2)^j`.
pub fn coherent_vector(sys: &SpinSystem, s: Complex64) -> Result<Vec<Complex64>> {
    if !(s.re.is_finite() && s.im.is_finite()) {
        return Err(Error::ScaleOverflow { modulus: s.norm(), two_j: sys.two_j });
    }
    let norm = (1.0 + s.norm_sqr()).sqrt();
    // (s / norm)^n (1 / norm)^(2j - n): every factor has modulus <= 1.
    let up = s / norm;
    let down = 1.0 / norm;
    let two_j = sys.two_j as usize;
    let mut out = Vec::with_capacity(two_j + 1);
    let mut up_pow = Complex64::new(1.0, 0.0);
    for (n, sb) in sqrt_binomials(sys.two_j).into_iter().enumerate() {
        let v = up_pow * down.powi((two_j - n) as i32) * sb;
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::ScaleOverflow { modulus: s.norm(), two_j: sys.two_j });
        }
        out.push(v);
        up_pow *= up;
    }
    Ok(out)
}

/// `<s_eta | s_mu>` in closed form.
pub fn coherent_overlap(sys: &SpinSystem, s_eta: Complex64, s_mu: Complex64) -> Complex64 {
    let base = (1.0 + s_eta.conj() * s_mu) / ((1.0 + s_eta.norm_sqr()) * (1.0 + s_mu.norm_sqr())).sqrt();
    base.powi(sys.two_j as i32)
}

/// `|s_x> (x) |s_y>` on the joint space.
pub fn product_coherent(sys: &SpinSystem, label: &CoherentLabel) -> Result<Vec<Complex64>> {
    Ok(kron_vec(&coherent_vector(sys, label.sx)?, &coherent_vector(sys, label.sy)?))
}

/// Value, gradient and Hessian of a classical symbol at one phase point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymbolJet {
    pub value: Complex64,
    pub grad: [Complex64; 4],
    pub hess: [[Complex64; 4]; 4],
}

/// A holomorphic function `H~(u_x, u_y, v_x, v_y)` with exact first and second
/// derivatives.
pub trait ClassicalSymbol: Send + Sync {
    fn value(&self, w: &PhasePoint) -> Result<Complex64>;
    fn jet(&self, w: &PhasePoint) -> Result<SymbolJet>;
}

/// A two-spin Hamiltonian: the joint-space operator together with its
/// classical symbol.
#[derive(Clone)]
pub struct HamiltonianModel {
    pub operator: ComplexMatrix,
    pub symbol: Arc<dyn ClassicalSymbol>,
    pub label: String,
}

impl HamiltonianModel {
    pub fn htilde(&self, w: &PhasePoint) -> Result<Complex64> {
        self.symbol.value(w)
    }

    pub fn grad(&self, w: &PhasePoint) -> Result<[Complex64; 4]> {
        Ok(self.symbol.jet(w)?.grad)
    }

    pub fn hess(&self, w: &PhasePoint) -> Result<[[Complex64; 4]; 4]> {
        Ok(self.symbol.jet(w)?.hess)
    }

    pub fn jet(&self, w: &PhasePoint) -> Result<SymbolJet> {
        self.symbol.jet(w)
    }
}

impl fmt::Debug for HamiltonianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianModel")
            .field("label", &self.label)
            .field("dim", &self.operator.rows())
            .finish()
    }
}

/// Symbol of an arbitrary joint-space operator, `(v|H|u) / prod_k (1 + u_k v_k)^{2j}`,
/// evaluated from the nonzero operator entries.
#[derive(Clone, Debug)]
struct OperatorSymbol {
    two_j: u32,
    sqrt_binom: Vec<f64>,
    /// `(m_x, m_y, n_x, n_y, h)` with row `(m_x, m_y)` and column `(n_x, n_y)`.
    entries: Vec<(usize, usize, usize, usize, Complex64)>,
}

/// Unnormalised polynomial component vectors and their first two derivatives.
struct PolyJet {
    p: Vec<Complex64>,
    d1: Vec<Complex64>,
    d2: Vec<Complex64>,
}

impl OperatorSymbol {
    fn poly(&self, z: Complex64) -> Result<PolyJet> {
        let d = self.two_j as usize + 1;
        let mut pow = Vec::with_capacity(d);
        let mut acc = Complex64::new(1.0, 0.0);
        for _ in 0..d {
            pow.push(acc);
            acc *= z;
        }
        let zero = Complex64::new(0.0, 0.0);
        let mut p = Vec::with_capacity(d);
        let mut d1 = Vec::with_capacity(d);
        let mut d2 = Vec::with_capacity(d);
        for n in 0..d {
            let sb = self.sqrt_binom[n];
            let nf = n as f64;
            p.push(pow[n] * sb);
            d1.push(if n >= 1 { pow[n - 1] * (sb * nf) } else { zero });
            d2.push(if n >= 2 { pow[n - 2] * (sb * nf * (nf - 1.0)) } else { zero });
        }
        let finite = p.iter().chain(&d1).chain(&d2).all(|v| v.re.is_finite() && v.im.is_finite());
        if !finite {
            return Err(Error::ScaleOverflow { modulus: z.norm(), two_j: self.two_j });
        }
        Ok(PolyJet { p, d1, d2 })
    }

    /// Chart denominators `1 + u_k v_k`, rejecting the singular set.
    fn chart(w: &PhasePoint) -> Result<[Complex64; 2]> {
        let den = [1.0 + w[0] * w[2], 1.0 + w[1] * w[3]];
        for (k, d) in den.iter().enumerate() {
            if d.norm() < 1e-12 {
                return Err(Error::ChartSingularity { subsystem: if k == 0 { 'x' } else { 'y' }, modulus: d.norm() });
            }
        }
        Ok(den)
    }
}

impl ClassicalSymbol for OperatorSymbol {
    fn value(&self, w: &PhasePoint) -> Result<Complex64> {
        let den = Self::chart(w)?;
        let jets = [self.poly(w[0])?, self.poly(w[1])?, self.poly(w[2])?, self.poly(w[3])?];
        let mut n = Complex64::new(0.0, 0.0);
        for &(mx, my, nx, ny, h) in &self.entries {
            n += h * jets[2].p[mx] * jets[3].p[my] * jets[0].p[nx] * jets[1].p[ny];
        }
        let norm = (den[0] * den[1]).powi(-(self.two_j as i32));
        Ok(n * norm)
    }

    fn jet(&self, w: &PhasePoint) -> Result<SymbolJet> {
        let den = Self::chart(w)?;
        let jets = [self.poly(w[0])?, self.poly(w[1])?, self.poly(w[2])?, self.poly(w[3])?];
        let zero = Complex64::new(0.0, 0.0);
        let mut n0 = zero;
        let mut n1 = [zero; 4];
        let mut n2 = [[zero; 4]; 4];
        for &(mx, my, nx, ny, h) in &self.entries {
            // variable order u_x, u_y, v_x, v_y -> ket x, ket y, bra x, bra y
            let idx = [nx, ny, mx, my];
            let f: [Complex64; 4] = std::array::from_fn(|i| jets[i].p[idx[i]]);
            let g: [Complex64; 4] = std::array::from_fn(|i| jets[i].d1[idx[i]]);
            let s: [Complex64; 4] = std::array::from_fn(|i| jets[i].d2[idx[i]]);
            n0 += h * f[0] * f[1] * f[2] * f[3];
            for i in 0..4 {
                let others: Complex64 = (0..4).filter(|&l| l != i).map(|l| f[l]).product();
                n1[i] += h * g[i] * others;
                n2[i][i] += h * s[i] * others;
                for k in (i + 1)..4 {
                    let rest: Complex64 = (0..4).filter(|&l| l != i && l != k).map(|l| f[l]).product();
                    let v = h * g[i] * g[k] * rest;
                    n2[i][k] += v;
                    n2[k][i] += v;
                }
            }
        }

        // Normaliser E = prod_k (1 + u_k v_k)^{-2j}, with L = ln E.
        let tj = self.two_j as f64;
        let e = (den[0] * den[1]).powi(-(self.two_j as i32));
        let mut l1 = [zero; 4];
        let mut l2 = [[zero; 4]; 4];
        for k in 0..2 {
            let (u, v, d) = (w[k], w[k + 2], den[k]);
            l1[k] = -tj * v / d;
            l1[k + 2] = -tj * u / d;
            let d2 = d * d;
            l2[k][k] = tj * v * v / d2;
            l2[k + 2][k + 2] = tj * u * u / d2;
            l2[k][k + 2] = -tj / d2;
            l2[k + 2][k] = -tj / d2;
        }
        let value = n0 * e;
        let grad: [Complex64; 4] = std::array::from_fn(|i| e * (n1[i] + n0 * l1[i]));
        let hess: [[Complex64; 4]; 4] = std::array::from_fn(|i| {
            std::array::from_fn(|k| e * (n2[i][k] + n1[i] * l1[k] + n1[k] * l1[i] + n0 * (l2[i][k] + l1[i] * l1[k])))
        });
        Ok(SymbolJet { value, grad, hess })
    }
}

/// Builds the model whose symbol is the analytic continuation of
/// `<s|H|s>` for the joint-space operator `h`.
pub fn htilde_from_operator(sys: &SpinSystem, h: &ComplexMatrix, label: impl Into<String>) -> Result<HamiltonianModel> {
    let d = sys.dim();
    if h.rows() != d * d || h.cols() != d * d {
        return Err(Error::DimensionMismatch { expected: d * d, found: h.rows() });
    }
    let dev = h.hermitian_deviation();
    if dev > 1e-12 * h.max_abs().max(1.0) {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let mut entries = Vec::new();
    for r in 0..d * d {
        for (c, &z) in h.row(r).iter().enumerate() {
            if z != Complex64::new(0.0, 0.0) {
                entries.push((r / d, r % d, c / d, c % d, z));
            }
        }
    }
    let symbol = OperatorSymbol { two_j: sys.two_j, sqrt_binom: sqrt_binomials(sys.two_j), entries };
    Ok(HamiltonianModel { operator: h.clone(), symbol: Arc::new(symbol), label: label.into() })
}
