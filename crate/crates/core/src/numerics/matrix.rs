//! Dense complex matrices in row-major storage.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Relative determinant threshold used by [`small_inverse`].
pub const DEGENERACY_THRESHOLD: f64 = 1e-13;

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d: Vec<Complex64> = diag.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_diagonal(&d)
    }

    /// Builds a matrix from row-major entries.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count must equal rows * cols");
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[Complex64]>>(rows: &[R]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: nrows, cols: ncols, data }
    }

    /// Real-valued convenience constructor, mostly for tests and examples.
    pub fn from_real_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.as_ref().iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn adjoint(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].conj();
            }
        }
        t
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * factor).collect() }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - self^dagger`.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut dev: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Sub-block of size `nr x nc` starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        let mut b = Self::zeros(nr, nc);
        for i in 0..nr {
            for j in 0..nc {
                b[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        b
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    /// Determinant. Closed-form cofactor expansion up to 4x4, LU beyond.
    pub fn det(&self) -> Complex64 {
        assert!(self.is_square(), "determinant of a non-square matrix");
        let m = |i, j| self[(i, j)];
        match self.rows {
            0 => ONE,
            1 => m(0, 0),
            2 => m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0),
            3 => det3(self, [0, 1, 2], [0, 1, 2]),
            4 => {
                let mut acc = ZERO;
                for c in 0..4 {
                    let cols: Vec<usize> = (0..4).filter(|&k| k != c).collect();
                    let minor = det3(self, [1, 2, 3], [cols[0], cols[1], cols[2]]);
                    let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                    acc += m(0, c) * minor * sign;
                }
                // Cofactor expansion loses accuracy when the first row is
                // tiny compared to the rest; LU with pivoting is the fallback.
                let scale = self.max_abs().powi(4);
                if acc.norm() < 1e-8 * scale {
                    self.det_lu()
                } else {
                    acc
                }
            }
            _ => self.det_lu(),
        }
    }

    /// Determinant by LU factorisation with partial pivoting (largest modulus).
    pub fn det_lu(&self) -> Complex64 {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = ONE;
        for k in 0..n {
            let pivot = (k..n)
                .max_by(|&p, &q| a[p * n + k].norm().total_cmp(&a[q * n + k].norm()))
                .unwrap();
            if a[pivot * n + k] == ZERO {
                return ZERO;
            }
            if pivot != k {
                for c in 0..n {
                    a.swap(k * n + c, pivot * n + c);
                }
                det = -det;
            }
            let akk = a[k * n + k];
            det *= akk;
            for r in (k + 1)..n {
                let f = a[r * n + k] / akk;
                if f != ZERO {
                    for c in k..n {
                        let t = a[k * n + c];
                        a[r * n + c] -= f * t;
                    }
                }
            }
        }
        det
    }

    /// General inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch { expected: self.rows, found: self.cols });
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for k in 0..n {
            let pivot = (k..n)
                .max_by(|&p, &q| a[(p, k)].norm().total_cmp(&a[(q, k)].norm()))
                .unwrap();
            if a[(pivot, k)] == ZERO {
                return Err(Error::SingularMatrix { determinant: 0.0 });
            }
            if pivot != k {
                for c in 0..n {
                    a.data.swap(k * n + c, pivot * n + c);
                    inv.data.swap(k * n + c, pivot * n + c);
                }
            }
            let p = a[(k, k)].inv();
            for c in 0..n {
                a[(k, c)] *= p;
                inv[(k, c)] *= p;
            }
            for r in 0..n {
                if r == k {
                    continue;
                }
                let f = a[(r, k)];
                if f == ZERO {
                    continue;
                }
                for c in 0..n {
                    let (ak, ik) = (a[(k, c)], inv[(k, c)]);
                    a[(r, c)] -= f * ak;
                    inv[(r, c)] -= f * ik;
                }
            }
        }
        Ok(inv)
    }
}

fn det3(m: &ComplexMatrix, r: [usize; 3], c: [usize; 3]) -> Complex64 {
    let e = |i: usize, j: usize| m[(r[i], c[j])];
    e(0, 0) * (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1)) - e(0, 1) * (e(1, 0) * e(2, 2) - e(1, 2) * e(2, 0))
        + e(0, 2) * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0))
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, b) in orow.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        ComplexMatrix { rows: self.rows, cols: self.cols, data }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        ComplexMatrix { rows: self.rows, cols: self.cols, data }
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Kronecker product in the standard block layout: entry `(i*p + k, j*q + l)`
/// equals `a[i,j] * b[k,l]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (m, n, p, q) = (a.rows, a.cols, b.rows, b.cols);
    let mut out = ComplexMatrix::zeros(m * p, n * q);
    for i in 0..m {
        for j in 0..n {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..p {
                for l in 0..q {
                    out[(i * p + k, j * q + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker product of two vectors.
pub fn kron_vec(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)).collect()
}

/// Inverse of a 2x2 or 4x4 matrix, refusing near-degenerate input.
///
/// The matrix is treated as singular when `|det m| <= 1e-13 * ||m||_F^n`.
pub fn small_inverse(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = m.rows();
    if !m.is_square() || !(n == 2 || n == 4) {
        return Err(Error::DimensionMismatch { expected: if n < 3 { 2 } else { 4 }, found: n });
    }
    let det = m.det();
    let threshold = DEGENERACY_THRESHOLD * m.frobenius_norm().powi(n as i32);
    if !(det.norm() > threshold) {
        return Err(Error::SingularMatrix { determinant: det.norm() });
    }
    if n == 2 {
        let inv_det = det.inv();
        return Ok(ComplexMatrix::from_rows(&[
            [m[(1, 1)] * inv_det, -m[(0, 1)] * inv_det],
            [-m[(1, 0)] * inv_det, m[(0, 0)] * inv_det],
        ]));
    }
    m.inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, k: usize) -> ComplexMatrix {
        let data = (0..r * k).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        ComplexMatrix::from_row_major(r, k, data)
    }

    #[test]
    fn kron_identity_and_diagonal() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4));
        let a = ComplexMatrix::from_real_diagonal(&[1.0, 2.0]);
        let b = ComplexMatrix::from_real_diagonal(&[3.0, 4.0]);
        assert_eq!(kron(&a, &b), ComplexMatrix::from_real_diagonal(&[3.0, 4.0, 6.0, 8.0]));
    }

    #[test]
    fn kron_matches_index_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(&mut rng, 2, 2);
        let b = random(&mut rng, 2, 2);
        let k = kron(&a, &b);
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..2 {
                    for q in 0..2 {
                        assert_eq!(k[(i * 2 + p, j * 2 + q)], a[(i, j)] * b[(p, q)]);
                    }
                }
            }
        }
    }

    #[test]
    fn kron_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random(&mut rng, 2, 3);
            let b = random(&mut rng, 3, 2);
            let cc = random(&mut rng, 2, 2);
            let left = kron(&kron(&a, &b), &cc);
            let right = kron(&a, &kron(&b, &cc));
            assert!(left.max_abs_diff(&right) < 1e-12);
        }
    }

    #[test]
    fn small_inverse_examples() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(small_inverse(&i2).unwrap(), i2);
        let m = ComplexMatrix::from_real_rows(&[[2.0, 0.0], [0.0, 4.0]]);
        let inv = small_inverse(&m).unwrap();
        assert!(inv.max_abs_diff(&ComplexMatrix::from_real_rows(&[[0.5, 0.0], [0.0, 0.25]])) < 1e-15);
    }

    #[test]
    fn small_inverse_residual_on_random_4x4() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let m = &random(&mut rng, 4, 4) + &ComplexMatrix::identity(4).scale(c(2.0, 0.0));
            let inv = small_inverse(&m).unwrap();
            assert!((&m * &inv).max_abs_diff(&ComplexMatrix::identity(4)) < 1e-10);
        }
    }

    #[test]
    fn small_inverse_rejects_singular_and_wrong_size() {
        let m = ComplexMatrix::from_real_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(small_inverse(&m), Err(Error::SingularMatrix { .. })));
        assert!(matches!(small_inverse(&ComplexMatrix::identity(3)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn cofactor_and_lu_determinants_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 1..=6 {
            let m = random(&mut rng, n, n);
            let d1 = m.det();
            let d2 = m.det_lu();
            assert!((d1 - d2).norm() <= 1e-12 * (1.0 + d2.norm()), "n = {n}");
        }
    }

    #[test]
    fn determinant_is_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = random(&mut rng, 4, 4);
        let b = random(&mut rng, 4, 4);
        let lhs = (&a * &b).det();
        assert!((lhs - a.det() * b.det()).norm() < 1e-12 * (1.0 + lhs.norm()));
    }
}
