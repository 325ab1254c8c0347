//! Finite-difference checks for holomorphic functions of several complex
//! variables.

use num_complex::Complex64;

/// Central differences of `f` with respect to variable `i`, taken along the
/// real and along the imaginary axis. For a holomorphic `f` both estimate the
/// same complex partial derivative.
pub fn complex_partial<F>(f: F, x: &[Complex64], i: usize, step: f64) -> (Complex64, Complex64)
where
    F: Fn(&[Complex64]) -> Complex64,
{
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    let h = Complex64::new(step, 0.0);
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    let along_re = (f(&xp) - f(&xm)) / (2.0 * h);
    let ih = Complex64::new(0.0, step);
    xp[i] = x[i] + ih;
    xm[i] = x[i] - ih;
    let along_im = (f(&xp) - f(&xm)) / (2.0 * ih);
    (along_re, along_im)
}

/// Largest relative mismatch between `grad` and central differences of `f`
/// over all variables and both axes. Relative to `max(|grad|, 1)` per entry.
pub fn gradient_mismatch<F>(f: F, grad: &[Complex64], x: &[Complex64], step: f64) -> f64
where
    F: Fn(&[Complex64]) -> Complex64,
{
    let scale = grad.iter().map(|g| g.norm()).fold(1.0, f64::max);
    (0..x.len())
        .map(|i| {
            let (a, b) = complex_partial(&f, x, i, step);
            ((a - grad[i]).norm()).max((b - grad[i]).norm()) / scale
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_partials() {
        let f = |z: &[Complex64]| z[0] * z[0] * z[1];
        let x = [Complex64::new(0.3, 0.7), Complex64::new(-1.1, 0.2)];
        let grad = [2.0 * x[0] * x[1], x[0] * x[0]];
        assert!(gradient_mismatch(f, &grad, &x, 1e-5) < 1e-9);
    }

    #[test]
    fn non_holomorphic_is_detected() {
        let f = |z: &[Complex64]| z[0].conj();
        let (a, b) = complex_partial(f, &[Complex64::new(0.5, 0.5)], 0, 1e-5);
        assert!((a - b).norm() > 1.0);
    }
}
