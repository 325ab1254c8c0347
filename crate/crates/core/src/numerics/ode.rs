//! Embedded Dormand-Prince 5(4) integrator for complex state vectors.
//!
//! The step controller is the PI variant of Hairer & Wanner (DOPRI5): the
//! local error estimate is measured in the max-norm against
//! `abs_tol + rel_tol * max(|y_n|, |y_{n+1}|)` componentwise. Requested sample
//! times are hit exactly by clipping the step, never by interpolation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-12, initial_step: 1e-3, max_step: f64::INFINITY }
    }
}

impl IntegratorConfig {
    pub fn new(rel_tol: f64, abs_tol: f64, initial_step: f64, max_step: f64) -> Result<Self> {
        let cfg = Self { rel_tol, abs_tol, initial_step, max_step };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Result<Self> {
        Self::new(rel_tol, abs_tol, Self::default().initial_step, f64::INFINITY)
    }

    pub fn with_max_step(mut self, max_step: f64) -> Result<Self> {
        self.max_step = max_step;
        self.initial_step = self.initial_step.min(max_step);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && !x.is_nan();
        if !positive(self.rel_tol) {
            return Err(Error::validation("integrator.rel_tol", "must be > 0"));
        }
        if !positive(self.abs_tol) {
            return Err(Error::validation("integrator.abs_tol", "must be > 0"));
        }
        if !positive(self.initial_step) || !self.initial_step.is_finite() {
            return Err(Error::validation("integrator.initial_step", "must be finite and > 0"));
        }
        if !positive(self.max_step) || self.initial_step > self.max_step {
            return Err(Error::validation("integrator.max_step", "must be > 0 and >= initial_step"));
        }
        Ok(())
    }
}

/// Where the solution is recorded.
#[derive(Clone, Copy, Debug)]
pub enum Sampling<'a> {
    /// Every accepted step, including both end points.
    Steps,
    /// Exactly these times (ascending, inside the span).
    At(&'a [f64]),
}

#[derive(Clone, Debug, Default)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<Complex64>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl OdeSolution {
    pub fn last(&self) -> Option<(f64, &[Complex64])> {
        self.times.last().map(|&t| (t, self.states.last().unwrap().as_slice()))
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Integrates `y' = field(t, y)` from `t_span.0` to `t_span.1`.
///
/// The field writes the derivative into its third argument; any error it
/// returns aborts the integration and is passed through unchanged.
pub fn adaptive_rk<F>(
    mut field: F,
    y0: &[Complex64],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
    sampling: Sampling<'_>,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]) -> Result<()>,
{
    cfg.validate()?;
    let (t0, t1) = t_span;
    if !(t1 >= t0) {
        return Err(Error::validation("t_span", "end time must not precede start time"));
    }
    let targets: Vec<f64> = match sampling {
        Sampling::Steps => vec![t1],
        Sampling::At(ts) => {
            if ts.windows(2).any(|w| !(w[1] >= w[0])) || ts.iter().any(|&t| t < t0 || t > t1) {
                return Err(Error::validation("sample_times", "must be ascending and inside the span"));
            }
            ts.to_vec()
        }
    };
    let record_steps = matches!(sampling, Sampling::Steps);

    let n = y0.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut sol = OdeSolution::default();
    let mut y = y0.to_vec();
    let mut t = t0;
    if record_steps {
        sol.times.push(t0);
        sol.states.push(y.clone());
    }

    let mut k1 = vec![zero; n];
    let mut k2 = vec![zero; n];
    let mut k3 = vec![zero; n];
    let mut k4 = vec![zero; n];
    let mut k5 = vec![zero; n];
    let mut k6 = vec![zero; n];
    let mut k7 = vec![zero; n];
    let mut stage = vec![zero; n];
    let mut y_new = vec![zero; n];

    field(t, &y, &mut k1)?;
    let mut h = cfg.initial_step.min(cfg.max_step);
    let mut err_old: f64 = 1e-4;
    let mut rejected_last = false;

    for &target in &targets {
        while t < target {
            let remaining = target - t;
            let mut h_try = h.min(cfg.max_step);
            // Avoid leaving a sliver shorter than a tenth of a step.
            let clipped = h_try >= remaining || remaining - h_try < 0.1 * h_try;
            if clipped {
                h_try = remaining;
            }
            if h_try <= 1e-14 * t.abs().max(1.0) && !clipped {
                return Err(Error::StepSizeUnderflow { t, h: h_try });
            }

            let combo = |out: &mut [Complex64], parts: &[(&[Complex64], f64)]| {
                for i in 0..n {
                    let mut acc = zero;
                    for (k, a) in parts {
                        acc += k[i] * *a;
                    }
                    out[i] = y[i] + acc * h_try;
                }
            };
            combo(&mut stage, &[(&k1, A21)]);
            field(t + C2 * h_try, &stage, &mut k2)?;
            combo(&mut stage, &[(&k1, A31), (&k2, A32)]);
            field(t + C3 * h_try, &stage, &mut k3)?;
            combo(&mut stage, &[(&k1, A41), (&k2, A42), (&k3, A43)]);
            field(t + C4 * h_try, &stage, &mut k4)?;
            combo(&mut stage, &[(&k1, A51), (&k2, A52), (&k3, A53), (&k4, A54)]);
            field(t + C5 * h_try, &stage, &mut k5)?;
            combo(&mut stage, &[(&k1, A61), (&k2, A62), (&k3, A63), (&k4, A64), (&k5, A65)]);
            field(t + h_try, &stage, &mut k6)?;
            combo(&mut y_new, &[(&k1, A71), (&k3, A73), (&k4, A74), (&k5, A75), (&k6, A76)]);
            field(t + h_try, &y_new, &mut k7)?;

            let mut err: f64 = 0.0;
            for i in 0..n {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h_try;
                let scale = cfg.abs_tol + cfg.rel_tol * y[i].norm().max(y_new[i].norm());
                err = err.max(e.norm() / scale);
            }
            if !err.is_finite() {
                err = 1e10;
            }

            if err <= 1.0 {
                let factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(-EXPO) * err_old.powf(BETA)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                err_old = err.max(1e-4);
                t = if clipped { target } else { t + h_try };
                std::mem::swap(&mut y, &mut y_new);
                std::mem::swap(&mut k1, &mut k7);
                sol.accepted_steps += 1;
                if record_steps {
                    sol.times.push(t);
                    sol.states.push(y.clone());
                }
                let grown = h_try * if rejected_last { factor.min(1.0) } else { factor };
                // A step clipped to hit a sample says nothing about the
                // admissible size; keep the previous proposal in that case.
                h = if clipped { h.max(grown) } else { grown };
                rejected_last = false;
            } else {
                sol.rejected_steps += 1;
                let factor = (SAFETY * err.powf(-EXPO)).clamp(MIN_FACTOR, 1.0);
                h = h_try * factor;
                rejected_last = true;
                if h <= 1e-14 * t.abs().max(1.0) {
                    return Err(Error::StepSizeUnderflow { t, h });
                }
            }
        }
        if !record_steps {
            sol.times.push(target);
            sol.states.push(y.clone());
        }
    }
    Ok(sol)
}
