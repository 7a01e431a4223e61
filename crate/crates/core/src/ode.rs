//! Adaptive Dormand-Prince 5(4) integrator for real-valued systems.
//!
//! Complex systems are integrated by interleaving real and imaginary parts.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("exceeded {0} steps")]
    TooManySteps(usize),
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Upper bound on the step size; zero means unbounded.
    pub max_step: f64,
}

impl Tolerance {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, max_steps: 5_000_000, max_step: 0.0 }
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-8, 1e-10)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// difference between 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1` in place.
///
/// `f(t, y, dy)` writes the derivative into `dy`. `t1 < t0` is allowed.
pub fn integrate<F>(mut f: F, t0: f64, t1: f64, y: &mut [f64], tol: Tolerance) -> Result<Stats, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let mut stats = Stats::default();
    if t1 == t0 || n == 0 {
        return Ok(stats);
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];

    let mut t = t0;
    f(t, y, &mut k1);

    let mut h = initial_step(&mut f, t, y, &k1, dir, span, tol, &mut tmp, &mut k2);
    let h_max = if tol.max_step > 0.0 { tol.max_step.min(span) } else { span };
    h = h.min(h_max);

    let mut last_rejected = false;
    while dir * (t1 - t) > 0.0 {
        if stats.accepted + stats.rejected >= tol.max_steps {
            return Err(OdeError::TooManySteps(tol.max_steps));
        }
        let remaining = (t1 - t).abs();
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h < 1e-14 * t.abs().max(span) {
            return Err(OdeError::StepUnderflow { t, h });
        }
        let hs = dir * h;

        for i in 0..n {
            tmp[i] = y[i] + hs * A21 * k1[i];
        }
        f(t + C2 * hs, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * hs, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * hs, &tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * hs, &tmp, &mut k5);
        for i in 0..n {
            tmp[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t1 } else { t + hs };
        f(t + hs, &tmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i] + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        f(t + hs, &ynew, &mut k7);

        let mut err = 0.0;
        for i in 0..n {
            let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            return Err(OdeError::NonFinite(t));
        }

        if err <= 1.0 {
            stats.accepted += 1;
            t = t_new;
            y.copy_from_slice(&ynew);
            std::mem::swap(&mut k1, &mut k7);
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = if last_rejected { h * fac.min(1.0) } else { h * fac };
            h = h.min(h_max);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).max(0.1);
            last_rejected = true;
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite(t));
    }
    Ok(stats)
}

#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    dir: f64,
    span: f64,
    tol: Tolerance,
    y1: &mut [f64],
    f1: &mut [f64],
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    // Hairer, Nørsett & Wanner, II.4
    let n = y.len() as f64;
    let sc = |v: f64| tol.atol + tol.rtol * v.abs();
    let d0 = (y.iter().map(|v| (v / sc(*v)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f0.iter().zip(y).map(|(d, v)| (d / sc(*v)).powi(2)).sum::<f64>() / n).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    for i in 0..y.len() {
        y1[i] = y[i] + dir * h0 * f0[i];
    }
    f(t + dir * h0, y1, f1);
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(y)
        .map(|((a, b), v)| ((a - b) / sc(*v)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6 * span)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_period() {
        let mut y = [1.0, 0.0];
        let tp = 2.0 * std::f64::consts::PI;
        integrate(|_, y, d| { d[0] = y[1]; d[1] = -y[0]; }, 0.0, 10.0 * tp, &mut y, Tolerance::new(1e-10, 1e-12)).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-7, "{y:?}");
        assert!(y[1].abs() < 1e-7);
    }

    #[test]
    fn exponential_decay_backward() {
        let mut y = [(-2.0f64).exp()];
        integrate(|_, y, d| d[0] = -y[0], 2.0, 0.0, &mut y, Tolerance::new(1e-10, 1e-14)).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn zero_span_is_identity() {
        let mut y = [3.0];
        let s = integrate(|_, _, d| d[0] = 1.0, 1.0, 1.0, &mut y, Tolerance::default()).unwrap();
        assert_eq!(y[0], 3.0);
        assert_eq!(s.accepted, 0);
    }

    #[test]
    fn blow_up_is_reported() {
        let mut y = [1.0];
        let r = integrate(|_, y, d| d[0] = y[0] * y[0], 0.0, 2.0, &mut y, Tolerance::default());
        assert!(r.is_err());
    }
}
