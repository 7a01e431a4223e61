//! Pulsed Bragg coupling on the `2ħk` momentum ladder.
//!
//! An atom with momentum `p₀ħk` is expanded on the states `|p₀ + 2jħk⟩`.
//! In the frame of the two Bragg beams the amplitudes obey
//!
//! ```text
//! i dc_j/dt = [ω_r (p₀ + 2j)² − j δ(t)] c_j + Ω(t)/2 (e^{iφ} c_{j−1} + e^{−iφ} c_{j+1})
//! ```
//!
//! with `δ(t)` the frequency difference of the beams and `Ω(t)` the two-photon
//! Rabi frequency. An order-`n` transition connects `j = 0` and `j = n`. For
//! `Ω ≪ 8ω_r` the intermediate states can be eliminated, giving an effective
//! two-level coupling `Ω_eff = Ωⁿ / ((8ω_r)ⁿ⁻¹ [(n−1)!]²)` (see
//! [`effective_rabi`]). The full ladder is integrated here; the reduction is only
//! used for initial guesses and as a test oracle.
//!
//! The momentum offset enters the Hamiltonian only as a detuning shift,
//! `transfer(p₀, δ) = transfer(0, δ − 4ω_r p₀)`, up to a global phase.
//!
//! Ensemble quantities are incoherent averages of single-atom transfer over
//! the cloud's Gaussian longitudinal momentum distribution.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::lm::{self, LmOptions};
use crate::ode::{self, OdeError, Tolerance};
use crate::quadrature::{gauss_hermite_normal, simpson};
use crate::source::{bragg_resonance, PhysicalConstants, SourceCloud, SourceError};

/// Edge-state population above which a ladder is considered truncated.
pub const EDGE_OCCUPATION_BOUND: f64 = 1e-4;
/// Allowed deviation of the input norm from one.
pub const NORM_TOLERANCE: f64 = 1e-6;
/// Relative tolerance of the ladder integrator.
pub const LADDER_RTOL: f64 = 1e-8;

const ENSEMBLE_NODES: usize = 40;
/// Quadrature nodes used inside the pulse design search
const DESIGN_NODES: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BraggError {
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),
    #[error("input state is not normalized (norm = {0})")]
    NotNormalized(f64),
    #[error("ladder span [{j_min}, {j_max}] does not leave room around populated states [{lo}, {hi}]")]
    SpanTooSmall { j_min: i32, j_max: i32, lo: i32, hi: i32 },
    #[error("ladder truncated: edge occupation {0:.3e} exceeds 1e-4")]
    Truncation(f64),
    #[error("empty pulse design window: Δp·k/m = {lower:.4e} rad/s is not below ω_r = {upper:.4e} rad/s (cloud too hot)")]
    EmptyWindow { lower: f64, upper: f64 },
    #[error("cannot reach the requested transfer: best ensemble value {0:.4}")]
    TargetUnreachable(f64),
    #[error("probe too short to resolve the cloud: 1/τ = {inverse_tau:.4e} rad/s exceeds 10·Δp·k/m = {limit:.4e} rad/s")]
    ProbeTooShort { inverse_tau: f64, limit: f64 },
    #[error("spectroscopy fit failed: {0}")]
    FitFailed(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    Gaussian,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferTarget {
    /// Beamsplitter, 50 % transfer
    Half,
    /// Mirror, maximal transfer
    Full,
}

/// A two-frequency Bragg pulse, centred on `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BraggPulse {
    pub order: u32,
    pub envelope: Envelope,
    /// 1-σ duration of a Gaussian envelope, or full length of a square one, s
    pub tau: f64,
    /// Peak two-photon Rabi frequency, rad/s
    pub omega_peak: f64,
    /// The envelope is zero outside `|t| > half_window`, s
    pub half_window: f64,
    /// Frequency difference at the pulse centre, rad/s
    pub detuning: f64,
    /// Linear sweep of the frequency difference, rad/s²
    pub chirp: f64,
    /// Relative optical phase of the beams, rad
    pub phase: f64,
}

impl BraggPulse {
    /// Resonant Gaussian pulse truncated at ±4τ.
    pub fn gaussian(order: u32, tau: f64, omega_peak: f64, constants: &PhysicalConstants) -> Result<Self, BraggError> {
        let pulse = Self {
            order,
            envelope: Envelope::Gaussian,
            tau,
            omega_peak,
            half_window: 4.0 * tau,
            detuning: bragg_resonance(order as i64, constants)?,
            chirp: 0.0,
            phase: 0.0,
        };
        pulse.validate()?;
        Ok(pulse)
    }

    /// Resonant square pulse of full length `duration`.
    pub fn square(order: u32, duration: f64, omega_peak: f64, constants: &PhysicalConstants) -> Result<Self, BraggError> {
        let pulse = Self {
            order,
            envelope: Envelope::Square,
            tau: duration,
            omega_peak,
            half_window: duration / 2.0,
            detuning: bragg_resonance(order as i64, constants)?,
            chirp: 0.0,
            phase: 0.0,
        };
        pulse.validate()?;
        Ok(pulse)
    }

    pub fn validate(&self) -> Result<(), BraggError> {
        let bad = |m: String| Err(BraggError::InvalidPulse(m));
        if self.order < 1 {
            return bad("order must be at least 1".into());
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad(format!("duration must be positive, got {}", self.tau));
        }
        if !(self.omega_peak.is_finite() && self.omega_peak >= 0.0) {
            return bad(format!("Rabi frequency must be non-negative, got {}", self.omega_peak));
        }
        match self.envelope {
            Envelope::Gaussian if self.half_window < 4.0 * self.tau * (1.0 - 1e-12) => {
                bad(format!("truncation half-window {} is shorter than 4τ", self.half_window))
            }
            Envelope::Square if (self.half_window - self.tau / 2.0).abs() > 1e-12 * self.tau => {
                bad("square pulse half-window must equal half its length".into())
            }
            _ if !(self.detuning.is_finite() && self.chirp.is_finite() && self.phase.is_finite()) => {
                bad("non-finite detuning law or phase".into())
            }
            _ => Ok(()),
        }
    }

    pub fn with_omega(mut self, omega_peak: f64) -> Self {
        self.omega_peak = omega_peak;
        self
    }

    /// Shifts the frequency difference by `offset` rad/s.
    pub fn with_detuning_offset(mut self, offset: f64) -> Self {
        self.detuning += offset;
        self
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn duration(&self) -> f64 {
        2.0 * self.half_window
    }

    /// Rabi frequency at time `t` relative to the centre.
    ///
    /// Gaussian envelopes are offset so they start and end at zero.
    pub fn rabi(&self, t: f64) -> f64 {
        if t.abs() > self.half_window {
            return 0.0;
        }
        match self.envelope {
            Envelope::Square => self.omega_peak,
            Envelope::Gaussian => {
                let floor = (-0.5 * (self.half_window / self.tau).powi(2)).exp();
                let g = (-0.5 * (t / self.tau).powi(2)).exp();
                self.omega_peak * (g - floor) / (1.0 - floor)
            }
        }
    }

    pub fn detuning_at(&self, t: f64) -> f64 {
        self.detuning + self.chirp * t
    }

    /// Pulse area `∫Ω dt`, rad.
    pub fn area(&self) -> f64 {
        match self.envelope {
            Envelope::Square => self.omega_peak * self.tau,
            Envelope::Gaussian => simpson(|t| self.rabi(t), -self.half_window, self.half_window, 4000),
        }
    }

    /// Pulse whose evolution undoes this one when applied to the conjugated
    /// final state: reversed detuning law, conjugated coupling phase.
    pub fn time_reversed(&self) -> Self {
        Self { chirp: -self.chirp, phase: -self.phase, ..*self }
    }
}

/// Effective two-level Rabi frequency of an order-`n` transition driven with
/// two-photon Rabi frequency `omega`, in the perturbative limit.
pub fn effective_rabi(omega: f64, order: u32, recoil_frequency: f64) -> f64 {
    let n = order as i32;
    let factorial: f64 = (1..n).map(|k| k as f64).product();
    omega.powi(n) / ((8.0 * recoil_frequency).powi(n - 1) * factorial * factorial)
}

/// Amplitudes on the momentum ladder `|p₀ + 2jħk⟩`, `j ∈ [j_min, j_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderState {
    /// Momentum offset, ħk
    pub p0: f64,
    pub j_min: i32,
    pub amplitudes: Vec<Complex64>,
    /// s
    pub time: f64,
}

impl LadderState {
    /// All population in state `j`.
    pub fn basis(p0: f64, j_min: i32, j_max: i32, j: i32) -> Self {
        assert!(j_min <= j && j <= j_max, "state {j} outside [{j_min}, {j_max}]");
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); (j_max - j_min + 1) as usize];
        amplitudes[(j - j_min) as usize] = Complex64::new(1.0, 0.0);
        Self { p0, j_min, amplitudes, time: 0.0 }
    }

    /// Default ladder for an order-`n` pulse, `j ∈ [−(n+3), n+3]`.
    pub fn for_order(order: u32, p0: f64, j: i32) -> Self {
        let w = order as i32 + 3;
        Self::basis(p0, -w, w, j)
    }

    pub fn j_max(&self) -> i32 {
        self.j_min + self.amplitudes.len() as i32 - 1
    }

    pub fn amplitude(&self, j: i32) -> Complex64 {
        if j < self.j_min || j > self.j_max() {
            Complex64::new(0.0, 0.0)
        } else {
            self.amplitudes[(j - self.j_min) as usize]
        }
    }

    pub fn population(&self, j: i32) -> f64 {
        self.amplitude(j).norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn edge_occupation(&self) -> f64 {
        let first = self.amplitudes.first().map_or(0.0, |c| c.norm_sqr());
        let last = if self.amplitudes.len() > 1 {
            self.amplitudes.last().map_or(0.0, |c| c.norm_sqr())
        } else {
            0.0
        };
        first + last
    }

    pub fn conj(&self) -> Self {
        Self { amplitudes: self.amplitudes.iter().map(|c| c.conj()).collect(), ..self.clone() }
    }

    fn populated_range(&self) -> Option<(i32, i32)> {
        let idx: Vec<i32> = self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm_sqr() > 1e-12)
            .map(|(i, _)| self.j_min + i as i32)
            .collect();
        Some((*idx.first()?, *idx.last()?))
    }
}

/// Integrates the ladder over the full truncated envelope of `pulse`.
pub fn evolve_ladder(
    pulse: &BraggPulse,
    initial: &LadderState,
    constants: &PhysicalConstants,
) -> Result<LadderState, BraggError> {
    pulse.validate()?;
    let norm = initial.norm();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(BraggError::NotNormalized(norm));
    }
    let (lo, hi) = initial.populated_range().ok_or(BraggError::NotNormalized(norm))?;
    if lo - 1 < initial.j_min || hi + 1 > initial.j_max() {
        return Err(BraggError::SpanTooSmall { j_min: initial.j_min, j_max: initial.j_max(), lo, hi });
    }
    let mut y = pack(&initial.amplitudes);
    propagate(pulse, initial.p0, initial.j_min, constants.recoil_frequency(), &mut y)?;
    let out = LadderState {
        p0: initial.p0,
        j_min: initial.j_min,
        amplitudes: unpack(&y),
        time: initial.time + pulse.duration(),
    };
    let edge = out.edge_occupation();
    if edge > EDGE_OCCUPATION_BOUND {
        return Err(BraggError::Truncation(edge));
    }
    Ok(out)
}

fn pack(c: &[Complex64]) -> Vec<f64> {
    c.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn unpack(y: &[f64]) -> Vec<Complex64> {
    y.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

fn ladder_tolerance(pulse: &BraggPulse) -> Tolerance {
    let h = match pulse.envelope {
        Envelope::Gaussian => pulse.tau / 4.0,
        Envelope::Square => pulse.tau / 8.0,
    };
    Tolerance::new(LADDER_RTOL, 1e-11).with_max_step(h)
}

/// Schrödinger-picture propagation across `[−half_window, half_window]`.
fn propagate(pulse: &BraggPulse, p0: f64, j_min: i32, wr: f64, y: &mut [f64]) -> Result<(), OdeError> {
    let dim = y.len() / 2;
    let js: Vec<f64> = (0..dim).map(|i| (j_min + i as i32) as f64).collect();
    let kinetic: Vec<f64> = js.iter().map(|j| wr * (p0 + 2.0 * j).powi(2)).collect();
    let (s, c) = pulse.phase.sin_cos();
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let half = 0.5 * pulse.rabi(t);
        let delta = pulse.detuning_at(t);
        for i in 0..dim {
            let d = kinetic[i] - js[i] * delta;
            let (re, im) = (y[2 * i], y[2 * i + 1]);
            // H c = d c + Ω/2 (e^{iφ} c_{i-1} + e^{-iφ} c_{i+1})
            let mut hr = d * re;
            let mut hi = d * im;
            if i > 0 {
                let (a, b) = (y[2 * i - 2], y[2 * i - 1]);
                hr += half * (c * a - s * b);
                hi += half * (c * b + s * a);
            }
            if i + 1 < dim {
                let (a, b) = (y[2 * i + 2], y[2 * i + 3]);
                hr += half * (c * a + s * b);
                hi += half * (c * b - s * a);
            }
            // dc/dt = -i H c
            dy[2 * i] = hi;
            dy[2 * i + 1] = -hr;
        }
    };
    ode::integrate(rhs, -pulse.half_window, pulse.half_window, y, ladder_tolerance(pulse))?;
    Ok(())
}

/// Pulse response restricted to the two coupled states `j = 0` and `j = n`,
/// in the interaction picture referenced to the pulse centre.
///
/// `m[out][in]`, index 0 is `j = 0`, index 1 is `j = n`. Free evolution
/// phases accumulated across the window are removed, so the matrix acts as an
/// instantaneous kick at the pulse centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseResponse {
    pub m: [[Complex64; 2]; 2],
}

impl PulseResponse {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self { m: [[one, zero], [zero, one]] }
    }

    /// Ideal two-level rotation by `theta` with zero laser phase.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        let d = Complex64::new(c, 0.0);
        let o = Complex64::new(0.0, -s);
        Self { m: [[d, o], [o, d]] }
    }

    pub fn transfer_up(&self) -> f64 {
        self.m[1][0].norm_sqr()
    }
}

/// Pulse response for an atom at momentum offset `p0`, growing the ladder
/// when the default span truncates.
pub fn pulse_response(pulse: &BraggPulse, p0: f64, constants: &PhysicalConstants) -> Result<PulseResponse, BraggError> {
    pulse.validate()?;
    let n = pulse.order as i32;
    let wr = constants.recoil_frequency();
    let mut pad = 3;
    loop {
        let j_min = -pad;
        let j_max = n + pad;
        let mut columns = [[Complex64::new(0.0, 0.0); 2]; 2];
        let mut truncated = None;
        for (col, j_in) in [0, n].into_iter().enumerate() {
            let start = LadderState::basis(p0, j_min, j_max, j_in);
            let mut y = pack(&start.amplitudes);
            propagate(pulse, p0, j_min, wr, &mut y)?;
            let out = LadderState { amplitudes: unpack(&y), ..start };
            let edge = out.edge_occupation();
            if edge > EDGE_OCCUPATION_BOUND {
                truncated = Some(edge);
                break;
            }
            for (row, j_out) in [0, n].into_iter().enumerate() {
                columns[row][col] = out.amplitude(j_out);
            }
        }
        match truncated {
            Some(edge) if pad >= 12 => return Err(BraggError::Truncation(edge)),
            Some(_) => pad += 2,
            None => {
                let phase = |j: i32, from: f64, to: f64| -> f64 {
                    // ∫ [ω_r (p0+2j)² − j δ(t)] dt
                    let jf = j as f64;
                    let lin = pulse.detuning * (to - from) + 0.5 * pulse.chirp * (to * to - from * from);
                    wr * (p0 + 2.0 * jf).powi(2) * (to - from) - jf * lin
                };
                let hw = pulse.half_window;
                let mut m = columns;
                for (row, j_out) in [0, n].into_iter().enumerate() {
                    for (col, j_in) in [0, n].into_iter().enumerate() {
                        let th = phase(j_out, 0.0, hw) + phase(j_in, -hw, 0.0);
                        m[row][col] *= Complex64::from_polar(1.0, th);
                    }
                }
                return Ok(PulseResponse { m });
            }
        }
    }
}

/// Population transferred from `j = 0` to `j = n` for a single atom.
pub fn single_atom_transfer(pulse: &BraggPulse, p0: f64, constants: &PhysicalConstants) -> Result<f64, BraggError> {
    pulse.validate()?;
    let n = pulse.order as i32;
    let wr = constants.recoil_frequency();
    let mut pad = 3;
    loop {
        let start = LadderState::basis(p0, -pad, n + pad, 0);
        let mut y = pack(&start.amplitudes);
        propagate(pulse, p0, -pad, wr, &mut y)?;
        let out = LadderState { amplitudes: unpack(&y), ..start };
        let edge = out.edge_occupation();
        if edge <= EDGE_OCCUPATION_BOUND {
            return Ok(out.population(n));
        }
        if pad >= 12 {
            return Err(BraggError::Truncation(edge));
        }
        pad += 2;
    }
}

/// Mean transfer over a Gaussian longitudinal momentum distribution of 1-σ
/// width `width` (ħk).
pub fn ensemble_transfer(pulse: &BraggPulse, width: f64, constants: &PhysicalConstants) -> Result<f64, BraggError> {
    quadrature_transfer(pulse, width, constants, ENSEMBLE_NODES)
}

fn quadrature_transfer(
    pulse: &BraggPulse,
    width: f64,
    constants: &PhysicalConstants,
    nodes: usize,
) -> Result<f64, BraggError> {
    if width == 0.0 {
        return single_atom_transfer(pulse, 0.0, constants);
    }
    let (nodes, weights) = gauss_hermite_normal(nodes);
    nodes
        .par_iter()
        .zip(weights.par_iter())
        .map(|(x, w)| single_atom_transfer(pulse, width * x, constants).map(|t| w * t))
        .try_reduce(|| 0.0, |a, b| Ok(a + b))
}

/// Bounds of the pulse design window `Δp·k/m < 1/τ < ω_r`, rad/s.
pub fn design_window(cloud: &SourceCloud, constants: &PhysicalConstants) -> (f64, f64) {
    let wr = constants.recoil_frequency();
    (2.0 * wr * cloud.longitudinal_width, wr)
}

/// Gaussian pulse of order `n` maximising (`Full`) or halving (`Half`) the
/// ensemble-mean transfer for `cloud`.
///
/// The duration is chosen by a bounded scalar search over
/// `τ ∈ [0.2/ω_r, min(1/(Δp·k/m), 2.5/ω_r)]` and the peak Rabi frequency by
/// a 1-D search at each duration. For clouds near the Doppler limit the
/// optimum lies below the nominal Bragg-regime bound `1/τ < ω_r`.
pub fn design_pulse(
    order: u32,
    target: TransferTarget,
    cloud: &SourceCloud,
    constants: &PhysicalConstants,
) -> Result<BraggPulse, BraggError> {
    let (full, eff) = design_mirror(order, cloud, constants)?;
    match target {
        TransferTarget::Full => Ok(full),
        TransferTarget::Half => halve(&full, eff, cloud.longitudinal_width, constants),
    }
}

/// Beamsplitter and mirror sharing one duration, `(half, full)`.
pub fn design_pulse_pair(
    order: u32,
    cloud: &SourceCloud,
    constants: &PhysicalConstants,
) -> Result<(BraggPulse, BraggPulse), BraggError> {
    let (full, eff) = design_mirror(order, cloud, constants)?;
    Ok((halve(&full, eff, cloud.longitudinal_width, constants)?, full))
}

fn design_mirror(order: u32, cloud: &SourceCloud, constants: &PhysicalConstants) -> Result<(BraggPulse, f64), BraggError> {
    cloud.validate()?;
    if order < 1 {
        return Err(BraggError::InvalidPulse("order must be at least 1".into()));
    }
    let (lower, upper) = design_window(cloud, constants);
    if lower >= upper {
        return Err(BraggError::EmptyWindow { lower, upper });
    }
    let wr = constants.recoil_frequency();
    let width = cloud.longitudinal_width;
    let tau_lo = 0.2 / wr;
    let tau_hi = if lower > 0.0 { (1.0 / lower).min(2.5 / wr) } else { 2.5 / wr };

    let best_at = |tau: f64| -> Result<(f64, f64), BraggError> { optimise_rabi(order, tau, width, constants) };

    // coarse log grid in τ, then golden refinement around the best cell
    let grid = 7;
    let ln_lo = tau_lo.ln();
    let ln_hi = tau_hi.ln().max(ln_lo + 1e-9);
    let taus: Vec<f64> = (0..grid).map(|i| (ln_lo + (ln_hi - ln_lo) * i as f64 / (grid - 1) as f64).exp()).collect();
    let mut scored = Vec::with_capacity(grid);
    for &tau in &taus {
        let (omega, eff) = best_at(tau)?;
        scored.push((tau, omega, eff));
    }
    let ibest = scored.iter().enumerate().max_by(|a, b| a.1 .2.total_cmp(&b.1 .2)).map(|(i, _)| i).unwrap_or(0);
    let a = taus[ibest.saturating_sub(1)].ln();
    let b = taus[(ibest + 1).min(grid - 1)].ln();
    let mut best = scored[ibest];
    let refined = golden_max(
        |ln_tau| best_at(ln_tau.exp()).map(|(o, e)| (e, o)),
        a,
        b,
        8,
    )?;
    if refined.1 .0 > best.2 {
        best = (refined.0.exp(), refined.1 .1, refined.1 .0);
    }
    let (tau, omega_full, _) = best;
    let full = BraggPulse::gaussian(order, tau, omega_full, constants)?;
    let eff = ensemble_transfer(&full, width, constants)?;
    Ok((full, eff))
}

fn halve(full: &BraggPulse, eff_full: f64, width: f64, constants: &PhysicalConstants) -> Result<BraggPulse, BraggError> {
    if eff_full < 0.5 {
        return Err(BraggError::TargetUnreachable(eff_full));
    }
    let f = |omega: f64| ensemble_transfer(&full.with_omega(omega), width, constants);
    let (mut lo, mut hi) = (0.0, full.omega_peak);
    let mut mid = 0.5 * hi;
    for _ in 0..60 {
        mid = 0.5 * (lo + hi);
        let t = f(mid)?;
        if (t - 0.5).abs() < 1e-4 {
            break;
        }
        if t < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = f(mid)?;
    if (t - 0.5).abs() > 0.005 {
        return Err(BraggError::TargetUnreachable(t));
    }
    Ok(full.with_omega(mid))
}

/// Best peak Rabi frequency for a Gaussian of 1-σ `tau`; returns
/// `(omega, ensemble transfer)`.
fn optimise_rabi(order: u32, tau: f64, width: f64, constants: &PhysicalConstants) -> Result<(f64, f64), BraggError> {
    let wr = constants.recoil_frequency();
    let probe = BraggPulse::gaussian(order, tau, 1.0, constants)?;
    // π-area guess from the two-level reduction
    let unit_area = probe.area();
    let n = order as i32;
    let factorial: f64 = (1..n).map(|k| k as f64).product();
    let omega_pi = (PI * (8.0 * wr).powi(n - 1) * factorial * factorial / unit_area).powf(1.0 / order as f64);
    let (lo, hi) = if order == 1 { (0.6 * omega_pi, 1.6 * omega_pi) } else { (0.6 * omega_pi, 3.0 * omega_pi) };
    let eval = |omega: f64| quadrature_transfer(&probe.with_omega(omega), width, constants, DESIGN_NODES);

    let cells = 16;
    let mut best = (lo, f64::NEG_INFINITY);
    let step = (hi - lo) / cells as f64;
    let mut ibest: usize = 0;
    for i in 0..=cells {
        let om = lo + step * i as f64;
        let e = eval(om)?;
        if e > best.1 {
            best = (om, e);
            ibest = i;
        }
    }
    let a = lo + step * ibest.saturating_sub(1) as f64;
    let b = lo + step * (ibest + 1).min(cells) as f64;
    let (om, (e, _)) = golden_max(|om| eval(om).map(|e| (e, ())), a, b, 14)?;
    if e > best.1 {
        best = (om, e);
    }
    Ok(best)
}

/// Golden-section maximisation of `f` on `[a, b]`, returning the best
/// abscissa together with the objective and its payload.
fn golden_max<T: Clone, F>(mut f: F, mut a: f64, mut b: f64, iters: usize) -> Result<(f64, (f64, T)), BraggError>
where
    F: FnMut(f64) -> Result<(f64, T), BraggError>,
{
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..iters {
        if fc.0 > fd.0 {
            b = d;
            d = c;
            fd = fc.clone();
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd.clone();
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc.0 > fd.0 { (c, fc) } else { (d, fd) })
}

/// Two-level transfer profile of a resonant first-order Gaussian π-pulse of
/// 1-σ duration `tau`, evaluated at momentum offset `p` (ħk).
fn selection_profile(tau: f64, p: f64, constants: &PhysicalConstants) -> Result<f64, BraggError> {
    let unit = BraggPulse::gaussian(1, tau, 1.0, constants)?;
    let pulse = unit.with_omega(PI / unit.area());
    let mut y = pack(&LadderState::basis(p, 0, 1, 0).amplitudes);
    propagate(&pulse, p, 0, constants.recoil_frequency(), &mut y)?;
    Ok(y[2] * y[2] + y[3] * y[3])
}

/// Keeps the slice of the cloud transferred by a first-order Gaussian
/// π-pulse of 1-σ duration `duration`.
///
/// The transferred sub-ensemble becomes the new cloud: its longitudinal width
/// is the 1-σ of `ρ(p)·T(p)` and the atom number is scaled by `∫ρT`.
pub fn velocity_select(
    duration: f64,
    cloud: &SourceCloud,
    constants: &PhysicalConstants,
) -> Result<SourceCloud, BraggError> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(BraggError::InvalidInput(format!("selection pulse duration must be positive, got {duration}")));
    }
    cloud.validate()?;
    let sigma = cloud.longitudinal_width;
    if sigma == 0.0 {
        let kept = selection_profile(duration, 0.0, constants)?;
        return Ok(SourceCloud { atom_number: (cloud.atom_number * kept).max(1.0), ..cloud.clone() });
    }
    let points = 321;
    let span = 6.0 * sigma;
    let ps: Vec<f64> = (0..points).map(|i| -span + 2.0 * span * i as f64 / (points - 1) as f64).collect();
    let profile: Vec<f64> = ps
        .par_iter()
        .map(|&p| selection_profile(duration, p, constants))
        .collect::<Result<_, _>>()?;
    let dp = ps[1] - ps[0];
    let rho = |p: f64| (-0.5 * (p / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt());
    let trap = |f: &dyn Fn(usize) -> f64| -> f64 {
        (0..points).map(|i| if i == 0 || i == points - 1 { 0.5 * f(i) } else { f(i) }).sum::<f64>() * dp
    };
    let kept = trap(&|i| rho(ps[i]) * profile[i]);
    let mean = trap(&|i| rho(ps[i]) * profile[i] * ps[i]) / kept;
    let var = trap(&|i| rho(ps[i]) * profile[i] * (ps[i] - mean).powi(2)) / kept;
    Ok(SourceCloud {
        atom_number: (cloud.atom_number * kept).max(1.0),
        longitudinal_width: var.sqrt(),
        ..cloud.clone()
    })
}

/// Result of a simulated Bragg spectroscopy scan.
#[derive(Debug, Clone, PartialEq)]
pub struct BraggSpectrum {
    /// Offsets from the probe's nominal frequency difference, rad/s
    pub detunings: Vec<f64>,
    /// Transferred fraction at each detuning
    pub response: Vec<f64>,
    pub amplitude: f64,
    /// rad/s
    pub center: f64,
    /// Fitted 1-σ spectral width, rad/s
    pub width: f64,
    /// Fitted width converted with `detuning = 2k·p/m`, ħk
    pub momentum_width: f64,
}

/// Transfer fraction of `probe` versus detuning offset, with a Gaussian fit
/// converted to a 1-σ momentum width.
pub fn bragg_spectroscopy(
    cloud: &SourceCloud,
    probe: &BraggPulse,
    detuning_grid: &[f64],
    constants: &PhysicalConstants,
) -> Result<BraggSpectrum, BraggError> {
    probe.validate()?;
    cloud.validate()?;
    if detuning_grid.len() < 4 {
        return Err(BraggError::InvalidInput("detuning grid needs at least 4 points".into()));
    }
    let wr = constants.recoil_frequency();
    let sigma = cloud.longitudinal_width;
    let doppler = 4.0 * wr; // rad/s per ħk
    let inverse_tau = 1.0 / probe.tau;
    if sigma > 0.0 && inverse_tau > 10.0 * 2.0 * wr * sigma {
        return Err(BraggError::ProbeTooShort { inverse_tau, limit: 20.0 * wr * sigma });
    }

    let (gmin, gmax) = detuning_grid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let reach = 6.0 * doppler * sigma;
    let step = (inverse_tau / 12.0).min(if sigma > 0.0 { doppler * sigma / 6.0 } else { f64::INFINITY });
    let lo = gmin - reach - step;
    let hi = gmax + reach + step;
    let count = (((hi - lo) / step).ceil() as usize + 1).min(20_001);
    let step = (hi - lo) / (count - 1) as f64;
    let xs: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();
    let base: Vec<f64> = xs
        .par_iter()
        .map(|&x| single_atom_transfer(&probe.with_detuning_offset(x), 0.0, constants))
        .collect::<Result<_, _>>()?;
    let interp = |x: f64| -> f64 {
        let u = ((x - lo) / step).clamp(0.0, (count - 1) as f64);
        let i = (u.floor() as usize).min(count - 2);
        let f = u - i as f64;
        base[i] * (1.0 - f) + base[i + 1] * f
    };

    let response: Vec<f64> = detuning_grid
        .iter()
        .map(|&delta| {
            if sigma == 0.0 {
                return interp(delta);
            }
            let m = 241;
            let half = 6.0 * sigma;
            let dp = 2.0 * half / (m - 1) as f64;
            let mut acc = 0.0;
            let mut norm = 0.0;
            for i in 0..m {
                let p = -half + dp * i as f64;
                let w = (-0.5 * (p / sigma).powi(2)).exp() * if i == 0 || i == m - 1 { 0.5 } else { 1.0 };
                acc += w * interp(delta - doppler * p);
                norm += w;
            }
            acc / norm
        })
        .collect();

    let (amplitude, center, width) = fit_gaussian_peak(detuning_grid, &response)?;
    Ok(BraggSpectrum {
        detunings: detuning_grid.to_vec(),
        response,
        amplitude,
        center,
        width,
        momentum_width: width / doppler,
    })
}

fn fit_gaussian_peak(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64), BraggError> {
    let total: f64 = y.iter().sum();
    if !(total > 0.0) {
        return Err(BraggError::FitFailed("no transfer anywhere on the grid".into()));
    }
    let (imax, ymax) = y.iter().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let mean = x.iter().zip(y).map(|(x, y)| x * y).sum::<f64>() / total;
    let var = x.iter().zip(y).map(|(x, y)| y * (x - mean).powi(2)).sum::<f64>() / total;
    let scale = var.sqrt().max(f64::MIN_POSITIVE);
    // fit in scaled coordinates so the parameters are O(1)
    let xs: Vec<f64> = x.iter().map(|v| v / scale).collect();
    let model = |p: &[f64], xi: f64| -> (f64, [f64; 3]) {
        let u = (xi - p[1]) / p[2];
        let e = (-0.5 * u * u).exp();
        (p[0] * e, [e, p[0] * e * u / p[2], p[0] * e * u * u / p[2]])
    };
    let fit = lm::fit(
        |p, r, j| {
            for (i, (&xi, &yi)) in xs.iter().zip(y).enumerate() {
                let (v, g) = model(p, xi);
                r[i] = v - yi;
                for k in 0..3 {
                    j[(i, k)] = g[k];
                }
            }
        },
        &[ymax, x[imax] / scale, 1.0],
        xs.len(),
        LmOptions::default(),
    )
    .map_err(|e| BraggError::FitFailed(e.to_string()))?;
    if !fit.converged {
        return Err(BraggError::FitFailed(format!("not converged after {} iterations", fit.iterations)));
    }
    Ok((fit.params[0], fit.params[1] * scale, fit.params[2].abs() * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rb() -> PhysicalConstants {
        PhysicalConstants::rb87()
    }

    #[test]
    fn effective_rabi_orders() {
        let wr = 2.0;
        assert_eq!(effective_rabi(3.0, 1, wr), 3.0);
        assert_relative_eq!(effective_rabi(3.0, 2, wr), 9.0 / 16.0);
        assert_relative_eq!(effective_rabi(3.0, 3, wr), 27.0 / (256.0 * 4.0));
    }

    #[test]
    fn gaussian_envelope_starts_at_zero() {
        let c = rb();
        let p = BraggPulse::gaussian(1, 40e-6, 1e4, &c).unwrap();
        assert_eq!(p.rabi(-p.half_window), 0.0);
        assert!(p.rabi(p.half_window).abs() < 1e-12);
        assert_relative_eq!(p.rabi(0.0), 1e4);
        assert!(p.area() < 1e4 * 40e-6 * (2.0 * PI).sqrt());
    }

    #[test]
    fn invalid_pulses_rejected() {
        let c = rb();
        assert!(BraggPulse::gaussian(1, 0.0, 1.0, &c).is_err());
        assert!(BraggPulse::gaussian(0, 1e-5, 1.0, &c).is_err());
        let mut p = BraggPulse::gaussian(1, 1e-5, 1.0, &c).unwrap();
        p.half_window = 1e-5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn non_normalized_input_rejected() {
        let c = rb();
        let p = BraggPulse::gaussian(1, 40e-6, 1e4, &c).unwrap();
        let mut s = LadderState::for_order(1, 0.0, 0);
        s.amplitudes[4] *= 0.5;
        assert!(matches!(evolve_ladder(&p, &s, &c), Err(BraggError::NotNormalized(_))));
    }

    #[test]
    fn span_without_buffer_rejected() {
        let c = rb();
        let p = BraggPulse::gaussian(1, 40e-6, 1e4, &c).unwrap();
        let s = LadderState::basis(0.0, 0, 1, 0);
        assert!(matches!(evolve_ladder(&p, &s, &c), Err(BraggError::SpanTooSmall { .. })));
    }

    #[test]
    fn strong_pulse_on_small_ladder_reports_truncation() {
        let c = rb();
        let wr = c.recoil_frequency();
        // Kapitza-Dirac regime spreads population over many orders
        let p = BraggPulse::square(1, 2.0 / wr, 40.0 * wr, &c).unwrap();
        let s = LadderState::basis(0.0, -2, 3, 0);
        assert!(matches!(evolve_ladder(&p, &s, &c), Err(BraggError::Truncation(_))));
    }

    #[test]
    fn square_pi_pulse_two_level_limit() {
        let c = rb();
        let wr = c.recoil_frequency();
        let omega = 0.05 * wr;
        let p = BraggPulse::square(1, PI / omega, omega, &c).unwrap();
        let out = evolve_ladder(&p, &LadderState::for_order(1, 0.0, 0), &c).unwrap();
        assert!((out.population(1) - 1.0).abs() < 1e-3, "{}", out.population(1));
        assert!((out.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn far_detuned_atom_is_not_transferred() {
        let c = rb();
        let wr = c.recoil_frequency();
        let omega = 0.05 * wr;
        let p = BraggPulse::square(1, PI / omega, omega, &c).unwrap().with_detuning_offset(4.0 * wr);
        let out = evolve_ladder(&p, &LadderState::for_order(1, 0.0, 0), &c).unwrap();
        assert!(out.population(1) < 1e-3);
    }

    #[test]
    fn doppler_shift_is_detuning_shift() {
        let c = rb();
        let wr = c.recoil_frequency();
        let p = BraggPulse::gaussian(2, 1.0 / wr, 4.0 * wr, &c).unwrap();
        let a = single_atom_transfer(&p, 0.07, &c).unwrap();
        let b = single_atom_transfer(&p.with_detuning_offset(-4.0 * wr * 0.07), 0.0, &c).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-6);
    }

    #[test]
    fn pulse_response_is_unitary_on_resonance() {
        let c = rb();
        let wr = c.recoil_frequency();
        let p = BraggPulse::gaussian(1, 2.0 / wr, 0.3 * wr, &c).unwrap();
        let r = pulse_response(&p, 0.0, &c).unwrap();
        let col0 = r.m[0][0].norm_sqr() + r.m[1][0].norm_sqr();
        let col1 = r.m[0][1].norm_sqr() + r.m[1][1].norm_sqr();
        assert!((col0 - 1.0).abs() < 1e-4 && (col1 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn empty_design_window() {
        let c = rb();
        let hot = SourceCloud::thermal(1e5, 2e-6, 1e-4, &c).unwrap();
        match design_pulse(1, TransferTarget::Full, &hot, &c) {
            Err(BraggError::EmptyWindow { lower, upper }) => assert!(lower >= upper),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn velocity_select_broadband_limit() {
        let c = rb();
        let cloud = SourceCloud::condensate(1e5, 0.14, 0.1, 1e-5).unwrap();
        let out = velocity_select(1e-9, &cloud, &c).unwrap();
        assert_relative_eq!(out.longitudinal_width, 0.14, max_relative = 1e-4);
        assert_relative_eq!(out.atom_number, 1e5, max_relative = 1e-4);
        assert!(velocity_select(0.0, &cloud, &c).is_err());
    }
}
