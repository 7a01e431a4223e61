//! Sinusoidal fringe fitting and gravity extraction.
//!
//! Fringes are modelled as `P(α) = ½(A + V cos(2π(α − α₀)/period))`. A cosine
//! fit is ambiguous by whole periods in `α₀`, so the reported `α₀` is the
//! branch closest to a reference chirp (normally `k·g_ref/π`).

pub mod lm;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interferometer::FringeScan;
use crate::source::PhysicalConstants;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("under-sampled scan: {0}")]
    UnderSampled(String),
    #[error("fit did not converge after {0} iterations")]
    NotConverged(usize),
    #[error("zero-visibility data: V = {visibility:.3e} is below 3σ = {threshold:.3e}")]
    Degenerate { visibility: f64, threshold: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Lm(#[from] lm::LmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PeriodMode {
    Free,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub period: PeriodMode,
    /// Chirp the reported `α₀` branch is chosen closest to, Hz/s. Defaults
    /// to the centre of the scan.
    pub reference_alpha: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { period: PeriodMode::Free, reference_alpha: None }
    }
}

impl FitOptions {
    /// Free period, branch nearest `k·g_ref/π`.
    pub fn for_constants(constants: &PhysicalConstants) -> Self {
        Self { period: PeriodMode::Free, reference_alpha: Some(constants.wavenumber() * constants.g_ref / PI) }
    }
}

/// Fitted fringe with 1-σ uncertainties scaled by the reduced χ².
///
/// When every sample carries its detected atom count the residuals are
/// weighted by the binomial variance, so `reduced_chi2` is about 1 at the
/// counting-noise limit. Otherwise it is the residual variance per degree of
/// freedom in population units.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub offset: f64,
    pub visibility: f64,
    /// Resonant chirp, Hz/s
    pub alpha0: f64,
    /// Hz/s
    pub period: f64,
    pub sigma_offset: f64,
    pub sigma_visibility: f64,
    pub sigma_alpha0: f64,
    /// Zero when the period was held fixed
    pub sigma_period: f64,
    pub residual_rms: f64,
    pub reduced_chi2: f64,
    pub points: usize,
    pub period_fixed: bool,
    pub converged: bool,
}

impl FringeFit {
    pub fn model(&self, alpha: f64) -> f64 {
        0.5 * (self.offset + self.visibility * (2.0 * PI * (alpha - self.alpha0) / self.period).cos())
    }
}

/// Fits with a free period and the branch nearest the scan centre.
pub fn fit_fringes(scan: &FringeScan, period_guess: f64) -> Result<FringeFit, FitError> {
    fit_fringes_with(scan, period_guess, &FitOptions::default())
}

pub fn fit_fringes_with(scan: &FringeScan, period_guess: f64, options: &FitOptions) -> Result<FringeFit, FitError> {
    let alpha: Vec<f64> = scan.samples.iter().map(|s| s.alpha).collect();
    let pop: Vec<f64> = scan.samples.iter().map(|s| s.population).collect();
    let m = alpha.len();
    if !(period_guess.is_finite() && period_guess > 0.0) {
        return Err(FitError::InvalidInput(format!("period guess must be positive, got {period_guess}")));
    }
    if m < 6 {
        return Err(FitError::UnderSampled(format!("{m} points, need at least 6")));
    }
    if alpha.iter().chain(&pop).any(|v| !v.is_finite()) {
        return Err(FitError::InvalidInput("non-finite sample".into()));
    }
    let (amin, amax) = alpha.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if amax - amin < period_guess * (1.0 - 1e-9) {
        return Err(FitError::UnderSampled(format!(
            "scan spans {:.4e} Hz/s, less than one period ({period_guess:.4e} Hz/s)",
            amax - amin
        )));
    }
    let pmin = pop.iter().cloned().fold(f64::INFINITY, f64::min);
    let pmax = pop.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if pmax - pmin <= 1e-12 {
        return Err(FitError::Degenerate { visibility: 0.0, threshold: 0.0 });
    }

    let center = 0.5 * (amin + amax);
    let u: Vec<f64> = alpha.iter().map(|a| (a - center) / period_guess).collect();
    let fixed = options.period == PeriodMode::Fixed;
    let nparams = if fixed { 3 } else { 4 };
    if m <= nparams {
        return Err(FitError::UnderSampled(format!("{m} points for {nparams} parameters")));
    }

    // p = [A, V, x0, q], α₀ = centre + x0·P_g, period = q·P_g; rows scaled by `w`
    let weighted = |w: Vec<f64>| {
        let (u, pop) = (&u, &pop);
        move |p: &[f64], r: &mut [f64], j: &mut DMatrix<f64>| {
            let q = if fixed { 1.0 } else { p[3] };
            for i in 0..m {
                let arg = 2.0 * PI * (u[i] - p[2]) / q;
                let (s, c) = arg.sin_cos();
                r[i] = w[i] * (0.5 * (p[0] + p[1] * c) - pop[i]);
                j[(i, 0)] = w[i] * 0.5;
                j[(i, 1)] = w[i] * 0.5 * c;
                j[(i, 2)] = w[i] * 0.5 * p[1] * s * 2.0 * PI / q;
                if !fixed {
                    j[(i, 3)] = w[i] * 0.5 * p[1] * s * arg / q;
                }
            }
        }
    };

    let mean = pop.iter().sum::<f64>() / m as f64;
    let start_x0 = options.reference_alpha.map_or(0.0, |a| (a - center) / period_guess);
    let mut best: Option<lm::LmFit> = None;
    let mut last_iterations = 0;
    for k in 0..4 {
        let mut p0 = vec![2.0 * mean, pmax - pmin, start_x0 + 0.25 * k as f64];
        if !fixed {
            p0.push(1.0);
        }
        let f = lm::fit(weighted(vec![1.0; m]), &p0, m, lm::LmOptions::default())?;
        last_iterations = f.iterations;
        // periods far from the guess are aliases of the sampled fringe
        let plausible = fixed || (0.5..=2.0).contains(&f.params[3].abs());
        if f.converged && plausible && best.as_ref().is_none_or(|b| f.chi2 < b.chi2) {
            best = Some(f);
        }
    }
    let mut fit = best.ok_or(FitError::NotConverged(last_iterations))?;

    // With counted atoms the noise is binomial and largest at mid-fringe, so
    // refit with weights from the first model to get honest uncertainties.
    let atoms: Vec<f64> = scan.samples.iter().map(|s| s.atoms as f64).collect();
    if atoms.iter().all(|&n| n > 0.0) {
        let q = if fixed { 1.0 } else { fit.params[3] };
        let w = (0..m)
            .map(|i| {
                let pm = (0.5 * (fit.params[0] + fit.params[1] * (2.0 * PI * (u[i] - fit.params[2]) / q).cos()))
                    .clamp(0.0, 1.0);
                (atoms[i] / (pm * (1.0 - pm)).max(1.0 / atoms[i])).sqrt()
            })
            .collect();
        let refit = lm::fit(weighted(w), &fit.params, m, lm::LmOptions::default())?;
        if !(refit.converged && (fixed || (0.5..=2.0).contains(&refit.params[3].abs()))) {
            return Err(FitError::NotConverged(refit.iterations));
        }
        fit = refit;
    }
    let mut unweighted = vec![0.0; m];
    weighted(vec![1.0; m])(&fit.params, &mut unweighted, &mut DMatrix::zeros(m, nparams));
    let residual_rms = (unweighted.iter().map(|r| r * r).sum::<f64>() / m as f64).sqrt();

    let mut p = fit.params.clone();
    let mut cov = fit.covariance.clone().ok_or_else(|| FitError::InvalidInput("singular normal matrix".into()))?;
    // the model is even in q, so a negative period is the same fringe
    if !fixed && p[3] < 0.0 {
        p[3] = -p[3];
        for i in 0..4 {
            if i != 3 {
                cov[(i, 3)] = -cov[(i, 3)];
                cov[(3, i)] = -cov[(3, i)];
            }
        }
    }
    let q = if fixed { 1.0 } else { p[3] };
    if q == 0.0 {
        return Err(FitError::NotConverged(fit.iterations));
    }
    // x0 moved by half a period, which the variance below has to follow
    let mut flip = 0.0;
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[2] += 0.5 * q;
        flip = 0.5;
    }
    let dof = (m - nparams) as f64;
    let reduced_chi2 = fit.chi2 / dof;
    let cov = cov * reduced_chi2;
    let var = |i: usize| cov[(i, i)].max(0.0);

    let period = q * period_guess;
    let reference = options.reference_alpha.unwrap_or(center);
    let raw_alpha0 = center + p[2] * period_guess;
    let shift = ((reference - raw_alpha0) / period).round();
    let alpha0 = raw_alpha0 + shift * period;
    // α₀' = c + P_g (x0_raw + s q)
    let s = shift + flip;
    let var_alpha0 = if fixed {
        var(2)
    } else {
        var(2) + s * s * var(3) + 2.0 * s * cov[(2, 3)]
    } * period_guess
        * period_guess;

    let fringe = FringeFit {
        offset: p[0],
        visibility: p[1],
        alpha0,
        period,
        sigma_offset: var(0).sqrt(),
        sigma_visibility: var(1).sqrt(),
        sigma_alpha0: var_alpha0.max(0.0).sqrt(),
        sigma_period: if fixed { 0.0 } else { var(3).sqrt() * period_guess },
        residual_rms,
        reduced_chi2,
        points: m,
        period_fixed: fixed,
        converged: fit.converged,
    };
    let threshold = 3.0 * fringe.sigma_visibility;
    if fringe.visibility < threshold {
        return Err(FitError::Degenerate { visibility: fringe.visibility, threshold });
    }
    Ok(fringe)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityEstimate {
    /// m/s²
    pub g: f64,
    /// m/s²
    pub sigma_g: f64,
}

/// Inverts `α₀ = k·g cos θ/π`.
pub fn extract_g(fit: &FringeFit, constants: &PhysicalConstants, tilt: f64) -> Result<GravityEstimate, FitError> {
    if !fit.converged {
        return Err(FitError::NotConverged(0));
    }
    if !(tilt.abs() < PI / 2.0) {
        return Err(FitError::InvalidInput(format!("tilt {tilt} rad outside (-π/2, π/2)")));
    }
    let scale = PI / (constants.wavenumber() * tilt.cos());
    Ok(GravityEstimate { g: scale * fit.alpha0, sigma_g: scale * fit.sigma_alpha0 })
}

/// Mid-fringe phase sensitivity derived from the scatter of a fitted scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MidFringePrecision {
    /// Population scatter at mid-fringe, per shot
    pub population_noise: f64,
    /// `2ΔP/V`, rad per shot
    pub phase_noise: f64,
    /// `Φ = 2π α₀/period`, rad
    pub total_phase: f64,
    /// `(ΔΦ/Φ)·√(cycle time)`, Hz^-1/2
    pub relative_per_sqrt_hz: f64,
}

/// Relative phase precision at mid-fringe.
///
/// The residual scatter of the whole scan is rescaled to mid-fringe
/// (`P = A/2`) assuming counting statistics, `σ²(P) ∝ P(1 − P)`.
pub fn mid_fringe_precision(fit: &FringeFit, scan: &FringeScan) -> Result<MidFringePrecision, FitError> {
    let cycle = scan
        .metadata
        .cycle_time
        .ok_or_else(|| FitError::InvalidInput("scan metadata lacks a cycle time".into()))?;
    if !fit.converged {
        return Err(FitError::NotConverged(0));
    }
    let threshold = 3.0 * fit.sigma_visibility;
    if !(fit.visibility > threshold) || fit.visibility <= 0.0 {
        return Err(FitError::Degenerate { visibility: fit.visibility, threshold });
    }
    let m = scan.samples.len();
    let nparams = if fit.period_fixed { 3.0 } else { 4.0 };
    if (m as f64) <= nparams {
        return Err(FitError::UnderSampled(format!("{m} points")));
    }
    let mut sum_r2 = 0.0;
    let mut sum_binom = 0.0;
    for s in &scan.samples {
        let model = fit.model(s.alpha);
        sum_r2 += (s.population - model).powi(2);
        sum_binom += (model * (1.0 - model)).max(0.0);
    }
    let var = sum_r2 / (m as f64 - nparams);
    let mid = (0.5 * fit.offset).clamp(0.0, 1.0);
    let mean_binom = sum_binom / m as f64;
    let var_mid = if mean_binom > 1e-12 { var * mid * (1.0 - mid) / mean_binom } else { var };
    let population_noise = var_mid.sqrt();
    let phase_noise = mid_fringe_phase(population_noise, fit.visibility);
    let total_phase = 2.0 * PI * fit.alpha0 / fit.period;
    Ok(MidFringePrecision {
        population_noise,
        phase_noise,
        total_phase,
        relative_per_sqrt_hz: phase_noise / total_phase.abs() * cycle.sqrt(),
    })
}

/// Phase noise `2ΔP/V` corresponding to a population noise `ΔP`.
pub fn mid_fringe_phase(population_noise: f64, visibility: f64) -> f64 {
    2.0 * population_noise / visibility
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::{FringeSample, ScanMetadata};

    fn synthetic(alpha0: f64, period: f64, a: f64, v: f64, points: usize, span_periods: f64) -> FringeScan {
        let samples = (0..points)
            .map(|i| {
                let alpha = alpha0 + period * span_periods * (i as f64 / (points - 1) as f64 - 0.5) + 0.137 * period;
                FringeSample {
                    alpha,
                    population: 0.5 * (a + v * (2.0 * PI * (alpha - alpha0) / period).cos()),
                    atoms: 1000,
                    seed: i as u64,
                }
            })
            .collect();
        FringeScan { samples, metadata: ScanMetadata { cycle_time: Some(3.0), ..Default::default() } }
    }

    #[test]
    fn exact_recovery() {
        let (alpha0, period) = (25.1e6, 111_111.1);
        let scan = synthetic(alpha0, period, 1.0, 0.83, 30, 3.0);
        let opts = FitOptions { reference_alpha: Some(alpha0 + 0.2 * period), ..Default::default() };
        let fit = fit_fringes_with(&scan, period * 1.03, &opts).unwrap();
        assert!((fit.visibility - 0.83).abs() < 0.83 * 1e-9, "{fit:?}");
        assert!((fit.offset - 1.0).abs() < 1e-9);
        assert!(((fit.alpha0 - alpha0) / alpha0).abs() < 1e-9);
        assert!(((fit.period - period) / period).abs() < 1e-9);
    }

    #[test]
    fn branch_follows_reference() {
        let (alpha0, period) = (25.1e6, 20_833.3);
        let scan = synthetic(alpha0, period, 1.0, 0.6, 40, 2.0);
        let opts = FitOptions { reference_alpha: Some(alpha0 + 2.2 * period), period: PeriodMode::Fixed };
        let fit = fit_fringes_with(&scan, period, &opts).unwrap();
        assert!((fit.alpha0 - (alpha0 + 2.0 * period)).abs() < 1e-6 * period);
    }

    #[test]
    fn alpha0_error_independent_of_start() {
        let (alpha0, period) = (25.1e6, 66_000.0);
        let mut scan = synthetic(alpha0, period, 0.9, 0.8, 30, 2.0);
        for (i, s) in scan.samples.iter_mut().enumerate() {
            s.population += 0.005 * (i as f64 * 12.9898).sin();
        }
        let sigmas: Vec<f64> = [0.97, 1.0, 1.02]
            .iter()
            .map(|f| {
                let opts = FitOptions { reference_alpha: Some(alpha0), ..Default::default() };
                fit_fringes_with(&scan, period * f, &opts).unwrap().sigma_alpha0
            })
            .collect();
        for s in &sigmas {
            assert!((s / sigmas[0] - 1.0).abs() < 1e-3, "{sigmas:?}");
        }
    }

    #[test]
    fn too_few_points() {
        let scan = synthetic(0.0, 1.0, 1.0, 0.5, 5, 2.0);
        assert!(matches!(fit_fringes(&scan, 1.0), Err(FitError::UnderSampled(_))));
    }

    #[test]
    fn too_narrow_scan() {
        let scan = synthetic(0.0, 1.0, 1.0, 0.5, 20, 0.5);
        assert!(matches!(fit_fringes(&scan, 1.0), Err(FitError::UnderSampled(_))));
    }

    #[test]
    fn flat_data_is_degenerate() {
        let scan = synthetic(0.0, 1.0, 1.0, 0.0, 20, 2.0);
        assert!(matches!(fit_fringes(&scan, 1.0), Err(FitError::Degenerate { .. })));
    }

    #[test]
    fn tilt_projection() {
        let c = PhysicalConstants::rb87();
        let g = 9.7955;
        let alpha0 = crate::source::doppler_chirp_rate(g, 0.0, &c).unwrap();
        let fit = FringeFit {
            offset: 1.0,
            visibility: 0.8,
            alpha0,
            period: 1.0,
            sigma_offset: 0.0,
            sigma_visibility: 0.0,
            sigma_alpha0: 10.0,
            sigma_period: 0.0,
            residual_rms: 0.0,
            reduced_chi2: 0.0,
            points: 10,
            period_fixed: false,
            converged: true,
        };
        let est = extract_g(&fit, &c, 0.0).unwrap();
        assert!((est.g - g).abs() < 1e-14 * g);
        assert!(est.sigma_g > 0.0);
        let tilted = extract_g(&fit, &c, 3f64.to_radians()).unwrap();
        assert!(tilted.g > g);
        let unconverged = FringeFit { converged: false, ..fit };
        assert!(extract_g(&unconverged, &c, 0.0).is_err());
    }

    #[test]
    fn mid_fringe_phase_linear_in_visibility() {
        assert!((mid_fringe_phase(0.01, 0.4) - 2.0 * mid_fringe_phase(0.01, 0.8)).abs() < 1e-15);
    }

    #[test]
    fn noiseless_precision_is_tiny() {
        let scan = synthetic(25.1e6, 20_833.3, 1.0, 0.8, 40, 3.0);
        let fit = fit_fringes(&scan, 20_833.3).unwrap();
        let p = mid_fringe_precision(&fit, &scan).unwrap();
        assert!(p.relative_per_sqrt_hz < 1e-8, "{p:?}");
    }
}
