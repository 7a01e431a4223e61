//! Condensate expansion after release from a harmonic trap and the resulting
//! interaction-induced dephasing.
//!
//! The in-trap condensate is treated in the Thomas-Fermi approximation,
//! `μ = (ħω̄/2)(15Na/ā)^{2/5}`, and its free expansion by the scaling
//! solution `R_i(t) = λ_i(t) R_i(0)` with
//!
//! ```text
//! λ̈_i = ω_i² / (λ_i λ_x λ_y λ_z),   λ_i(0) = 1,   λ̇_i(0) = 0.
//! ```
//!
//! Number fluctuations `√N` at a 50/50 beamsplitter shift the mean-field
//! energy of each arm by `δE ≃ n(0) U V(0) / (√N V(t))`, so the relative
//! phase diffuses at `ω_mf(t) = μ V(0) / (ħ √N V(t))`. The estimate takes the
//! density to be uniform at its peak value, `V(0) = N/n(0)`, and therefore
//! overestimates the effect.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ode::{self, OdeError, Tolerance};
use crate::source::{PhysicalConstants, SourceCloud, SourceKind, TrapConfig};

/// Atom number below which the Thomas-Fermi closure is unreliable.
pub const THOMAS_FERMI_MIN_ATOMS: f64 = 1e3;

const SCALING_TOL: Tolerance = Tolerance { rtol: 1e-12, atol: 1e-14, max_steps: 5_000_000, max_step: 0.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeanFieldError {
    #[error("atom number must be at least 1, got {0}")]
    InvalidAtomNumber(f64),
    #[error("time must be non-negative and finite, got {0} s")]
    InvalidTime(f64),
    #[error("interrogation time must be positive, got {0} s")]
    InvalidInterrogation(f64),
    #[error("empty grid")]
    EmptyGrid,
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Thomas-Fermi condensate in its trap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldModel {
    pub atom_number: f64,
    pub trap: TrapConfig,
    /// J
    pub chemical_potential: f64,
    /// `U = 4πħ²a/m`, J·m³
    pub interaction: f64,
    /// `n(0) = μ/U`, m⁻³
    pub peak_density: f64,
    /// `V(0) = N/n(0)`, m³
    pub initial_volume: f64,
    /// Thomas-Fermi radii, m
    pub radii: [f64; 3],
    pub constants: PhysicalConstants,
}

impl MeanFieldModel {
    pub fn thomas_fermi_regime(&self) -> bool {
        self.atom_number >= THOMAS_FERMI_MIN_ATOMS
    }

    /// μ/h, Hz.
    pub fn chemical_potential_hz(&self) -> f64 {
        self.chemical_potential / (2.0 * PI * self.constants.hbar)
    }

    /// Dephasing rate at release, `μ/(ħ√N)`, rad/s.
    pub fn initial_dephasing_rate(&self) -> f64 {
        self.chemical_potential / (self.constants.hbar * self.atom_number.sqrt())
    }
}

/// Thomas-Fermi chemical potential and derived in-trap quantities.
pub fn chemical_potential(
    atom_number: f64,
    trap: &TrapConfig,
    constants: &PhysicalConstants,
) -> Result<MeanFieldModel, MeanFieldError> {
    if !(atom_number.is_finite() && atom_number >= 1.0) {
        return Err(MeanFieldError::InvalidAtomNumber(atom_number));
    }
    let m = constants.atomic_mass;
    let hbar = constants.hbar;
    let wbar = trap.geometric_mean();
    let abar = (hbar / (m * wbar)).sqrt();
    let mu = 0.5 * hbar * wbar * (15.0 * atom_number * constants.scattering_length / abar).powf(0.4);
    let interaction = constants.interaction_strength();
    let peak_density = mu / interaction;
    let radii = trap.omega.map(|w| (2.0 * mu / (m * w * w)).sqrt());
    Ok(MeanFieldModel {
        atom_number,
        trap: *trap,
        chemical_potential: mu,
        interaction,
        peak_density,
        initial_volume: atom_number / peak_density,
        radii,
        constants: *constants,
    })
}

/// Scale factors and their rates at a given time after release.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingState {
    pub lambda: [f64; 3],
    /// s⁻¹
    pub rate: [f64; 3],
    /// s
    pub time: f64,
}

impl ScalingState {
    pub fn released() -> Self {
        Self { lambda: [1.0; 3], rate: [0.0; 3], time: 0.0 }
    }

    /// `V(t)/V(0)`
    pub fn volume_ratio(&self) -> f64 {
        self.lambda.iter().product()
    }

    /// `½Σλ̇ᵢ² + ω²/(λ_xλ_yλ_z)`, s⁻². Conserved, and equal to `ω²`, when
    /// all three trap frequencies are `ω`.
    pub fn isotropic_energy(&self, omega: f64) -> f64 {
        0.5 * self.rate.iter().map(|r| r * r).sum::<f64>() + omega * omega / self.volume_ratio()
    }
}

fn check_time(t: f64) -> Result<(), MeanFieldError> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(MeanFieldError::InvalidTime(t))
    }
}

/// State `[λ_x, λ_y, λ_z, λ̇_x, λ̇_y, λ̇_z, ∫dt/(λ_xλ_yλ_z)]`.
fn scaling_rhs(omega: [f64; 3]) -> impl Fn(f64, &[f64], &mut [f64]) {
    let w2 = omega.map(|w| w * w);
    move |_t, y, dy| {
        let vol = y[0] * y[1] * y[2];
        for i in 0..3 {
            dy[i] = y[3 + i];
            dy[3 + i] = w2[i] / (y[i] * vol);
        }
        dy[6] = 1.0 / vol;
    }
}

fn initial_scaling() -> [f64; 7] {
    [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]
}

/// Integrates the scaling equations from release to `t`.
pub fn evolve_scaling(trap: &TrapConfig, t: f64) -> Result<ScalingState, MeanFieldError> {
    Ok(evolve_scaling_many(trap, &[t])?[0])
}

/// Scaling states at each of `times` (any order), from one integration.
pub fn evolve_scaling_many(trap: &TrapConfig, times: &[f64]) -> Result<Vec<ScalingState>, MeanFieldError> {
    for &t in times {
        check_time(t)?;
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let rhs = scaling_rhs(trap.omega);
    let mut y = initial_scaling();
    let mut t_now = 0.0;
    let mut out = vec![ScalingState::released(); times.len()];
    for idx in order {
        let t = times[idx];
        ode::integrate(&rhs, t_now, t, &mut y, SCALING_TOL)?;
        t_now = t;
        out[idx] = ScalingState { lambda: [y[0], y[1], y[2]], rate: [y[3], y[4], y[5]], time: t };
    }
    Ok(out)
}

/// 1-σ momentum widths along (x, y, z) at time `t`, ħk.
///
/// The Thomas-Fermi velocity field is linear in position, so the momentum
/// marginal along `i` is the parabolic density marginal scaled by
/// `m λ̇_i R_i`, whose 1-σ is `1/√7` of its half-width.
pub fn momentum_widths(model: &MeanFieldModel, t: f64) -> Result<[f64; 3], MeanFieldError> {
    let s = evolve_scaling(&model.trap, t)?;
    Ok(widths_from_state(model, &s))
}

fn widths_from_state(model: &MeanFieldModel, s: &ScalingState) -> [f64; 3] {
    let c = &model.constants;
    let scale = c.atomic_mass / (7f64.sqrt() * c.hbar_k());
    [0, 1, 2].map(|i| scale * s.rate[i] * model.radii[i])
}

/// Vertical (z) 1-σ momentum width at time `t`, ħk.
pub fn momentum_width(model: &MeanFieldModel, t: f64) -> Result<f64, MeanFieldError> {
    Ok(momentum_widths(model, t)?[2])
}

/// Long-time limit of the vertical momentum width, ħk.
pub fn asymptotic_momentum_width(model: &MeanFieldModel) -> Result<f64, MeanFieldError> {
    let w_min = model.trap.omega.iter().cloned().fold(f64::INFINITY, f64::min);
    momentum_width(model, 1.0e4 / w_min)
}

/// `ω_mf(t) = μV(0)/(ħ√N V(t))`, rad/s.
pub fn dephasing_rate(model: &MeanFieldModel, t: f64) -> Result<f64, MeanFieldError> {
    let s = evolve_scaling(&model.trap, t)?;
    Ok(model.initial_dephasing_rate() / s.volume_ratio())
}

/// `∫ ω_mf dt` over `[t_exp, t_exp + 2T]`, rad.
pub fn integrated_dephasing(model: &MeanFieldModel, t_exp: f64, interrogation: f64) -> Result<f64, MeanFieldError> {
    check_time(t_exp)?;
    if !(interrogation.is_finite() && interrogation > 0.0) {
        return Err(MeanFieldError::InvalidInterrogation(interrogation));
    }
    dephasing_between(model, t_exp, t_exp + 2.0 * interrogation)
}

/// `∫ ω_mf dt` over `[a, b]`, rad.
pub fn dephasing_between(model: &MeanFieldModel, a: f64, b: f64) -> Result<f64, MeanFieldError> {
    check_time(a)?;
    check_time(b)?;
    let rhs = scaling_rhs(model.trap.omega);
    let mut y = initial_scaling();
    ode::integrate(&rhs, 0.0, a, &mut y, SCALING_TOL)?;
    let start = y[6];
    ode::integrate(&rhs, a, b, &mut y, SCALING_TOL)?;
    Ok(model.initial_dephasing_rate() * (y[6] - start))
}

/// Condensate released at `t = 0` and observed `t` later.
pub fn expand_cloud(model: &MeanFieldModel, t: f64) -> Result<SourceCloud, MeanFieldError> {
    let s = evolve_scaling(&model.trap, t)?;
    let w = widths_from_state(model, &s);
    let size = 0.5 * (s.lambda[0] * model.radii[0] + s.lambda[1] * model.radii[1]) / 7f64.sqrt();
    Ok(SourceCloud {
        kind: SourceKind::Condensate,
        atom_number: model.atom_number,
        longitudinal_width: w[2],
        transverse_width: 0.5 * (w[0] + w[1]),
        transverse_size: size,
        temperature: None,
        trap: Some(model.trap),
    })
}

/// Sensitivity reachable per shot, as a fraction of g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    /// s
    pub interrogation_time: f64,
    /// s
    pub expansion_time: f64,
    /// rad
    pub dephasing_phase: f64,
    pub dephasing_limit: f64,
    pub shot_noise_limit: f64,
}

/// Phase-to-gravity scale `2nkgT²`, rad.
pub fn gravity_phase(order: f64, interrogation: f64, constants: &PhysicalConstants) -> f64 {
    2.0 * order * constants.wavenumber() * constants.g_ref * interrogation * interrogation
}

/// Dephasing-limited and shot-noise-limited `Δg/g` on a grid of
/// interrogation and expansion times.
///
/// Rows are ordered by expansion time, then interrogation time.
pub fn sensitivity_curves(
    model: &MeanFieldModel,
    interrogation_grid: &[f64],
    expansion_grid: &[f64],
    order: u32,
) -> Result<Vec<SensitivityRow>, MeanFieldError> {
    if interrogation_grid.is_empty() || expansion_grid.is_empty() {
        return Err(MeanFieldError::EmptyGrid);
    }
    let cells: Vec<(f64, f64)> =
        expansion_grid.iter().flat_map(|&te| interrogation_grid.iter().map(move |&t| (te, t))).collect();
    cells
        .par_iter()
        .map(|&(t_exp, t)| {
            let phase = integrated_dephasing(model, t_exp, t)?;
            let scale = gravity_phase(order as f64, t, &model.constants);
            Ok(SensitivityRow {
                interrogation_time: t,
                expansion_time: t_exp,
                dephasing_phase: phase,
                dephasing_limit: phase / scale,
                shot_noise_limit: 1.0 / (model.atom_number.sqrt() * scale),
            })
        })
        .collect()
}

/// Smallest interrogation time at which the dephasing limit falls below
/// `threshold`, searched up to `t_max`.
pub fn dephasing_crossing(
    model: &MeanFieldModel,
    t_exp: f64,
    order: u32,
    threshold: f64,
    t_max: f64,
) -> Result<Option<f64>, MeanFieldError> {
    let limit = |t: f64| -> Result<f64, MeanFieldError> {
        Ok(integrated_dephasing(model, t_exp, t)? / gravity_phase(order as f64, t, &model.constants))
    };
    if limit(t_max)? >= threshold {
        return Ok(None);
    }
    let (mut lo, mut hi) = (1e-6, t_max);
    if limit(lo)? < threshold {
        return Ok(Some(lo));
    }
    for _ in 0..80 {
        let mid = (lo * hi).sqrt();
        if limit(mid)? < threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_model(n: f64) -> MeanFieldModel {
        chemical_potential(n, &TrapConfig::reference(), &PhysicalConstants::rb87()).unwrap()
    }

    #[test]
    fn thomas_fermi_self_consistency() {
        let model = reference_model(2e6);
        let m = model.constants.atomic_mass;
        for i in 0..3 {
            let w = model.trap.omega[i];
            let r = model.radii[i];
            assert_relative_eq!(0.5 * m * w * w * r * r, model.chemical_potential, max_relative = 1e-12);
        }
        assert_relative_eq!(model.peak_density * model.interaction, model.chemical_potential, max_relative = 1e-14);
        // N = (8π/15) n(0) R_x R_y R_z for a parabolic profile
        let n_tf = 8.0 * PI / 15.0 * model.peak_density * model.radii.iter().product::<f64>();
        assert_relative_eq!(n_tf, 2e6, max_relative = 1e-10);
    }

    #[test]
    fn two_fifths_power_law() {
        let a = reference_model(1e5);
        let b = reference_model(32e5);
        assert_relative_eq!(b.chemical_potential / a.chemical_potential, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn isotropic_radii_equal() {
        let trap = TrapConfig::from_hz([40.0; 3]).unwrap();
        let m = chemical_potential(1e5, &trap, &PhysicalConstants::rb87()).unwrap();
        assert_eq!(m.radii[0], m.radii[1]);
        assert_eq!(m.radii[1], m.radii[2]);
    }

    #[test]
    fn small_atom_number_flagged() {
        assert!(!reference_model(100.0).thomas_fermi_regime());
        assert!(reference_model(1e5).thomas_fermi_regime());
        assert!(chemical_potential(0.0, &TrapConfig::reference(), &PhysicalConstants::rb87()).is_err());
    }

    #[test]
    fn released_state_at_zero() {
        let s = evolve_scaling(&TrapConfig::reference(), 0.0).unwrap();
        assert_eq!(s, ScalingState::released());
        assert!(evolve_scaling(&TrapConfig::reference(), -1e-3).is_err());
    }

    #[test]
    fn zero_width_at_release() {
        assert_eq!(momentum_width(&reference_model(2e6), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn dephasing_rate_at_release() {
        let model = reference_model(2e6);
        let r = dephasing_rate(&model, 0.0).unwrap();
        assert_relative_eq!(r, model.chemical_potential / (model.constants.hbar * 2e6f64.sqrt()), max_relative = 1e-14);
    }

    #[test]
    fn dephasing_sqrt_n_law() {
        let model = reference_model(2e6);
        let quad = MeanFieldModel { atom_number: 8e6, ..model.clone() };
        assert_relative_eq!(
            dephasing_rate(&quad, 5e-3).unwrap(),
            0.5 * dephasing_rate(&model, 5e-3).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn chemical_potential_unit_round_trip() {
        let model = reference_model(2e6);
        let hz = model.chemical_potential_hz();
        assert_relative_eq!(hz * 2.0 * PI * model.constants.hbar, model.chemical_potential, max_relative = 1e-15);
        assert!(hz > 1e3 && hz < 1e4);
    }

    #[test]
    fn zero_interrogation_rejected() {
        assert!(integrated_dephasing(&reference_model(1e6), 0.01, 0.0).is_err());
        assert!(sensitivity_curves(&reference_model(1e6), &[], &[0.01], 1).is_err());
    }
}
