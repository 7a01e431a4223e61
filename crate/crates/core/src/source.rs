//! Physical constants, trap and cloud descriptions, and kinematic resonance
//! formulas.
//!
//! Momenta are expressed in units of `ħk` throughout the crate and every
//! width is the 1-σ of a Gaussian. A thermal cloud at temperature `T` has a
//! 1-σ momentum width of `√(m k_B T)`; other conventions (FWHM, 1/e
//! half-width) differ by the usual factors `2√(2 ln 2)` and `√2`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("Bragg order must be at least 1, got {0}")]
    InvalidOrder(i64),
    #[error("tilt {0} rad is not within (-π/2, π/2)")]
    InvalidTilt(f64),
    #[error("temperature must be positive, got {0} K")]
    InvalidTemperature(f64),
    #[error("trap frequencies must be strictly positive, got {0:?}")]
    InvalidTrap([f64; 3]),
    #[error("invalid cloud: {0}")]
    InvalidCloud(String),
    #[error("sample count must be at least 1")]
    EmptySample,
}

/// Constants of the atomic species and the Bragg laser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// kg
    pub atomic_mass: f64,
    /// Bragg laser wavelength, m
    pub wavelength: f64,
    /// J·s
    pub hbar: f64,
    /// J/K
    pub boltzmann: f64,
    /// s-wave scattering length, m
    pub scattering_length: f64,
    /// Local gravity reference used to pick the fringe branch, m/s²
    pub g_ref: f64,
}

impl PhysicalConstants {
    pub const RB87_PRESET: &'static str = "Rb87-780nm";

    /// ⁸⁷Rb on the D2 line (CODATA 2018 constants, |F=1⟩ scattering length
    /// of 100.4 a₀, Canberra absolute gravity).
    pub fn rb87() -> Self {
        const AMU: f64 = 1.660_539_066_60e-27;
        const BOHR: f64 = 5.291_772_109_03e-11;
        Self {
            atomic_mass: 86.909_180_527 * AMU,
            wavelength: 780.241_209_686e-9,
            hbar: 1.054_571_817e-34,
            boltzmann: 1.380_649e-23,
            scattering_length: 100.4 * BOHR,
            g_ref: 9.795_499_189,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            Self::RB87_PRESET => Some(Self::rb87()),
            _ => None,
        }
    }

    /// `k = 2π/λ`, rad/m.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Single-photon recoil frequency `ω_r = ħk²/2m`, rad/s.
    pub fn recoil_frequency(&self) -> f64 {
        let k = self.wavenumber();
        self.hbar * k * k / (2.0 * self.atomic_mass)
    }

    /// `ħk`, kg·m/s.
    pub fn hbar_k(&self) -> f64 {
        self.hbar * self.wavenumber()
    }

    /// `ħk/m`, m/s.
    pub fn recoil_velocity(&self) -> f64 {
        self.hbar_k() / self.atomic_mass
    }

    /// Mean-field interaction parameter `U = 4πħ²a/m`, J·m³.
    pub fn interaction_strength(&self) -> f64 {
        4.0 * PI * self.hbar * self.hbar * self.scattering_length / self.atomic_mass
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::rb87()
    }
}

/// Harmonic trap the cloud was released from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    /// Angular frequencies (ω_x, ω_y, ω_z), rad/s. `z` is vertical.
    pub omega: [f64; 3],
}

impl TrapConfig {
    pub fn new(omega: [f64; 3]) -> Result<Self, SourceError> {
        if omega.iter().all(|w| w.is_finite() && *w > 0.0) {
            Ok(Self { omega })
        } else {
            Err(SourceError::InvalidTrap(omega))
        }
    }

    pub fn from_hz(freq_hz: [f64; 3]) -> Result<Self, SourceError> {
        Self::new(freq_hz.map(|f| 2.0 * PI * f))
    }

    /// Crossed dipole trap of the reference apparatus, 2π × (50, 57, 28) Hz.
    pub fn reference() -> Self {
        Self::from_hz([50.0, 57.0, 28.0]).expect("positive frequencies")
    }

    pub fn geometric_mean(&self) -> f64 {
        self.omega.iter().product::<f64>().cbrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Condensate,
    Thermal,
}

/// An atomic ensemble at the start of the interferometer.
///
/// Widths may be zero, which describes the ideal point-like limit used in
/// lossless reference calculations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCloud {
    pub kind: SourceKind,
    pub atom_number: f64,
    /// 1-σ longitudinal (vertical) momentum width, ħk
    pub longitudinal_width: f64,
    /// 1-σ transverse momentum width per axis, ħk
    pub transverse_width: f64,
    /// 1-σ transverse spatial width per axis, m
    pub transverse_size: f64,
    /// Only meaningful for thermal clouds, K
    pub temperature: Option<f64>,
    pub trap: Option<TrapConfig>,
}

impl SourceCloud {
    pub fn condensate(
        atom_number: f64,
        longitudinal_width: f64,
        transverse_width: f64,
        transverse_size: f64,
    ) -> Result<Self, SourceError> {
        let cloud = Self {
            kind: SourceKind::Condensate,
            atom_number,
            longitudinal_width,
            transverse_width,
            transverse_size,
            temperature: None,
            trap: None,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    /// Thermal cloud with isotropic Maxwell-Boltzmann momentum spread.
    pub fn thermal(
        atom_number: f64,
        temperature: f64,
        transverse_size: f64,
        constants: &PhysicalConstants,
    ) -> Result<Self, SourceError> {
        let width = thermal_momentum_width(temperature, constants)?;
        let cloud = Self {
            kind: SourceKind::Thermal,
            atom_number,
            longitudinal_width: width,
            transverse_width: width,
            transverse_size,
            temperature: Some(temperature),
            trap: None,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn with_trap(mut self, trap: TrapConfig) -> Self {
        self.trap = Some(trap);
        self
    }

    pub fn with_longitudinal_width(mut self, width: f64) -> Self {
        self.longitudinal_width = width;
        self
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        if !(self.atom_number.is_finite() && self.atom_number >= 1.0) {
            return Err(SourceError::InvalidCloud(format!(
                "atom number must be >= 1, got {}",
                self.atom_number
            )));
        }
        for (name, w) in [
            ("longitudinal width", self.longitudinal_width),
            ("transverse width", self.transverse_width),
            ("transverse size", self.transverse_size),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(SourceError::InvalidCloud(format!(
                    "{name} must be finite and non-negative, got {w}"
                )));
            }
        }
        if let Some(t) = self.temperature {
            if !(t.is_finite() && t > 0.0) {
                return Err(SourceError::InvalidTemperature(t));
            }
        }
        Ok(())
    }
}

/// One Monte Carlo atom drawn from a [`SourceCloud`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomSample {
    /// Longitudinal momentum relative to the cloud centre, ħk
    pub p_par: f64,
    /// Transverse momentum (x, y), ħk
    pub p_perp: [f64; 2],
    /// Transverse position (x, y) at the first pulse, m
    pub r_perp: [f64; 2],
}

/// Bragg resonance `δ_n = 4nω_r` for an atom at rest, rad/s.
pub fn bragg_resonance(order: i64, constants: &PhysicalConstants) -> Result<f64, SourceError> {
    if order < 1 {
        return Err(SourceError::InvalidOrder(order));
    }
    Ok(4.0 * order as f64 * constants.recoil_frequency())
}

/// Frequency chirp `α₀ = k·g cos θ / π` that keeps a falling atom on
/// resonance, Hz/s.
pub fn doppler_chirp_rate(g: f64, tilt: f64, constants: &PhysicalConstants) -> Result<f64, SourceError> {
    if !(tilt.abs() < PI / 2.0) {
        return Err(SourceError::InvalidTilt(tilt));
    }
    Ok(constants.wavenumber() * g * tilt.cos() / PI)
}

/// 1-σ momentum width `√(m k_B T)/ħk` of a thermal cloud, ħk.
pub fn thermal_momentum_width(temperature: f64, constants: &PhysicalConstants) -> Result<f64, SourceError> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(SourceError::InvalidTemperature(temperature));
    }
    Ok((constants.atomic_mass * constants.boltzmann * temperature).sqrt() / constants.hbar_k())
}

/// Draws `count` atoms from independent Gaussians with the cloud's widths.
///
/// The stream is a pure function of `seed`.
pub fn sample_atoms(cloud: &SourceCloud, count: usize, seed: u64) -> Result<Vec<AtomSample>, SourceError> {
    if count == 0 {
        return Err(SourceError::EmptySample);
    }
    cloud.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    Ok((0..count)
        .map(|_| AtomSample {
            p_par: cloud.longitudinal_width * normal(),
            p_perp: [cloud.transverse_width * normal(), cloud.transverse_width * normal()],
            r_perp: [cloud.transverse_size * normal(), cloud.transverse_size * normal()],
        })
        .collect())
}
