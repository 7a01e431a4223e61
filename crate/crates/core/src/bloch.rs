//! Bloch-oscillation beamsplitter segments.
//!
//! An arm is loaded into the lowest band of a moving lattice, swept through
//! `zones` Brillouin zones and unloaded again, gaining `2ħk` per zone. The
//! estimates here use the shallow-lattice picture: band-edge gap `V₀/2` and
//! free-particle band spacing at `q = 0`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::source::PhysicalConstants;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlochError {
    #[error("lattice depth must be positive and finite, got {0} E_r")]
    InvalidDepth(f64),
    #[error("{name} must be positive and finite, got {value} s")]
    InvalidTime { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochSegment {
    /// Lattice depth `V₀`, E_r
    pub depth: f64,
    /// Duration of each of the load and unload ramps, s
    pub load_time: f64,
    /// Time per Brillouin zone, s
    pub sweep_time: f64,
    pub zones: u32,
    pub direction: Direction,
    /// Differential light shift picked up by the addressed arm, rad
    pub light_shift_phase: f64,
}

impl BlochSegment {
    pub fn new(depth: f64, load_time: f64, sweep_time: f64, zones: u32, direction: Direction) -> Result<Self, BlochError> {
        let s = Self { depth, load_time, sweep_time, zones, direction, light_shift_phase: 0.0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), BlochError> {
        if !(self.depth.is_finite() && self.depth > 0.0) {
            return Err(BlochError::InvalidDepth(self.depth));
        }
        check_time("sweep time", self.sweep_time)?;
        if !(self.load_time.is_finite() && self.load_time >= 0.0) {
            return Err(BlochError::InvalidTime { name: "load time", value: self.load_time });
        }
        Ok(())
    }

    /// Load, sweep and unload, s.
    pub fn duration(&self) -> f64 {
        2.0 * self.load_time + self.zones as f64 * self.sweep_time
    }

    /// Signed momentum imparted to the retained arm, ħk.
    pub fn momentum_change(&self) -> f64 {
        2.0 * self.zones as f64 * self.direction.sign()
    }

    /// Probability that the arm stays in the lowest band for the whole
    /// segment.
    pub fn retention(&self, constants: &PhysicalConstants) -> Result<f64, BlochError> {
        let loss = landau_zener_loss(self.depth, self.sweep_time, constants)?;
        Ok((1.0 - loss).powi(self.zones as i32))
    }
}

fn check_time(name: &'static str, value: f64) -> Result<(), BlochError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(BlochError::InvalidTime { name, value })
    }
}

/// Probability of tunnelling out of the lowest band at one band edge.
///
/// The two crossing free-particle levels separate at `dE/dt = 8E_r/t_sweep`
/// when one zone is traversed per `t_sweep`; with gap `Δ = V₀/2` the
/// Landau-Zener formula gives `exp(−πΔ²/(2ħ dE/dt)) = exp(−π V₀² ω_r t_sweep / 64)`.
pub fn landau_zener_loss(depth: f64, sweep_time: f64, constants: &PhysicalConstants) -> Result<f64, BlochError> {
    if !(depth.is_finite() && depth >= 0.0) {
        return Err(BlochError::InvalidDepth(depth));
    }
    check_time("sweep time", sweep_time)?;
    let wr = constants.recoil_frequency();
    Ok((-PI * depth * depth * wr * sweep_time / 64.0).exp())
}

/// Ratio of the squared `q = 0` band gap to the ramp-induced coupling rate.
///
/// The gap is the free-particle spacing `4E_r`; the lattice couples the
/// ground state to the symmetric `±2ħk` state with matrix element
/// `√2 V₀/4`, ramped on in `load_time`.
pub fn adiabaticity_margin(depth: f64, load_time: f64, constants: &PhysicalConstants) -> Result<f64, BlochError> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(BlochError::InvalidDepth(depth));
    }
    if !(load_time.is_finite() && load_time >= 0.0) {
        return Err(BlochError::InvalidTime { name: "load time", value: load_time });
    }
    let wr = constants.recoil_frequency();
    let gap = 4.0 * wr;
    let coupling_rate = SQRT_2 * depth * wr / 4.0;
    Ok(gap * gap * load_time / coupling_rate)
}

/// Momentum knots `(time, momentum in ħk)` relative to the segment start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmProfile {
    pub retained: Vec<(f64, f64)>,
    pub untouched: Vec<(f64, f64)>,
}

/// Momentum of the addressed arm and of the other arm across a segment.
///
/// The addressed arm gains `2ħk` per zone at a constant rate during the
/// sweep; the other arm is off resonance with the lattice.
pub fn arm_momentum_profile(segment: &BlochSegment, initial: f64) -> Result<ArmProfile, BlochError> {
    segment.validate()?;
    let end = segment.duration();
    let untouched = vec![(0.0, initial), (end, initial)];
    if segment.zones == 0 {
        return Ok(ArmProfile { retained: untouched.clone(), untouched });
    }
    let sweep_end = segment.load_time + segment.zones as f64 * segment.sweep_time;
    let last = initial + segment.momentum_change();
    let mut retained = vec![(0.0, initial)];
    if segment.load_time > 0.0 {
        retained.push((segment.load_time, initial));
    }
    retained.push((sweep_end, last));
    if segment.load_time > 0.0 {
        retained.push((end, last));
    }
    Ok(ArmProfile { retained, untouched })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c() -> PhysicalConstants {
        PhysicalConstants::rb87()
    }

    #[test]
    fn vanishing_depth_never_retains() {
        assert_eq!(landau_zener_loss(0.0, 200e-6, &c()).unwrap(), 1.0);
    }

    #[test]
    fn slow_sweep_is_adiabatic() {
        assert!(landau_zener_loss(2.0, 1.0, &c()).unwrap() < 1e-12);
    }

    #[test]
    fn paper_regime_retains() {
        let loss = landau_zener_loss(10.0, 200e-6, &c()).unwrap();
        assert!(loss < 1e-6, "{loss}");
    }

    #[test]
    fn load_margin() {
        let m = adiabaticity_margin(10.0, 100e-6, &c()).unwrap();
        assert!(m > 1.0, "{m}");
        assert_eq!(adiabaticity_margin(10.0, 0.0, &c()).unwrap(), 0.0);
        assert!(adiabaticity_margin(10.0, 200e-6, &c()).unwrap() > m);
    }

    #[test]
    fn one_zone_kick() {
        let s = BlochSegment::new(10.0, 100e-6, 200e-6, 1, Direction::Up).unwrap();
        let p = arm_momentum_profile(&s, 4.0).unwrap();
        assert_eq!(p.retained.last().unwrap().1, 6.0);
        assert_eq!(p.untouched.last().unwrap().1, 4.0);
    }

    #[test]
    fn accelerate_then_reverse() {
        let up = BlochSegment::new(10.0, 100e-6, 200e-6, 3, Direction::Up).unwrap();
        let down = BlochSegment { direction: Direction::Down, ..up };
        let a = arm_momentum_profile(&up, 0.0).unwrap();
        let b = arm_momentum_profile(&down, a.retained.last().unwrap().1).unwrap();
        assert_eq!(b.retained.last().unwrap().1, 0.0);
    }

    #[test]
    fn zero_zones_identity() {
        let s = BlochSegment::new(10.0, 100e-6, 200e-6, 0, Direction::Up).unwrap();
        let p = arm_momentum_profile(&s, 2.0).unwrap();
        assert!(p.retained.iter().all(|k| k.1 == 2.0));
    }

    #[test]
    fn invalid_inputs() {
        assert!(BlochSegment::new(0.0, 1e-4, 2e-4, 1, Direction::Up).is_err());
        assert!(BlochSegment::new(10.0, 1e-4, 0.0, 1, Direction::Up).is_err());
        assert!(landau_zener_loss(10.0, -1.0, &c()).is_err());
    }
}
