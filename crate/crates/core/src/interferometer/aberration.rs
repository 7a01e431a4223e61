use serde::{Deserialize, Serialize};

/// Static transverse phase profile of the Bragg beams,
/// `φ(x, y) = c₂ρ² + c₄ρ⁴` with `ρ² = x² + y²`.
///
/// There is no constant term: a piston phase common to all three pulses
/// drops out of the interferometer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AberrationMap {
    /// rad/m²
    pub quadratic: f64,
    /// rad/m⁴
    #[serde(default)]
    pub quartic: f64,
}

impl AberrationMap {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn quadratic(coefficient: f64) -> Self {
        Self { quadratic: coefficient, quartic: 0.0 }
    }

    pub fn is_none(&self) -> bool {
        self.quadratic == 0.0 && self.quartic == 0.0
    }

    /// rad
    pub fn phase_at(&self, r: [f64; 2]) -> f64 {
        let rho2 = r[0] * r[0] + r[1] * r[1];
        self.quadratic * rho2 + self.quartic * rho2 * rho2
    }

    /// `n·[φ(r₁) − 2φ(r₂) + φ(r₃)]` for an atom at `positions` during the
    /// three pulses.
    pub fn interferometer_phase(&self, order: u32, positions: [[f64; 2]; 3]) -> f64 {
        combine(order, positions.map(|r| self.phase_at(r)))
    }
}

/// `n·(φ₁ − 2φ₂ + φ₃)`
pub fn combine(order: u32, phases: [f64; 3]) -> f64 {
    order as f64 * (phases[0] - 2.0 * phases[1] + phases[2])
}

/// Ballistic transverse positions at `times`, with velocity `v` (m/s).
pub fn ballistic(r: [f64; 2], v: [f64; 2], times: [f64; 3]) -> [[f64; 2]; 3] {
    times.map(|t| [r[0] + v[0] * t, r[1] + v[1] * t])
}
