use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::FringeFit;
use crate::bragg::{pulse_response, PulseResponse};
use crate::source::{sample_atoms, PhysicalConstants, SourceCloud};

use super::aberration::{ballistic, AberrationMap};
use super::sequence::{chirped_phase, effective_order, Arm, PulseSequence};
use super::SequenceError;

/// One point of a chirp scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeSample {
    /// Hz/s
    pub alpha: f64,
    /// Fraction of the atoms detected in `|p₀ + 2nħk⟩`
    pub population: f64,
    /// Detected atoms; 0 for a noiseless point
    pub atoms: u64,
    /// Seed of the point's random stream
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanMetadata {
    pub order: Option<u32>,
    pub effective_order: Option<f64>,
    /// s
    pub interrogation_time: Option<f64>,
    pub seed: Option<u64>,
    /// s
    pub cycle_time: Option<f64>,
    pub sequence: Option<PulseSequence>,
    pub cloud: Option<SourceCloud>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FringeScan {
    pub samples: Vec<FringeSample>,
    pub metadata: ScanMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    /// Hz/s
    pub alpha_grid: Vec<f64>,
    /// m/s²
    pub gravity: f64,
    /// rad
    pub tilt: f64,
    /// `None` disables counting noise
    pub detected_atoms: Option<u64>,
    /// Monte Carlo atoms representing the cloud
    pub simulated_atoms: usize,
    pub seed: u64,
    /// RMS white phase noise on the mirror pulse, rad
    pub mirror_phase_jitter: f64,
    /// s
    pub cycle_time: Option<f64>,
}

impl ScanSettings {
    pub fn new(alpha_grid: Vec<f64>, gravity: f64, seed: u64) -> Self {
        Self {
            alpha_grid,
            gravity,
            tilt: 0.0,
            detected_atoms: None,
            simulated_atoms: 1000,
            seed,
            mirror_phase_jitter: 0.0,
            cycle_time: None,
        }
    }

    pub fn with_detected_atoms(mut self, atoms: u64) -> Self {
        self.detected_atoms = Some(atoms);
        self
    }

    pub fn with_simulated_atoms(mut self, atoms: usize) -> Self {
        self.simulated_atoms = atoms;
        self
    }

    fn validate(&self) -> Result<(), SequenceError> {
        if self.alpha_grid.is_empty() {
            return Err(SequenceError::InvalidScan("empty chirp grid".into()));
        }
        if self.alpha_grid.iter().any(|a| !a.is_finite()) {
            return Err(SequenceError::InvalidScan("non-finite chirp in grid".into()));
        }
        if self.detected_atoms == Some(0) {
            return Err(SequenceError::InvalidScan("detected atoms per shot must be at least 1".into()));
        }
        if self.simulated_atoms == 0 {
            return Err(SequenceError::InvalidScan("simulated atoms must be at least 1".into()));
        }
        if !(self.mirror_phase_jitter.is_finite() && self.mirror_phase_jitter >= 0.0) {
            return Err(SequenceError::InvalidScan(format!("mirror phase jitter {}", self.mirror_phase_jitter)));
        }
        if !self.gravity.is_finite() {
            return Err(SequenceError::InvalidScan("non-finite gravity".into()));
        }
        Ok(())
    }
}

/// Seed of point `index` in a scan seeded with `seed`.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64 + 1))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy)]
struct AtomTerms {
    /// Population reaching each port without interference
    base: [f64; 2],
    /// `u_c·conj(d_c)` for the two closing paths
    cross: [Complex64; 2],
    r: [f64; 2],
    /// m/s
    v: [f64; 2],
}

/// Per-atom pulse amplitudes for a sequence and cloud, reusable across
/// chirps and aberration maps.
#[derive(Debug, Clone)]
pub struct AtomEnsemble {
    atoms: Vec<AtomTerms>,
    order: u32,
    times: [f64; 3],
    pub effective_order: f64,
    pub interrogation_time: f64,
    /// Phase that puts the bright fringe of the resonant atom at `Φ = 0`
    pub reference_phase: f64,
    /// Light-shift difference between the arms, rad
    pub light_shift: f64,
}

/// Port amplitudes `(coherent up path, coherent down path, incoherent)`.
fn atom_terms(m: [PulseResponse; 3], retention: [f64; 2]) -> ([f64; 2], [Complex64; 2]) {
    let [m1, m2, m3] = m.map(|r| r.m);
    let (su, sd) = (retention[0].sqrt(), retention[1].sqrt());
    let mut base = [0.0; 2];
    let mut cross = [Complex64::new(0.0, 0.0); 2];
    for c in 0..2 {
        let u = m3[c][0] * m2[0][1] * m1[1][0] * su;
        let d = m3[c][1] * m2[1][0] * m1[0][0] * sd;
        let stay = m3[c][0] * m2[0][0] * m1[0][0];
        let high = m3[c][1] * m2[1][1] * m1[1][0];
        base[c] = u.norm_sqr() + d.norm_sqr() + stay.norm_sqr() + high.norm_sqr();
        cross[c] = u * d.conj();
    }
    (base, cross)
}

/// Draws `count` atoms from `cloud` and computes their pulse amplitudes.
pub fn prepare_ensemble(
    seq: &PulseSequence,
    cloud: &SourceCloud,
    count: usize,
    seed: u64,
    constants: &PhysicalConstants,
) -> Result<AtomEnsemble, SequenceError> {
    seq.validate()?;
    let triple = seq.bragg_triple()?;
    let n_eff = effective_order(seq)?;
    let mut retention = [1.0, 1.0];
    for (_, arm, segment) in seq.bloch_segments() {
        let i = if arm == Arm::Diffracted { 0 } else { 1 };
        retention[i] *= segment.retention(constants)?;
    }
    let [ls_d, ls_u] = seq.light_shift_phases();

    let pulses = triple.pulses;
    let response = |p: f64| -> Result<[PulseResponse; 3], SequenceError> {
        Ok([
            pulse_response(pulses[0], p, constants)?,
            pulse_response(pulses[1], p, constants)?,
            pulse_response(pulses[2], p, constants)?,
        ])
    };
    let (_, ideal) = atom_terms(response(0.0)?, [1.0, 1.0]);
    let reference_phase = -ideal[1].arg();

    let samples = sample_atoms(cloud, count, seed)?;
    let vr = constants.recoil_velocity();
    let atoms = samples
        .par_iter()
        .map(|a| {
            let (base, cross) = atom_terms(response(a.p_par)?, retention);
            Ok(AtomTerms { base, cross, r: a.r_perp, v: a.p_perp.map(|p| p * vr) })
        })
        .collect::<Result<Vec<_>, SequenceError>>()?;
    let t0 = triple.times[0];
    Ok(AtomEnsemble {
        atoms,
        order: triple.order,
        times: triple.times.map(|t| t - t0),
        effective_order: n_eff,
        interrogation_time: seq.interrogation_time,
        reference_phase,
        light_shift: ls_d - ls_u,
    })
}

/// Ensemble sums for one aberration map: the port populations are
/// `base_c + 2 Re(cross_c e^{iΦ})`, normalised by the atom count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleFringe {
    pub base: [f64; 2],
    pub cross: [Complex64; 2],
}

impl EnsembleFringe {
    /// Fraction of all atoms in `|p₀ + 2nħk⟩` at interferometer phase `phi`.
    pub fn population(&self, phi: f64) -> f64 {
        let p = self.base[1] + 2.0 * (self.cross[1] * Complex64::from_polar(1.0, phi)).re;
        p.clamp(0.0, 1.0)
    }

    /// `A` in `P = ½(A + V cos Φ)`
    pub fn offset(&self) -> f64 {
        2.0 * self.base[1]
    }

    pub fn visibility(&self) -> f64 {
        4.0 * self.cross[1].norm()
    }
}

impl AtomEnsemble {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn fringe(&self, aberration: &AberrationMap) -> EnsembleFringe {
        let n = self.atoms.len() as f64;
        let shift = self.reference_phase + self.light_shift;
        let (base, cross) = self
            .atoms
            .par_iter()
            .map(|a| {
                let phase = if aberration.is_none() {
                    0.0
                } else {
                    aberration.interferometer_phase(self.order, ballistic(a.r, a.v, self.times))
                };
                let rot = Complex64::from_polar(1.0, phase + shift);
                (a.base, [a.cross[0] * rot, a.cross[1] * rot])
            })
            .reduce(
                || ([0.0; 2], [Complex64::new(0.0, 0.0); 2]),
                |x, y| ([x.0[0] + y.0[0], x.0[1] + y.0[1]], [x.1[0] + y.1[0], x.1[1] + y.1[1]]),
            );
        EnsembleFringe { base: base.map(|b| b / n), cross: cross.map(|c| c / n) }
    }
}

/// Chirp scan with counting noise, deterministic in `settings.seed`.
///
/// Atoms are drawn once per scan; each point has its own random stream for
/// detection and mirror jitter, derived from the point index.
pub fn simulate_fringe_scan(
    seq: &PulseSequence,
    cloud: &SourceCloud,
    aberration: &AberrationMap,
    settings: &ScanSettings,
    constants: &PhysicalConstants,
) -> Result<FringeScan, SequenceError> {
    settings.validate()?;
    let ensemble = prepare_ensemble(seq, cloud, settings.simulated_atoms, settings.seed, constants)?;
    scan_ensemble(&ensemble, seq, cloud, aberration, settings, constants)
}

pub(crate) fn scan_ensemble(
    ensemble: &AtomEnsemble,
    seq: &PulseSequence,
    cloud: &SourceCloud,
    aberration: &AberrationMap,
    settings: &ScanSettings,
    constants: &PhysicalConstants,
) -> Result<FringeScan, SequenceError> {
    settings.validate()?;
    let fringe = ensemble.fringe(aberration);
    let k = constants.wavenumber();
    let g = settings.gravity * settings.tilt.cos();
    let n = ensemble.order as f64;
    let samples = settings
        .alpha_grid
        .par_iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let seed = point_seed(settings.seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut phi = chirped_phase(k, g, alpha, ensemble.effective_order, ensemble.interrogation_time);
            if settings.mirror_phase_jitter > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                phi -= 2.0 * n * settings.mirror_phase_jitter * z;
            }
            let p = fringe.population(phi);
            match settings.detected_atoms {
                None => Ok(FringeSample { alpha, population: p, atoms: 0, seed }),
                Some(atoms) => {
                    let draw = Binomial::new(atoms, p)
                        .map_err(|e| SequenceError::InvalidScan(format!("binomial({atoms}, {p}): {e}")))?;
                    let hits = draw.sample(&mut rng);
                    Ok(FringeSample { alpha, population: hits as f64 / atoms as f64, atoms, seed })
                }
            }
        })
        .collect::<Result<Vec<_>, SequenceError>>()?;
    Ok(FringeScan {
        samples,
        metadata: ScanMetadata {
            order: Some(ensemble.order),
            effective_order: Some(ensemble.effective_order),
            interrogation_time: Some(ensemble.interrogation_time),
            seed: Some(settings.seed),
            cycle_time: settings.cycle_time,
            sequence: Some(seq.clone()),
            cloud: Some(cloud.clone()),
        },
    })
}

/// Quadratic aberration coefficient (rad/m²) at which the ensemble's
/// noiseless visibility equals `target`.
pub fn calibrate_quadratic(ensemble: &AtomEnsemble, target: f64) -> Result<f64, SequenceError> {
    let vis = |c: f64| ensemble.fringe(&AberrationMap::quadratic(c)).visibility();
    let v0 = vis(0.0);
    if !(target > 0.0 && target < v0) {
        return Err(SequenceError::Calibration(format!(
            "target visibility {target} outside (0, {v0}) reachable without aberration"
        )));
    }
    let mut hi = 1.0;
    while vis(hi) > target {
        hi *= 2.0;
        if hi > 1e16 {
            return Err(SequenceError::Calibration("visibility does not fall to target".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if vis(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Population change `(V/2)·ΔΦ` at mid-fringe.
pub fn mid_fringe_response(fit: &FringeFit, delta_phi: f64) -> f64 {
    0.5 * fit.visibility * delta_phi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bragg::BraggPulse;
    use crate::interferometer::mach_zehnder_from_pulses;
    use std::f64::consts::PI;

    fn ideal_terms() -> ([f64; 2], [Complex64; 2]) {
        let half = PulseResponse::rotation(PI / 2.0);
        let full = PulseResponse::rotation(PI);
        atom_terms([half, full, half], [1.0, 1.0])
    }

    #[test]
    fn ideal_pulses_give_full_contrast() {
        let (base, cross) = ideal_terms();
        assert!((base[0] + base[1] - 1.0).abs() < 1e-14);
        assert!((4.0 * cross[1].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn point_seeds_distinct() {
        let a: Vec<u64> = (0..1000).map(|i| point_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(a.len(), b.len());
        assert_ne!(point_seed(7, 0), point_seed(8, 0));
    }

    #[test]
    fn scan_rejects_bad_settings() {
        let c = PhysicalConstants::rb87();
        let p = BraggPulse::gaussian(1, 20e-6, 2.0e5, &c).unwrap();
        let seq = mach_zehnder_from_pulses(p, p, 1e-3, &c).unwrap();
        let cloud = SourceCloud::condensate(1e5, 0.0, 0.0, 0.0).unwrap();
        let empty = ScanSettings::new(vec![], 9.8, 1);
        assert!(simulate_fringe_scan(&seq, &cloud, &AberrationMap::none(), &empty, &c).is_err());
        let zero = ScanSettings::new(vec![1.0], 9.8, 1).with_detected_atoms(0);
        assert!(simulate_fringe_scan(&seq, &cloud, &AberrationMap::none(), &zero, &c).is_err());
    }

    #[test]
    fn response_is_linear() {
        let fit = FringeFit { visibility: 0.83, ..FringeFit::default() };
        assert!((mid_fringe_response(&fit, 0.01) - 0.00415).abs() < 1e-15);
        assert_eq!(mid_fringe_response(&fit, 0.0), 0.0);
        assert_eq!(mid_fringe_response(&fit, 0.02), 2.0 * mid_fringe_response(&fit, 0.01));
    }
}
