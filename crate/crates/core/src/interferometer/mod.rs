//! Mach-Zehnder pulse sequences, arm trajectories, interferometer phase and
//! Monte Carlo fringe scans.

mod aberration;
mod scan;
mod sequence;

use thiserror::Error;

use crate::bloch::BlochError;
use crate::bragg::BraggError;
use crate::source::SourceError;

pub use aberration::{ballistic, combine, AberrationMap};
pub use scan::{
    calibrate_quadratic, mid_fringe_response, point_seed, prepare_ensemble, simulate_fringe_scan, AtomEnsemble,
    EnsembleFringe, FringeSample, FringeScan, ScanMetadata, ScanSettings,
};
pub use sequence::{
    build_mach_zehnder, chirped_phase, effective_order, fringe_period, interferometer_phase,
    mach_zehnder_from_pulses, Arm, ArmTrajectory, BraggTriple, PulseSequence, Segment, TimedSegment,
    TrajectoryKnot, CLOSURE_TOLERANCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequenceError {
    #[error("interrogation time must be positive and finite, got {0} s")]
    InvalidInterrogation(f64),
    #[error("segments overlap: one ends at {first_end} s, the next starts at {next_start} s")]
    Overlap { first_end: f64, next_start: f64 },
    #[error("invalid sequence: {0}")]
    Structure(String),
    #[error("sequence does not close: momentum mismatch {momentum} hbar_k, separation {position} m")]
    NotClosed { momentum: f64, position: f64 },
    #[error("invalid scan: {0}")]
    InvalidScan(String),
    #[error("aberration calibration failed: {0}")]
    Calibration(String),
    #[error(transparent)]
    Bloch(#[from] BlochError),
    #[error(transparent)]
    Bragg(#[from] BraggError),
    #[error(transparent)]
    Source(#[from] SourceError),
}
