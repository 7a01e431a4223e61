//! Simulation and analysis toolkit for a Bose-condensed Mach-Zehnder
//! gravimeter.
//!
//! The crate is organised bottom-up:
//!
//! - [`source`]: physical constants, traps, atomic clouds and the kinematic
//!   resonance formulas every other module uses.
//! - [`bragg`]: coupled-mode evolution on the `2ħk` momentum ladder, pulse
//!   design, velocity selection and Bragg spectroscopy.
//! - [`meanfield`]: Thomas-Fermi scaling expansion after trap release and the
//!   interaction-induced dephasing budget.
//! - [`bloch`]: Bloch-oscillation beamsplitter estimates.
//! - [`interferometer`]: pulse sequences, arm trajectories, interferometer
//!   phase and Monte Carlo fringe scans.
//! - [`analysis`]: sinusoidal fringe fitting and gravity extraction.
//! - [`config`], [`io`]: experiment configuration files, presets and the
//!   CSV/JSON formats shared with the command-line tool.

pub mod analysis;
pub mod bloch;
pub mod bragg;
pub mod config;
pub mod interferometer;
pub mod io;
pub mod meanfield;
pub mod ode;
pub mod source;

mod error;
mod quadrature;

pub use error::{Error, Result};
pub use source::{PhysicalConstants, SourceCloud, SourceKind, TrapConfig};
