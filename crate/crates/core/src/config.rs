//! Experiment configuration files.
//!
//! Configs are TOML (or the equivalent JSON emitted in run summaries). Every
//! physical quantity is a string carrying its unit, `"3 ms"`,
//! `"0.14 hbar_k"`, `"25.1 MHz/s"`; bare numbers are accepted only for
//! counts. Unknown keys are rejected, and every error names the offending
//! field.
//!
//! ```toml
//! [source]
//! kind = "condensate"
//! atoms = 2e6
//! longitudinal_width = "0.14 hbar_k"
//!
//! [sequence]
//! order = 1
//! interrogation_time = "3 ms"
//! ```

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bloch::{BlochSegment, Direction};
use crate::bragg::{velocity_select, BraggPulse};
use crate::interferometer::{
    build_mach_zehnder, effective_order, AberrationMap, Arm, PulseSequence, ScanSettings, Segment,
};
use crate::meanfield::{chemical_potential, expand_cloud};
use crate::source::{doppler_chirp_rate, thermal_momentum_width, PhysicalConstants, SourceCloud, SourceKind, TrapConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("unknown preset '{0}' (available: {list})", list = PRESET_NAMES.join(", "))]
    UnknownPreset(String),
    #[error("{path}: {message}")]
    Read { path: String, message: String },
}

fn field_error(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.to_string(), message: message.into() }
}

pub const PRESET_NAMES: [&str; 6] = ["fig1", "fig2a", "fig3-bec", "fig3-thermal", "fig3-thermal-500nk", "fig4"];

/// Source text of a shipped preset.
pub fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig1" => include_str!("../presets/fig1.toml"),
        "fig2a" => include_str!("../presets/fig2a.toml"),
        "fig3-bec" => include_str!("../presets/fig3-bec.toml"),
        "fig3-thermal" => include_str!("../presets/fig3-thermal.toml"),
        "fig3-thermal-500nk" => include_str!("../presets/fig3-thermal-500nk.toml"),
        "fig4" => include_str!("../presets/fig4.toml"),
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Time,
    Frequency,
    ChirpRate,
    Momentum,
    Length,
    Temperature,
    Acceleration,
    Angle,
    LatticeDepth,
    Curvature,
    QuarticCurvature,
    Mass,
}

impl Dimension {
    /// Units and their factor to the canonical unit (the first entry).
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::Time => &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("μs", 1e-6), ("ns", 1e-9)],
            Dimension::Frequency => &[("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6)],
            Dimension::ChirpRate => &[("Hz/s", 1.0), ("kHz/s", 1e3), ("MHz/s", 1e6)],
            Dimension::Momentum => &[("hbar_k", 1.0)],
            Dimension::Length => &[("m", 1.0), ("mm", 1e-3), ("um", 1e-6), ("μm", 1e-6), ("nm", 1e-9), ("a0", 5.29177210903e-11)],
            Dimension::Temperature => &[("K", 1.0), ("mK", 1e-3), ("uK", 1e-6), ("μK", 1e-6), ("nK", 1e-9)],
            Dimension::Acceleration => &[("m/s^2", 1.0), ("m/s2", 1.0)],
            Dimension::Angle => &[("rad", 1.0), ("mrad", 1e-3), ("deg", PI / 180.0)],
            Dimension::LatticeDepth => &[("E_r", 1.0)],
            Dimension::Curvature => &[("rad/m^2", 1.0), ("rad/mm^2", 1e6)],
            Dimension::QuarticCurvature => &[("rad/m^4", 1.0), ("rad/mm^4", 1e12)],
            Dimension::Mass => &[("kg", 1.0), ("u", 1.66053906660e-27)],
        }
    }

    pub fn canonical_unit(self) -> &'static str {
        self.units()[0].0
    }
}

/// Parses `"<number> <unit>"` into the dimension's canonical unit.
pub fn parse_quantity(field: &str, text: &str, dim: Dimension) -> Result<f64, ConfigError> {
    let text = text.trim();
    let expected = || dim.units().iter().map(|u| u.0).collect::<Vec<_>>().join(", ");
    let Some((number, unit)) = text.split_once(char::is_whitespace) else {
        return Err(field_error(field, format!("'{text}' has no unit (expected one of {})", expected())));
    };
    let value: f64 = number
        .trim()
        .parse()
        .map_err(|_| field_error(field, format!("'{number}' is not a number")))?;
    if !value.is_finite() {
        return Err(field_error(field, format!("'{number}' is not finite")));
    }
    let unit = unit.trim();
    let factor = dim
        .units()
        .iter()
        .find(|u| u.0 == unit)
        .map(|u| u.1)
        .ok_or_else(|| field_error(field, format!("unit '{unit}' is not valid here (expected one of {})", expected())))?;
    Ok(value * factor)
}

fn format_quantity(value: f64, dim: Dimension) -> String {
    format!("{value:e} {}", dim.canonical_unit())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKindName {
    Condensate,
    Thermal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeName {
    Gaussian,
    Square,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scattering_length: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    pub frequencies: [String; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub kind: SourceKindName,
    pub atoms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub longitudinal_width: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transverse_width: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transverse_size: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<String>,
    /// Time from trap release to the first pulse
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion_time: Option<String>,
    /// 1-σ duration of a first-order velocity selection pulse
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_selection: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlochSection {
    pub arm: Arm,
    pub start: String,
    pub depth: String,
    pub load_time: String,
    pub sweep_time: String,
    pub zones: u32,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub light_shift: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSection {
    pub order: u32,
    pub interrogation_time: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bloch: Vec<BlochSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_center: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_span: Option<String>,
    /// Span in fringe periods, used when `alpha_span` is absent
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// 0 disables counting noise
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detected_atoms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulated_atoms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mirror_phase_jitter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_time: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AberrationSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadratic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quartic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    pub interrogation_min: String,
    pub interrogation_max: String,
    pub points: usize,
    pub expansion_times: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectroscopySection {
    pub probe_duration: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeName>,
    /// Full detuning span, cyclic
    pub span: String,
    pub points: usize,
}

/// Experiment description as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub constants: ConstantsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap: Option<TrapSection>,
    pub source: SourceSection,
    pub sequence: SequenceSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub aberration: AberrationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dephasing: Option<DephasingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectroscopy: Option<SpectroscopySection>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let text = preset_source(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
        Self::from_toml(text).map_err(|e| ConfigError::Parse(format!("preset {name}: {e}")))
    }

    /// Reads TOML, or JSON when the file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        };
        parsed.map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn resolve(&self) -> Result<ResolvedConfig, ConfigError> {
        resolve(self)
    }

    /// Same experiment with every default written out in canonical units.
    pub fn normalized(&self) -> Result<Self, ConfigError> {
        Ok(self.resolve()?.to_config())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPlan {
    /// Hz/s
    pub alpha_center: f64,
    /// Hz/s; `None` spans `periods` fringe periods
    pub alpha_span: Option<f64>,
    pub periods: f64,
    pub points: usize,
    pub detected_atoms: u64,
    pub simulated_atoms: usize,
    pub seed: u64,
    /// m/s²
    pub gravity: f64,
    /// rad
    pub tilt: f64,
    /// rad
    pub mirror_phase_jitter: f64,
    /// s
    pub cycle_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DephasingPlan {
    pub atoms: f64,
    pub order: u32,
    /// s
    pub interrogation_times: Vec<f64>,
    /// s
    pub expansion_times: Vec<f64>,
    pub interrogation_min: f64,
    pub interrogation_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectroscopyPlan {
    /// s
    pub probe_duration: f64,
    pub envelope: EnvelopeName,
    /// Hz
    pub span: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlochPlan {
    pub arm: Arm,
    /// s
    pub start: f64,
    pub segment: BlochSegment,
}

/// Config with units stripped and defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub description: Option<String>,
    pub constants_preset: String,
    pub constants: PhysicalConstants,
    pub trap: TrapConfig,
    /// Before velocity selection
    pub source: SourceCloud,
    pub expansion_time: f64,
    pub velocity_selection: Option<f64>,
    pub order: u32,
    pub interrogation_time: f64,
    pub bloch: Vec<BlochPlan>,
    pub scan: ScanPlan,
    pub aberration: AberrationMap,
    pub dephasing: Option<DephasingPlan>,
    pub spectroscopy: Option<SpectroscopyPlan>,
}

const DEFAULT_EXPANSION: f64 = 12e-3;

fn opt_quantity(field: &str, value: &Option<String>, dim: Dimension) -> Result<Option<f64>, ConfigError> {
    value.as_deref().map(|v| parse_quantity(field, v, dim)).transpose()
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(field_error(field, format!("must be positive, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(field_error(field, format!("must not be negative, got {v}")))
    }
}

fn resolve(cfg: &ExperimentConfig) -> Result<ResolvedConfig, ConfigError> {
    let preset_name = cfg.constants.preset.clone().unwrap_or_else(|| PhysicalConstants::RB87_PRESET.to_string());
    let mut constants = PhysicalConstants::preset(&preset_name)
        .ok_or_else(|| field_error("constants.preset", format!("unknown constants preset '{preset_name}'")))?;
    if let Some(v) = opt_quantity("constants.wavelength", &cfg.constants.wavelength, Dimension::Length)? {
        constants.wavelength = positive("constants.wavelength", v)?;
    }
    if let Some(v) = opt_quantity("constants.mass", &cfg.constants.mass, Dimension::Mass)? {
        constants.atomic_mass = positive("constants.mass", v)?;
    }
    if let Some(v) = opt_quantity("constants.scattering_length", &cfg.constants.scattering_length, Dimension::Length)? {
        constants.scattering_length = v;
    }
    if let Some(v) = opt_quantity("constants.g_ref", &cfg.constants.g_ref, Dimension::Acceleration)? {
        constants.g_ref = positive("constants.g_ref", v)?;
    }

    let trap = match &cfg.trap {
        None => TrapConfig::reference(),
        Some(t) => {
            let mut hz = [0.0; 3];
            for (i, f) in t.frequencies.iter().enumerate() {
                let name = format!("trap.frequencies[{i}]");
                hz[i] = positive(&name, parse_quantity(&name, f, Dimension::Frequency)?)?;
            }
            TrapConfig::from_hz(hz).map_err(|e| field_error("trap.frequencies", e.to_string()))?
        }
    };

    let s = &cfg.source;
    if !(s.atoms.is_finite() && s.atoms >= 1.0) {
        return Err(field_error("source.atoms", format!("must be at least 1, got {}", s.atoms)));
    }
    let expansion_time = non_negative(
        "source.expansion_time",
        opt_quantity("source.expansion_time", &s.expansion_time, Dimension::Time)?.unwrap_or(DEFAULT_EXPANSION),
    )?;
    let lw = opt_quantity("source.longitudinal_width", &s.longitudinal_width, Dimension::Momentum)?;
    let tw = opt_quantity("source.transverse_width", &s.transverse_width, Dimension::Momentum)?;
    let size = opt_quantity("source.transverse_size", &s.transverse_size, Dimension::Length)?;
    for (name, v) in [("source.longitudinal_width", lw), ("source.transverse_width", tw), ("source.transverse_size", size)] {
        if let Some(v) = v {
            non_negative(name, v)?;
        }
    }
    let temperature = opt_quantity("source.temperature", &s.temperature, Dimension::Temperature)?;
    let source = match s.kind {
        SourceKindName::Condensate => {
            if temperature.is_some() {
                return Err(field_error("source.temperature", "not used for a condensate"));
            }
            let expanded = if lw.is_none() || tw.is_none() || size.is_none() {
                let model = chemical_potential(s.atoms, &trap, &constants)
                    .map_err(|e| field_error("source.atoms", e.to_string()))?;
                Some(expand_cloud(&model, expansion_time).map_err(|e| field_error("source.expansion_time", e.to_string()))?)
            } else {
                None
            };
            let pick = |v: Option<f64>, f: fn(&SourceCloud) -> f64| v.unwrap_or_else(|| f(expanded.as_ref().unwrap()));
            SourceCloud {
                kind: SourceKind::Condensate,
                atom_number: s.atoms,
                longitudinal_width: pick(lw, |c| c.longitudinal_width),
                transverse_width: pick(tw, |c| c.transverse_width),
                transverse_size: pick(size, |c| c.transverse_size),
                temperature: None,
                trap: Some(trap),
            }
        }
        SourceKindName::Thermal => {
            let temp = temperature.ok_or_else(|| field_error("source.temperature", "required for a thermal source"))?;
            let temp = positive("source.temperature", temp)?;
            let width =
                thermal_momentum_width(temp, &constants).map_err(|e| field_error("source.temperature", e.to_string()))?;
            let default_size = || {
                let m = constants.atomic_mass;
                let w = trap.omega[0];
                let in_trap = (constants.boltzmann * temp / (m * w * w)).sqrt();
                let spread = width * constants.recoil_velocity() * expansion_time;
                (in_trap * in_trap + spread * spread).sqrt()
            };
            SourceCloud {
                kind: SourceKind::Thermal,
                atom_number: s.atoms,
                longitudinal_width: lw.unwrap_or(width),
                transverse_width: tw.unwrap_or(width),
                transverse_size: size.unwrap_or_else(default_size),
                temperature: Some(temp),
                trap: Some(trap),
            }
        }
    };
    let velocity_selection = opt_quantity("source.velocity_selection", &s.velocity_selection, Dimension::Time)?
        .map(|v| positive("source.velocity_selection", v))
        .transpose()?;

    let q = &cfg.sequence;
    if q.order < 1 {
        return Err(field_error("sequence.order", "must be at least 1"));
    }
    let interrogation_time = positive(
        "sequence.interrogation_time",
        parse_quantity("sequence.interrogation_time", &q.interrogation_time, Dimension::Time)?,
    )?;
    let mut bloch = Vec::with_capacity(q.bloch.len());
    for (i, b) in q.bloch.iter().enumerate() {
        let f = |name: &str| format!("sequence.bloch[{i}].{name}");
        let start = non_negative(&f("start"), parse_quantity(&f("start"), &b.start, Dimension::Time)?)?;
        let depth = positive(&f("depth"), parse_quantity(&f("depth"), &b.depth, Dimension::LatticeDepth)?)?;
        let load = non_negative(&f("load_time"), parse_quantity(&f("load_time"), &b.load_time, Dimension::Time)?)?;
        let sweep = positive(&f("sweep_time"), parse_quantity(&f("sweep_time"), &b.sweep_time, Dimension::Time)?)?;
        let light_shift = opt_quantity(&f("light_shift"), &b.light_shift, Dimension::Angle)?.unwrap_or(0.0);
        let mut segment = BlochSegment::new(depth, load, sweep, b.zones, b.direction)
            .map_err(|e| field_error(&format!("sequence.bloch[{i}]"), e.to_string()))?;
        segment.light_shift_phase = light_shift;
        bloch.push(BlochPlan { arm: b.arm, start, segment });
    }

    let sc = &cfg.scan;
    let alpha_ref = constants.wavenumber() * constants.g_ref / PI;
    let alpha_center = opt_quantity("scan.alpha_center", &sc.alpha_center, Dimension::ChirpRate)?.unwrap_or(alpha_ref);
    let alpha_span = opt_quantity("scan.alpha_span", &sc.alpha_span, Dimension::ChirpRate)?
        .map(|v| positive("scan.alpha_span", v))
        .transpose()?;
    let periods = sc.periods.unwrap_or(2.0);
    if !(periods.is_finite() && periods > 0.0) {
        return Err(field_error("scan.periods", format!("must be positive, got {periods}")));
    }
    let points = sc.points.unwrap_or(30);
    if points < 1 {
        return Err(field_error("scan.points", "must be at least 1"));
    }
    let simulated_atoms = sc.simulated_atoms.unwrap_or(2000);
    if simulated_atoms < 1 {
        return Err(field_error("scan.simulated_atoms", "must be at least 1"));
    }
    let gravity = opt_quantity("scan.gravity", &sc.gravity, Dimension::Acceleration)?.unwrap_or(constants.g_ref);
    let tilt = opt_quantity("scan.tilt", &sc.tilt, Dimension::Angle)?.unwrap_or(0.0);
    if tilt.abs() >= PI / 2.0 {
        return Err(field_error("scan.tilt", "must be below 90 deg"));
    }
    let jitter = non_negative(
        "scan.mirror_phase_jitter",
        opt_quantity("scan.mirror_phase_jitter", &sc.mirror_phase_jitter, Dimension::Angle)?.unwrap_or(0.0),
    )?;
    let cycle_time = opt_quantity("scan.cycle_time", &sc.cycle_time, Dimension::Time)?
        .map(|v| positive("scan.cycle_time", v))
        .transpose()?;
    let scan = ScanPlan {
        alpha_center,
        alpha_span,
        periods,
        points,
        detected_atoms: sc.detected_atoms.unwrap_or(10_000),
        simulated_atoms,
        seed: sc.seed.unwrap_or(1),
        gravity,
        tilt,
        mirror_phase_jitter: jitter,
        cycle_time,
    };

    let aberration = AberrationMap {
        quadratic: opt_quantity("aberration.quadratic", &cfg.aberration.quadratic, Dimension::Curvature)?.unwrap_or(0.0),
        quartic: opt_quantity("aberration.quartic", &cfg.aberration.quartic, Dimension::QuarticCurvature)?
            .unwrap_or(0.0),
    };

    let dephasing = cfg
        .dephasing
        .as_ref()
        .map(|d| -> Result<DephasingPlan, ConfigError> {
            let atoms = d.atoms.unwrap_or(s.atoms);
            if !(atoms.is_finite() && atoms >= 1.0) {
                return Err(field_error("dephasing.atoms", format!("must be at least 1, got {atoms}")));
            }
            let lo = positive(
                "dephasing.interrogation_min",
                parse_quantity("dephasing.interrogation_min", &d.interrogation_min, Dimension::Time)?,
            )?;
            let hi = parse_quantity("dephasing.interrogation_max", &d.interrogation_max, Dimension::Time)?;
            if !(hi > lo) {
                return Err(field_error("dephasing.interrogation_max", "must exceed interrogation_min"));
            }
            if d.points < 2 {
                return Err(field_error("dephasing.points", "must be at least 2"));
            }
            let grid = (0..d.points)
                .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (d.points - 1) as f64).exp())
                .collect();
            if d.expansion_times.is_empty() {
                return Err(field_error("dephasing.expansion_times", "must not be empty"));
            }
            let expansion = d
                .expansion_times
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let name = format!("dephasing.expansion_times[{i}]");
                    non_negative(&name, parse_quantity(&name, t, Dimension::Time)?)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(DephasingPlan {
                atoms,
                order: d.order.unwrap_or(q.order),
                interrogation_times: grid,
                expansion_times: expansion,
                interrogation_min: lo,
                interrogation_max: hi,
            })
        })
        .transpose()?;

    let spectroscopy = cfg
        .spectroscopy
        .as_ref()
        .map(|p| -> Result<SpectroscopyPlan, ConfigError> {
            let duration = positive(
                "spectroscopy.probe_duration",
                parse_quantity("spectroscopy.probe_duration", &p.probe_duration, Dimension::Time)?,
            )?;
            let span = positive("spectroscopy.span", parse_quantity("spectroscopy.span", &p.span, Dimension::Frequency)?)?;
            if p.points < 4 {
                return Err(field_error("spectroscopy.points", "must be at least 4"));
            }
            Ok(SpectroscopyPlan {
                probe_duration: duration,
                envelope: p.envelope.unwrap_or(EnvelopeName::Square),
                span,
                points: p.points,
            })
        })
        .transpose()?;

    Ok(ResolvedConfig {
        description: cfg.description.clone(),
        constants_preset: preset_name,
        constants,
        trap,
        source,
        expansion_time,
        velocity_selection,
        order: q.order,
        interrogation_time,
        bloch,
        scan,
        aberration,
        dephasing,
        spectroscopy,
    })
}

impl ResolvedConfig {
    /// Source as seen by the interferometer, after any velocity selection.
    pub fn cloud(&self) -> crate::Result<SourceCloud> {
        Ok(match self.velocity_selection {
            Some(d) => velocity_select(d, &self.source, &self.constants)?,
            None => self.source.clone(),
        })
    }

    /// Mach-Zehnder with designed pulses plus the configured lattice
    /// segments.
    pub fn sequence(&self, cloud: &SourceCloud) -> crate::Result<PulseSequence> {
        let mut seq = build_mach_zehnder(self.order, self.interrogation_time, cloud, &self.constants)?;
        for b in &self.bloch {
            seq.segments.push(crate::interferometer::TimedSegment {
                start: b.start,
                segment: Segment::BlochAccel { arm: b.arm, segment: b.segment },
            });
        }
        seq.segments.sort_by(|a, b| a.start.total_cmp(&b.start));
        seq.validate()?;
        Ok(seq)
    }

    /// Chirp grid and scan settings for a sequence.
    pub fn scan_settings(&self, seq: &PulseSequence) -> crate::Result<ScanSettings> {
        let t = self.interrogation_time;
        let period = 1.0 / (effective_order(seq)? * t * t);
        let span = self.scan.alpha_span.unwrap_or(self.scan.periods * period);
        let n = self.scan.points;
        let grid = if n == 1 {
            vec![self.scan.alpha_center]
        } else {
            (0..n).map(|i| self.scan.alpha_center + span * (i as f64 / (n - 1) as f64 - 0.5)).collect()
        };
        Ok(ScanSettings {
            alpha_grid: grid,
            gravity: self.scan.gravity,
            tilt: self.scan.tilt,
            detected_atoms: (self.scan.detected_atoms > 0).then_some(self.scan.detected_atoms),
            simulated_atoms: self.scan.simulated_atoms,
            seed: self.scan.seed,
            mirror_phase_jitter: self.scan.mirror_phase_jitter,
            cycle_time: self.scan.cycle_time,
        })
    }

    /// Sensitivity grid, or 1 ms to 1 s against 12 and 40 ms expansion for
    /// 10⁶ atoms when the config has none.
    pub fn dephasing_plan(&self) -> DephasingPlan {
        self.dephasing.clone().unwrap_or_else(|| {
            let (lo, hi, points) = (1e-3_f64, 1.0_f64, 61);
            DephasingPlan {
                atoms: 1e6,
                order: self.order,
                interrogation_times: (0..points)
                    .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (points - 1) as f64).exp())
                    .collect(),
                expansion_times: vec![12e-3, 40e-3],
                interrogation_min: lo,
                interrogation_max: hi,
            }
        })
    }

    /// Probe and grid, defaulting to a 500 μs Gaussian probe over ±5
    /// Doppler widths.
    pub fn spectroscopy_plan(&self) -> SpectroscopyPlan {
        self.spectroscopy.clone().unwrap_or_else(|| {
            let doppler_hz = 4.0 * self.constants.recoil_frequency() * self.source.longitudinal_width / (2.0 * PI);
            SpectroscopyPlan {
                probe_duration: 500e-6,
                envelope: EnvelopeName::Gaussian,
                span: (10.0 * doppler_hz).max(2e3),
                points: 41,
            }
        })
    }

    /// Spectroscopy probe and detuning grid (rad/s offsets).
    pub fn spectroscopy_probe(&self) -> crate::Result<(BraggPulse, Vec<f64>)> {
        let p = &self.spectroscopy_plan();
        let probe = match p.envelope {
            EnvelopeName::Square => BraggPulse::square(1, p.probe_duration, PI / p.probe_duration, &self.constants)?,
            EnvelopeName::Gaussian => {
                let unit = BraggPulse::gaussian(1, p.probe_duration, 1.0, &self.constants)?;
                unit.with_omega(PI / unit.area())
            }
        };
        let half = PI * p.span;
        let grid = (0..p.points).map(|i| -half + 2.0 * half * i as f64 / (p.points - 1) as f64).collect();
        Ok((probe, grid))
    }

    /// Resonant chirp for the configured gravity and tilt, Hz/s.
    pub fn resonant_chirp(&self) -> crate::Result<f64> {
        Ok(doppler_chirp_rate(self.scan.gravity, self.scan.tilt, &self.constants)?)
    }

    pub fn to_config(&self) -> ExperimentConfig {
        use Dimension as D;
        let q = |v: f64, d: Dimension| Some(format_quantity(v, d));
        let c = &self.constants;
        let src = &self.source;
        ExperimentConfig {
            description: self.description.clone(),
            constants: ConstantsSection {
                preset: Some(self.constants_preset.clone()),
                wavelength: q(c.wavelength, D::Length),
                mass: q(c.atomic_mass, D::Mass),
                scattering_length: q(c.scattering_length, D::Length),
                g_ref: q(c.g_ref, D::Acceleration),
            },
            trap: Some(TrapSection {
                frequencies: self.trap.omega.map(|w| format_quantity(w / (2.0 * PI), D::Frequency)),
            }),
            source: SourceSection {
                kind: match src.kind {
                    SourceKind::Condensate => SourceKindName::Condensate,
                    SourceKind::Thermal => SourceKindName::Thermal,
                },
                atoms: src.atom_number,
                longitudinal_width: q(src.longitudinal_width, D::Momentum),
                transverse_width: q(src.transverse_width, D::Momentum),
                transverse_size: q(src.transverse_size, D::Length),
                temperature: src.temperature.map(|t| format_quantity(t, D::Temperature)),
                expansion_time: q(self.expansion_time, D::Time),
                velocity_selection: self.velocity_selection.map(|t| format_quantity(t, D::Time)),
            },
            sequence: SequenceSection {
                order: self.order,
                interrogation_time: format_quantity(self.interrogation_time, D::Time),
                bloch: self
                    .bloch
                    .iter()
                    .map(|b| BlochSection {
                        arm: b.arm,
                        start: format_quantity(b.start, D::Time),
                        depth: format_quantity(b.segment.depth, D::LatticeDepth),
                        load_time: format_quantity(b.segment.load_time, D::Time),
                        sweep_time: format_quantity(b.segment.sweep_time, D::Time),
                        zones: b.segment.zones,
                        direction: b.segment.direction,
                        light_shift: q(b.segment.light_shift_phase, D::Angle),
                    })
                    .collect(),
            },
            scan: ScanSection {
                alpha_center: q(self.scan.alpha_center, D::ChirpRate),
                alpha_span: self.scan.alpha_span.map(|v| format_quantity(v, D::ChirpRate)),
                periods: Some(self.scan.periods),
                points: Some(self.scan.points),
                detected_atoms: Some(self.scan.detected_atoms),
                simulated_atoms: Some(self.scan.simulated_atoms),
                seed: Some(self.scan.seed),
                gravity: q(self.scan.gravity, D::Acceleration),
                tilt: q(self.scan.tilt, D::Angle),
                mirror_phase_jitter: q(self.scan.mirror_phase_jitter, D::Angle),
                cycle_time: self.scan.cycle_time.map(|v| format_quantity(v, D::Time)),
            },
            aberration: AberrationSection {
                quadratic: q(self.aberration.quadratic, D::Curvature),
                quartic: q(self.aberration.quartic, D::QuarticCurvature),
            },
            dephasing: self.dephasing.as_ref().map(|d| DephasingSection {
                atoms: Some(d.atoms),
                order: Some(d.order),
                interrogation_min: format_quantity(d.interrogation_min, D::Time),
                interrogation_max: format_quantity(d.interrogation_max, D::Time),
                points: d.interrogation_times.len(),
                expansion_times: d.expansion_times.iter().map(|&t| format_quantity(t, D::Time)).collect(),
            }),
            spectroscopy: self.spectroscopy.as_ref().map(|p| SpectroscopySection {
                probe_duration: format_quantity(p.probe_duration, D::Time),
                envelope: Some(p.envelope),
                span: format_quantity(p.span, D::Frequency),
                points: p.points,
            }),
        }
    }
}

/// One line per preset, for help text.
pub fn preset_summary() -> String {
    let mut out = String::new();
    for name in PRESET_NAMES {
        let desc = ExperimentConfig::preset(name).ok().and_then(|c| c.description).unwrap_or_default();
        let _ = writeln!(out, "  {name:<20} {desc}");
    }
    out
}
