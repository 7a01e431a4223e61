//! CSV and JSON formats shared by the command-line tool and the C API.
//!
//! All CSV files carry a header row and use RFC 4180 quoting. Column names
//! end in their unit. JSON documents carry a `schema` tag that changes only
//! when a field is removed or changes meaning.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{FringeFit, GravityEstimate};
use crate::bragg::BraggSpectrum;
use crate::interferometer::{FringeSample, FringeScan};
use crate::meanfield::SensitivityRow;
use crate::{Error, Result};

pub const SCAN_COLUMNS: [&str; 4] = ["alpha_hz_per_s", "population", "atoms", "seed"];
pub const SENSITIVITY_COLUMNS: [&str; 5] =
    ["interrogation_time_s", "expansion_time_s", "dephasing_phase_rad", "dephasing_limit", "shot_noise_limit"];
pub const SPECTRUM_COLUMNS: [&str; 3] = ["detuning_hz", "detuning_rad_per_s", "transfer"];

fn csv_error(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Format(format!("line {}: {e}", p.line())),
        None => Error::Format(e.to_string()),
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w)
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_scan_csv<W: Write>(scan: &FringeScan, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(SCAN_COLUMNS).map_err(csv_error)?;
    for s in &scan.samples {
        out.write_record([fmt(s.alpha), fmt(s.population), s.atoms.to_string(), s.seed.to_string()])
            .map_err(csv_error)?;
    }
    out.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Reads a scan written by [`write_scan_csv`] or by hand.
///
/// `alpha_hz_per_s` and `population` are required, `atoms` and `seed` are
/// optional, columns may come in any order and surrounding blanks are
/// ignored. Anything else is an error naming the line.
pub fn read_scan_csv<R: Read>(r: R) -> Result<FringeScan> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(false).from_reader(r);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(Error::Format("empty file: expected a header row with alpha_hz_per_s,population".into()));
    }
    let mut index = [None; 4];
    for (i, name) in header.iter().enumerate() {
        let slot = SCAN_COLUMNS
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Format(format!("line 1: unknown column '{name}'")))?;
        if index[slot].replace(i).is_some() {
            return Err(Error::Format(format!("line 1: duplicate column '{name}'")));
        }
    }
    let (Some(ia), Some(ip)) = (index[0], index[1]) else {
        return Err(Error::Format("line 1: header must contain alpha_hz_per_s and population".into()));
    };
    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<&str> {
            let v = &record[i];
            if v.is_empty() {
                Err(Error::Format(format!("line {line}: {name} is empty")))
            } else {
                Ok(v)
            }
        };
        let float = |i: usize, name: &str| -> Result<f64> {
            let v = field(i, name)?;
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Format(format!("line {line}: {name} '{v}' is not a finite number")))
        };
        let int = |i: Option<usize>, name: &str| -> Result<u64> {
            match i {
                None => Ok(0),
                Some(i) => {
                    let v = field(i, name)?;
                    v.parse::<u64>()
                        .map_err(|_| Error::Format(format!("line {line}: {name} '{v}' is not a non-negative integer")))
                }
            }
        };
        let alpha = float(ia, "alpha_hz_per_s")?;
        let population = float(ip, "population")?;
        if !(0.0..=1.0).contains(&population) {
            return Err(Error::Format(format!("line {line}: population {population} outside [0, 1]")));
        }
        samples.push(FringeSample { alpha, population, atoms: int(index[2], "atoms")?, seed: int(index[3], "seed")? });
    }
    if samples.is_empty() {
        return Err(Error::Format("no data rows after the header".into()));
    }
    Ok(FringeScan { samples, metadata: Default::default() })
}

pub fn write_sensitivity_csv<W: Write>(rows: &[SensitivityRow], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(SENSITIVITY_COLUMNS).map_err(csv_error)?;
    for r in rows {
        out.write_record([
            fmt(r.interrogation_time),
            fmt(r.expansion_time),
            fmt(r.dephasing_phase),
            fmt(r.dephasing_limit),
            fmt(r.shot_noise_limit),
        ])
        .map_err(csv_error)?;
    }
    out.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_spectrum_csv<W: Write>(spectrum: &BraggSpectrum, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(SPECTRUM_COLUMNS).map_err(csv_error)?;
    for (d, p) in spectrum.detunings.iter().zip(&spectrum.response) {
        out.write_record([fmt(d / (2.0 * PI)), fmt(*d), fmt(*p)]).map_err(csv_error)?;
    }
    out.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Value with its 1-σ uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub sigma: f64,
    pub unit: String,
}

impl Quantity {
    pub fn new(value: f64, sigma: f64, unit: &str) -> Self {
        Self { value, sigma, unit: unit.to_string() }
    }
}

/// `gravimeter.fit/1`: a fringe fit and, when requested, the gravity value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema: String,
    pub offset: Quantity,
    pub visibility: Quantity,
    pub alpha0: Quantity,
    pub period: Quantity,
    pub period_fixed: bool,
    pub points: usize,
    pub residual_rms: f64,
    pub reduced_chi2: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub g: Option<Quantity>,
    /// rad
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tilt: Option<f64>,
}

pub const FIT_SCHEMA: &str = "gravimeter.fit/1";

impl FitReport {
    pub fn new(fit: &FringeFit, gravity: Option<(GravityEstimate, f64)>) -> Self {
        Self {
            schema: FIT_SCHEMA.into(),
            offset: Quantity::new(fit.offset, fit.sigma_offset, "1"),
            visibility: Quantity::new(fit.visibility, fit.sigma_visibility, "1"),
            alpha0: Quantity::new(fit.alpha0, fit.sigma_alpha0, "Hz/s"),
            period: Quantity::new(fit.period, fit.sigma_period, "Hz/s"),
            period_fixed: fit.period_fixed,
            points: fit.points,
            residual_rms: fit.residual_rms,
            reduced_chi2: fit.reduced_chi2,
            converged: fit.converged,
            g: gravity.map(|(g, _)| Quantity::new(g.g, g.sigma_g, "m/s^2")),
            tilt: gravity.map(|(_, t)| t),
        }
    }

    pub fn fit(&self) -> FringeFit {
        FringeFit {
            offset: self.offset.value,
            visibility: self.visibility.value,
            alpha0: self.alpha0.value,
            period: self.period.value,
            sigma_offset: self.offset.sigma,
            sigma_visibility: self.visibility.sigma,
            sigma_alpha0: self.alpha0.sigma,
            sigma_period: self.period.sigma,
            residual_rms: self.residual_rms,
            reduced_chi2: self.reduced_chi2,
            points: self.points,
            period_fixed: self.period_fixed,
            converged: self.converged,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialises");
    s.push('\n');
    s
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

/// Writes via a temporary file so a failed run never leaves a partial file.
pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.partial", e.to_string_lossy()),
        None => "partial".into(),
    });
    std::fs::write(&tmp, contents).map_err(|e| io_error(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| io_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan() -> FringeScan {
        let samples = (0..5)
            .map(|i| FringeSample { alpha: 25.1e6 + 1e4 * i as f64, population: 0.1 * i as f64 + 0.05, atoms: 100, seed: i })
            .collect();
        FringeScan { samples, metadata: Default::default() }
    }

    #[test]
    fn scan_round_trip() {
        let mut buf = Vec::new();
        write_scan_csv(&scan(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("alpha_hz_per_s,population,atoms,seed\r\n"));
        let back = read_scan_csv(&buf[..]).unwrap();
        assert_eq!(back.samples, scan().samples);
    }

    #[test]
    fn hand_written_columns() {
        let text = " population , alpha_hz_per_s\n0.5, 25100000\n0.25,25100100\n";
        let s = read_scan_csv(text.as_bytes()).unwrap();
        assert_eq!(s.samples.len(), 2);
        assert_eq!(s.samples[1].alpha, 25_100_100.0);
        assert_eq!(s.samples[1].atoms, 0);
    }

    #[test]
    fn malformed_row_names_line() {
        let text = "alpha_hz_per_s,population\n1,0.5\n2,abc\n";
        let e = read_scan_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        let text = "alpha_hz_per_s,population\n1,0.5\n2\n";
        let e = read_scan_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        let text = "alpha_hz_per_s,population\n1,1.5\n";
        assert!(read_scan_csv(text.as_bytes()).unwrap_err().to_string().contains("line 2"));
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(read_scan_csv("".as_bytes()).is_err());
        assert!(read_scan_csv("alpha_hz_per_s,population\n".as_bytes()).is_err());
        assert!(read_scan_csv("alpha,population\n1,0.5\n".as_bytes()).is_err());
    }

    #[test]
    fn fit_report_round_trip() {
        let fit = FringeFit { visibility: 0.8, sigma_visibility: 0.01, alpha0: 25.1e6, period: 1.1e5, converged: true, ..Default::default() };
        let r = FitReport::new(&fit, None);
        let back: FitReport = serde_json::from_str(&to_json(&r)).unwrap();
        assert_eq!(back.fit(), fit);
        assert_eq!(back.schema, FIT_SCHEMA);
    }
}
