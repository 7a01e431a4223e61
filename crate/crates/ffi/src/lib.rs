//! C interface to the gravimeter toolkit.
//!
//! Every fallible function returns a [`GravStatus`]; on failure a message is
//! available from [`grav_last_error`] on the same thread. Objects are opaque
//! handles created by the `grav_*_from_*` and `grav_simulate_*` functions and
//! released by the matching `grav_*_free`. Strings returned to the caller are released
//! with [`grav_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use gravimeter::analysis::{extract_g, fit_fringes_with, FitError, FitOptions, PeriodMode};
use gravimeter::config::{ExperimentConfig, ResolvedConfig};
use gravimeter::interferometer::{effective_order, simulate_fringe_scan, FringeScan};
use gravimeter::io;
use gravimeter::meanfield::{chemical_potential, momentum_width};
use gravimeter::source::doppler_chirp_rate;
use gravimeter::{Error, PhysicalConstants, TrapConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GravStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Physics = 4,
    Fit = 5,
    Io = 6,
    Panic = 7,
}

/// One scan point.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GravSample {
    /// Hz/s
    pub alpha: f64,
    pub population: f64,
    /// Detected atoms, 0 for a noiseless point
    pub atoms: u64,
    pub seed: u64,
}

/// Fringe fit with 1-σ uncertainties. Chirps are in Hz/s.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GravFit {
    pub offset: f64,
    pub visibility: f64,
    pub alpha0: f64,
    pub period: f64,
    pub sigma_offset: f64,
    pub sigma_visibility: f64,
    pub sigma_alpha0: f64,
    pub sigma_period: f64,
    pub reduced_chi2: f64,
    pub points: u32,
    pub converged: bool,
}

/// A resolved experiment configuration.
pub struct GravExperiment {
    config: ExperimentConfig,
    resolved: ResolvedConfig,
}

/// A fringe scan.
pub struct GravScan {
    scan: FringeScan,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> GravStatus {
    match e {
        Error::Config(_) | Error::Format(_) => GravStatus::Config,
        Error::Fit(_) => GravStatus::Fit,
        Error::Io { .. } => GravStatus::Io,
        _ => GravStatus::Physics,
    }
}

type Outcome = Result<(), (GravStatus, String)>;

fn fail(status: GravStatus, msg: impl Into<String>) -> Outcome {
    Err((status, msg.into()))
}

fn lib(e: impl Into<Error>) -> (GravStatus, String) {
    let e = e.into();
    (status_of(&e), e.to_string())
}

fn guard(f: impl FnOnce() -> Outcome) -> GravStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GravStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GravStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, (GravStatus, String)> {
    if p.is_null() {
        return Err((GravStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (GravStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(GravStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

fn experiment(config: ExperimentConfig) -> Result<GravExperiment, (GravStatus, String)> {
    let resolved = config.resolve().map_err(lib)?;
    Ok(GravExperiment { config, resolved })
}

fn give_string(s: String, out: *mut *mut c_char) -> Outcome {
    let c = CString::new(s).map_err(|_| (GravStatus::InvalidArgument, "string contains NUL".to_string()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message left by the most recent fallible call on this thread, empty if
/// it succeeded. The pointer stays valid until the next call into the
/// library on this thread.
#[no_mangle]
pub extern "C" fn grav_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn grav_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn grav_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn grav_experiment_from_preset(name: *const c_char, out: *mut *mut GravExperiment) -> GravStatus {
    guard(|| {
        non_null!(out);
        let name = text(name, "name")?;
        let exp = experiment(ExperimentConfig::preset(name).map_err(lib)?)?;
        *out = Box::into_raw(Box::new(exp));
        Ok(())
    })
}

/// Parses a TOML experiment config.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn grav_experiment_from_toml(toml: *const c_char, out: *mut *mut GravExperiment) -> GravStatus {
    guard(|| {
        non_null!(out);
        let t = text(toml, "toml")?;
        let exp = experiment(ExperimentConfig::from_toml(t).map_err(lib)?)?;
        *out = Box::into_raw(Box::new(exp));
        Ok(())
    })
}

/// # Safety
/// `exp` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn grav_experiment_free(exp: *mut GravExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn grav_experiment_set_seed(exp: *mut GravExperiment, seed: u64) -> GravStatus {
    guard(|| {
        non_null!(exp);
        let e = &mut *exp;
        let mut config = e.config.clone();
        config.scan.seed = Some(seed);
        *e = experiment(config)?;
        Ok(())
    })
}

/// Fully resolved config as TOML, released with [`grav_string_free`].
///
/// # Safety
/// `exp` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn grav_experiment_to_toml(exp: *const GravExperiment, out: *mut *mut c_char) -> GravStatus {
    guard(|| {
        non_null!(exp, out);
        give_string((*exp).resolved.to_config().to_toml(), out)
    })
}

/// Effective order of the experiment's pulse sequence.
///
/// # Safety
/// `exp` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn grav_experiment_effective_order(exp: *const GravExperiment, out: *mut f64) -> GravStatus {
    guard(|| {
        non_null!(exp, out);
        let r = &(*exp).resolved;
        let cloud = r.cloud().map_err(lib)?;
        let seq = r.sequence(&cloud).map_err(lib)?;
        *out = effective_order(&seq).map_err(lib)?;
        Ok(())
    })
}

/// Runs the experiment's chirp scan.
///
/// # Safety
/// `exp` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn grav_simulate_fringes(exp: *const GravExperiment, out: *mut *mut GravScan) -> GravStatus {
    guard(|| {
        non_null!(exp, out);
        let r = &(*exp).resolved;
        let cloud = r.cloud().map_err(lib)?;
        let seq = r.sequence(&cloud).map_err(lib)?;
        let settings = r.scan_settings(&seq).map_err(lib)?;
        let scan = simulate_fringe_scan(&seq, &cloud, &r.aberration, &settings, &r.constants).map_err(lib)?;
        *out = Box::into_raw(Box::new(GravScan { scan }));
        Ok(())
    })
}

/// Builds a scan from `n` samples.
///
/// # Safety
/// `samples` must point to `n` readable samples and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn grav_scan_from_samples(samples: *const GravSample, n: usize, out: *mut *mut GravScan) -> GravStatus {
    guard(|| {
        non_null!(samples, out);
        let samples = std::slice::from_raw_parts(samples, n)
            .iter()
            .map(|s| gravimeter::interferometer::FringeSample {
                alpha: s.alpha,
                population: s.population,
                atoms: s.atoms,
                seed: s.seed,
            })
            .collect();
        *out = Box::into_raw(Box::new(GravScan { scan: FringeScan { samples, metadata: Default::default() } }));
        Ok(())
    })
}

/// Parses scan CSV text.
///
/// # Safety
/// `csv` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn grav_scan_from_csv(csv: *const c_char, out: *mut *mut GravScan) -> GravStatus {
    guard(|| {
        non_null!(out);
        let t = text(csv, "csv")?;
        let scan = io::read_scan_csv(t.as_bytes()).map_err(lib)?;
        *out = Box::into_raw(Box::new(GravScan { scan }));
        Ok(())
    })
}

/// Scan as CSV text, released with [`grav_string_free`].
///
/// # Safety
/// `scan` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn grav_scan_to_csv(scan: *const GravScan, out: *mut *mut c_char) -> GravStatus {
    guard(|| {
        non_null!(scan, out);
        let mut buf = Vec::new();
        io::write_scan_csv(&(*scan).scan, &mut buf).map_err(lib)?;
        give_string(String::from_utf8(buf).expect("CSV is ASCII"), out)
    })
}

/// Number of points; 0 for a null handle.
///
/// # Safety
/// `scan` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn grav_scan_len(scan: *const GravScan) -> usize {
    if scan.is_null() {
        0
    } else {
        (*scan).scan.samples.len()
    }
}

/// # Safety
/// `scan` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn grav_scan_get(scan: *const GravScan, index: usize, out: *mut GravSample) -> GravStatus {
    guard(|| {
        non_null!(scan, out);
        let samples = &(*scan).scan.samples;
        let Some(s) = samples.get(index) else {
            return fail(GravStatus::InvalidArgument, format!("index {index} out of range for {} points", samples.len()));
        };
        *out = GravSample { alpha: s.alpha, population: s.population, atoms: s.atoms, seed: s.seed };
        Ok(())
    })
}

/// # Safety
/// `scan` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn grav_scan_free(scan: *mut GravScan) {
    if !scan.is_null() {
        drop(Box::from_raw(scan));
    }
}

/// Fits `P(α) = ½(A + V cos(2π(α − α₀)/period))`.
///
/// `reference_alpha` picks the reported branch of `α₀`; pass NaN for the
/// centre of the scan.
///
/// # Safety
/// `scan` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn grav_fit_fringes(
    scan: *const GravScan,
    period_guess: f64,
    fixed_period: bool,
    reference_alpha: f64,
    out: *mut GravFit,
) -> GravStatus {
    guard(|| {
        non_null!(scan, out);
        let options = FitOptions {
            period: if fixed_period { PeriodMode::Fixed } else { PeriodMode::Free },
            reference_alpha: (!reference_alpha.is_nan()).then_some(reference_alpha),
        };
        let f = fit_fringes_with(&(*scan).scan, period_guess, &options).map_err(lib)?;
        *out = GravFit {
            offset: f.offset,
            visibility: f.visibility,
            alpha0: f.alpha0,
            period: f.period,
            sigma_offset: f.sigma_offset,
            sigma_visibility: f.sigma_visibility,
            sigma_alpha0: f.sigma_alpha0,
            sigma_period: f.sigma_period,
            reduced_chi2: f.reduced_chi2,
            points: f.points as u32,
            converged: f.converged,
        };
        Ok(())
    })
}

/// Gravity from a fit for ⁸⁷Rb at 780 nm, m/s².
///
/// # Safety
/// `fit` must be readable and `g`, `sigma_g` writable.
#[no_mangle]
pub unsafe extern "C" fn grav_extract_g(fit: *const GravFit, tilt_rad: f64, g: *mut f64, sigma_g: *mut f64) -> GravStatus {
    guard(|| {
        non_null!(fit, g, sigma_g);
        let f = &*fit;
        let full = gravimeter::analysis::FringeFit {
            alpha0: f.alpha0,
            sigma_alpha0: f.sigma_alpha0,
            converged: f.converged,
            ..Default::default()
        };
        let est = extract_g(&full, &PhysicalConstants::rb87(), tilt_rad).map_err(|e: FitError| lib(e))?;
        *g = est.g;
        *sigma_g = est.sigma_g;
        Ok(())
    })
}

/// Chirp rate cancelling the Doppler shift for ⁸⁷Rb at 780 nm, Hz/s.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grav_doppler_chirp_rate(g: f64, tilt_rad: f64, out: *mut f64) -> GravStatus {
    guard(|| {
        non_null!(out);
        *out = doppler_chirp_rate(g, tilt_rad, &PhysicalConstants::rb87()).map_err(lib)?;
        Ok(())
    })
}

/// Vertical momentum width in ħk of a condensate of `atoms` released from
/// the reference trap, after `expansion_s` of free expansion.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grav_momentum_width(atoms: f64, expansion_s: f64, out: *mut f64) -> GravStatus {
    guard(|| {
        non_null!(out);
        let model = chemical_potential(atoms, &TrapConfig::reference(), &PhysicalConstants::rb87()).map_err(lib)?;
        *out = momentum_width(&model, expansion_s).map_err(lib)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn error_is_recorded_and_cleared() {
        let mut out = ptr::null_mut();
        let s = unsafe { grav_experiment_from_preset(c"nope".as_ptr(), &mut out) };
        assert_eq!(s, GravStatus::Config);
        let msg = unsafe { CStr::from_ptr(grav_last_error()) }.to_str().unwrap();
        assert!(msg.contains("nope"), "{msg}");
        let mut r = 0.0;
        assert_eq!(unsafe { grav_doppler_chirp_rate(9.7955, 0.0, &mut r) }, GravStatus::Ok);
        assert!(unsafe { CStr::from_ptr(grav_last_error()) }.to_bytes().is_empty());
    }

    #[test]
    fn null_pointers() {
        assert_eq!(unsafe { grav_doppler_chirp_rate(9.8, 0.0, ptr::null_mut()) }, GravStatus::NullPointer);
        let mut out = ptr::null_mut();
        assert_eq!(unsafe { grav_scan_from_csv(ptr::null(), &mut out) }, GravStatus::NullPointer);
        assert_eq!(unsafe { grav_scan_len(ptr::null()) }, 0);
    }
}
