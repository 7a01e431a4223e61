use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use gravimeter_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(grav_last_error()) }.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
[source]
kind = "condensate"
atoms = 1e5
longitudinal_width = "0.05 hbar_k"
transverse_width = "0.1 hbar_k"
transverse_size = "10 um"

[sequence]
order = 1
interrogation_time = "3 ms"

[scan]
points = 12
detected_atoms = 0
simulated_atoms = 50
seed = 3
"#;

#[test]
fn scan_fit_and_gravity() {
    let toml = CString::new(SMALL).unwrap();
    let mut exp = ptr::null_mut();
    assert_eq!(unsafe { grav_experiment_from_toml(toml.as_ptr(), &mut exp) }, GravStatus::Ok, "{}", last_error());
    let mut n_eff = 0.0;
    assert_eq!(unsafe { grav_experiment_effective_order(exp, &mut n_eff) }, GravStatus::Ok);
    assert!((n_eff - 1.0).abs() < 1e-12);

    let mut scan = ptr::null_mut();
    assert_eq!(unsafe { grav_simulate_fringes(exp, &mut scan) }, GravStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { grav_scan_len(scan) }, 12);
    let mut s = GravSample::default();
    assert_eq!(unsafe { grav_scan_get(scan, 0, &mut s) }, GravStatus::Ok);
    assert!((0.0..=1.0).contains(&s.population));
    assert_eq!(unsafe { grav_scan_get(scan, 12, &mut s) }, GravStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));

    let mut alpha_ref = 0.0;
    unsafe { grav_doppler_chirp_rate(9.795499189, 0.0, &mut alpha_ref) };
    let mut fit = GravFit::default();
    let period = 1.0 / (3e-3f64 * 3e-3);
    assert_eq!(unsafe { grav_fit_fringes(scan, period, false, alpha_ref, &mut fit) }, GravStatus::Ok, "{}", last_error());
    assert!(fit.converged);
    assert!(((fit.period - period) / period).abs() < 1e-6, "{fit:?}");
    let (mut g, mut sg) = (0.0, 0.0);
    assert_eq!(unsafe { grav_extract_g(&fit, 0.0, &mut g, &mut sg) }, GravStatus::Ok);
    assert!((g - 9.795499189).abs() < 1e-6, "{g}");

    let mut csv = ptr::null_mut();
    assert_eq!(unsafe { grav_scan_to_csv(scan, &mut csv) }, GravStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { grav_scan_from_csv(csv, &mut back) }, GravStatus::Ok);
    assert_eq!(unsafe { grav_scan_len(back) }, 12);
    unsafe {
        grav_string_free(csv);
        grav_scan_free(back);
        grav_scan_free(scan);
        grav_experiment_free(exp);
    }
}

#[test]
fn resolved_toml_round_trips() {
    let toml = CString::new(SMALL).unwrap();
    let mut exp = ptr::null_mut();
    unsafe { grav_experiment_from_toml(toml.as_ptr(), &mut exp) };
    assert_eq!(unsafe { grav_experiment_set_seed(exp, 99) }, GravStatus::Ok);
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { grav_experiment_to_toml(exp, &mut text) }, GravStatus::Ok);
    let s = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_owned();
    assert!(s.contains("seed = 99"), "{s}");
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { grav_experiment_from_toml(text, &mut again) }, GravStatus::Ok, "{}", last_error());
    unsafe {
        grav_string_free(text);
        grav_experiment_free(again);
        grav_experiment_free(exp);
    }
}

#[test]
fn config_errors_name_the_field() {
    let toml = CString::new(SMALL.replace("\"3 ms\"", "\"3 Hz\"")).unwrap();
    let mut exp = ptr::null_mut();
    assert_eq!(unsafe { grav_experiment_from_toml(toml.as_ptr(), &mut exp) }, GravStatus::Config);
    assert!(exp.is_null());
    assert!(last_error().starts_with("sequence.interrogation_time"), "{}", last_error());
    let bad = CString::new("alpha_hz_per_s,population\n1,0.5\n2,x\n").unwrap();
    let mut scan = ptr::null_mut();
    assert_eq!(unsafe { grav_scan_from_csv(bad.as_ptr(), &mut scan) }, GravStatus::Config);
    assert!(last_error().contains("line 3"));
}

#[test]
fn momentum_width_saturates() {
    let (mut a, mut b) = (0.0, 0.0);
    unsafe {
        grav_momentum_width(2e6, 12e-3, &mut a);
        grav_momentum_width(2e6, 40e-3, &mut b);
    }
    assert!(a > 0.1 && a < b * 1.0001 && b < 0.17, "{a} {b}");
    assert_eq!(unsafe { grav_momentum_width(-1.0, 12e-3, &mut a) }, GravStatus::Physics);
}

#[test]
fn header_matches_exports() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/gravimeter.h")).unwrap();
    let source = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    for line in source.lines().filter(|l| l.contains("extern \"C\" fn ")) {
        let name = line.split("fn ").nth(1).unwrap().split('(').next().unwrap();
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

/// Compiles and runs a small C client against the static library.
#[test]
fn c_client() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let target = dir.join("../../target");
    let lib = ["debug", "release"]
        .iter()
        .map(|p| target.join(p).join("libgravimeter_ffi.a"))
        .filter(|p| p.exists())
        .max_by_key(|p| p.metadata().and_then(|m| m.modified()).ok());
    let Some(lib) = lib else {
        println!("static library not built, skipping");
        return;
    };
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        println!("no C compiler, skipping");
        return;
    };
    assert!(cc.status.success());
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("client");
    let status = Command::new("cc")
        .arg(dir.join("tests/client.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("alpha0 25.1"), "{stdout}");
}
