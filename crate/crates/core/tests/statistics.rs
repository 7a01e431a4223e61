use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use gravimeter::analysis::{fit_fringes_with, FitOptions, FringeFit};
use gravimeter::bragg::design_pulse_pair;
use gravimeter::interferometer::{
    fringe_period, mach_zehnder_from_pulses, simulate_fringe_scan, AberrationMap, FringeSample, FringeScan, ScanSettings,
};
use gravimeter::source::doppler_chirp_rate;
use gravimeter::{PhysicalConstants, SourceCloud};

const ALPHA0: f64 = 25.1e6;
const PERIOD: f64 = 1.1e5;
const ATOMS: u64 = 1000;

fn synthetic(seed: u64, offset: f64, visibility: f64) -> FringeScan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..30)
        .map(|i| {
            let alpha = ALPHA0 + PERIOD * (2.0 * i as f64 / 29.0 - 1.0) + 0.13 * PERIOD;
            let p = 0.5 * (offset + visibility * (2.0 * PI * (alpha - ALPHA0) / PERIOD).cos());
            let hits = Binomial::new(ATOMS, p).unwrap().sample(&mut rng);
            FringeSample { alpha, population: hits as f64 / ATOMS as f64, atoms: ATOMS, seed }
        })
        .collect();
    FringeScan { samples, metadata: Default::default() }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn fit_pulls_are_standard_normal() {
    let (offset, visibility) = (1.0, 0.8);
    let options = FitOptions { reference_alpha: Some(ALPHA0), ..FitOptions::default() };
    let fits: Vec<FringeFit> =
        (0..100).map(|s| fit_fringes_with(&synthetic(s, offset, visibility), PERIOD * 1.02, &options).unwrap()).collect();
    assert!(fits.iter().all(|f| f.converged));
    let pulls = [
        ("offset", fits.iter().map(|f| (f.offset - offset) / f.sigma_offset).collect::<Vec<_>>()),
        ("visibility", fits.iter().map(|f| (f.visibility - visibility) / f.sigma_visibility).collect()),
        ("alpha0", fits.iter().map(|f| (f.alpha0 - ALPHA0) / f.sigma_alpha0).collect()),
        ("period", fits.iter().map(|f| (f.period - PERIOD) / f.sigma_period).collect()),
    ];
    for (name, p) in pulls {
        let (m, v) = mean_var(&p);
        assert!(m.abs() < 0.3, "{name} pull mean {m}");
        assert!((v - 1.0).abs() < 0.3, "{name} pull variance {v}");
    }
}

#[test]
fn residuals_match_shot_noise() {
    let c = PhysicalConstants::rb87();
    let cloud = SourceCloud::condensate(1e5, 0.0, 0.0, 0.0).unwrap();
    let (split, mirror) = design_pulse_pair(1, &cloud, &c).unwrap();
    let seq = mach_zehnder_from_pulses(split, mirror, 3e-3, &c).unwrap();
    let alpha0 = doppler_chirp_rate(c.g_ref, 0.0, &c).unwrap();
    let period = fringe_period(&seq).unwrap();
    let grid: Vec<f64> = (0..30).map(|i| alpha0 + 2.0 * period * (i as f64 / 29.0 - 0.5)).collect();
    let mut ratios = Vec::new();
    for seed in 0..200 {
        let settings = ScanSettings::new(grid.clone(), c.g_ref, seed).with_simulated_atoms(1).with_detected_atoms(ATOMS);
        let scan = simulate_fringe_scan(&seq, &cloud, &AberrationMap::none(), &settings, &c).unwrap();
        let fit = fit_fringes_with(&scan, period, &FitOptions::for_constants(&c)).unwrap();
        ratios.push(fit.reduced_chi2);
    }
    let (m, _) = mean_var(&ratios);
    assert!((m - 1.0).abs() < 0.05, "mean reduced chi2 {m}");
}

