use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gravimeter::analysis::{extract_g, fit_fringes_with, FitOptions, PeriodMode};
use gravimeter::bloch::{adiabaticity_margin, landau_zener_loss};
use gravimeter::bragg::{bragg_spectroscopy, ensemble_transfer, BraggPulse};
use gravimeter::config::{parse_quantity, preset_summary, Dimension, ExperimentConfig, ResolvedConfig};
use gravimeter::interferometer::{effective_order, simulate_fringe_scan, Arm, ArmTrajectory};
use gravimeter::io::{self, FitReport};
use gravimeter::meanfield::{chemical_potential, dephasing_crossing, integrated_dephasing, gravity_phase, sensitivity_curves};
use gravimeter::{Error, PhysicalConstants};

/// Below this relative precision dephasing is no longer competitive with
/// the best reported atomic gravimeters.
const SOA_LEVEL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "gravimeter", version, about = "Bose-condensed Mach-Zehnder gravimeter simulator")]
#[command(after_help = concat!("Presets (--preset NAME):\n", "  fig1, fig2a, fig3-bec, fig3-thermal, fig3-thermal-500nk, fig4"))]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config, TOML or JSON
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped experiment preset
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Overrides the scan seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a chirp scan, fit it and write fringes.csv and fringes.json
    Fringes,
    /// Fit a scan CSV and write fit.json
    Fit {
        csv: PathBuf,
        /// Period guess with unit, e.g. "111 kHz/s"; taken from the config
        /// when omitted
        #[arg(long)]
        period: Option<String>,
        /// Hold the period at the guess
        #[arg(long)]
        fixed_period: bool,
        /// Beam tilt from vertical, e.g. "0.5 deg"
        #[arg(long)]
        tilt: Option<String>,
    },
    /// Dephasing and shot-noise limits, written to sensitivity.csv and dephasing.json
    Dephasing,
    /// Design the beamsplitter and mirror pulses and write pulses.json
    PulseCalibrate,
    /// Simulated Bragg spectroscopy, written to spectrum.csv and spectrum.json
    Spectroscopy,
    /// Effective order and arm trajectories, written to bloch-area.json
    BlochArea,
    /// List the shipped presets
    Presets,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Format(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn run(cli: &Cli) -> gravimeter::Result<()> {
    let g = &cli.global;
    if let Command::Presets = cli.command {
        print!("{}", preset_summary());
        return Ok(());
    }
    std::fs::create_dir_all(&g.out_dir)
        .map_err(|e| Error::Io { path: g.out_dir.display().to_string(), source: e })?;
    match &cli.command {
        Command::Fringes => fringes(&load(g)?, g),
        Command::Fit { csv, period, fixed_period, tilt } => fit(g, csv, period.as_deref(), *fixed_period, tilt.as_deref()),
        Command::Dephasing => dephasing(&load(g)?, g),
        Command::PulseCalibrate => pulse_calibrate(&load(g)?, g),
        Command::Spectroscopy => spectroscopy(&load(g)?, g),
        Command::BlochArea => bloch_area(&load(g)?, g),
        Command::Presets => unreachable!(),
    }
}

/// Experiment with the seed override applied, as given and resolved.
struct Loaded {
    config: ExperimentConfig,
    resolved: ResolvedConfig,
}

fn load(g: &Global) -> gravimeter::Result<Loaded> {
    let mut config = match (&g.config, &g.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(Error::Format("no experiment given: use --config PATH or --preset NAME".into())),
    };
    if let Some(seed) = g.seed {
        config.scan.seed = Some(seed);
    }
    let resolved = config.resolve()?;
    let config = resolved.to_config();
    Ok(Loaded { config, resolved })
}

fn write(g: &Global, name: &str, contents: &[u8]) -> gravimeter::Result<PathBuf> {
    let path = g.out_dir.join(name);
    io::write_file(&path, contents)?;
    Ok(path)
}

fn write_json<T: Serialize>(g: &Global, name: &str, value: &T) -> gravimeter::Result<PathBuf> {
    write(g, name, io::to_json(value).as_bytes())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> gravimeter::Result<()>) -> gravimeter::Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

#[derive(Serialize)]
struct FringesSummary<'a> {
    schema: &'static str,
    csv: String,
    effective_order: f64,
    /// Hz/s
    expected_period: f64,
    /// Hz/s
    true_alpha0: f64,
    fit: FitReport,
    config: &'a ExperimentConfig,
}

fn fringes(l: &Loaded, g: &Global) -> gravimeter::Result<()> {
    let r = &l.resolved;
    let c = &r.constants;
    let cloud = r.cloud()?;
    let seq = r.sequence(&cloud)?;
    let settings = r.scan_settings(&seq)?;
    let scan = simulate_fringe_scan(&seq, &cloud, &r.aberration, &settings, c)?;
    let csv = write(g, "fringes.csv", &csv_bytes(|b| io::write_scan_csv(&scan, b))?)?;

    let n_eff = effective_order(&seq)?;
    let period = 1.0 / (n_eff * r.interrogation_time.powi(2));
    let options = FitOptions { period: PeriodMode::Free, reference_alpha: Some(r.scan.alpha_center) };
    let fit = fit_fringes_with(&scan, period, &options)?;
    let gravity = extract_g(&fit, c, r.scan.tilt)?;
    let summary = FringesSummary {
        schema: "gravimeter.fringes/1",
        csv: file_name(&csv),
        effective_order: n_eff,
        expected_period: period,
        true_alpha0: r.resonant_chirp()?,
        fit: FitReport::new(&fit, Some((gravity, r.scan.tilt))),
        config: &l.config,
    };
    let json = write_json(g, "fringes.json", &summary)?;
    println!(
        "V = {:.4} ± {:.4}, alpha0 = {:.2} ± {:.2} Hz/s, n_eff = {n_eff:.4}, g = {:.7} ± {:.1e} m/s^2",
        fit.visibility, fit.sigma_visibility, fit.alpha0, fit.sigma_alpha0, gravity.g, gravity.sigma_g
    );
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn fit(g: &Global, csv: &Path, period: Option<&str>, fixed: bool, tilt: Option<&str>) -> gravimeter::Result<()> {
    let bytes = io::read_file(csv)?;
    let scan = io::read_scan_csv(&bytes[..]).map_err(|e| Error::Format(format!("{}: {e}", csv.display())))?;
    let loaded = if g.config.is_some() || g.preset.is_some() { Some(load(g)?) } else { None };
    let constants = loaded.as_ref().map_or_else(PhysicalConstants::rb87, |l| l.resolved.constants);
    let period = match (period, &loaded) {
        (Some(p), _) => parse_quantity("--period", p, Dimension::ChirpRate)?,
        (None, Some(l)) => {
            let r = &l.resolved;
            let cloud = r.cloud()?;
            1.0 / (effective_order(&r.sequence(&cloud)?)? * r.interrogation_time.powi(2))
        }
        (None, None) => return Err(Error::Format("a period guess is needed: use --period or --config/--preset".into())),
    };
    let tilt = match (tilt, &loaded) {
        (Some(t), _) => parse_quantity("--tilt", t, Dimension::Angle)?,
        (None, Some(l)) => l.resolved.scan.tilt,
        (None, None) => 0.0,
    };
    let options = FitOptions {
        period: if fixed { PeriodMode::Fixed } else { PeriodMode::Free },
        ..FitOptions::for_constants(&constants)
    };
    let fit = fit_fringes_with(&scan, period, &options)?;
    let gravity = extract_g(&fit, &constants, tilt)?;
    let report = FitReport::new(&fit, Some((gravity, tilt)));
    let path = write_json(g, "fit.json", &report)?;
    print!("{}", io::to_json(&report));
    eprintln!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct DephasingSummary<'a> {
    schema: &'static str,
    csv: String,
    atoms: f64,
    order: u32,
    /// Relative precision per shot for the configured sequence
    current_limit: f64,
    /// s
    current_interrogation_time: f64,
    /// s
    current_expansion_time: f64,
    soa_level: f64,
    crossings: Vec<Crossing>,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct Crossing {
    /// s
    expansion_time: f64,
    /// Shortest interrogation time with a dephasing limit below `soa_level`, s
    interrogation_time: Option<f64>,
}

fn dephasing(l: &Loaded, g: &Global) -> gravimeter::Result<()> {
    let r = &l.resolved;
    let plan = r.dephasing_plan();
    let model = chemical_potential(plan.atoms, &r.trap, &r.constants)?;
    let rows = sensitivity_curves(&model, &plan.interrogation_times, &plan.expansion_times, plan.order)?;
    let csv = write(g, "sensitivity.csv", &csv_bytes(|b| io::write_sensitivity_csv(&rows, b))?)?;
    let phase = integrated_dephasing(&model, r.expansion_time, r.interrogation_time)?;
    let current = phase / gravity_phase(r.order as f64, r.interrogation_time, &r.constants);
    let crossings = plan
        .expansion_times
        .iter()
        .map(|&t| {
            Ok(Crossing {
                expansion_time: t,
                interrogation_time: dephasing_crossing(&model, t, plan.order, SOA_LEVEL, 100.0)?,
            })
        })
        .collect::<gravimeter::Result<Vec<_>>>()?;
    let summary = DephasingSummary {
        schema: "gravimeter.dephasing/1",
        csv: file_name(&csv),
        atoms: plan.atoms,
        order: plan.order,
        current_limit: current,
        current_interrogation_time: r.interrogation_time,
        current_expansion_time: r.expansion_time,
        soa_level: SOA_LEVEL,
        crossings,
        config: &l.config,
    };
    let json = write_json(g, "dephasing.json", &summary)?;
    println!("dephasing limit for the configured sequence: {current:.2e} per shot");
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

#[derive(Serialize)]
struct PulseReport {
    pulse: BraggPulse,
    /// Mean transfer over the cloud's momentum distribution
    efficiency: f64,
}

#[derive(Serialize)]
struct PulsesSummary<'a> {
    schema: &'static str,
    /// ħk
    momentum_width: f64,
    atoms: f64,
    beamsplitter: PulseReport,
    mirror: PulseReport,
    config: &'a ExperimentConfig,
}

fn pulse_calibrate(l: &Loaded, g: &Global) -> gravimeter::Result<()> {
    let r = &l.resolved;
    let c = &r.constants;
    let cloud = r.cloud()?;
    let seq = r.sequence(&cloud)?;
    let triple = seq.bragg_triple()?;
    let (split, mirror) = (*triple.pulses[0], *triple.pulses[1]);
    let w = cloud.longitudinal_width;
    let summary = PulsesSummary {
        schema: "gravimeter.pulses/1",
        momentum_width: w,
        atoms: cloud.atom_number,
        beamsplitter: PulseReport { pulse: split, efficiency: ensemble_transfer(&split, w, c)? },
        mirror: PulseReport { pulse: mirror, efficiency: ensemble_transfer(&mirror, w, c)? },
        config: &l.config,
    };
    let json = write_json(g, "pulses.json", &summary)?;
    println!(
        "order {}: tau = {:.3} us, splitter {:.4}, mirror {:.4}",
        split.order,
        split.tau * 1e6,
        summary.beamsplitter.efficiency,
        summary.mirror.efficiency
    );
    println!("wrote {}", json.display());
    Ok(())
}

#[derive(Serialize)]
struct SpectrumSummary<'a> {
    schema: &'static str,
    csv: String,
    probe: BraggPulse,
    amplitude: f64,
    /// Hz
    center: f64,
    /// Hz
    width: f64,
    /// ħk
    momentum_width: f64,
    /// ħk, the width the cloud was simulated with
    true_momentum_width: f64,
    config: &'a ExperimentConfig,
}

fn spectroscopy(l: &Loaded, g: &Global) -> gravimeter::Result<()> {
    let r = &l.resolved;
    let cloud = r.cloud()?;
    let (probe, grid) = r.spectroscopy_probe()?;
    let spectrum = bragg_spectroscopy(&cloud, &probe, &grid, &r.constants)?;
    let csv = write(g, "spectrum.csv", &csv_bytes(|b| io::write_spectrum_csv(&spectrum, b))?)?;
    let to_hz = 1.0 / (2.0 * std::f64::consts::PI);
    let summary = SpectrumSummary {
        schema: "gravimeter.spectrum/1",
        csv: file_name(&csv),
        probe,
        amplitude: spectrum.amplitude,
        center: spectrum.center * to_hz,
        width: spectrum.width * to_hz,
        momentum_width: spectrum.momentum_width,
        true_momentum_width: cloud.longitudinal_width,
        config: &l.config,
    };
    let json = write_json(g, "spectrum.json", &summary)?;
    println!("fitted momentum width {:.4} hbar_k (simulated {:.4})", spectrum.momentum_width, cloud.longitudinal_width);
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

#[derive(Serialize)]
struct LatticeReport {
    arm: Arm,
    /// s
    start: f64,
    /// Probability of staying in the lowest band throughout
    retention: f64,
    landau_zener_loss: f64,
    adiabaticity_margin: f64,
}

#[derive(Serialize)]
struct AreaSummary<'a> {
    schema: &'static str,
    order: u32,
    effective_order: f64,
    /// Hz/s
    fringe_period: f64,
    lattice: Vec<LatticeReport>,
    trajectories: [ArmTrajectory; 2],
    config: &'a ExperimentConfig,
}

fn bloch_area(l: &Loaded, g: &Global) -> gravimeter::Result<()> {
    let r = &l.resolved;
    let c = &r.constants;
    let cloud = r.cloud()?;
    let seq = r.sequence(&cloud)?;
    let n_eff = effective_order(&seq)?;
    let lattice = seq
        .bloch_segments()
        .map(|(start, arm, s)| {
            Ok(LatticeReport {
                arm,
                start,
                retention: s.retention(c)?,
                landau_zener_loss: landau_zener_loss(s.depth, s.sweep_time, c)?,
                adiabaticity_margin: adiabaticity_margin(s.depth, s.load_time, c)?,
            })
        })
        .collect::<gravimeter::Result<Vec<_>>>()?;
    let summary = AreaSummary {
        schema: "gravimeter.bloch-area/1",
        order: r.order,
        effective_order: n_eff,
        fringe_period: 1.0 / (n_eff * r.interrogation_time.powi(2)),
        lattice,
        trajectories: seq.trajectories()?,
        config: &l.config,
    };
    let json = write_json(g, "bloch-area.json", &summary)?;
    println!("n_eff = {n_eff:.4}, fringe period {:.1} Hz/s", summary.fringe_period);
    println!("wrote {}", json.display());
    Ok(())
}
