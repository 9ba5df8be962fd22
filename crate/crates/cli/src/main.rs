//! `arpam`: run photoacoustic studies, single simulations, trace analysis and
//! the validation suite from a TOML configuration.

mod plot;

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use arpam::analysis::extract_features;
use arpam::config::{parse_config, RunConfig};
use arpam::experiments::{run_study, run_validation, Pipeline, RunArtifact, Status, StudyKind, StudyOutcome, StudyReport};
use arpam::io::{read_trace_csv, trace_to_csv, write_file, write_study};
use arpam::phantom::{build_phantom, place_absorber};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use log::{info, warn};

/// Exit status of a run whose checks failed; outputs are still written.
const EXIT_CHECKS_FAILED: u8 = 1;
/// Exit status of configuration, input and simulation errors.
const EXIT_ERROR: u8 = 3;
const LOCK_FILE: &str = ".arpam.lock";

#[derive(Parser)]
#[command(name = "arpam", version, about = "Acoustic-resolution photoacoustic microscopy simulator")]
struct Cli {
    /// Run configuration (TOML). Required.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory [default: ./out, or `out_dir` from the configuration].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Also write SVG charts.
    #[arg(long, global = true)]
    plots: bool,
    /// Worker threads [default: all cores].
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One pipeline run described by the `[run]` section.
    Simulate,
    /// One of the three studies.
    Study { kind: StudyArg },
    /// Features and spectrum of an external `time_s,pressure_pa` trace.
    Analyze { trace: PathBuf },
    /// The oracle suite.
    Validate,
    /// Voxel labels of the head with the `[run]` absorber, as CSV.
    PhantomDump,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    Size,
    Concentration,
    Depth,
}

impl From<StudyArg> for StudyKind {
    fn from(a: StudyArg) -> StudyKind {
        match a {
            StudyArg::Size => StudyKind::Size,
            StudyArg::Concentration => StudyKind::Concentration,
            StudyArg::Depth => StudyKind::Depth,
        }
    }
}

/// Holds the output directory for this process; removed on drop.
struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<DirLock> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(LOCK_FILE);
        OpenOptions::new().write(true).create_new(true).open(&path).with_context(|| {
            format!("cannot lock {}: another run may own this directory (remove {} if stale)", dir.display(), path.display())
        })?;
        Ok(DirLock(path))
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    let Some(config_path) = cli.config.clone() else {
        Cli::command().error(clap::error::ErrorKind::MissingRequiredArgument, "--config <PATH> is required").exit();
    };
    match run(&cli, &config_path) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(cli: &Cli, config_path: &Path) -> Result<u8> {
    let mut cfg = parse_config(config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let level = if cli.verbose || cfg.verbose { "debug" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global().context("setting up worker threads")?;
    }
    let out = cli.out.clone().or_else(|| cfg.out_dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    let _lock = DirLock::acquire(&out)?;
    match &cli.command {
        Command::Study { kind } => {
            cfg.study.kind = (*kind).into();
            study(&cfg, &out, cli.plots)
        }
        Command::Validate => {
            cfg.study.kind = StudyKind::Validation;
            validate(&cfg, &out)
        }
        Command::Simulate => simulate(&cfg, &out, cli.plots),
        Command::Analyze { trace } => analyze(&cfg, trace, &out),
        Command::PhantomDump => phantom_dump(&cfg, &out),
    }
}

fn exit_code(report: &StudyReport) -> u8 {
    for a in &report.assertions {
        let line = format!("{} {}: {}", a.status.name(), a.name, a.detail);
        if a.status == Status::Pass {
            info!("{line}");
        } else {
            warn!("{line}");
        }
    }
    match report.status {
        Status::Pass => 0,
        Status::Error => EXIT_ERROR,
        _ => EXIT_CHECKS_FAILED,
    }
}

fn study(cfg: &RunConfig, out: &Path, plots: bool) -> Result<u8> {
    let spec = cfg.study_spec()?;
    info!("{} study: {} runs, config hash {}", spec.kind.name(), spec.variable().len(), spec.config_hash());
    let outcome = match run_study(&spec) {
        Ok(o) => o,
        Err(e) => {
            // the study started, so its report is written even when nothing ran
            let mut report = StudyReport::empty(&spec, spec.kind.name());
            report.error = Some(e.to_string());
            report.finalize();
            write_file(&out.join("report.json"), &report.to_json())?;
            return Err(e.into());
        }
    };
    write_study(out, &outcome)?;
    if plots {
        emit_plots(out, &outcome, spec.pipeline.array.max_frequency);
    }
    if let Some(e) = &outcome.report.error {
        warn!("study aborted: {e}");
    }
    info!("wrote {}", out.display());
    Ok(exit_code(&outcome.report))
}

fn emit_plots(out: &Path, outcome: &StudyOutcome, f_max: f64) {
    // charts are a convenience: a failure here never changes the computed outputs
    match plot::study_plots(out, outcome, f_max) {
        Ok(paths) => info!("wrote {} charts", paths.len()),
        Err(e) => warn!("charts skipped: {e:#}"),
    }
}

fn validate(cfg: &RunConfig, out: &Path) -> Result<u8> {
    let spec = cfg.study_spec()?;
    let report = run_validation(&spec)?;
    write_study(out, &StudyOutcome { report: report.clone(), artifacts: Vec::new() })?;
    for c in &report.checks {
        let err = c.error.map_or("n/a".to_string(), |e| format!("{e:.3e}"));
        println!("{:<12} {:<32} error {err:<10} tolerance {:.3e}", c.status.name(), c.name, c.tolerance);
    }
    Ok(exit_code(&report))
}

fn simulate(cfg: &RunConfig, out: &Path, plots: bool) -> Result<u8> {
    let spec = cfg.study_spec()?;
    let run = cfg.run_spec()?;
    let pipeline = Pipeline::new(spec.pipeline.clone())?;
    let r = pipeline.run(&run)?;
    write_file(&out.join("trace_run.csv"), &trace_to_csv(&r.trace))?;
    write_file(&out.join("spectrum_run.csv"), &r.spectrum.to_csv())?;
    let summary = serde_json::json!({
        "run": run,
        "features": r.features,
        "absorber_voxels": r.absorber_voxels,
        "absorbed_energy_j": r.absorbed_energy,
        "max_initial_pressure_pa": r.max_initial_pressure,
        "acoustic_grid": r.acoustic_dims,
        "optics_grid": r.optics_dims,
        "config_hash": spec.config_hash(),
        "seed": spec.seed,
    });
    write_file(&out.join("run.json"), &serde_json::to_string_pretty(&summary)?)?;
    if plots {
        let outcome = StudyOutcome {
            report: StudyReport::empty(&spec, "run"),
            artifacts: vec![RunArtifact { stem: "run".into(), trace: r.trace, spectrum: r.spectrum }],
        };
        emit_plots(out, &outcome, spec.pipeline.array.max_frequency);
    }
    println!("ppp {:.6e} Pa, arrival {}", r.features.ppp, seconds(r.features.arrival_time));
    Ok(0)
}

fn seconds(t: Option<f64>) -> String {
    t.map_or("n/a".into(), |t| format!("{t:.6e} s"))
}

fn analyze(cfg: &RunConfig, trace: &Path, out: &Path) -> Result<u8> {
    let settings = cfg.pipeline_settings()?.analysis;
    let t = read_trace_csv(trace)?;
    let (features, spectrum) = extract_features(&t, &settings)?;
    write_file(&out.join("features.json"), &serde_json::to_string_pretty(&features)?)?;
    write_file(&out.join("spectrum.csv"), &spectrum.to_csv())?;
    println!("ppp {:.6e} Pa, band power {:.6e} Pa², arrival {}", features.ppp, features.band_power, seconds(features.arrival_time));
    Ok(0)
}

fn phantom_dump(cfg: &RunConfig, out: &Path) -> Result<u8> {
    let settings = cfg.pipeline_settings()?;
    let run = cfg.run_spec()?;
    let pipeline = Pipeline::new(settings.clone())?;
    let head = build_phantom(&settings.phantom)?;
    let ph = place_absorber(head, pipeline.absorber_center(run.depth)?, run.radius, run.material, run.concentration)?;
    let path = out.join("phantom.csv");
    ph.write_csv(&path)?;
    println!("{} voxels {:?} at {:.1} µm -> {}", ph.grid.len(), ph.grid.dims, ph.grid.spacing * 1e6, path.display());
    Ok(0)
}
