//! `weakmeas` — simulate dispersive weak-measurement records of a two-level
//! system, infer quantum trajectories from them, and validate the inference
//! by conditional tomography over ensembles.
//!
//! Exit codes: 0 success, 1 statistical-acceptance failure (`check`, or a
//! starved reconstruction), 2 usage/configuration/IO error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use weakmeas::calibration::calibration_report;
use weakmeas::filter::trajectory;
use weakmeas::model::validate;
use weakmeas::simulator::simulate_repetition;
use weakmeas::tomography::{compare, correlation_curves, reconstruct_trajectory};
use weakmeas::{EnsembleDataset64, MeasurementRecord64, Quadrature};

use weakmeas_cli::checks::{run_all, Scale};
use weakmeas_cli::config::{DurationMode, FileFormat, RunConfig};
use weakmeas_cli::io;

#[derive(Parser)]
#[command(
    name = "weakmeas",
    version,
    about = "Weak-measurement record simulation and Bayesian trajectory estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override; all randomness flows from this.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print and save the derived measurement scales (strength, dephasing,
    /// record width, phase per photon) for the configured operating point.
    Calibrate {
        #[command(flatten)]
        common: ConfigArgs,
        /// Measurement duration in seconds (defaults to the configured one).
        #[arg(long)]
        tau: Option<f64>,
        /// Directory for calibration.toml (stdout only when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full experiment sequence and write records, true-state
    /// traces, tomography outcomes, and a reproducibility manifest.
    Simulate {
        #[command(flatten)]
        common: ConfigArgs,
        /// Number of repetitions.
        #[arg(long)]
        reps: Option<usize>,
        /// Record quadrature: z or phi.
        #[arg(long)]
        quadrature: Option<String>,
        /// Measurement duration in seconds.
        #[arg(long)]
        tau: Option<f64>,
        /// Cycle repetitions over every grid time instead of the full
        /// duration (what trajectory reconstruction needs).
        #[arg(long)]
        grid_durations: bool,
        /// Records container: csv or bin.
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing dataset directory.
        #[arg(long)]
        overwrite: bool,
    },
    /// Infer quantum trajectories from records.
    Filter {
        #[command(flatten)]
        common: ConfigArgs,
        /// Dataset directory produced by `simulate`.
        #[arg(long, conflicts_with = "record")]
        data: Option<PathBuf>,
        /// Single records file (CSV schema of records.csv).
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// One table per record instead of a single concatenated table.
        #[arg(long)]
        split: bool,
    },
    /// Reconstruct the trajectory of a reference record from the ensemble
    /// and compare it with the filter's trajectory.
    Reconstruct {
        /// Dataset directory produced by `simulate`.
        #[arg(long)]
        data: PathBuf,
        /// Use repetition N of the dataset as the reference record.
        #[arg(long, default_value_t = 0, conflicts_with = "reference")]
        reference_rep: usize,
        /// External reference records file (CSV schema of records.csv).
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Fixed matching half-width (voltage units); adaptive when omitted.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Minimum matched outcomes per axis for a trusted point.
        #[arg(long, default_value_t = weakmeas::tomography::DEFAULT_MIN_COUNT)]
        min_count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Conditional tomography vs integrated record value, with the
    /// closed-form curves alongside.
    Correlate {
        /// Dataset directory produced by `simulate`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 25)]
        bins: usize,
        /// Select one measurement duration (seconds) from a mixed dataset.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in validation suite and print one line per criterion.
    Check {
        /// Reduced-scale smoke mode (informational).
        #[arg(long)]
        quick: bool,
        /// Base seed for the suite.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Comma-separated criterion ids to run (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<usize>>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Ok(workers) = std::env::var("WEAKMEAS_WORKERS") {
        match workers.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => log::warn!("ignoring invalid WEAKMEAS_WORKERS = {workers:?}"),
        }
    }

    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            classify(&err)
        }
    }
}

/// Starved reconstructions are statistical failures (exit 1); everything
/// else that errors is a usage/config/IO problem (exit 2).
fn classify(err: &anyhow::Error) -> ExitCode {
    if let Some(core) = err.downcast_ref::<weakmeas::Error>() {
        if matches!(core, weakmeas::Error::Starved(_)) {
            return ExitCode::from(1);
        }
    }
    ExitCode::from(2)
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Calibrate { common, tau, out } => calibrate(common, tau, out),
        Command::Simulate {
            common,
            reps,
            quadrature,
            tau,
            grid_durations,
            format,
            out,
            overwrite,
        } => simulate(common, reps, quadrature, tau, grid_durations, format, out, overwrite),
        Command::Filter {
            common,
            data,
            record,
            out,
            split,
        } => filter_cmd(common, data, record, out, split),
        Command::Reconstruct {
            data,
            reference_rep,
            reference,
            epsilon,
            min_count,
            out,
        } => reconstruct_cmd(data, reference_rep, reference, epsilon, min_count, out),
        Command::Correlate { data, bins, tau, out } => correlate_cmd(data, bins, tau, out),
        Command::Check { quick, seed, only } => check_cmd(quick, seed, only),
    }
}

fn load_config(common: &ConfigArgs) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.run.seed = seed;
    }
    Ok(config)
}

fn parse_quadrature(s: &str) -> Result<Quadrature> {
    match s.to_ascii_lowercase().as_str() {
        "z" => Ok(Quadrature::Z),
        "phi" => Ok(Quadrature::Phi),
        other => bail!("unknown quadrature {other:?} (expected z or phi)"),
    }
}

fn calibrate(common: ConfigArgs, tau: Option<f64>, out: Option<PathBuf>) -> Result<ExitCode> {
    let config = load_config(&common)?;
    let params = config.physical_params()?;
    let meas = config.measurement_config()?;
    validate(params, meas)?;
    let tau = tau.unwrap_or(meas.duration);
    let report = calibration_report(&params, tau, meas.delta_v)?;

    let identity_lhs = report.gamma * tau;
    let identity_rhs = report.s * (1.0 - params.eta) / (8.0 * params.eta) + tau / params.t2_star;

    println!("tau_s = {tau}");
    println!("strength = {}", report.s);
    println!("gamma_per_s = {}", report.gamma);
    println!("sigma = {}", report.sigma);
    println!("phase_per_photon_rad = {}", report.phase_per_photon);
    println!(
        "identity gamma*tau = {identity_lhs} vs strength route = {identity_rhs} (|diff| = {:e})",
        (identity_lhs - identity_rhs).abs()
    );

    if let Some(dir) = out {
        fs::create_dir_all(&dir)?;
        io::write_calibration_toml(
            &dir.join("calibration.toml"),
            &config,
            tau,
            &report,
            identity_lhs,
            identity_rhs,
        )?;
        println!("wrote {}", dir.join("calibration.toml").display());
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    common: ConfigArgs,
    reps: Option<usize>,
    quadrature: Option<String>,
    tau: Option<f64>,
    grid_durations: bool,
    format: Option<String>,
    out: PathBuf,
    overwrite: bool,
) -> Result<ExitCode> {
    let mut config = load_config(&common)?;
    if let Some(r) = reps {
        config.plan.repetitions = r;
    }
    if let Some(q) = quadrature {
        config.measurement.quadrature = parse_quadrature(&q)?;
    }
    if let Some(t) = tau {
        config.measurement.duration_us = t * 1e6;
    }
    if grid_durations {
        config.plan.duration_mode = DurationMode::Grid;
    }
    if let Some(f) = format {
        config.run.format = match f.to_ascii_lowercase().as_str() {
            "csv" => FileFormat::Csv,
            "bin" => FileFormat::Bin,
            other => bail!("unknown format {other:?} (expected csv or bin)"),
        };
    }

    let params = config.physical_params()?;
    let meas = config.measurement_config()?;
    validate(params, meas)?;
    let plan = config.experiment_plan(&meas)?;

    fs::create_dir_all(&out)?;
    if out.join(io::MANIFEST_NAME).exists() && !overwrite {
        bail!(
            "{} already contains a dataset; pass --overwrite to replace it",
            out.display()
        );
    }

    // Guard the total work before any file is touched.
    let steps_per: Vec<u64> = plan
        .measure_durations
        .iter()
        .map(|d| (d / meas.step).round() as u64)
        .collect();
    let m = steps_per.len();
    let total_steps = (plan.repetitions / m) as u64 * steps_per.iter().sum::<u64>()
        + steps_per[..plan.repetitions % m].iter().sum::<u64>();
    if total_steps > plan.step_cap {
        return Err(weakmeas::Error::ResourceCap {
            requested: total_steps,
            cap: plan.step_cap,
        }
        .into());
    }

    let (records_path, outcomes_path, traces_path) = io::dataset_paths(&out, config.run.format);
    let seed = config.run.seed;

    // Simulate in deterministic chunks: parallel within a chunk, written in
    // order, so memory stays bounded and bytes are identical for any worker
    // count.
    const CHUNK: usize = 4096;
    let mut records_csv = match config.run.format {
        FileFormat::Csv => Some(io::TableWriter::records(&records_path, &config)?),
        FileFormat::Bin => None,
    };
    let mut records_bin = match config.run.format {
        FileFormat::Bin => Some(io::RecordsBinWriter::create(&records_path, &config)?),
        FileFormat::Csv => None,
    };
    let mut outcomes = io::TableWriter::outcomes(&outcomes_path, &config)?;
    let mut traces = io::TableWriter::traces(&traces_path, &config)?;

    let mut rep = 0usize;
    while rep < plan.repetitions {
        let hi = (rep + CHUNK).min(plan.repetitions);
        let chunk: Vec<_> = (rep..hi)
            .into_par_iter()
            .map(|k| simulate_repetition(&plan, &params, &meas, seed, k))
            .collect::<weakmeas::Result<Vec<_>>>()?;
        for (offset, (record, trace, outcome)) in chunk.into_iter().enumerate() {
            let k = rep + offset;
            if let Some(w) = records_csv.as_mut() {
                w.record_rows(k, &record)?;
            }
            if let Some(w) = records_bin.as_mut() {
                w.push(&record)?;
            }
            outcomes.outcome_row(k, &outcome)?;
            traces.trace_rows(k, &trace)?;
        }
        rep = hi;
    }
    if let Some(w) = records_csv {
        w.finish()?;
    }
    if let Some(w) = records_bin {
        w.finish()?;
    }
    outcomes.finish()?;
    traces.finish()?;

    let files = vec![
        records_path
            .file_name()
            .unwrap()
            .to_string_lossy()
            .into_owned(),
        "outcomes.csv".to_string(),
        "traces.csv".to_string(),
    ];
    io::Manifest::new(&config, files).write(&out)?;
    println!(
        "wrote {} repetitions ({} steps) to {}",
        plan.repetitions,
        total_steps,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn filter_cmd(
    common: ConfigArgs,
    data: Option<PathBuf>,
    record: Option<PathBuf>,
    out: PathBuf,
    split: bool,
) -> Result<ExitCode> {
    let (config, records) = match (&data, &record) {
        (Some(dir), None) => {
            let loaded = io::load_dataset(dir)?;
            let records: Vec<MeasurementRecord64> = loaded
                .dataset
                .entries()
                .iter()
                .map(|(r, _)| r.clone())
                .collect();
            (loaded.config, records)
        }
        (None, Some(path)) => {
            let config = load_config(&common)?;
            let meas = config.measurement_config()?;
            let records = io::read_records_csv(path, meas.quadrature, meas.step)?;
            (config, records)
        }
        _ => bail!("pass exactly one of --data or --record"),
    };

    let params = config.physical_params()?;
    let meas = config.measurement_config()?;
    fs::create_dir_all(&out)?;

    let trajectories: Vec<_> = records
        .iter()
        .map(|r| trajectory(r, &params, &meas))
        .collect::<weakmeas::Result<_>>()?;

    if split {
        for (k, (traj, rec)) in trajectories.iter().zip(&records).enumerate() {
            let path = out.join(format!("trajectory_{k:06}.csv"));
            io::write_trajectories_csv(&path, &config, std::iter::once((k, traj, rec)))?;
        }
        println!("wrote {} trajectory tables to {}", records.len(), out.display());
    } else {
        let path = out.join("trajectories.csv");
        io::write_trajectories_csv(
            &path,
            &config,
            trajectories
                .iter()
                .zip(&records)
                .enumerate()
                .map(|(k, (t, r))| (k, t, r)),
        )?;
        println!("wrote {} trajectories to {}", records.len(), path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn reconstruct_cmd(
    data: PathBuf,
    reference_rep: usize,
    reference: Option<PathBuf>,
    epsilon: Option<f64>,
    min_count: usize,
    out: PathBuf,
) -> Result<ExitCode> {
    let loaded = io::load_dataset(&data)?;
    let config = &loaded.config;
    let params = config.physical_params()?;
    let meas = config.measurement_config()?;
    let dataset: &EnsembleDataset64 = &loaded.dataset;

    let reference_record = match reference {
        Some(path) => {
            let mut records = io::read_records_csv(&path, meas.quadrature, meas.step)?;
            if records.is_empty() {
                bail!("{} contains no records", path.display());
            }
            records.swap_remove(0)
        }
        None => {
            let entry = dataset.entries().get(reference_rep).with_context(|| {
                format!(
                    "--reference-rep {reference_rep} out of range ({} repetitions)",
                    dataset.len()
                )
            })?;
            entry.0.clone()
        }
    };

    let traj = trajectory(&reference_record, &params, &meas)?;
    let recon = reconstruct_trajectory(
        dataset,
        &reference_record,
        epsilon,
        min_count,
        config.plan.readout_fidelity,
    )?;
    let report = compare(&traj, &recon)?;

    fs::create_dir_all(&out)?;
    io::write_reconstruction_csv(&out.join("reconstruction.csv"), config, &recon)?;
    io::write_trajectories_csv(
        &out.join("reference_trajectory.csv"),
        config,
        std::iter::once((reference_rep, &traj, &reference_record)),
    )?;
    let ok_points = recon.points.iter().filter(|p| p.ok).count();
    io::write_comparison_json(
        &out.join("comparison.json"),
        &io::ComparisonFile {
            reference_seed: recon.reference_seed,
            min_count,
            points_total: recon.points.len(),
            points_ok: ok_points,
            report: &report,
        },
    )?;
    println!(
        "reconstructed {} points ({} trusted); per-axis rms x/y/z = {:.4}/{:.4}/{:.4}",
        recon.points.len(),
        ok_points,
        report.by_axis[0].rms,
        report.by_axis[1].rms,
        report.by_axis[2].rms,
    );
    Ok(ExitCode::SUCCESS)
}

fn correlate_cmd(data: PathBuf, bins: usize, tau: Option<f64>, out: PathBuf) -> Result<ExitCode> {
    let loaded = io::load_dataset(&data)?;
    let config = &loaded.config;
    let dataset = match tau {
        None => loaded.dataset,
        Some(t) => select_duration(&loaded.dataset, t)?,
    };
    let table = correlation_curves(&dataset, bins, config.plan.readout_fidelity)?;
    fs::create_dir_all(&out)?;
    io::write_correlation_csv(&out.join("correlation.csv"), config, &table)?;
    println!(
        "wrote {} bins at tau = {} s (S = {:.3}) to {}",
        table.bins.len(),
        table.tau,
        table.s,
        out.join("correlation.csv").display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Restrict a mixed-duration dataset to the repetitions measured for `tau`.
fn select_duration(dataset: &EnsembleDataset64, tau: f64) -> Result<EnsembleDataset64> {
    let config = dataset.config();
    let tol = config.step * 1e-9;
    let entries: Vec<_> = dataset
        .entries()
        .iter()
        .filter(|(_, o)| (o.measure_duration - tau).abs() <= tol)
        .cloned()
        .collect();
    if entries.is_empty() {
        bail!("no repetitions were measured for tau = {tau} s");
    }
    let sub_config = config.with_duration(tau)?;
    Ok(EnsembleDataset64::new(*dataset.params(), sub_config, entries)?)
}

fn check_cmd(quick: bool, seed: u64, only: Option<Vec<usize>>) -> Result<ExitCode> {
    let scale = if quick { Scale::quick() } else { Scale::full() };
    let results = run_all(&scale, seed, only.as_deref());
    if results.is_empty() {
        bail!("no criteria selected");
    }
    let mut all_passed = true;
    for result in &results {
        println!("{}", result.line(quick));
        all_passed &= result.passed;
    }
    if all_passed {
        println!("all {} criteria passed", results.len());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("FAILURES present");
        Ok(ExitCode::from(1))
    }
}

