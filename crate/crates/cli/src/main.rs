//! qsteer: seeded experiment runner for the partial-measurement steering
//! simulator. `run` executes a declarative experiment config and writes CSV
//! curves plus a JSON manifest, `verify` runs the built-in check catalog,
//! and `calibrate` prints the fitted readout model.

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use qsteer_core::readout::{calibrate_readout, CalibrationTargets};
use qsteer_core::verify;

#[derive(Parser)]
#[command(name = "qsteer", version, about = "Ancilla-mediated partial-measurement simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write its curves.
    Run {
        /// Path to the JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the config; default "out").
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: QSTEER_THREADS or all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Replace every Monte Carlo trial count.
        #[arg(long)]
        trials_override: Option<u64>,
    },
    /// Run the verification catalog and report each criterion.
    Verify {
        /// Seed for the Monte Carlo criteria.
        #[arg(long, default_value_t = 20260825)]
        seed: u64,
        /// Run a single criterion instead of the whole catalog.
        #[arg(long)]
        criterion: Option<u32>,
    },
    /// Print the readout model fitted to the device targets, as JSON.
    Calibrate,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, seed, out, threads, trials_override } => {
            run(&config, seed, out, threads, trials_override)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { seed, criterion } => verify_command(seed, criterion),
        Command::Calibrate => calibrate_command(),
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        return Ok(n);
    }
    if let Ok(var) = std::env::var("QSTEER_THREADS") {
        return var
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("QSTEER_THREADS={var:?} is not a positive integer"));
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run(
    config_path: &PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    threads: Option<usize>,
    trials_override: Option<u64>,
) -> Result<()> {
    let started = Instant::now();
    let mut cfg = config::load(config_path)?;
    if let Some(trials) = trials_override {
        if trials == 0 {
            bail!("--trials-override must be at least 1");
        }
        cfg.experiment.override_trials(trials);
    }
    let seed = seed.unwrap_or(cfg.seed);
    let threads = thread_count(threads)?;
    let out_dir = out
        .or(cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    let result = experiments::run(&cfg.experiment, seed, threads)?;
    let mut outputs = Vec::new();
    for (name, table) in &result.tables {
        if table.is_empty() {
            bail!("experiment produced an empty table {name}");
        }
        table.write(&out_dir.join(name))?;
        outputs.push((*name).to_string());
    }
    let manifest = output::Manifest {
        tool: "qsteer",
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment.name(),
        seed,
        threads,
        parameters: cfg.experiment.parameters_json()?,
        outputs,
        duration_seconds: 0.0,
        extra: result.extra,
    };
    let path = manifest.write(&out_dir, started.elapsed())?;
    println!(
        "wrote {} curve file(s) and {}",
        manifest.outputs.len(),
        path.display()
    );
    Ok(())
}

fn verify_command(seed: u64, criterion: Option<u32>) -> Result<ExitCode> {
    let reports = match criterion {
        Some(id) => vec![verify::run_criterion(id, seed)?],
        None => verify::run_all(seed)?,
    };
    for report in &reports {
        print!("{report}");
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    println!("summary: {passed}/{} criteria passed", reports.len());
    Ok(if passed == reports.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn calibrate_command() -> Result<ExitCode> {
    let calibration = calibrate_readout(&CalibrationTargets::standard())?;
    let m = calibration.model;
    let doc = json!({
        "model": {
            "bin_duration_s": m.bin_duration,
            "max_bins": m.max_bins,
            "p_det": m.p_det,
            "p_flip": m.p_flip,
            "p_dark": m.p_dark,
            "kappa": m.kappa,
            "c_floor": m.c_floor,
        },
        "residuals": calibration
            .residuals
            .iter()
            .map(|r| {
                json!({
                    "name": r.name,
                    "target": r.target,
                    "achieved": r.achieved,
                    "residual": r.achieved - r.target,
                })
            })
            .collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(ExitCode::SUCCESS)
}
