use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smms_lab::report::{run_experiment, write_artifacts, ExperimentConfig};
use smms_lab::SmmsError;

#[derive(Parser)]
#[command(name = "smms-lab", about = "Numerical verification runner for weighted geometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
        /// Output directory for the CSV and JSON reports.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Multiply every assertion tolerance by this factor.
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
    },
    /// List the available experiments and catalog entries.
    List,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::List => {
            print!("{}", smms_lab::catalog::listing());
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            out,
            seed,
            tolerance_scale,
        } => run(&config, &out, seed, tolerance_scale),
    }
}

fn run(config: &PathBuf, out: &PathBuf, seed: Option<u64>, tolerance_scale: f64) -> ExitCode {
    let usage = ExitCode::from(2);
    if !(tolerance_scale.is_finite() && tolerance_scale > 0.0) {
        eprintln!("error: --tolerance-scale must be a positive finite number");
        return usage;
    }
    let text = match std::fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return usage;
        }
    };
    let mut cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return usage;
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.tolerance_scale = tolerance_scale;
    let report = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e @ (SmmsError::UnknownCatalogEntry(_) | SmmsError::InvalidParameter(_))) => {
            eprintln!("error: {e}");
            return usage;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = write_artifacts(&report, out) {
        eprintln!("error: cannot write artifacts to {}: {e}", out.display());
        return usage;
    }
    println!(
        "{}: {} assertions, {}",
        report.experiment,
        report.rows.len(),
        if report.passed { "all passed" } else { "FAILED" }
    );
    if report.passed {
        ExitCode::SUCCESS
    } else {
        for row in report.rows.iter().filter(|r| !r.pass) {
            println!(
                "  FAIL {}: value {:.6e} tolerance {:.6e} ({})",
                row.name, row.value, row.tolerance, row.note
            );
        }
        ExitCode::FAILURE
    }
}
