use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cit_filter::config::ScenarioConfig;
use cit_filter::eom::derive_eom;
use cit_filter::error::{CitError, Result};
use cit_filter::params::{check_conditions, derive_quantities};
use cit_filter::scenarios;
use cit_filter::validate::full_suite;

const EXIT_VALIDATION: u8 = 4;

#[derive(Parser)]
#[command(name = "cit-filter", version, about = "Photon-number-dependent group delay in cavity-induced transparency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run { config: PathBuf },
    /// Run the validation suite.
    Validate {
        /// Smaller rings, no velocity measurements.
        #[arg(long)]
        quick: bool,
    },
    /// Print derived quantities and the operating-condition report.
    Conditions { config: PathBuf },
}

/// `CIT_FILTER_THREADS`, when set.
fn env_threads() -> Result<Option<usize>> {
    match std::env::var("CIT_FILTER_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CitError::ConfigKey {
                key: "CIT_FILTER_THREADS".into(),
                reason: format!("expected a positive integer, got '{v}'"),
            }),
        },
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ScenarioConfig::from_file(&config)?;
            let report = scenarios::run(&cfg, env_threads()?)?;
            for c in &report.manifest.checks {
                println!("{}", c.line());
            }
            println!(
                "{} finished in {:.2} s, outputs in {}",
                report.manifest.scenario,
                report.manifest.wall_time_s,
                report.dir.display()
            );
            Ok(report.passed())
        }
        Command::Validate { quick } => {
            let pool = scenarios::thread_pool(None, env_threads()?)?;
            let checks = pool.install(|| full_suite(quick, &derive_eom()))?;
            for c in &checks {
                println!("{}", c.line());
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {failed} failed", checks.len());
            Ok(failed == 0)
        }
        Command::Conditions { config } => {
            let cfg = ScenarioConfig::from_file(&config)?;
            let d = derive_quantities(&cfg.params)?;
            let report = check_conditions(&cfg.params, &cfg.pulse)?;
            println!("OD = {:.4}", d.od);
            println!("v1/c = {:.6e}", d.v1);
            println!("v2/c = {:.6e}", d.v2);
            println!("dtau12 = {:.6e}", d.delta_tau_12);
            println!("dtau12 (weak coupling) = {:.6e}", d.delta_tau_12_approx);
            println!("transparency width = {:.6e}", d.omega_tr);
            for m in &report.messages {
                println!("{m}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VALIDATION),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
