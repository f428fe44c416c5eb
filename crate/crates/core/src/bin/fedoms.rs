use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use fedoms::config::{run_ab, run_audit, run_experiment, ExperimentConfig};
use fedoms::Error;

#[derive(Parser)]
#[command(
    name = "fedoms",
    version,
    about = "Federated online model selection simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed and write traces plus summary.json.
    Run { config: PathBuf },
    /// Paired federated vs noncooperative runs over the configured seeds.
    Ab { config: PathBuf },
    /// Run once with every message framed and check the bit accounting.
    AuditBits { config: PathBuf },
    /// Check the configuration without running anything.
    Validate { config: PathBuf },
}

enum Failure {
    Lib(Error),
    Audit(serde_json::Value),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn execute(command: Command) -> Result<serde_json::Value, Failure> {
    match command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (report, _) = run_experiment(&cfg)?;
            Ok(serde_json::to_value(&report.metrics).map_err(Error::from)?)
        }
        Command::Ab { config } => {
            let report = run_ab(&ExperimentConfig::load(&config)?)?;
            print!("{}", report.table());
            Ok(json!({
                "mean_delta": report.mean_delta,
                "std_delta": report.std_delta,
                "sign": report.sign,
                "federated_wins": report.federated_wins,
                "seeds": report.rows.len(),
            }))
        }
        Command::AuditBits { config } => {
            let report = run_audit(&ExperimentConfig::load(&config)?)?;
            let value = serde_json::to_value(&report).map_err(Error::from)?;
            if report.consistent {
                Ok(value)
            } else {
                Err(Failure::Audit(value))
            }
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate()?;
            Ok(json!({ "valid": true, "num_spaces": cfg.resolved_num_spaces()? }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(value) => {
            println!("{value}");
            ExitCode::SUCCESS
        }
        Err(Failure::Lib(e)) => {
            // configuration problems exit 2, everything else 1
            let code = match e {
                Error::InvalidConfig(_) | Error::Json(_) => 2,
                _ => 1,
            };
            eprintln!(
                "{}",
                json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code })
            );
            ExitCode::from(code)
        }
        Err(Failure::Audit(report)) => {
            eprintln!(
                "{}",
                json!({ "error": "audit_mismatch", "message": "accounted bits disagree with frames", "report": report, "exit_code": 1 })
            );
            ExitCode::from(1)
        }
    }
}
