use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qsd_lab::{load_config, run_scenario, ErrorClass, RunOptions, Subcommand};

/// Killed Langevin dynamics: simulation, Lyapunov checks and
/// quasi-stationary estimates.
#[derive(Debug, Parser)]
#[command(name = "qsd-lab", version)]
struct Cli {
    /// One of: validate-potential, simulate, survival, fleming-viot,
    /// verify-c3, oracle-1d, converge.
    subcommand: Subcommand,
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides QSD_LAB_SEED and the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (outputs do not depend on it).
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli.config).and_then(|cfg| {
        run_scenario(
            &cfg,
            cli.subcommand,
            &RunOptions {
                seed: cli.seed,
                out_dir: cli.out.clone(),
                workers: cli.workers,
            },
        )
    });
    match result {
        Ok(res) => {
            println!(
                "{} {}: {} (seed {}, config {})",
                res.manifest.subcommand.as_str(),
                if res.manifest.pass { "passed" } else { "FAILED" },
                res.out_dir.display(),
                res.manifest.master_seed,
                &res.manifest.config_hash[..12],
            );
            if res.manifest.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(ErrorClass::Infeasible.exit_code() as u8)
            }
        }
        Err(e) => {
            eprintln!("qsd-lab: {e}");
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
