use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lemlab_cli::commands::{cmd_evolve, cmd_fit, cmd_sweep, cmd_trace};
use lemlab_cli::verify::{run_suite, Suite};
use lemlab_cli::{CliError, ScenarioConfig, EXIT_NUMERICAL, EXIT_OK};
use lemlab_core::lemniscate::{DEFAULT_RESTARTS, DEFAULT_SEED};

#[derive(Parser)]
#[command(
    name = "lemlab",
    version,
    about = "Laplacian growth and lemniscate experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a scenario and write trajectory, events and plots.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (one trajectory uses one).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a degree-N lemniscate to a curve CSV and print the report JSON.
    Fit {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        degree: u64,
        #[arg(long, default_value_t = DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace the lemniscate of `[A:]RE,IM[^K];…` to a curve CSV.
    Trace {
        #[arg(long, allow_hyphen_values = true)]
        poly: String,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a verification suite; exit 0 iff every check passes.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
    },
    /// Destruction experiment over the config's sweep grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Evolve {
            config,
            jobs: _,
            out,
        } => {
            let cfg = ScenarioConfig::from_path(&config)?;
            let summary = cmd_evolve(&cfg, out.as_deref())?;
            for f in &summary.files {
                println!("{}", f.display());
            }
            Ok(summary.exit_code())
        }
        Command::Fit {
            curve,
            degree,
            restarts,
            seed,
            out,
        } => {
            let report = cmd_fit(&curve, degree as usize, restarts, seed)?;
            let json = serde_json::to_string_pretty(&report).expect("plain data");
            match out {
                Some(path) => std::fs::write(&path, json + "\n").map_err(|e| CliError::Io {
                    path: path.display().to_string(),
                    source: e,
                })?,
                None => println!("{json}"),
            }
            Ok(EXIT_OK)
        }
        Command::Trace { poly, samples, out } => {
            cmd_trace(&poly, samples, &out)?;
            Ok(EXIT_OK)
        }
        Command::Verify { suite } => {
            let checks = run_suite(suite)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&checks).expect("plain data")
            );
            Ok(if checks.iter().all(|c| c.pass) {
                EXIT_OK
            } else {
                EXIT_NUMERICAL
            })
        }
        Command::Sweep { config, jobs, out } => {
            let cfg = ScenarioConfig::from_path(&config)?;
            let summary = cmd_sweep(&cfg, jobs.unwrap_or_else(default_jobs), out.as_deref())?;
            println!("{}", summary.file.display());
            Ok(summary.exit_code())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LEMLAB_LOG", "error")).init();
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
