use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use l1ppp::trace::format_sig15;
use l1ppp_cli::runner::status_word;
use l1ppp_cli::{run, sweep, CliError, Config};

/// Projection proximal-point experiments for l1-regularized least squares.
///
/// Set RUST_LOG (e.g. `RUST_LOG=info`) for progress messages.
#[derive(Parser)]
#[command(name = "l1ppp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for traces and solutions (overrides `output_dir`).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Random seed for problem generation (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once with the configured solver.
    Run { config: PathBuf },
    /// Solve for every (solver, mu, sigma) combination of the [sweep] section.
    Sweep { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Returns whether every solve ended without an abort.
fn execute(cli: &Cli) -> Result<bool, CliError> {
    let path = match &cli.command {
        Command::Run { config } | Command::Sweep { config } => config,
    };
    let mut config = Config::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out_dir = cli
        .output_dir
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    match cli.command {
        Command::Run { .. } => {
            let report = run(&config, &out_dir)?;
            report.print();
            println!("output: {}", out_dir.display());
            Ok(report.status.is_success())
        }
        Command::Sweep { .. } => {
            let reports = sweep(&config, &out_dir)?;
            println!(
                "{:<9} {:>8} {:>6} {:>22} {:>6} {:>6}  status",
                "solver", "mu", "sigma", "final psi", "outer", "inner"
            );
            for r in &reports {
                let show = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
                println!(
                    "{:<9} {:>8} {:>6} {:>22} {:>6} {:>6}  {}",
                    r.cell.solver.name(),
                    show(r.cell.mu),
                    show(r.cell.sigma),
                    format_sig15(r.final_psi),
                    r.outer_iters,
                    r.inner_iters,
                    status_word(&r.status)
                );
            }
            println!("output: {}", out_dir.display());
            Ok(reports.iter().all(|r| r.status.is_success()))
        }
    }
}
