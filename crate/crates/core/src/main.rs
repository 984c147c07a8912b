//! `perturb2d` command line: gpt | forward | expand | study.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use perturb2d::cli::{cmd_expand, cmd_forward, cmd_gpt, cmd_study, CliError};
use perturb2d::config::StudyConfig;

#[derive(Parser)]
#[command(
    name = "perturb2d",
    about = "Boundary-integral engine for small-inclusion voltage perturbations in 2D",
    version
)]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// Path to the TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,

    /// Override the expansion orders (repeatable).
    #[arg(long = "order", global = true)]
    orders: Vec<u32>,

    /// Override the ε values: comma-separated, strictly decreasing. A single
    /// value also fixes the inclusion scale for forward/expand runs.
    #[arg(long, global = true)]
    eps: Option<String>,

    /// Override the seed for randomized checks.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Compute generalized polarization tensor tables.
    Gpt,
    /// Run the full-accuracy transmission solver.
    Forward,
    /// Assemble asymptotic expansions of the boundary data.
    Expand,
    /// Convergence study: oracle-vs-expansion residual slopes over an ε-grid.
    Study,
}

fn load_config(args: &Args) -> Result<StudyConfig, CliError> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = StudyConfig::from_toml(&text).map_err(|e| CliError::Config(e.to_string()))?;
    if !args.orders.is_empty() {
        config.expansion.orders = args.orders.clone();
    }
    if let Some(eps_list) = &args.eps {
        let grid: Result<Vec<f64>, _> = eps_list
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect();
        let grid = grid.map_err(|e| CliError::Config(format!("bad --eps list: {e}")))?;
        if grid.is_empty() {
            return Err(CliError::Config("--eps list is empty".into()));
        }
        if grid.len() == 1 {
            for inclusion in &mut config.inclusions {
                inclusion.scale = Some(grid[0]);
            }
        }
        config.study.eps_grid = grid;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

fn run(args: &Args) -> Result<(), CliError> {
    let config = load_config(args)?;
    match args.command {
        Command::Gpt => cmd_gpt(&config, &args.out, args.quiet),
        Command::Forward => cmd_forward(&config, &args.out, args.quiet),
        Command::Expand => cmd_expand(&config, &args.out, args.quiet),
        Command::Study => cmd_study(&config, &args.out, args.quiet),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("perturb2d: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
