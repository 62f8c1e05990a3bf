//! `broadbeam` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 failed
//! verification, 3 optimizer stopped at its iteration cap.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{ConstructMethod, ExpandMethod};
use config::RunConfig;
use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "broadbeam", version, about = "Broad-beam configuration design for dual-polarized reconfigurable surfaces")]
struct Cli {
    /// Worker threads for grid sweeps and per-user evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Construct, verify or expand complementary pairs.
    Golay {
        #[command(subcommand)]
        action: GolayAction,
    },
    /// Array factor and radiation pattern over the configured grid.
    Pattern(RunArgs),
    /// ε-complementary phase search on the configured backhaul.
    Optimize(RunArgs),
    /// Spectral-efficiency reports for every configured design.
    Evaluate(RunArgs),
    /// Minimum SE per design over the configured transmit powers.
    Sweep(RunArgs),
    /// Runs a checked-in figure configuration.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u8).range(3..=9))]
        figure: u8,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the one in the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Seed for channel draws, user drops and the optimizer.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum GolayAction {
    /// Builds an array pair from two sequence pairs of the catalog.
    Construct {
        #[arg(long)]
        seed_len: usize,
        /// Length of the second sequence pair; defaults to `--seed-len`.
        #[arg(long)]
        second_len: Option<usize>,
        #[arg(long, value_enum, default_value = "prop2-vertical")]
        method: ConstructMethod,
        #[arg(long, default_value = "golay_pair.json")]
        out: PathBuf,
    },
    /// Checks that a stored pair is complementary.
    Verify {
        file: PathBuf,
        /// Absolute sidepeak tolerance; defaults to 1e-10 times the pair size.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Combines two stored array pairs into a larger one.
    Expand {
        first: PathBuf,
        second: PathBuf,
        #[arg(long, value_enum, default_value = "vertical")]
        method: ExpandMethod,
        #[arg(long, default_value = "golay_expanded.json")]
        out: PathBuf,
    },
}

fn load(args: &RunArgs) -> CliResult<(RunConfig, PathBuf)> {
    let cfg = RunConfig::load(&args.config)?;
    let dir = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, dir))
}

fn seeded(args: &RunArgs, what: &str) -> CliResult<u64> {
    args.seed.ok_or_else(|| CliError::Usage(format!("{what} is stochastic; pass --seed")))
}

fn run(cli: Cli) -> CliResult<String> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return error::usage("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Golay { action } => match action {
            GolayAction::Construct { seed_len, second_len, method, out } => {
                commands::golay_construct(seed_len, second_len, method, &out)
            }
            GolayAction::Verify { file, tol } => commands::golay_verify(&file, tol),
            GolayAction::Expand { first, second, method, out } => commands::golay_expand(&first, &second, method, &out),
        },
        Command::Pattern(args) => {
            let (cfg, dir) = load(&args)?;
            if cfg.is_stochastic() && args.seed.is_none() {
                return error::usage("this configuration is stochastic; pass --seed");
            }
            commands::pattern(&cfg, args.seed, &dir)
        }
        Command::Optimize(args) => {
            let (cfg, dir) = load(&args)?;
            commands::optimize(&cfg, seeded(&args, "optimize")?, &dir)
        }
        Command::Evaluate(args) => {
            let (cfg, dir) = load(&args)?;
            commands::evaluate(&cfg, seeded(&args, "evaluate")?, &dir)
        }
        Command::Sweep(args) => {
            let (cfg, dir) = load(&args)?;
            commands::sweep(&cfg, seeded(&args, "sweep")?, &dir)
        }
        Command::Reproduce { figure, seed, out } => commands::reproduce(figure, seed, out.as_deref().map(Path::new)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::NotConverged(summary) = &e {
                println!("{summary}");
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
