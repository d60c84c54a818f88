use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracemeta_cli::{
    cmd_check, cmd_enumerate, cmd_extract, cmd_graph, cmd_run, render, CheckConfig, CliError, RunConfig, DEFAULT_CAP,
};

/// Trace-based inference metaprograms for a small probabilistic language.
#[derive(Parser, Debug)]
#[command(name = "tracemeta", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the output to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run inference chains and report sample statistics.
    Run {
        program: PathBuf,
        /// Metaprogram JSON; defaults to the exact Gibbs kernel.
        #[arg(long)]
        metaprogram: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        iters: u64,
        #[arg(long, default_value_t = 0)]
        burnin: u64,
        #[arg(long, default_value_t = 1)]
        thin: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Independent chains run concurrently and merged.
        #[arg(long, default_value_t = 1)]
        chains: u64,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
        /// Include the last trace of the first chain.
        #[arg(long)]
        dump_trace: bool,
    },
    /// Enumerate every trace with its exact density and posterior.
    Enumerate {
        program: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
    },
    /// Check the convergence conditions of a metaprogram.
    Check {
        program: PathBuf,
        #[arg(long)]
        metaprogram: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Chain length behind the TV table; 0 skips it.
        #[arg(long, default_value_t = 10_000)]
        iters: u64,
    },
    /// Extract the subproblem chosen by a strategy from one execution.
    Extract {
        program: PathBuf,
        /// Strategy JSON, e.g. '{"by-labels":["x"]}'.
        #[arg(long)]
        strategy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the dependence graph of one execution as DOT.
    Graph {
        program: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn dispatch(command: Command) -> Result<String, CliError> {
    match command {
        Command::Run { program, metaprogram, iters, burnin, thin, seed, chains, cap, dump_trace } => {
            let cfg = RunConfig { program_path: program, metaprogram_path: metaprogram, iters, burnin, thin, seed, chains, cap, dump_trace };
            cmd_run(&cfg).map(|v| render(&v))
        }
        Command::Enumerate { program, cap } => cmd_enumerate(&program, cap).map(|v| render(&v)),
        Command::Check { program, metaprogram, cap, seed, iters } => {
            let cfg = CheckConfig { program_path: program, metaprogram_path: metaprogram, cap, seed, iters };
            cmd_check(&cfg).map(|v| render(&v))
        }
        Command::Extract { program, strategy, seed } => cmd_extract(&program, &strategy, seed).map(|v| render(&v)),
        Command::Graph { program, seed } => cmd_graph(&program, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(text) => {
            if let Some(path) = cli.out {
                if let Err(e) = std::fs::write(&path, text) {
                    let err = CliError::Input { path: path.display().to_string(), message: e.to_string() };
                    eprint!("{}", render(&err.to_json()));
                    return ExitCode::from(1);
                }
            } else {
                print!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprint!("{}", render(&e.to_json()));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
