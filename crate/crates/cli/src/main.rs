//! `distill`: command-line front end for the distillation workbench.
//!
//! Exit status is 0 on success, 1 when a verification check fails and 2 on
//! bad input.

mod commands;
mod grid;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use distill_core::distillation::Margins;

use commands::{CompileArgs, Output, Protocol, SimulateArgs};
use grid::{parse_f_grid, FGrid};
use output::Emit;
use verify::Fault;

/// Bad input; checks that run and fail are reported through [`Output`].
#[derive(Debug)]
pub enum Failure {
    Input(String),
}

#[derive(Parser)]
#[command(name = "distill", version, about = "Entanglement distillation workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output format [default: csv for bounds and simulate, json otherwise]
    #[arg(long, global = true, value_enum)]
    emit: Option<Emit>,

    /// Significant decimal digits of printed numbers.
    #[arg(long, global = true, default_value_t = 12, value_parser = clap::value_parser!(u32).range(1..=17))]
    precision: u32,
}

#[derive(Subcommand)]
enum Command {
    /// E_f interval, p.p.t. bound and hashing rate of isotropic states.
    Bounds {
        /// Comma-separated dimensions.
        #[arg(long = "K-list", value_delimiter = ',', required = true)]
        k_list: Vec<u128>,
        /// Fidelities as start:stop:step or a single value.
        #[arg(long = "F-grid", value_parser = parse_f_grid, default_value = "0:1:0.1")]
        f_grid: FGrid,
    },
    /// Simulate a protocol on isotropic inputs and compare with its closed form.
    Simulate {
        #[arg(long = "K")]
        k: usize,
        #[arg(long = "Kprime")]
        kprime: Option<usize>,
        #[arg(long = "F-grid", value_parser = parse_f_grid, default_value = "0:1:0.1")]
        f_grid: FGrid,
        #[arg(long, value_enum)]
        protocol: Protocol,
        /// Haar samples for the twirl.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Class predicates of an operation descriptor.
    Classify {
        /// Descriptor JSON, or `-` for stdin.
        input: PathBuf,
    },
    /// Rates and conditions of every definition on a protocol trace.
    Rates {
        /// Trace JSON, or `-` for stdin.
        input: PathBuf,
    },
    /// Compile a trace into a non-measuring protocol.
    Compile {
        /// Trace JSON, or `-` for stdin.
        input: PathBuf,
        /// Margins JSON (`{"kind": "relative", ...}` or `{"kind": "explicit", ...}`).
        #[arg(long, conflicts_with_all = ["p_slack", "rate_slack"])]
        margins: Option<PathBuf>,
        /// Relative slack on branch probabilities.
        #[arg(long, default_value_t = 0.1)]
        p_slack: f64,
        /// Relative slack on hashing rates.
        #[arg(long, default_value_t = 0.01)]
        rate_slack: f64,
        /// Comma-separated copy counts.
        #[arg(long = "k-list", value_delimiter = ',', required = true)]
        k_list: Vec<u64>,
        /// Round dimensions down to powers of two first.
        #[arg(long)]
        normalize: bool,
        /// Largest k for the exact failure probability.
        #[arg(long)]
        exact_limit: Option<u64>,
    },
    /// Run the invariant suites.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run only these suites (repeatable or comma-separated).
        #[arg(long, value_delimiter = ',')]
        suite: Vec<String>,
        /// Perturb a closed form to check that the harness notices.
        #[arg(long, value_enum)]
        inject_fault: Option<Fault>,
    },
}

fn run(cli: Cli) -> Result<Output, Failure> {
    let p = cli.precision;
    match cli.command {
        Command::Bounds { k_list, f_grid } => commands::bounds(&k_list, &f_grid.0, cli.emit.unwrap_or(Emit::Csv), p),
        Command::Simulate { k, kprime, f_grid, protocol, samples, seed } => {
            let args = SimulateArgs { k, kprime, grid: f_grid.0, protocol, samples, seed };
            commands::simulate(&args, cli.emit.unwrap_or(Emit::Csv), p)
        }
        Command::Classify { input } => commands::run_classify(&input, cli.emit.unwrap_or(Emit::Json), p),
        Command::Rates { input } => commands::rates(&input, cli.emit.unwrap_or(Emit::Json), p),
        Command::Compile { input, margins, p_slack, rate_slack, k_list, normalize, exact_limit } => {
            let margins = match margins {
                Some(path) => commands::read_json::<Margins>(&path)?,
                None => Margins::Relative { p_slack, rate_slack },
            };
            let args = CompileArgs { trace: &input, margins, k_list: &k_list, normalize, exact_limit };
            commands::compile(&args, cli.emit.unwrap_or(Emit::Json), p)
        }
        Command::Verify { seed, suite, inject_fault } => {
            let report = verify::run(seed, &suite, inject_fault).map_err(Failure::Input)?;
            let failed = report
                .suites
                .iter()
                .find(|s| s.failed > 0)
                .map(|s| format!("{}: {}", s.suite, s.failures.first().map(String::as_str).unwrap_or("")));
            Ok(Output { text: verify::render(&report, cli.emit.unwrap_or(Emit::Json), p), failed })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{}", out.text);
            match out.failed {
                None => ExitCode::SUCCESS,
                Some(msg) => {
                    eprintln!("verification failed: {msg}");
                    ExitCode::from(1)
                }
            }
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
