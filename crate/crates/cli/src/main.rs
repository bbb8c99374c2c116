//! `qng-cert`: certify quantum non-Gaussianity of click-detector POVMs from
//! thermal-probe statistics, and produce the data behind the usual plots.

mod args;
mod cmd;
mod counts;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use args::OutputArgs;

/// Exit status for a refused plan (safety condition not met).
const EXIT_REFUSED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "qng-cert", version, about, long_about = None)]
struct Cli {
    #[command(flatten)]
    output: OutputArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Gaussian boundary (V, p0, q0) with V log-spaced on [1e-6, 1]
    Boundary(cmd::boundary::BoundaryArgs),
    /// Certify from a counts file with the vacuum, Q and S probe rows
    Certify(cmd::certify::CertifyArgs),
    /// Closed-form (P0, Q0) of a detector at a given regularization
    Model(cmd::model::ModelArgs),
    /// Sweep the S-probe mean or the background noise level
    #[command(subcommand)]
    Sweep(cmd::experiment::SweepCommand),
    /// One simulated experiment with sampled click counts
    Simulate(cmd::experiment::SimulateArgs),
    /// Multiplexed photon-number-resolving detector tools
    #[command(subcommand)]
    Pnrd(cmd::pnrd::PnrdCommand),
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(raw) = std::env::var("QNG_CERT_THREADS") {
        let n: usize = raw.trim().parse().map_err(|_| {
            anyhow::anyhow!("QNG_CERT_THREADS must be a positive integer, got '{raw}'")
        })?;
        if n == 0 {
            anyhow::bail!("QNG_CERT_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    let out = &cli.output;
    match cli.command {
        Command::Boundary(a) => cmd::boundary::run(&a, out),
        Command::Certify(a) => cmd::certify::run(&a, out),
        Command::Model(a) => cmd::model::run(&a, out),
        Command::Sweep(c) => cmd::experiment::run_sweep(&c, out),
        Command::Simulate(a) => cmd::experiment::run_simulate(&a, out),
        Command::Pnrd(c) => cmd::pnrd::run(&c, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(qngcert::Error::PlanRejected(msg)) = err.downcast_ref::<qngcert::Error>() {
                eprintln!("qng-cert: refused: {msg}");
                return ExitCode::from(EXIT_REFUSED);
            }
            eprintln!("qng-cert: error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
