//! `lrsketch` command-line driver.
//!
//! Exit status: 0 when the run passes its checks, 2 when it completes but a
//! check fails, 1 on any error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lrsketch::harness::{run_experiment, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "lrsketch", version, about = "Learned sparse sketching experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a spiked synthetic dataset (train/ and test/) as SKLB1 files.
    GenData(Common),
    /// Train sketch values by finite-difference SGD.
    Train(Common),
    /// Compare a learned sketch against an oblivious one and the safeguarded stack.
    Eval(Common),
    /// Check the proxy-loss sandwich on random or supplied instances.
    ProxyCheck(Common),
    /// Verify fat shattering of a constructed family.
    ShatterVerify(Common),
    /// Degree and predicate traces of the GJ demo programs.
    GjTrace(Common),
    /// Two-level multigrid identity checks and optional prolongation training.
    AmgCheck(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Cmd {
    fn split(self) -> (Command, Common) {
        match self {
            Cmd::GenData(c) => (Command::GenData, c),
            Cmd::Train(c) => (Command::Train, c),
            Cmd::Eval(c) => (Command::Eval, c),
            Cmd::ProxyCheck(c) => (Command::ProxyCheck, c),
            Cmd::ShatterVerify(c) => (Command::ShatterVerify, c),
            Cmd::GjTrace(c) => (Command::GjTrace, c),
            Cmd::AmgCheck(c) => (Command::AmgCheck, c),
        }
    }
}

fn run(command: Command, common: Common) -> lrsketch::Result<bool> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = common.out {
        cfg.out = Some(out);
    }
    let report = run_experiment(command, &cfg)?;
    if cfg.out.is_none() {
        println!("{}", report.to_json()?);
    }
    eprintln!("{}: {} ({:.3}s)", command.name(), if report.pass { "pass" } else { "FAIL" }, report.wall_clock_seconds);
    Ok(report.pass)
}

fn main() -> ExitCode {
    let (command, common) = Cli::parse().command.split();
    match run(command, common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
