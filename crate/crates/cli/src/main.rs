mod config;
mod eval;
mod ground;
mod render;
mod replay;
mod run;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::CommonArgs;

/// Visual test-time scaling for GUI agents.
#[derive(Debug, Parser)]
#[command(name = "regionfocus", version, about, propagate_version = true)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ground an instruction on a screenshot, or a whole task file.
    Ground(ground::GroundArgs),
    /// Run the agent on a simulator script or a browser bridge.
    Run(run::RunArgs),
    /// Benchmark reports.
    #[command(subcommand)]
    Eval(eval::EvalCommand),
    /// Draw the annotated snapshots recorded in a trace.
    RenderMap(render::RenderArgs),
    /// Re-run a recorded run or report offline and compare the output.
    Replay(replay::ReplayArgs),
}

/// Bad invocation or configuration; exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// The command ran but something failed along the way; exits with status 1.
#[derive(Debug)]
pub struct Failed(pub String);

impl fmt::Display for Failed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Failed {}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.common.verbose);
    let result = match &cli.command {
        Command::Ground(a) => ground::cmd_ground(&cli.common, a),
        Command::Run(a) => run::cmd_run(&cli.common, a),
        Command::Eval(c) => eval::cmd_eval(&cli.common, c),
        Command::RenderMap(a) => render::cmd_render_map(&cli.common, a),
        Command::Replay(a) => replay::cmd_replay(&cli.common, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<Usage>().is_some() => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
