use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use regionfocus::agent::TrajectoryRecord;
use regionfocus::evalkit::{step_histogram, summarize_trajectories, DEFAULT_REPETITIONS};

use crate::config::{self, CommonArgs, FileConfig, GatewayArgs, ModelArgs};
use crate::ground::{execute_report, loop_config, run_reports};
use crate::replay::{absolute, RunSpec};
use crate::{Failed, Usage};

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Grounding accuracy with and without refinement on a task file.
    Grounding(GroundingArgs),
    /// Success rates over trajectory directories.
    Trajectories(TrajectoryArgs),
    /// Per-task step differences between two sets of trajectories.
    Steps(StepArgs),
}

#[derive(Debug, Args)]
pub struct GroundingArgs {
    #[arg(long, value_name = "FILE")]
    tasks: PathBuf,
    /// Directory for report.json, table.txt, run.json and the transcript.
    #[arg(long, value_name = "DIR")]
    report: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    gateway: GatewayArgs,
    #[command(flatten)]
    model: ModelArgs,
}

/// Judge source; without one the simulator's goal check decides.
#[derive(Debug, Args)]
#[group(required = false, multiple = false)]
pub struct JudgeArgs {
    /// Judge replies from a recorded transcript.
    #[arg(long, value_name = "FILE")]
    replay: Option<PathBuf>,
    /// Judge replies from a scripted mock.
    #[arg(long, value_name = "FILE")]
    mock: Option<PathBuf>,
    /// Ask the configured endpoint.
    #[arg(long)]
    live: bool,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    /// Trajectory directories, or directories containing them.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Times the judge is asked per trajectory; the spread is reported.
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    repetitions: usize,
    /// Write report.json here.
    #[arg(long, value_name = "DIR")]
    report: Option<PathBuf>,
    #[command(flatten)]
    judge: JudgeArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct StepArgs {
    /// Trajectories of the first run.
    #[arg(long, required = true, num_args = 1..)]
    a: Vec<PathBuf>,
    /// Trajectories of the second run, matched by task id.
    #[arg(long, required = true, num_args = 1..)]
    b: Vec<PathBuf>,
    /// Write histogram.json here.
    #[arg(long, value_name = "DIR")]
    report: Option<PathBuf>,
}

pub fn cmd_eval(common: &CommonArgs, cmd: &EvalCommand) -> Result<()> {
    let file = FileConfig::load(common.config.as_deref())?;
    match cmd {
        EvalCommand::Grounding(args) => {
            let wired = config::wire(&args.gateway, &args.model, &file)?;
            let spec = RunSpec::Grounding {
                profile: wired.gateway.profile().clone(),
                config: loop_config(&file, false)?,
                tasks: absolute(&args.tasks).map_err(|e| Usage(format!("--tasks: {e:#}")))?,
                modes: vec![false, true],
            };
            let jobs = args.jobs.or(file.jobs).unwrap_or(1);
            let result = match &args.report {
                Some(dir) => execute_report(&spec, &wired, dir, jobs),
                None => run_reports(&spec, &wired, jobs).map(|_| ()),
            };
            wired.save_transcript(None)?;
            result
        }
        EvalCommand::Trajectories(args) => {
            let records = load_records(&args.dirs)?;
            let judge =
                if args.judge.replay.is_some() || args.judge.mock.is_some() || args.judge.live {
                    let source = GatewayArgs {
                        replay: args.judge.replay.clone(),
                        mock: args.judge.mock.clone(),
                        live: args.judge.live,
                    };
                    Some(config::wire(&source, &args.model, &file)?)
                } else {
                    None
                };
            let report = summarize_trajectories(
                &records,
                judge.as_ref().map(|w| &w.gateway),
                args.repetitions,
            )
            .map_err(|e| Failed(e.to_string()))?;
            for t in &report.tasks {
                let v: Vec<&str> = t
                    .verdicts
                    .iter()
                    .map(|v| match v {
                        Some(true) => "success",
                        Some(false) => "failure",
                        None => "invalid",
                    })
                    .collect();
                println!(
                    "{}\t{}\t{} step(s)\t{}",
                    t.task_id,
                    t.site,
                    t.steps,
                    v.join(",")
                );
            }
            match (report.mean, report.stddev) {
                (Some(m), Some(s)) => println!("success rate {:.1}% ± {:.1}", m * 100.0, s * 100.0),
                _ => println!("success rate unavailable"),
            }
            println!("coverage {:.1}%", report.coverage * 100.0);
            if let Some(dir) = &args.report {
                write_json(dir, "report.json", &report)?;
            }
            if let Some(w) = &judge {
                w.save_transcript(None)?;
            }
            if report.coverage < 1.0 {
                return Err(Failed("some judgments failed".into()).into());
            }
            Ok(())
        }
        EvalCommand::Steps(args) => {
            let a = load_records(&args.a)?;
            let b = load_records(&args.b)?;
            let hist = step_histogram(&a, &b).map_err(|e| Failed(e.to_string()))?;
            for (diff, n) in &hist.bins {
                println!("{diff:+}\t{n}");
            }
            if let Some(dir) = &args.report {
                write_json(dir, "histogram.json", &hist)?;
            }
            Ok(())
        }
    }
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| path.display().to_string())
}

/// Each path is a trajectory directory or a directory of them, in name order.
fn load_records(paths: &[PathBuf]) -> Result<Vec<TrajectoryRecord>> {
    let mut dirs = Vec::new();
    for p in paths {
        if p.join("summary.json").is_file() {
            dirs.push(p.clone());
            continue;
        }
        let mut found: Vec<PathBuf> = fs::read_dir(p)
            .map_err(|e| Usage(format!("{}: {e}", p.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join("summary.json").is_file())
            .collect();
        if found.is_empty() {
            return Err(Usage(format!("{}: no trajectory found", p.display())).into());
        }
        found.sort();
        dirs.extend(found);
    }
    dirs.iter()
        .map(|d| {
            TrajectoryRecord::load_dir(d)
                .map_err(|e| Failed(format!("{}: {e}", d.display())).into())
        })
        .collect()
}
