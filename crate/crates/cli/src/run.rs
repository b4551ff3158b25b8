use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Args;
use regionfocus::agent::{run_trajectory, FinalStatus};
use regionfocus::environment::{BridgeEnvironment, Environment, Simulator};

use crate::config::{self, CommonArgs, FileConfig, GatewayArgs, LoopArgs, ModelArgs, Wired};
use crate::replay::{absolute, EnvSource, RunSpec, TRANSCRIPT_FILE};
use crate::{Failed, Usage};

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Simulator script, or a directory holding `script.json`.
    #[arg(
        long,
        value_name = "PATH",
        required_unless_present = "bridge",
        conflicts_with = "bridge"
    )]
    sim: Option<PathBuf>,
    /// WebSocket address of a browser bridge.
    #[arg(long, value_name = "URL")]
    bridge: Option<String>,
    /// Page the bridge opens first.
    #[arg(long, value_name = "URL", requires = "bridge")]
    start_url: Option<String>,
    /// Task objective given to the agent.
    #[arg(long)]
    objective: String,
    /// Identifier recorded in the summary, used to pair runs in `eval`.
    #[arg(long)]
    task_id: Option<String>,
    /// Output directory; defaults to `runs/<task-id>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pause before each bridge screenshot, in milliseconds.
    #[arg(long, value_name = "MS")]
    settle_ms: Option<u64>,
    #[command(flatten)]
    gateway: GatewayArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    looping: LoopArgs,
}

pub fn cmd_run(common: &CommonArgs, args: &RunArgs) -> Result<()> {
    let file = FileConfig::load(common.config.as_deref())?;
    let mut cfg = args.looping.apply(&file)?;
    if let Some(ms) = args.settle_ms {
        cfg.settle_delay_ms = ms;
    }
    let source = match (&args.sim, &args.bridge) {
        (Some(p), _) => {
            let p = if p.is_dir() {
                p.join("script.json")
            } else {
                p.clone()
            };
            EnvSource::Sim(absolute(&p).map_err(|e| Usage(format!("--sim: {e:#}")))?)
        }
        (None, Some(address)) => EnvSource::Bridge {
            address: address.clone(),
            start_url: args.start_url.clone(),
        },
        (None, None) => return Err(Usage("one of --sim or --bridge is required".into()).into()),
    };
    let wired = config::wire(&args.gateway, &args.model, &file)?;
    let spec = RunSpec::Trajectory {
        profile: wired.gateway.profile().clone(),
        config: cfg,
        source,
        objective: args.objective.clone(),
        task_id: args.task_id.clone(),
    };
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(args.task_id.as_deref().unwrap_or("run")));
    let result = execute(&spec, &wired, &out);
    wired.save_transcript(None)?;
    result
}

/// Remove what an earlier run left in `dir`, so the new one stands alone.
fn clear_run_dir(dir: &Path) -> Result<()> {
    {
        let name = "screenshots";
        let p = dir.join(name);
        if p.exists() {
            fs::remove_dir_all(&p).with_context(|| p.display().to_string())?;
        }
    }
    fs::create_dir_all(dir).with_context(|| dir.display().to_string())
}

pub fn execute(spec: &RunSpec, wired: &Wired, out: &Path) -> Result<()> {
    let RunSpec::Trajectory {
        config: cfg,
        source,
        objective,
        task_id,
        ..
    } = spec
    else {
        unreachable!("not a trajectory run")
    };
    let mut env: Box<dyn Environment> = match source {
        EnvSource::Sim(path) => {
            Box::new(Simulator::load(path).map_err(|e| Failed(format!("{}: {e}", path.display())))?)
        }
        EnvSource::Bridge { address, start_url } => Box::new(
            BridgeEnvironment::connect(
                address,
                start_url.as_deref(),
                Duration::from_millis(cfg.settle_delay_ms),
            )
            .map_err(|e| Failed(format!("{address}: {e}")))?,
        ),
    };
    let mut rec = run_trajectory(env.as_mut(), objective, cfg, &wired.gateway);
    rec.task_id = task_id.clone();
    clear_run_dir(out)?;
    rec.write_dir(out)
        .with_context(|| out.display().to_string())?;
    spec.write(out)?;
    wired.save_transcript(Some(&out.join(TRANSCRIPT_FILE)))?;

    let goal = match rec.goal_reached {
        Some(true) => ", goal reached",
        Some(false) => ", goal not reached",
        None => "",
    };
    let rounds = rec.focus_rounds().count();
    println!(
        "{:?} after {} step(s), {} refinement round(s){goal}; written to {}",
        rec.final_status,
        rec.steps.len(),
        rounds,
        out.display()
    );
    if rec.final_status == FinalStatus::Fault {
        let why = rec
            .steps
            .iter()
            .rev()
            .find_map(|s| s.fault.clone())
            .unwrap_or_default();
        return Err(Failed(format!("run stopped on a fault: {why}")).into());
    }
    Ok(())
}
