use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use regionfocus::agent::{run_grounding, LoopConfig};
use regionfocus::evalkit::{
    load_grounding_tasks, render_table, run_grounding_eval, GroundingReport,
};
use regionfocus::Screenshot;
use serde_json::{Map, Value};

use crate::config::{self, CommonArgs, FileConfig, GatewayArgs, ModelArgs, Wired};
use crate::replay::{absolute, RunSpec, TRANSCRIPT_FILE};
use crate::{Failed, Usage};

#[derive(Debug, Args)]
pub struct GroundArgs {
    /// Screenshot to ground on.
    #[arg(
        long,
        requires = "instruction",
        conflicts_with = "tasks",
        required_unless_present = "tasks"
    )]
    image: Option<PathBuf>,
    /// What to locate on the screenshot.
    #[arg(long, requires = "image")]
    instruction: Option<String>,
    /// JSON-lines task file (see the evalkit module docs for the schema).
    #[arg(long, value_name = "FILE")]
    tasks: Option<PathBuf>,
    /// Directory for report.json, table.txt, run.json and the transcript.
    #[arg(long, value_name = "DIR", requires = "tasks")]
    report: Option<PathBuf>,
    /// Worker threads for a task file.
    #[arg(long)]
    jobs: Option<usize>,
    /// Report the model's first answer without refinement.
    #[arg(long)]
    no_regionfocus: bool,
    #[command(flatten)]
    gateway: GatewayArgs,
    #[command(flatten)]
    model: ModelArgs,
}

pub fn loop_config(file: &FileConfig, no_regionfocus: bool) -> Result<LoopConfig, Usage> {
    let mut cfg = file.loop_config.clone().unwrap_or_default();
    if no_regionfocus {
        cfg.regionfocus = false;
    }
    cfg.validate().map_err(Usage)?;
    Ok(cfg)
}

pub fn cmd_ground(common: &CommonArgs, args: &GroundArgs) -> Result<()> {
    let file = FileConfig::load(common.config.as_deref())?;
    let cfg = loop_config(&file, args.no_regionfocus)?;
    let jobs = args.jobs.or(file.jobs).unwrap_or(1);
    let wired = config::wire(&args.gateway, &args.model, &file)?;
    let result = match (&args.image, &args.instruction, &args.tasks) {
        (Some(image), Some(instruction), _) => ground_one(image, instruction, &cfg, &wired),
        (_, _, Some(tasks)) => {
            let spec = RunSpec::Grounding {
                profile: wired.gateway.profile().clone(),
                config: cfg,
                tasks: absolute(tasks).map_err(|e| Usage(format!("--tasks: {e:#}")))?,
                modes: vec![!args.no_regionfocus],
            };
            match &args.report {
                Some(dir) => execute_report(&spec, &wired, dir, jobs),
                None => run_reports(&spec, &wired, jobs).and_then(|(reports, _)| finish(&reports)),
            }
        }
        _ => Err(Usage("give --image with --instruction, or --tasks".into()).into()),
    };
    wired.save_transcript(None)?;
    result
}

fn ground_one(image: &Path, instruction: &str, cfg: &LoopConfig, wired: &Wired) -> Result<()> {
    let shot = Screenshot::load(image).map_err(|e| Failed(format!("{}: {e}", image.display())))?;
    let out = run_grounding(&shot, instruction, cfg, &wired.gateway);
    if let (Some(init), Some(p)) = (out.initial, out.point) {
        if init != p {
            log::info!("refined {init} to {p}");
        }
    }
    match out.point {
        Some(p) if !out.fault => {
            println!("{} {}", p.x, p.y);
            Ok(())
        }
        _ => Err(Failed(out.error.unwrap_or_else(|| "no point predicted".into())).into()),
    }
}

fn label(regionfocus: bool) -> &'static str {
    if regionfocus {
        "regionfocus"
    } else {
        "baseline"
    }
}

/// One report per requested mode, plus their table.
pub fn run_reports(
    spec: &RunSpec,
    wired: &Wired,
    jobs: usize,
) -> Result<(Vec<GroundingReport>, String)> {
    let RunSpec::Grounding {
        config,
        tasks,
        modes,
        ..
    } = spec
    else {
        unreachable!("not a grounding run")
    };
    let loaded = load_grounding_tasks(tasks).map_err(|e| Failed(e.to_string()))?;
    for r in &loaded.rejected {
        eprintln!(
            "warning: {}:{}: {} rejected: {}",
            tasks.display(),
            r.line,
            r.id.as_deref().unwrap_or("row"),
            r.reason
        );
    }
    let reports: Vec<GroundingReport> = modes
        .iter()
        .map(|&regionfocus| {
            let cfg = LoopConfig {
                regionfocus,
                ..config.clone()
            };
            run_grounding_eval(&loaded.tasks, &cfg, &wired.gateway, jobs)
        })
        .collect();
    let rows: Vec<(&str, &GroundingReport)> =
        reports.iter().map(|r| (label(r.regionfocus), r)).collect();
    let table = render_table(&rows);
    print!("{table}");
    Ok((reports, table))
}

fn finish(reports: &[GroundingReport]) -> Result<()> {
    let faults: usize = reports.iter().map(|r| r.faults).sum();
    if faults == 0 {
        return Ok(());
    }
    let first = reports
        .iter()
        .flat_map(|r| &r.rows)
        .find(|r| r.fault)
        .and_then(|r| r.error.clone());
    Err(Failed(format!(
        "{faults} task(s) failed: {}",
        first.unwrap_or_default()
    ))
    .into())
}

/// Run `spec` and write `report.json`, `table.txt`, `run.json` and the transcript into `dir`.
pub fn execute_report(spec: &RunSpec, wired: &Wired, dir: &Path, jobs: usize) -> Result<()> {
    let (reports, table) = run_reports(spec, wired, jobs)?;
    fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
    let mut json = Map::new();
    for r in &reports {
        json.insert(label(r.regionfocus).to_string(), serde_json::to_value(r)?);
    }
    let path = dir.join("report.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&Value::Object(json))? + "\n",
    )
    .with_context(|| path.display().to_string())?;
    fs::write(dir.join("table.txt"), &table)?;
    spec.write(dir)?;
    wired.save_transcript(Some(&dir.join(TRANSCRIPT_FILE)))?;
    finish(&reports)
}
