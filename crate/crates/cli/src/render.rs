use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use regionfocus::agent::{read_trace, TraceEvent};
use regionfocus::canvas::{draw_landmarks, StyleConfig};
use regionfocus::Screenshot;

use crate::config::{CommonArgs, FileConfig};
use crate::replay::RunSpec;
use crate::Failed;

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Trajectory directory, or the trace.ndjson inside one.
    path: PathBuf,
    /// Output directory; defaults to `<DIR>.maps`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Style from --config, else the run's own settings, else the default.
fn style(common: &CommonArgs, dir: &Path) -> Result<StyleConfig> {
    if common.config.is_some() {
        let file = FileConfig::load(common.config.as_deref())?;
        return Ok(file.loop_config.map(|l| l.focus.style).unwrap_or_default());
    }
    Ok(match RunSpec::load(dir) {
        Ok(RunSpec::Trajectory { config, .. }) | Ok(RunSpec::Grounding { config, .. }) => {
            config.focus.style
        }
        Err(_) => StyleConfig::default(),
    })
}

pub fn cmd_render_map(common: &CommonArgs, args: &RenderArgs) -> Result<()> {
    let (dir, trace) = if args.path.is_dir() {
        (args.path.clone(), args.path.join("trace.ndjson"))
    } else {
        (
            args.path.parent().unwrap_or(Path::new(".")).to_path_buf(),
            args.path.clone(),
        )
    };
    let style = style(common, &dir)?;
    let events = read_trace(&trace).map_err(|e| Failed(e.to_string()))?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| dir.with_extension("maps"));
    let mut written = 0;
    let mut per_step = 0;
    let mut last_step = usize::MAX;
    for ev in &events {
        let TraceEvent::Inference { step, record } = ev else {
            continue;
        };
        if *step != last_step {
            last_step = *step;
            per_step = 0;
        }
        let Some(note) = &record.annotation else {
            continue;
        };
        per_step += 1;
        let src = dir.join("screenshots").join(format!("{}.png", note.base));
        let base = Screenshot::load(&src).map_err(|e| Failed(format!("{}: {e}", src.display())))?;
        let img = draw_landmarks(&base, &note.marks, &style).map_err(|e| Failed(e.to_string()))?;
        if record.images.first() != Some(&img.digest()) {
            log::warn!(
                "step {step}: re-rendered {} differs from the image that was sent",
                record.template
            );
        }
        fs::create_dir_all(&out).with_context(|| out.display().to_string())?;
        let name = format!(
            "step{step:03}-{per_step:02}-{}.png",
            record.template.base_name()
        );
        let path = out.join(name);
        img.save_png(&path)
            .map_err(|e| Failed(format!("{}: {e}", path.display())))?;
        println!("{}", path.display());
        written += 1;
    }
    log::info!("{written} snapshot(s) rendered from {}", trace.display());
    Ok(())
}
