//! `run.json`: what a run or report needs to be executed again offline.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use regionfocus::agent::LoopConfig;
use regionfocus::gateway::{BackendProfile, Gateway, RecordingBackend, ReplayBackend};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::config::{CommonArgs, Wired};
use crate::{ground, run, Failed, Usage};

pub const RUN_FILE: &str = "run.json";
pub const TRANSCRIPT_FILE: &str = "transcript.ndjson";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case", deny_unknown_fields)]
pub enum RunSpec {
    Trajectory {
        profile: BackendProfile,
        config: LoopConfig,
        source: EnvSource,
        objective: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        task_id: Option<String>,
    },
    Grounding {
        profile: BackendProfile,
        config: LoopConfig,
        tasks: PathBuf,
        /// One report per entry: refinement off or on.
        modes: Vec<bool>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSource {
    Sim(PathBuf),
    Bridge {
        address: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start_url: Option<String>,
    },
}

impl RunSpec {
    pub fn profile(&self) -> &BackendProfile {
        match self {
            RunSpec::Trajectory { profile, .. } | RunSpec::Grounding { profile, .. } => profile,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RUN_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| path.display().to_string())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(RUN_FILE);
        let text = fs::read_to_string(&path).with_context(|| path.display().to_string())?;
        serde_json::from_str(&text)
            .with_context(|| format!("{}: not a run description", path.display()))
    }
}

/// Absolute form of a path recorded in `run.json`.
pub fn absolute(p: &Path) -> Result<PathBuf> {
    fs::canonicalize(p).with_context(|| p.display().to_string())
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Directory written by `run`, `ground --report` or `eval grounding`.
    dir: PathBuf,
    /// Where to write the re-run; defaults to `<DIR>.replay`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

pub fn cmd_replay(_common: &CommonArgs, args: &ReplayArgs) -> Result<()> {
    let spec = RunSpec::load(&args.dir).map_err(|e| Usage(format!("{e:#}")))?;
    let transcript = args.dir.join(TRANSCRIPT_FILE);
    let backend =
        ReplayBackend::load(&transcript).with_context(|| transcript.display().to_string())?;
    let recorder = Arc::new(RecordingBackend::new(Arc::new(backend)));
    let wired = Wired::new(
        Gateway::new(recorder.clone(), spec.profile().clone()),
        recorder,
        None,
    );
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.dir.with_extension("replay"));
    if out == args.dir {
        return Err(Usage("--out must differ from the recorded directory".into()).into());
    }
    // the re-run's own exit status matters less than whether it reproduced
    let rerun = match &spec {
        RunSpec::Trajectory { .. } => run::execute(&spec, &wired, &out),
        RunSpec::Grounding { .. } => {
            ground::execute_report(&spec, &wired, &out, args.jobs.unwrap_or(1))
        }
    };
    if let Err(e) = &rerun {
        if e.downcast_ref::<Failed>().is_none() {
            return rerun;
        }
    }
    let diffs = compare_dirs(&args.dir, &out)?;
    if diffs.is_empty() {
        println!("identical: {} and {}", args.dir.display(), out.display());
        Ok(())
    } else {
        for d in &diffs {
            println!("differs: {d}");
        }
        Err(Failed(format!("{} file(s) differ", diffs.len())).into())
    }
}

fn files(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).with_context(|| dir.display().to_string())? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, fs::read(&path)?);
            }
        }
    }
    Ok(out)
}

/// Relative paths that are missing on one side or differ in content.
pub fn compare_dirs(a: &Path, b: &Path) -> Result<Vec<String>> {
    let (fa, fb) = (files(a)?, files(b)?);
    let mut diffs = Vec::new();
    for (path, bytes) in &fa {
        match fb.get(path) {
            None => diffs.push(format!("{} (missing from re-run)", path.display())),
            Some(other) if other != bytes => diffs.push(path.display().to_string()),
            Some(_) => {}
        }
    }
    for path in fb.keys().filter(|p| !fa.contains_key(*p)) {
        diffs.push(format!("{} (only in re-run)", path.display()));
    }
    Ok(diffs)
}
