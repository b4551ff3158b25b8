//! Config file, shared flags and gateway construction.
//!
//! Precedence is flags, then the config file, then built-in defaults. The
//! only value read from the environment is the endpoint's API key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use regionfocus::agent::{JudgeMode, LoopConfig};
use regionfocus::gateway::{
    BackendProfile, Gateway, HttpBackend, ModelBackend, RecordingBackend, ReplayBackend,
    ScriptedBackend,
};
use serde::Deserialize;

use crate::Usage;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub profile: Option<String>,
    pub jobs: Option<usize>,
    pub endpoint: EndpointOverride,
    /// Extra profiles, selectable by key.
    pub profiles: BTreeMap<String, BackendProfile>,
    #[serde(rename = "loop")]
    pub loop_config: Option<LoopConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointOverride {
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<u32>,
    pub backoff_base_ms: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Usage> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text =
            std::fs::read_to_string(path).map_err(|e| Usage(format!("{}: {e}", path.display())))?;
        let cfg: FileConfig =
            toml::from_str(&text).map_err(|e| Usage(format!("{}: {e}", path.display())))?;
        if let Some(l) = &cfg.loop_config {
            l.validate()
                .map_err(|e| Usage(format!("{}: [loop] {e}", path.display())))?;
        }
        Ok(cfg)
    }

    pub fn profile(&self, flag: Option<&str>) -> Result<BackendProfile, Usage> {
        let name = flag.or(self.profile.as_deref()).unwrap_or("ui-tars");
        let mut p = match self.profiles.get(name) {
            Some(p) => p.clone(),
            None => BackendProfile::builtin(name).ok_or_else(|| {
                let mut known: Vec<&str> = vec!["ui-tars", "qwen2.5-vl"];
                known.extend(self.profiles.keys().map(String::as_str));
                Usage(format!(
                    "unknown profile {name:?}; known: {}",
                    known.join(", ")
                ))
            })?,
        };
        let e = &self.endpoint;
        let ep = &mut p.endpoint;
        if let Some(v) = &e.base_url {
            ep.base_url = v.clone();
        }
        if let Some(v) = &e.model {
            ep.model = v.clone();
        }
        if let Some(v) = &e.api_key_env {
            ep.api_key_env = v.clone();
        }
        if let Some(v) = e.timeout_secs {
            ep.timeout_secs = v;
        }
        if let Some(v) = e.max_retries {
            ep.max_retries = v;
        }
        if let Some(v) = e.backoff_base_ms {
            ep.backoff_base_ms = v;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum JudgeModeArg {
    EnvFeedback,
    SelfJudge,
    Both,
}

impl From<JudgeModeArg> for JudgeMode {
    fn from(m: JudgeModeArg) -> Self {
        match m {
            JudgeModeArg::EnvFeedback => JudgeMode::EnvFeedback,
            JudgeModeArg::SelfJudge => JudgeMode::SelfJudge,
            JudgeModeArg::Both => JudgeMode::Both,
        }
    }
}

/// Flags shared by every command.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More log output; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

/// Where model replies come from. Exactly one source is required.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct GatewayArgs {
    /// Answer from a recorded transcript (NDJSON).
    #[arg(long, value_name = "FILE")]
    pub replay: Option<PathBuf>,
    /// Answer from a scripted mock (JSON).
    #[arg(long, value_name = "FILE")]
    pub mock: Option<PathBuf>,
    /// Call the configured chat-completions endpoint.
    #[arg(long)]
    pub live: bool,
}

/// Model selection, shared by commands that talk to a model.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Backend profile: ui-tars, qwen2.5-vl or a key from the config's [profiles].
    #[arg(long)]
    pub profile: Option<String>,
    /// Override the endpoint base URL (live mode).
    #[arg(long, value_name = "URL")]
    pub base_url: Option<String>,
    /// Override the served model name (live mode).
    #[arg(long)]
    pub model: Option<String>,
    /// Also write every exchange to this transcript.
    #[arg(long, value_name = "FILE")]
    pub record: Option<PathBuf>,
}

/// Loop settings that can be set per invocation.
#[derive(Debug, Args)]
pub struct LoopArgs {
    /// Disable the refinement and run the plain agent.
    #[arg(long)]
    pub no_regionfocus: bool,
    /// Step budget before the run stops with StepLimit.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Which signals may fire the refinement.
    #[arg(long, value_enum)]
    pub judge_mode: Option<JudgeModeArg>,
}

impl LoopArgs {
    pub fn apply(&self, file: &FileConfig) -> Result<LoopConfig, Usage> {
        let mut cfg = file.loop_config.clone().unwrap_or_default();
        if self.no_regionfocus {
            cfg.regionfocus = false;
        }
        if let Some(n) = self.max_steps {
            cfg.max_steps = n;
        }
        if let Some(m) = self.judge_mode {
            cfg.judge_mode = m.into();
        }
        cfg.validate().map_err(Usage)?;
        Ok(cfg)
    }
}

/// A gateway plus the recorder wrapped around its backend.
pub struct Wired {
    pub gateway: Gateway,
    pub recorder: Arc<RecordingBackend>,
    record_to: Option<PathBuf>,
}

impl Wired {
    pub fn new(
        gateway: Gateway,
        recorder: Arc<RecordingBackend>,
        record_to: Option<PathBuf>,
    ) -> Self {
        Self {
            gateway,
            recorder,
            record_to,
        }
    }

    /// Save the recorded exchanges, sorted by request digest.
    pub fn save_transcript(&self, extra: Option<&Path>) -> Result<()> {
        let mut t = self.recorder.transcript();
        t.sort_by_digest();
        for path in self.record_to.iter().map(PathBuf::as_path).chain(extra) {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
            }
            t.save(path)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

pub fn wire(source: &GatewayArgs, model: &ModelArgs, file: &FileConfig) -> Result<Wired> {
    let mut profile = file.profile(model.profile.as_deref())?;
    if let Some(url) = &model.base_url {
        profile.endpoint.base_url = url.clone();
    }
    if let Some(m) = &model.model {
        profile.endpoint.model = m.clone();
    }
    let backend: Arc<dyn ModelBackend> = if let Some(path) = &source.replay {
        Arc::new(
            ReplayBackend::load(path)
                .with_context(|| format!("loading transcript {}", path.display()))?,
        )
    } else if let Some(path) = &source.mock {
        Arc::new(
            ScriptedBackend::load(path)
                .with_context(|| format!("loading mock {}", path.display()))?,
        )
    } else if source.live {
        if profile.endpoint.model.is_empty() {
            bail!(Usage(format!(
                "profile {} has no model name; pass --model",
                profile.name
            )));
        }
        Arc::new(HttpBackend::new(profile.endpoint.clone())?)
    } else {
        bail!(Usage(
            "one of --replay, --mock or --live is required".into()
        ));
    };
    let recorder = Arc::new(RecordingBackend::new(backend));
    Ok(Wired::new(
        Gateway::new(recorder.clone(), profile),
        recorder,
        model.record.clone(),
    ))
}
