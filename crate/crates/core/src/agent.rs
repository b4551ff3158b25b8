//! The inference loop: observe, prompt, parse, execute, and splice in a
//! refinement round whenever the trigger fires.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{self, is_coordinate_action, Action, ActionKind, ModelTurn, Status};
use crate::canvas::{self, CanvasError, Digest, Landmark, LandmarkKind, Screenshot};
use crate::environment::{EnvKind, Environment};
use crate::focus::{
    self, evaluate_trigger, model_point, refresh_history, run_focus, CandidateSet,
    FixedRatioProposer, FocusConfig, FocusError, FocusHistory, FocusInput, FocusRun,
    InferenceCounts, InferenceRecord, PredictRegionProposer, RegionProposer, TriggerDecision,
};
use crate::gateway::{
    parse_judge_reply, render_agent_prompt, render_judge_prompt, to_model_point, Gateway,
    GatewayError, JudgeVerdict, TemplateId,
};
use crate::geometry::Point;

pub const DEFAULT_MAX_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    EnvFeedback,
    SelfJudge,
    /// Environment feedback where the environment can give it, self-judge on
    /// static screenshots.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposerKind {
    FixedRatio,
    PredictRegion,
}

impl ProposerKind {
    pub fn proposer(self) -> Box<dyn RegionProposer> {
        match self {
            ProposerKind::FixedRatio => Box::new(FixedRatioProposer),
            ProposerKind::PredictRegion => Box::new(PredictRegionProposer),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub max_steps: usize,
    /// Pause before each post-action screenshot on a live browser. The
    /// simulator renders synchronously and ignores it.
    pub settle_delay_ms: u64,
    pub judge_mode: JudgeMode,
    pub regionfocus: bool,
    pub proposer: ProposerKind,
    /// Earlier model replies included in the native prompt.
    pub history_turns: usize,
    pub focus: FocusConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            settle_delay_ms: 1000,
            judge_mode: JudgeMode::Both,
            regionfocus: true,
            proposer: ProposerKind::FixedRatio,
            history_turns: 5,
            focus: FocusConfig::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps == 0 {
            return Err("max_steps must be at least 1".into());
        }
        self.focus.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalStatus {
    Finished,
    CallUser,
    StepLimit,
    Fault,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Native,
    Refined,
}

/// One action sent to the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Executed {
    pub action: Action,
    pub origin: Origin,
    pub before: Digest,
    pub after: Digest,
    pub changed_fraction: f64,
    pub terminated: bool,
    /// Stars left in the history once this action's effect was seen.
    pub stars_after: usize,
}

/// A refinement round as stored in a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusTrace {
    pub base: Digest,
    /// Stars on the map shown to the focal proposal.
    pub map: Vec<Landmark>,
    pub focal: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<CandidateSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub counts: InferenceCounts,
}

impl FocusTrace {
    fn of(base: &Screenshot, map: &FocusHistory, run: &FocusRun) -> Self {
        Self {
            base: base.digest(),
            map: map.stars.clone(),
            focal: run.focal,
            candidates: run.candidates.clone(),
            action: run.outcome.as_ref().ok().cloned(),
            error: run.outcome.as_ref().err().map(|e| e.to_string()),
            counts: InferenceCounts::of(&run.trace),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub observation: Digest,
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<ModelTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<TriggerDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus: Option<FocusTrace>,
    pub executed: Vec<Executed>,
    /// Every model call made in this step, in order.
    pub inferences: Vec<InferenceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

impl StepRecord {
    fn new(step: usize, observation: Digest, url: String) -> Self {
        Self {
            step,
            observation,
            url,
            turn: None,
            parse_error: None,
            judge: None,
            trigger: None,
            focus: None,
            executed: Vec::new(),
            inferences: Vec::new(),
            fault: None,
        }
    }
}

/// One line of `trace.ndjson`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Observation {
        step: usize,
        digest: Digest,
        url: String,
    },
    Inference {
        step: usize,
        record: InferenceRecord,
    },
    Trigger {
        step: usize,
        decision: TriggerDecision,
    },
    Focus {
        step: usize,
        trace: FocusTrace,
    },
    Executed {
        step: usize,
        executed: Executed,
    },
    Error {
        step: usize,
        message: String,
    },
    Final {
        status: FinalStatus,
        steps: usize,
    },
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
    #[error("missing screenshot {0}")]
    MissingImage(Digest),
    #[error(transparent)]
    Canvas(#[from] CanvasError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    pub objective: String,
    pub start_url: String,
    pub steps: Vec<StepRecord>,
    pub final_status: FinalStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_reached: Option<bool>,
    /// Every screenshot the agent saw, in order, including the one after the
    /// last action.
    pub screenshots: Vec<Digest>,
    #[serde(skip)]
    pub images: BTreeMap<Digest, Screenshot>,
}

impl TrajectoryRecord {
    /// Steps that reached the environment.
    pub fn interactive_steps(&self) -> usize {
        self.steps.iter().filter(|s| !s.executed.is_empty()).count()
    }

    pub fn inferences(&self) -> impl Iterator<Item = &InferenceRecord> {
        self.steps.iter().flat_map(|s| s.inferences.iter())
    }

    pub fn focus_rounds(&self) -> impl Iterator<Item = (usize, &FocusTrace)> {
        self.steps
            .iter()
            .filter_map(|s| s.focus.as_ref().map(|f| (s.step, f)))
    }

    pub fn last_screenshots(&self, n: usize) -> Vec<&Screenshot> {
        let start = self.screenshots.len().saturating_sub(n);
        self.screenshots[start..]
            .iter()
            .filter_map(|d| self.images.get(d))
            .collect()
    }

    pub fn events(&self) -> Vec<TraceEvent> {
        let mut out = Vec::new();
        for s in &self.steps {
            out.push(TraceEvent::Observation {
                step: s.step,
                digest: s.observation,
                url: s.url.clone(),
            });
            if let Some(e) = &s.parse_error {
                out.push(TraceEvent::Error {
                    step: s.step,
                    message: e.clone(),
                });
            }
            out.extend(s.inferences.iter().map(|r| TraceEvent::Inference {
                step: s.step,
                record: r.clone(),
            }));
            if let Some(d) = &s.trigger {
                out.push(TraceEvent::Trigger {
                    step: s.step,
                    decision: d.clone(),
                });
            }
            if let Some(f) = &s.focus {
                out.push(TraceEvent::Focus {
                    step: s.step,
                    trace: f.clone(),
                });
            }
            out.extend(s.executed.iter().map(|e| TraceEvent::Executed {
                step: s.step,
                executed: e.clone(),
            }));
            if let Some(f) = &s.fault {
                out.push(TraceEvent::Error {
                    step: s.step,
                    message: f.clone(),
                });
            }
        }
        out.push(TraceEvent::Final {
            status: self.final_status,
            steps: self.steps.len(),
        });
        out
    }

    /// Write `screenshots/<digest>.png`, `trace.ndjson` and `summary.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), RecordError> {
        let shots = dir.join("screenshots");
        fs::create_dir_all(&shots)?;
        for (digest, img) in &self.images {
            let path = shots.join(format!("{digest}.png"));
            if !path.exists() {
                img.save_png(&path)?;
            }
        }
        let mut trace = fs::File::create(dir.join("trace.ndjson"))?;
        for e in self.events() {
            writeln!(trace, "{}", serde_json::to_string(&e)?)?;
        }
        fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(self)? + "\n",
        )?;
        Ok(())
    }

    /// Read back a directory written by [`write_dir`](Self::write_dir).
    pub fn load_dir(dir: &Path) -> Result<Self, RecordError> {
        let text = fs::read_to_string(dir.join("summary.json"))?;
        let mut rec: TrajectoryRecord =
            serde_json::from_str(&text).map_err(|e| RecordError::Corrupt {
                path: dir.join("summary.json").display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })?;
        for d in &rec.screenshots {
            let path = dir.join("screenshots").join(format!("{d}.png"));
            if !path.exists() {
                return Err(RecordError::MissingImage(*d));
            }
            rec.images.insert(*d, Screenshot::load(&path)?);
        }
        Ok(rec)
    }
}

/// Parse `trace.ndjson`, reporting the first bad line.
pub fn read_trace(path: &Path) -> Result<Vec<TraceEvent>, RecordError> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|e| RecordError::Corrupt {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(ev);
    }
    Ok(out)
}

fn status_of(action: &Action) -> FinalStatus {
    match (action.kind, action.status) {
        (ActionKind::CallUser, _) | (ActionKind::Terminate, Some(Status::Failure)) => {
            FinalStatus::CallUser
        }
        _ => FinalStatus::Finished,
    }
}

fn judge_applies(cfg: &LoopConfig, kind: EnvKind, action: &Action) -> bool {
    cfg.regionfocus
        && is_coordinate_action(action)
        && match cfg.judge_mode {
            JudgeMode::EnvFeedback => false,
            JudgeMode::SelfJudge => true,
            JudgeMode::Both => kind == EnvKind::Static,
        }
}

/// Show the predicted point as a single judge star and ask for a verdict.
fn self_judge(
    objective: &str,
    base: &Screenshot,
    at: Point,
    cfg: &FocusConfig,
    gw: &Gateway,
    trace: &mut Vec<InferenceRecord>,
) -> Result<JudgeVerdict, FocusError> {
    let marks = vec![Landmark {
        at,
        label: 1,
        kind: LandmarkKind::Judge,
    }];
    let starred = canvas::draw_landmarks(base, &marks, &cfg.style)?;
    let req = render_judge_prompt(gw.profile(), objective, &starred);
    let annotation = Some(focus::Annotation {
        base: base.digest(),
        marks,
    });
    let (mut rec, reply) = focus::traced_call(gw, &req, annotation);
    match reply {
        Ok(text) => {
            let v = parse_judge_reply(&text);
            rec.parsed = Some(serde_json::json!({ "verdict": v }));
            trace.push(rec);
            Ok(v)
        }
        Err(e) => {
            trace.push(rec);
            Err(e.into())
        }
    }
}

/// Ask the model for the next action on `obs` and map it onto the image.
fn native_turn(
    objective: &str,
    url: &str,
    obs: &Screenshot,
    history: &[String],
    gw: &Gateway,
    trace: &mut Vec<InferenceRecord>,
) -> Result<Result<ModelTurn, String>, GatewayError> {
    let req = render_agent_prompt(
        gw.profile(),
        TemplateId::AgentStep,
        objective,
        url,
        obs,
        history,
    );
    let (mut rec, reply) = focus::traced_call(gw, &req, None);
    let text = match reply {
        Ok(t) => t,
        Err(e) => {
            trace.push(rec);
            return Err(e);
        }
    };
    let parsed = actions::parse(&text, gw.profile().dialect)
        .map_err(|e| e.to_string())
        .and_then(|mut turn| {
            turn.action = turn
                .action
                .try_map_points(|p| model_point(p, gw, obs.dims()))
                .map_err(|e| e.to_string())?;
            Ok(turn)
        });
    match &parsed {
        Ok(turn) => rec.parsed = Some(serde_json::json!({ "action": turn.action })),
        Err(e) => rec.error = Some(e.clone()),
    }
    trace.push(rec);
    Ok(parsed)
}

/// Model-facing text for an action taken on an image of `obs`'s size.
fn history_entry(
    thought: Option<&str>,
    action: &Action,
    obs: &Screenshot,
    gw: &Gateway,
) -> Option<String> {
    let model = action
        .try_map_points(|p| Ok::<_, ()>(to_model_point(p, gw.profile(), obs.dims())))
        .ok()?;
    actions::serialize_parts(thought, &model, gw.profile().dialect).ok()
}

struct Run<'a> {
    env: &'a mut dyn Environment,
    objective: &'a str,
    cfg: &'a LoopConfig,
    gw: &'a Gateway,
    proposer: Box<dyn RegionProposer>,
    record: TrajectoryRecord,
    replies: Vec<String>,
    recent: Vec<Action>,
    history: FocusHistory,
    triggers_on_state: u32,
}

enum Flow {
    Continue(Screenshot),
    Stop(FinalStatus),
}

impl Run<'_> {
    fn keep(&mut self, img: &Screenshot) {
        self.record
            .images
            .entry(img.digest())
            .or_insert_with(|| img.clone());
    }

    /// Send `action`, record it and refresh the star history.
    fn execute(
        &mut self,
        step: &mut StepRecord,
        before: &Screenshot,
        action: &Action,
        origin: Origin,
    ) -> Result<(Screenshot, bool), String> {
        let out = self.env.apply(action).map_err(|e| e.to_string())?;
        let effect = canvas::diff(before, &out.screenshot, self.cfg.focus.diff_tolerance);
        let refreshed = refresh_history(&self.history, &effect, out.screenshot.digest());
        if !effect.identical {
            self.triggers_on_state = 0;
        }
        self.history = refreshed;
        self.keep(&out.screenshot);
        self.record.screenshots.push(out.screenshot.digest());
        self.recent.push(action.clone());
        step.executed.push(Executed {
            action: action.clone(),
            origin,
            before: before.digest(),
            after: out.screenshot.digest(),
            changed_fraction: effect.changed_fraction,
            terminated: out.terminated,
            stars_after: self.history.len(),
        });
        Ok((out.screenshot, out.terminated))
    }

    /// Run one refinement round on `base`. `Ok(None)` means the round found
    /// no action.
    fn refine(
        &mut self,
        step: &mut StepRecord,
        base: &Screenshot,
    ) -> Result<Option<Action>, String> {
        let url = self.env.url();
        let input = FocusInput {
            objective: self.objective,
            url: &url,
            base,
        };
        let map = self.history.clone();
        let run = run_focus(
            input,
            &map,
            &self.cfg.focus,
            self.gw,
            self.proposer.as_ref(),
        );
        self.triggers_on_state += 1;
        step.inferences.extend(run.trace.iter().cloned());
        step.focus = Some(FocusTrace::of(base, &map, &run));
        self.history = run.history;
        match run.outcome {
            Ok(a) => Ok(Some(a)),
            Err(FocusError::Gateway(e)) => Err(e.to_string()),
            Err(e) => {
                log::info!("refinement produced no action: {e}");
                Ok(None)
            }
        }
    }

    fn step(&mut self, index: usize, obs: Screenshot) -> (StepRecord, Flow) {
        let url = self.env.url();
        let mut step = StepRecord::new(index, obs.digest(), url.clone());
        let fault = |mut step: StepRecord, msg: String| {
            step.fault = Some(msg);
            (step, Flow::Stop(FinalStatus::Fault))
        };
        let start = self.replies.len().saturating_sub(self.cfg.history_turns);
        let history = self.replies[start..].to_vec();
        let turn = match native_turn(
            self.objective,
            &url,
            &obs,
            &history,
            self.gw,
            &mut step.inferences,
        ) {
            Err(e) => return fault(step, e.to_string()),
            Ok(Err(e)) => {
                step.parse_error = Some(e);
                return (step, Flow::Continue(obs));
            }
            Ok(Ok(t)) => t,
        };
        step.turn = Some(turn.clone());
        let mut action = turn.action.clone();

        if self.history.page_digest.is_none() {
            self.history.page_digest = Some(obs.digest());
        }

        // self-judge before acting
        let mut refined_before = false;
        if judge_applies(self.cfg, self.env.kind(), &action) {
            let at = action.start.expect("coordinate action");
            match self_judge(
                self.objective,
                &obs,
                at,
                &self.cfg.focus,
                self.gw,
                &mut step.inferences,
            ) {
                Err(e) => return fault(step, e.to_string()),
                Ok(v) => {
                    step.judge = Some(v);
                    let d = evaluate_trigger(
                        None,
                        &[],
                        Some(v),
                        self.triggers_on_state,
                        &self.cfg.focus,
                    );
                    let fired = d.fired;
                    step.trigger = Some(d);
                    if fired {
                        match self.refine(&mut step, &obs) {
                            Err(e) => return fault(step, e),
                            Ok(Some(a)) => {
                                action = a;
                                refined_before = true;
                            }
                            Ok(None) => {}
                        }
                    }
                }
            }
        }

        let origin = if refined_before {
            Origin::Refined
        } else {
            Origin::Native
        };
        let (after, terminated) = match self.execute(&mut step, &obs, &action, origin) {
            Ok(v) => v,
            Err(e) => return fault(step, e),
        };
        self.replies.push(if refined_before {
            history_entry(turn.thought.as_deref(), &action, &obs, self.gw)
                .unwrap_or(turn.raw.clone())
        } else {
            turn.raw.clone()
        });
        if terminated || action.kind.is_terminal() {
            return (step, Flow::Stop(status_of(&action)));
        }
        if !self.cfg.regionfocus || refined_before || self.cfg.judge_mode == JudgeMode::SelfJudge {
            return (step, Flow::Continue(after));
        }

        let d = evaluate_trigger(
            Some((&obs, &after)),
            &self.recent,
            None,
            self.triggers_on_state,
            &self.cfg.focus,
        );
        let fired = d.fired;
        step.trigger = Some(d);
        if !fired {
            return (step, Flow::Continue(after));
        }
        let refined = match self.refine(&mut step, &after) {
            Err(e) => return fault(step, e),
            Ok(None) => return (step, Flow::Continue(after)),
            Ok(Some(a)) => a,
        };
        let (after2, terminated) = match self.execute(&mut step, &after, &refined, Origin::Refined)
        {
            Ok(v) => v,
            Err(e) => return fault(step, e),
        };
        // the refined action stands in for the failed reply
        if let Some(h) = history_entry(turn.thought.as_deref(), &refined, &after, self.gw) {
            *self.replies.last_mut().expect("pushed above") = h;
        }
        if terminated || refined.kind.is_terminal() {
            return (step, Flow::Stop(status_of(&refined)));
        }
        (step, Flow::Continue(after2))
    }
}

/// Drive `env` until the model finishes, hands back to the user, or the
/// step budget runs out. Environment and transport failures end the run
/// with [`FinalStatus::Fault`].
pub fn run_trajectory(
    env: &mut dyn Environment,
    objective: &str,
    cfg: &LoopConfig,
    gw: &Gateway,
) -> TrajectoryRecord {
    let start_url = env.url();
    let record = TrajectoryRecord {
        task_id: None,
        objective: objective.to_string(),
        start_url,
        steps: Vec::new(),
        final_status: FinalStatus::StepLimit,
        final_response: None,
        goal_reached: None,
        screenshots: Vec::new(),
        images: BTreeMap::new(),
    };
    let mut run = Run {
        env,
        objective,
        cfg,
        gw,
        proposer: cfg.proposer.proposer(),
        record,
        replies: Vec::new(),
        recent: Vec::new(),
        history: FocusHistory::default(),
        triggers_on_state: 0,
    };
    let mut obs = match run.env.observe() {
        Ok(o) => o,
        Err(e) => {
            let mut rec = run.record;
            rec.final_status = FinalStatus::Fault;
            log::warn!("initial observation failed: {e}");
            return rec;
        }
    };
    run.keep(&obs);
    run.record.screenshots.push(obs.digest());
    for index in 1..=cfg.max_steps {
        let (step, flow) = run.step(index, obs.clone());
        run.record.steps.push(step);
        match flow {
            Flow::Continue(next) => obs = next,
            Flow::Stop(status) => {
                run.record.final_status = status;
                break;
            }
        }
    }
    let final_response = run
        .record
        .steps
        .last()
        .and_then(|s| s.executed.last())
        .filter(|e| e.action.kind == ActionKind::Finished || e.action.kind == ActionKind::CallUser)
        .and_then(|e| e.action.text.clone());
    run.record.final_response = final_response;
    run.record.goal_reached = run.env.goal_reached();
    run.env.close();
    run.record
}

/// Result of grounding one instruction on a static screenshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingOutcome {
    pub point: Option<Point>,
    pub initial: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<JudgeVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<TriggerDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus: Option<FocusTrace>,
    pub inferences: Vec<InferenceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The gateway failed, as opposed to the model answering badly.
    #[serde(default)]
    pub fault: bool,
}

impl GroundingOutcome {
    pub fn triggered(&self) -> bool {
        self.trigger.as_ref().is_some_and(|t| t.fired)
    }
}

/// One native prediction, a self-judge of it, and one refinement round if
/// the judge rejects it. A failed refinement keeps the initial point.
pub fn run_grounding(
    image: &Screenshot,
    instruction: &str,
    cfg: &LoopConfig,
    gw: &Gateway,
) -> GroundingOutcome {
    let mut out = GroundingOutcome {
        point: None,
        initial: None,
        verdict: None,
        trigger: None,
        focus: None,
        inferences: Vec::new(),
        error: None,
        fault: false,
    };
    let turn = match native_turn(instruction, "", image, &[], gw, &mut out.inferences) {
        Err(e) => {
            out.error = Some(e.to_string());
            out.fault = true;
            return out;
        }
        Ok(Err(e)) => {
            out.error = Some(e);
            return out;
        }
        Ok(Ok(t)) => t,
    };
    let Some(initial) = turn.action.start else {
        out.error = Some(format!("{} carries no point", turn.action));
        return out;
    };
    out.initial = Some(initial);
    out.point = Some(initial);
    if !cfg.regionfocus {
        return out;
    }
    let verdict = match self_judge(
        instruction,
        image,
        initial,
        &cfg.focus,
        gw,
        &mut out.inferences,
    ) {
        Ok(v) => v,
        Err(e) => {
            out.error = Some(e.to_string());
            out.fault = true;
            return out;
        }
    };
    out.verdict = Some(verdict);
    let decision = evaluate_trigger(None, &[], Some(verdict), 0, &cfg.focus);
    let fired = decision.fired;
    out.trigger = Some(decision);
    if !fired {
        return out;
    }
    let history = FocusHistory::for_page(image.digest());
    let input = FocusInput {
        objective: instruction,
        url: "",
        base: image,
    };
    let proposer = cfg.proposer.proposer();
    let run = run_focus(input, &history, &cfg.focus, gw, proposer.as_ref());
    out.inferences.extend(run.trace.iter().cloned());
    out.focus = Some(FocusTrace::of(image, &history, &run));
    match &run.outcome {
        Ok(a) => match a.start {
            Some(p) => out.point = Some(p),
            None => log::info!("refined action {a} carries no point, keeping the initial point"),
        },
        Err(FocusError::Gateway(e)) => {
            out.point = None;
            out.error = Some(e.to_string());
            out.fault = true;
        }
        Err(e) => log::info!("refinement failed, keeping the initial point: {e}"),
    }
    out
}
