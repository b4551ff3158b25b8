//! The RegionFocus refinement: trigger rules, focal proposal against the
//! star history, per-region action prediction and candidate aggregation.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::actions::{self, is_coordinate_action, Action, ParseError};
use crate::canvas::{
    self, CanvasError, DiffReport, Digest, Landmark, LandmarkKind, Screenshot, StyleConfig,
};
use crate::gateway::{
    self, parse_aggregation_reply, parse_focal_reply, parse_region_box_reply, render_agent_prompt,
    render_aggregation_prompt, render_focal_prompt, render_region_box_prompt, rescale_model_point,
    ChatRequest, Gateway, GatewayError, JudgeVerdict, TemplateId,
};
use crate::geometry::{self, clamp_box, propose_regions, Dims, GeometryError, Point};
use crate::{Ratio, RegionBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FocusConfig {
    pub ratios: Vec<Ratio>,
    pub max_triggers_per_state: u32,
    pub dedup_radius: u32,
    pub focal_avoid_radius: u32,
    pub focal_retry_budget: u32,
    /// Number of identical trailing actions that counts as repetition.
    pub repeat_window: usize,
    pub diff_tolerance: f64,
    /// Treat an ambiguous self-judge reply as a pass.
    pub ambiguous_is_correct: bool,
    pub style: StyleConfig,
}

impl Default for FocusConfig {
    fn default() -> Self {
        Self {
            ratios: geometry::default_ratios(),
            max_triggers_per_state: 3,
            dedup_radius: 5,
            focal_avoid_radius: 20,
            focal_retry_budget: 3,
            repeat_window: 3,
            diff_tolerance: canvas::DEFAULT_DIFF_TOLERANCE,
            ambiguous_is_correct: true,
            style: StyleConfig::default(),
        }
    }
}

impl FocusConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.ratios.is_empty() {
            return Err("focus.ratios must not be empty".into());
        }
        for (name, v) in [
            ("max_triggers_per_state", self.max_triggers_per_state),
            ("dedup_radius", self.dedup_radius),
            ("focal_avoid_radius", self.focal_avoid_radius),
            ("focal_retry_budget", self.focal_retry_budget),
        ] {
            if v == 0 {
                return Err(format!("focus.{name} must be positive"));
            }
        }
        if self.repeat_window < 2 {
            return Err("focus.repeat_window must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.diff_tolerance) {
            return Err("focus.diff_tolerance must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum FocusError {
    #[error("every focal proposal fell on an existing star ({attempts} attempts, last {last})")]
    FocalExhausted { attempts: u32, last: Point },
    #[error("no region produced a usable action")]
    EmptyCandidates,
    #[error("unparsable reply: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Canvas(#[from] CanvasError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerCause {
    NoEffect,
    RepeatedAction,
    JudgeIncorrect,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerDecision {
    pub fired: bool,
    pub cause: TriggerCause,
    pub evidence: String,
    /// Cause that would have fired had the per-state cap not been reached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suppressed: Option<TriggerCause>,
}

impl TriggerDecision {
    pub fn quiet(evidence: impl Into<String>) -> Self {
        Self {
            fired: false,
            cause: TriggerCause::None,
            evidence: evidence.into(),
            suppressed: None,
        }
    }
}

/// Decide whether RegionFocus should run. `transition` is the screenshot
/// pair around the last executed action (`recent.last()`); `triggers_so_far`
/// counts earlier refinements on the same page state.
pub fn evaluate_trigger(
    transition: Option<(&Screenshot, &Screenshot)>,
    recent: &[Action],
    judge: Option<JudgeVerdict>,
    triggers_so_far: u32,
    cfg: &FocusConfig,
) -> TriggerDecision {
    let mut fired = None;
    if let (Some((prev, cur)), Some(last)) = (transition, recent.last()) {
        if is_coordinate_action(last) {
            let d = canvas::diff(prev, cur, cfg.diff_tolerance);
            if d.identical {
                fired = Some((
                    TriggerCause::NoEffect,
                    format!(
                        "{last} left the screen unchanged ({:.5} of pixels changed)",
                        d.changed_fraction
                    ),
                ));
            }
        }
    }
    if fired.is_none() && recent.len() >= cfg.repeat_window {
        let tail = &recent[recent.len() - cfg.repeat_window..];
        let sig = tail[0].signature();
        if tail.iter().all(|a| a.signature() == sig) {
            fired = Some((
                TriggerCause::RepeatedAction,
                format!("{} repeated {} times", tail[0], cfg.repeat_window),
            ));
        }
    }
    if fired.is_none() {
        let incorrect = match judge {
            Some(JudgeVerdict::Incorrect) => true,
            Some(JudgeVerdict::Ambiguous) => !cfg.ambiguous_is_correct,
            _ => false,
        };
        if incorrect {
            fired = Some((
                TriggerCause::JudgeIncorrect,
                format!("self-judge verdict {judge:?}"),
            ));
        }
    }
    match fired {
        None => TriggerDecision::quiet("no trigger condition met"),
        Some((cause, evidence)) if triggers_so_far >= cfg.max_triggers_per_state => {
            TriggerDecision {
                fired: false,
                cause: TriggerCause::None,
                evidence: format!(
                    "{evidence}; suppressed after {triggers_so_far} refinements on this page"
                ),
                suppressed: Some(cause),
            }
        }
        Some((cause, evidence)) => TriggerDecision {
            fired: true,
            cause,
            evidence,
            suppressed: None,
        },
    }
}

/// Focal points already tried on one page state, drawn as numbered stars.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FocusHistory {
    pub stars: Vec<Landmark>,
    pub page_digest: Option<Digest>,
}

impl FocusHistory {
    pub fn for_page(page: Digest) -> Self {
        Self {
            stars: Vec::new(),
            page_digest: Some(page),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.stars.is_empty()
    }

    pub fn len(&self) -> usize {
        self.stars.len()
    }

    pub fn push(&mut self, at: Point) -> u32 {
        let label = self.stars.len() as u32 + 1;
        self.stars.push(Landmark {
            at,
            label,
            kind: LandmarkKind::History,
        });
        label
    }

    pub fn map(&self, base: &Screenshot, style: &StyleConfig) -> Result<Screenshot, CanvasError> {
        canvas::draw_landmarks(base, &self.stars, style)
    }

    /// Nearest star within `radius` pixels (inclusive) of `p`.
    pub fn star_near(&self, p: Point, radius: u32) -> Option<&Landmark> {
        let r2 = radius as u64 * radius as u64;
        self.stars
            .iter()
            .filter(|s| s.at.distance_squared(&p) <= r2)
            .min_by_key(|s| s.at.distance_squared(&p))
    }
}

/// Clear the stars once an action has visibly changed the page.
pub fn refresh_history(
    history: &FocusHistory,
    effect: &DiffReport,
    new_page: Digest,
) -> FocusHistory {
    if effect.identical {
        history.clone()
    } else {
        FocusHistory::for_page(new_page)
    }
}

/// Landmarks drawn on an image sent to the model, enough to re-render it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub base: Digest,
    pub marks: Vec<Landmark>,
}

/// One model call as it appears in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub template: TemplateId,
    pub request: String,
    pub images: Vec<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<Annotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Send `req` and record the exchange. The parsed result is filled in by the caller.
pub fn traced_call(
    gw: &Gateway,
    req: &ChatRequest,
    annotation: Option<Annotation>,
) -> (InferenceRecord, Result<String, GatewayError>) {
    let reply = gw.complete(req);
    let rec = InferenceRecord {
        template: req.template,
        request: req.digest(),
        images: req.image_digests(),
        annotation,
        reply: reply.as_ref().ok().cloned(),
        parsed: None,
        error: reply.as_ref().err().map(|e| e.to_string()),
    };
    (rec, reply)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceCounts {
    pub focal: usize,
    pub region: usize,
    pub aggregation: usize,
    pub judge: usize,
    pub region_box: usize,
}

impl InferenceCounts {
    pub fn of<'a>(records: impl IntoIterator<Item = &'a InferenceRecord>) -> Self {
        let mut c = Self::default();
        for r in records {
            match r.template {
                TemplateId::FocalProposal => c.focal += 1,
                TemplateId::RegionAction { .. } => c.region += 1,
                TemplateId::Aggregation => c.aggregation += 1,
                TemplateId::SelfJudge => c.judge += 1,
                TemplateId::RegionBox => c.region_box += 1,
                TemplateId::AgentStep | TemplateId::TrajectoryJudge => {}
            }
        }
        c
    }

    /// (focal, region, aggregation)
    pub fn triple(&self) -> (usize, usize, usize) {
        (self.focal, self.region, self.aggregation)
    }
}

/// What the refinement works on.
#[derive(Debug, Clone, Copy)]
pub struct FocusInput<'a> {
    pub objective: &'a str,
    pub url: &'a str,
    pub base: &'a Screenshot,
}

pub(crate) fn model_point(p: Point, gw: &Gateway, onto: Dims) -> Result<Point, GeometryError> {
    Ok(rescale_model_point(p, gw.profile(), onto)?.clamped_to(onto))
}

/// Ask for a focal point on the star-annotated map, re-prompting while the
/// answer lands on an existing star.
pub fn propose_focal(
    input: FocusInput,
    history: &FocusHistory,
    cfg: &FocusConfig,
    gw: &Gateway,
    trace: &mut Vec<InferenceRecord>,
) -> Result<Point, FocusError> {
    let map = history.map(input.base, &cfg.style)?;
    let annotation = (!history.is_empty()).then(|| Annotation {
        base: input.base.digest(),
        marks: history.stars.clone(),
    });
    let base_req = render_focal_prompt(gw.profile(), input.objective, input.url, &map);
    let mut notes: Vec<String> = Vec::new();
    let mut last = Point::new(0, 0);
    for _ in 0..cfg.focal_retry_budget {
        let req = notes
            .iter()
            .fold(base_req.clone(), |r, n| gateway::with_note(r, n));
        let (mut rec, reply) = traced_call(gw, &req, annotation.clone());
        let outcome = reply.map_err(FocusError::from).and_then(|text| {
            let raw = parse_focal_reply(&text)?;
            Ok(model_point(raw, gw, input.base.dims())?)
        });
        match &outcome {
            Ok(p) => rec.parsed = Some(json!({ "focal": p })),
            Err(e) => rec.error = Some(e.to_string()),
        }
        trace.push(rec);
        let p = outcome?;
        match history.star_near(p, cfg.focal_avoid_radius) {
            None => return Ok(p),
            Some(star) => {
                trace.last_mut().expect("just pushed").error = Some(format!(
                    "{p} lies within {} px of star {}",
                    cfg.focal_avoid_radius, star.label
                ));
                notes.push(format!(
                    "Your answer {p} is on or next to pink star {}. Choose a different point.",
                    star.label
                ));
                last = p;
            }
        }
    }
    Err(FocusError::FocalExhausted {
        attempts: cfg.focal_retry_budget,
        last,
    })
}

/// Where the sub-regions come from.
pub trait RegionProposer: Send + Sync {
    fn propose(
        &self,
        input: FocusInput,
        focal: Point,
        cfg: &FocusConfig,
        gw: &Gateway,
        trace: &mut Vec<InferenceRecord>,
    ) -> Result<Vec<RegionBox>, FocusError>;
}

/// Boxes of the configured ratios centered on the focal point.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedRatioProposer;

impl RegionProposer for FixedRatioProposer {
    fn propose(
        &self,
        input: FocusInput,
        focal: Point,
        cfg: &FocusConfig,
        _gw: &Gateway,
        _trace: &mut Vec<InferenceRecord>,
    ) -> Result<Vec<RegionBox>, FocusError> {
        Ok(propose_regions(focal, input.base.dims(), &cfg.ratios)?)
    }
}

/// Ablation: the model names one region by its corners; the focal point is
/// not used.
#[derive(Debug, Clone, Copy, Default)]
pub struct PredictRegionProposer;

impl RegionProposer for PredictRegionProposer {
    fn propose(
        &self,
        input: FocusInput,
        _focal: Point,
        _cfg: &FocusConfig,
        gw: &Gateway,
        trace: &mut Vec<InferenceRecord>,
    ) -> Result<Vec<RegionBox>, FocusError> {
        let req = render_region_box_prompt(gw.profile(), input.objective, input.url, input.base);
        let (mut rec, reply) = traced_call(gw, &req, None);
        let outcome = reply.map_err(FocusError::from).and_then(|text| {
            let (a, b) = parse_region_box_reply(&text)?;
            let dims = input.base.dims();
            let (a, b) = (model_point(a, gw, dims)?, model_point(b, gw, dims)?);
            let raw = RegionBox {
                x0: a.x as i64,
                y0: a.y as i64,
                x1: b.x as i64 + 1,
                y1: b.y as i64 + 1,
                source_ratio: None,
            };
            Ok(clamp_box(&raw, dims))
        });
        match &outcome {
            Ok(b) => rec.parsed = Some(json!({ "region": b })),
            Err(e) => rec.error = Some(e.to_string()),
        }
        trace.push(rec);
        Ok(vec![outcome?])
    }
}

/// A segmentation model prompted with a single point.
pub trait PointSegmenter: Send + Sync {
    /// Bounding box of the segment containing `point`, if any.
    fn segment(&self, image: &Screenshot, point: Point) -> Option<RegionBox>;
}

/// Extension point: one region from a point-prompted segmenter, falling back
/// to the fixed ratios when it finds nothing.
pub struct SegmentationProposer<S> {
    pub segmenter: S,
}

impl<S: PointSegmenter> RegionProposer for SegmentationProposer<S> {
    fn propose(
        &self,
        input: FocusInput,
        focal: Point,
        cfg: &FocusConfig,
        gw: &Gateway,
        trace: &mut Vec<InferenceRecord>,
    ) -> Result<Vec<RegionBox>, FocusError> {
        match self.segmenter.segment(input.base, focal) {
            Some(b) if b.width() > 0 && b.height() > 0 => {
                Ok(vec![clamp_box(&b, input.base.dims())])
            }
            _ => FixedRatioProposer.propose(input, focal, cfg, gw, trace),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub action: Action,
    pub source_region: RegionBox,
    /// Position of the source region in the proposer's output.
    pub region_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmark_label: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn landmarks(&self) -> Vec<Landmark> {
        self.candidates
            .iter()
            .filter_map(|c| {
                Some(Landmark {
                    at: c.action.start?,
                    label: c.landmark_label?,
                    kind: LandmarkKind::Candidate,
                })
            })
            .collect()
    }
}

fn near(a: Option<Point>, b: Option<Point>, r2: u64) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a.distance_squared(&b) < r2,
        (None, None) => true,
        _ => false,
    }
}

/// Same kind and payload, with every coordinate strictly closer than the radius.
pub fn near_duplicate(a: &Action, b: &Action, radius: u32) -> bool {
    let r2 = radius as u64 * radius as u64;
    a.kind == b.kind
        && a.text == b.text
        && a.direction == b.direction
        && a.amount == b.amount
        && a.status == b.status
        && near(a.start, b.start, r2)
        && near(a.end, b.end, r2)
}

/// Keep the first of each group of near-duplicates and number the
/// coordinate-bearing survivors from 1.
pub fn dedup_and_label(raw: Vec<Candidate>, radius: u32) -> CandidateSet {
    let mut kept: Vec<Candidate> = Vec::new();
    for c in raw {
        if !kept
            .iter()
            .any(|k| near_duplicate(&k.action, &c.action, radius))
        {
            kept.push(c);
        }
    }
    let mut next = 1;
    for c in &mut kept {
        c.landmark_label = is_coordinate_action(&c.action).then(|| {
            next += 1;
            next - 1
        });
    }
    CandidateSet { candidates: kept }
}

fn predict_one(
    input: FocusInput,
    index: usize,
    region: &RegionBox,
    gw: &Gateway,
) -> (InferenceRecord, Result<Option<Candidate>, FocusError>) {
    let prepared = (|| -> Result<_, FocusError> {
        let spec = geometry::zoom_spec(region, input.base.dims())?;
        let zoomed = canvas::resize(&canvas::crop(input.base, region)?, spec.output);
        Ok((spec, zoomed))
    })();
    let (spec, zoomed) = match prepared {
        Ok(v) => v,
        Err(e) => {
            let rec = InferenceRecord {
                template: TemplateId::RegionAction { index },
                request: String::new(),
                images: Vec::new(),
                annotation: None,
                reply: None,
                parsed: None,
                error: Some(e.to_string()),
            };
            return (rec, Err(e));
        }
    };
    let req = render_agent_prompt(
        gw.profile(),
        TemplateId::RegionAction { index },
        input.objective,
        input.url,
        &zoomed,
        &[],
    );
    let (mut rec, reply) = traced_call(gw, &req, None);
    let text = match reply {
        Ok(t) => t,
        Err(e) => return (rec, Err(e.into())),
    };
    let parsed = actions::parse(&text, gw.profile().dialect)
        .map_err(FocusError::from)
        .and_then(|turn| {
            let local = turn
                .action
                .try_map_points(|p| model_point(p, gw, spec.output))?;
            Ok(actions::rebase(&local, &spec)?)
        });
    match parsed {
        Ok(action) => {
            rec.parsed = Some(json!({ "action": action, "region": region }));
            let cand = Candidate {
                action,
                source_region: *region,
                region_index: index,
                landmark_label: None,
            };
            (rec, Ok(Some(cand)))
        }
        Err(e) => {
            log::info!("region {index} reply dropped: {e}");
            rec.error = Some(e.to_string());
            (rec, Ok(None))
        }
    }
}

/// Predict one action per region, concurrently, with the native action
/// prompt on each zoomed crop. Unparsable replies are dropped.
pub fn predict_region_candidates(
    input: FocusInput,
    regions: &[RegionBox],
    cfg: &FocusConfig,
    gw: &Gateway,
    trace: &mut Vec<InferenceRecord>,
) -> Result<CandidateSet, FocusError> {
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = regions
            .iter()
            .enumerate()
            .map(|(i, region)| s.spawn(move || predict_one(input, i, region, gw)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("region worker panicked"))
            .collect()
    });
    let mut raw = Vec::new();
    let mut first_error = None;
    for (rec, outcome) in results {
        trace.push(rec);
        match outcome {
            Ok(Some(c)) => raw.push(c),
            Ok(None) => {}
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    let set = dedup_and_label(raw, cfg.dedup_radius);
    if set.is_empty() {
        return Err(FocusError::EmptyCandidates);
    }
    Ok(set)
}

fn describe(c: &Candidate) -> String {
    match c.landmark_label {
        Some(l) => format!("{} at pink star {l}", c.action),
        None => c.action.to_string(),
    }
}

/// Pick one candidate. A single candidate is returned without a model call;
/// an unusable label falls back to the first candidate.
pub fn aggregate(
    input: FocusInput,
    cands: &CandidateSet,
    cfg: &FocusConfig,
    gw: &Gateway,
    trace: &mut Vec<InferenceRecord>,
) -> Result<Action, FocusError> {
    let first = cands
        .candidates
        .first()
        .ok_or(FocusError::EmptyCandidates)?;
    if cands.len() == 1 {
        return Ok(first.action.clone());
    }
    // labelled candidates take options 1..=m, the rest follow
    let mut order: Vec<&Candidate> = cands
        .candidates
        .iter()
        .filter(|c| c.landmark_label.is_some())
        .collect();
    order.sort_by_key(|c| c.landmark_label);
    order.extend(
        cands
            .candidates
            .iter()
            .filter(|c| c.landmark_label.is_none()),
    );
    let options: Vec<String> = order.iter().map(|c| describe(c)).collect();

    let marks = cands.landmarks();
    let image = canvas::draw_landmarks(input.base, &marks, &cfg.style)?;
    let req = render_aggregation_prompt(gw.profile(), input.objective, &image, &options)
        .map_err(|_| FocusError::EmptyCandidates)?;
    let annotation = Some(Annotation {
        base: input.base.digest(),
        marks,
    });
    let (mut rec, reply) = traced_call(gw, &req, annotation);
    let text = match reply {
        Ok(t) => t,
        Err(e) => {
            trace.push(rec);
            return Err(e.into());
        }
    };
    let chosen = match parse_aggregation_reply(&text, options.len()) {
        Some(n) => {
            rec.parsed = Some(json!({ "choice": n }));
            order[n - 1]
        }
        None => {
            rec.parsed = Some(json!({ "choice": null, "fallback": 1 }));
            first
        }
    };
    trace.push(rec);
    Ok(chosen.action.clone())
}

/// Outcome of one refinement round.
#[derive(Debug)]
pub struct FocusRun {
    pub outcome: Result<Action, FocusError>,
    pub focal: Option<Point>,
    pub candidates: Option<CandidateSet>,
    pub history: FocusHistory,
    pub trace: Vec<InferenceRecord>,
}

/// Focal proposal, region prediction and aggregation in sequence. The
/// focal point joins the history as a new star whenever one was chosen.
pub fn run_focus(
    input: FocusInput,
    history: &FocusHistory,
    cfg: &FocusConfig,
    gw: &Gateway,
    proposer: &dyn RegionProposer,
) -> FocusRun {
    let mut trace = Vec::new();
    let mut updated = history.clone();
    if updated.page_digest.is_none() {
        updated.page_digest = Some(input.base.digest());
    }
    let focal = match propose_focal(input, history, cfg, gw, &mut trace) {
        Ok(p) => p,
        Err(e) => {
            return FocusRun {
                outcome: Err(e),
                focal: None,
                candidates: None,
                history: updated,
                trace,
            }
        }
    };
    updated.push(focal);
    let mut candidates = None;
    let outcome = (|| {
        let regions = proposer.propose(input, focal, cfg, gw, &mut trace)?;
        let set = predict_region_candidates(input, &regions, cfg, gw, &mut trace)?;
        let action = aggregate(input, &set, cfg, gw, &mut trace);
        candidates = Some(set);
        action
    })();
    FocusRun {
        outcome,
        focal: Some(focal),
        candidates,
        history: updated,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::{ActionKind, Direction};

    fn pt(x: u32, y: u32) -> Point {
        Point::new(x, y)
    }

    fn shot(c: u8) -> Screenshot {
        Screenshot::solid(Dims::new(60, 40).unwrap(), [c, c, c])
    }

    #[test]
    fn config_defaults() {
        let c = FocusConfig::default();
        assert_eq!(c.ratios, geometry::default_ratios::<f64>());
        assert_eq!(
            (
                c.max_triggers_per_state,
                c.dedup_radius,
                c.focal_avoid_radius,
                c.focal_retry_budget
            ),
            (3, 5, 20, 3)
        );
        assert!(c.validate().is_ok());
        assert!(FocusConfig {
            ratios: vec![],
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(FocusConfig {
            dedup_radius: 0,
            ..c
        }
        .validate()
        .is_err());
    }

    #[test]
    fn trigger_priorities() {
        let cfg = FocusConfig::default();
        let (a, b) = (shot(10), shot(200));
        let click = Action::click(pt(5, 5));

        let d = evaluate_trigger(Some((&a, &a)), std::slice::from_ref(&click), None, 0, &cfg);
        assert_eq!((d.fired, d.cause), (true, TriggerCause::NoEffect));

        let typed = vec![Action::type_text("Los Angeles"); 3];
        let d = evaluate_trigger(Some((&a, &b)), &typed, None, 0, &cfg);
        assert_eq!((d.fired, d.cause), (true, TriggerCause::RepeatedAction));

        let distinct = vec![Action::click(pt(1, 1)), Action::click(pt(2, 2))];
        let d = evaluate_trigger(
            Some((&a, &b)),
            &distinct,
            Some(JudgeVerdict::Correct),
            0,
            &cfg,
        );
        assert_eq!((d.fired, d.cause), (false, TriggerCause::None));

        // no-effect outranks the other two
        let d = evaluate_trigger(
            Some((&a, &a)),
            &vec![click.clone(); 3],
            Some(JudgeVerdict::Incorrect),
            0,
            &cfg,
        );
        assert_eq!(d.cause, TriggerCause::NoEffect);
        let d = evaluate_trigger(
            Some((&a, &b)),
            &vec![click.clone(); 3],
            Some(JudgeVerdict::Incorrect),
            0,
            &cfg,
        );
        assert_eq!(d.cause, TriggerCause::RepeatedAction);
        let d = evaluate_trigger(None, &[], Some(JudgeVerdict::Incorrect), 0, &cfg);
        assert_eq!(d.cause, TriggerCause::JudgeIncorrect);
    }

    #[test]
    fn non_coordinate_actions_never_count_as_no_effect() {
        let cfg = FocusConfig::default();
        let a = shot(10);
        let d = evaluate_trigger(
            Some((&a, &a)),
            &[Action::bare(ActionKind::Wait)],
            None,
            0,
            &cfg,
        );
        assert!(!d.fired);
        let scroll = Action::scroll(Some(pt(1, 1)), Some(Direction::Down), None);
        assert!(evaluate_trigger(Some((&a, &a)), &[scroll], None, 0, &cfg).fired);
    }

    #[test]
    fn ambiguous_verdicts_follow_config() {
        let mut cfg = FocusConfig::default();
        assert!(!evaluate_trigger(None, &[], Some(JudgeVerdict::Ambiguous), 0, &cfg).fired);
        cfg.ambiguous_is_correct = false;
        assert!(evaluate_trigger(None, &[], Some(JudgeVerdict::Ambiguous), 0, &cfg).fired);
    }

    #[test]
    fn cap_suppresses() {
        let cfg = FocusConfig::default();
        let a = shot(1);
        let d = evaluate_trigger(Some((&a, &a)), &[Action::click(pt(1, 1))], None, 3, &cfg);
        assert!(!d.fired);
        assert_eq!(d.cause, TriggerCause::None);
        assert_eq!(d.suppressed, Some(TriggerCause::NoEffect));
        assert!(evaluate_trigger(Some((&a, &a)), &[Action::click(pt(1, 1))], None, 2, &cfg).fired);
    }

    #[test]
    fn history_refresh_rules() {
        let page = shot(1).digest();
        let mut h = FocusHistory::for_page(page);
        assert_eq!(h.push(pt(1, 1)), 1);
        assert_eq!(h.push(pt(30, 30)), 2);
        let changed = DiffReport {
            changed_fraction: 0.4,
            identical: false,
        };
        let same = DiffReport {
            changed_fraction: 0.0,
            identical: true,
        };
        let next = shot(2).digest();
        let r = refresh_history(&h, &changed, next);
        assert!(r.is_empty());
        assert_eq!(r.page_digest, Some(next));
        assert_eq!(refresh_history(&h, &same, next), h);
        let empty = FocusHistory::for_page(page);
        assert_eq!(refresh_history(&empty, &same, next), empty);
    }

    #[test]
    fn star_proximity_is_inclusive_euclidean() {
        let mut h = FocusHistory::default();
        h.push(pt(300, 400));
        assert!(h.star_near(pt(302, 401), 20).is_some());
        assert!(h.star_near(pt(312, 416), 20).is_some()); // exactly 20
        assert!(h.star_near(pt(313, 416), 20).is_none());
        assert!(h.star_near(pt(600, 100), 20).is_none());
    }

    fn cand(a: Action, i: usize) -> Candidate {
        Candidate {
            action: a,
            source_region: RegionBox::new(0, 0, 10, 10).unwrap(),
            region_index: i,
            landmark_label: None,
        }
    }

    #[test]
    fn dedup_matches_pairwise_oracle() {
        let raw = vec![
            cand(Action::click(pt(100, 100)), 0),
            cand(Action::click(pt(102, 102)), 1),
            cand(Action::click(pt(300, 50)), 2),
            cand(Action::at(ActionKind::DoubleClick, pt(100, 100)), 3),
        ];
        let set = dedup_and_label(raw.clone(), 5);
        // oracle: keep i unless some earlier kept j has same kind and distance < 5
        let mut oracle: Vec<usize> = Vec::new();
        for (i, c) in raw.iter().enumerate() {
            let dup = oracle.iter().any(|&j| {
                let (a, b) = (raw[j].action.start.unwrap(), c.action.start.unwrap());
                let d =
                    ((a.x as f64 - b.x as f64).powi(2) + (a.y as f64 - b.y as f64).powi(2)).sqrt();
                raw[j].action.kind == c.action.kind && d < 5.0
            });
            if !dup {
                oracle.push(i);
            }
        }
        let got: Vec<usize> = set.candidates.iter().map(|c| c.region_index).collect();
        assert_eq!(got, oracle);
        let labels: Vec<Option<u32>> = set.candidates.iter().map(|c| c.landmark_label).collect();
        assert_eq!(labels, vec![Some(1), Some(2), Some(3)]);
    }

    #[test]
    fn non_coordinate_candidates_stay_unlabelled() {
        let set = dedup_and_label(
            vec![
                cand(Action::finished(), 0),
                cand(Action::click(pt(5, 5)), 1),
                cand(Action::finished(), 2),
            ],
            5,
        );
        assert_eq!(set.len(), 2);
        assert_eq!(set.candidates[0].landmark_label, None);
        assert_eq!(set.candidates[1].landmark_label, Some(1));
        assert_eq!(set.landmarks().len(), 1);
    }
}
