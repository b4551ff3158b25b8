//! Benchmark harnesses: grounding accuracy with per-category breakdowns,
//! trajectory success summaries and step-count comparisons.
//!
//! Grounding tasks are JSON lines, one task per row:
//!
//! ```json
//! {"id": "office-03", "image": "img/office-03.png", "instruction": "Bold the selected text",
//!  "gt_box": [412, 88, 436, 110], "group": "Office", "ui_type": "icon"}
//! ```
//!
//! Field aliases follow the public ScreenSpot-Pro annotations: `img_filename`
//! for `image`, `bbox` for `gt_box`, `data_type` for `ui_type`. A file whose
//! first character is `[` is read as one JSON array. Boxes are `[x0, y0, x1,
//! y1]` in pixels with inclusive edges; image paths are relative to the task
//! file.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{run_grounding, FinalStatus, LoopConfig, TrajectoryRecord};
use crate::canvas::Screenshot;
use crate::gateway::{render_trajectory_judge_prompt, Gateway};
use crate::geometry::{point_in_box, Point};
use crate::RegionBox;

/// Screenshots a trajectory judge sees.
pub const JUDGE_WINDOW: usize = 15;
pub const DEFAULT_REPETITIONS: usize = 3;

/// Column order of the grounding table.
pub const GROUP_ORDER: [&str; 6] = ["Dev", "Creative", "CAD", "Scientific", "Office", "OS"];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}: no valid tasks")]
    NoTasks(String),
    #[error("nothing to summarize")]
    NoRecords,
    #[error("task ids differ between runs: {0:?}")]
    Unmatched(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UiType {
    Text,
    Icon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingTask {
    pub id: String,
    pub image: PathBuf,
    pub instruction: String,
    pub gt_box: RegionBox,
    pub group: String,
    pub ui_type: UiType,
}

#[derive(Debug, Deserialize)]
struct RawTask {
    id: Option<Value>,
    #[serde(alias = "img_filename")]
    image: Option<String>,
    instruction: Option<String>,
    #[serde(alias = "bbox")]
    gt_box: Option<Vec<f64>>,
    #[serde(alias = "category")]
    group: Option<String>,
    #[serde(alias = "data_type")]
    ui_type: Option<String>,
}

/// A row that failed validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejected {
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadedTasks {
    pub tasks: Vec<GroundingTask>,
    pub rejected: Vec<Rejected>,
}

fn canonical_group(g: &str) -> String {
    match g.trim() {
        "Development" | "dev" => "Dev".into(),
        "Operating Systems" | "os" => "OS".into(),
        other => other.to_string(),
    }
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn validate_row(raw: RawTask, base: &Path) -> Result<GroundingTask, (Option<String>, String)> {
    let id = raw.id.as_ref().and_then(id_string);
    let fail = |reason: String| (id.clone(), reason);
    let id_s = id.clone().ok_or_else(|| fail("missing id".into()))?;
    let image = raw.image.ok_or_else(|| fail("missing image".into()))?;
    let instruction = raw
        .instruction
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| fail("missing instruction".into()))?;
    let b = raw.gt_box.ok_or_else(|| fail("missing gt_box".into()))?;
    if b.len() != 4 || b.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(fail(format!(
            "gt_box must be four non-negative numbers, got {b:?}"
        )));
    }
    let [x0, y0, x1, y1] = [b[0], b[1], b[2], b[3]].map(|v| v.round() as i64);
    if x0 > x1 || y0 > y1 {
        return Err(fail(format!("gt_box corners are reversed: {b:?}")));
    }
    let ui_type = match raw
        .ui_type
        .as_deref()
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("text") => UiType::Text,
        Some("icon") | Some("widget") => UiType::Icon,
        other => return Err(fail(format!("ui_type must be text or icon, got {other:?}"))),
    };
    let group = raw
        .group
        .map(|g| canonical_group(&g))
        .ok_or_else(|| fail("missing group".into()))?;
    let path = base.join(&image);
    let (w, h) =
        image::image_dimensions(&path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
    if x1 > w as i64 || y1 > h as i64 {
        return Err(fail(format!("gt_box {b:?} extends past the {w}x{h} image")));
    }
    Ok(GroundingTask {
        id: id_s,
        image: path,
        instruction,
        gt_box: RegionBox {
            x0,
            y0,
            x1,
            y1,
            source_ratio: None,
        },
        group,
        ui_type,
    })
}

/// Read and validate a task file. Bad rows are reported and skipped; a file
/// with no valid row is an error.
pub fn load_grounding_tasks(path: &Path) -> Result<LoadedTasks, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let rows: Vec<(usize, Result<RawTask, String>)> = if text.trim_start().starts_with('[') {
        match serde_json::from_str::<Vec<Value>>(&text) {
            Ok(values) => values
                .into_iter()
                .enumerate()
                .map(|(i, v)| (i + 1, serde_json::from_value(v).map_err(|e| e.to_string())))
                .collect(),
            Err(e) => vec![(e.line(), Err(e.to_string()))],
        }
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, serde_json::from_str(l).map_err(|e| e.to_string())))
            .collect()
    };
    let mut out = LoadedTasks::default();
    let mut seen = HashSet::new();
    for (line, row) in rows {
        let result = row
            .map_err(|e| (None, e))
            .and_then(|raw| validate_row(raw, base));
        match result {
            Ok(t) if !seen.insert(t.id.clone()) => out.rejected.push(Rejected {
                line,
                id: Some(t.id),
                reason: "duplicate id".into(),
            }),
            Ok(t) => out.tasks.push(t),
            Err((id, reason)) => {
                log::warn!("{}:{line}: rejected: {reason}", path.display());
                out.rejected.push(Rejected { line, id, reason });
            }
        }
    }
    if out.tasks.is_empty() {
        return Err(EvalError::NoTasks(path.display().to_string()));
    }
    Ok(out)
}

pub fn score_grounding(pred: Point, task: &GroundingTask) -> bool {
    point_in_box(pred, &task.gt_box)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingRow {
    pub id: String,
    pub group: String,
    pub ui_type: UiType,
    pub predicted: Option<Point>,
    pub initial: Option<Point>,
    pub hit: bool,
    pub triggered: bool,
    pub inferences: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The gateway or the image load failed.
    #[serde(default)]
    pub fault: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub hits: usize,
    pub total: usize,
}

impl Score {
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }

    fn add(&mut self, hit: bool) {
        self.total += 1;
        self.hits += hit as usize;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub text: Score,
    pub icon: Score,
    pub all: Score,
}

impl CategoryScore {
    fn add(&mut self, ui: UiType, hit: bool) {
        match ui {
            UiType::Text => self.text.add(hit),
            UiType::Icon => self.icon.add(hit),
        }
        self.all.add(hit);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub regionfocus: bool,
    pub rows: Vec<GroundingRow>,
    pub groups: BTreeMap<String, CategoryScore>,
    pub overall: CategoryScore,
    /// Fraction of tasks where the refinement ran.
    pub trigger_rate: f64,
    pub errors: usize,
    pub faults: usize,
}

impl GroundingReport {
    pub fn from_rows(rows: Vec<GroundingRow>, regionfocus: bool) -> Self {
        let mut groups: BTreeMap<String, CategoryScore> = BTreeMap::new();
        let mut overall = CategoryScore::default();
        for r in &rows {
            groups
                .entry(r.group.clone())
                .or_default()
                .add(r.ui_type, r.hit);
            overall.add(r.ui_type, r.hit);
        }
        let trigger_rate = if rows.is_empty() {
            0.0
        } else {
            rows.iter().filter(|r| r.triggered).count() as f64 / rows.len() as f64
        };
        let errors = rows.iter().filter(|r| r.error.is_some()).count();
        let faults = rows.iter().filter(|r| r.fault).count();
        Self {
            regionfocus,
            rows,
            groups,
            overall,
            trigger_rate,
            errors,
            faults,
        }
    }

    /// Group names in table order: the known groups first, then the rest
    /// alphabetically.
    pub fn group_order(&self) -> Vec<String> {
        let mut out: Vec<String> = GROUP_ORDER
            .iter()
            .filter(|g| self.groups.contains_key(**g))
            .map(|g| g.to_string())
            .collect();
        out.extend(
            self.groups
                .keys()
                .filter(|g| !GROUP_ORDER.contains(&g.as_str()))
                .cloned(),
        );
        out
    }
}

fn grounding_row(task: &GroundingTask, cfg: &LoopConfig, gw: &Gateway) -> GroundingRow {
    let mut row = GroundingRow {
        id: task.id.clone(),
        group: task.group.clone(),
        ui_type: task.ui_type,
        predicted: None,
        initial: None,
        hit: false,
        triggered: false,
        inferences: 0,
        error: None,
        fault: false,
    };
    let image = match Screenshot::load(&task.image) {
        Ok(i) => i,
        Err(e) => {
            row.error = Some(e.to_string());
            row.fault = true;
            return row;
        }
    };
    let out = run_grounding(&image, &task.instruction, cfg, gw);
    row.predicted = out.point;
    row.initial = out.initial;
    row.triggered = out.triggered();
    row.inferences = out.inferences.len();
    row.hit = out.point.is_some_and(|p| score_grounding(p, task));
    if let Some(e) = &out.error {
        log::warn!("task {}: {e}", task.id);
    }
    row.error = out.error;
    row.fault = out.fault;
    row
}

/// Ground every task on a pool of `jobs` workers. Failures score as misses.
pub fn run_grounding_eval(
    tasks: &[GroundingTask],
    cfg: &LoopConfig,
    gw: &Gateway,
    jobs: usize,
) -> GroundingReport {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let rows: Vec<GroundingRow> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| grounding_row(t, cfg, gw))
            .collect()
    });
    GroundingReport::from_rows(rows, cfg.regionfocus)
}

fn pct(s: &Score) -> String {
    match s.accuracy() {
        Some(a) => format!("{:.1}", a * 100.0),
        None => "-".into(),
    }
}

/// Aligned text table, one row per labelled report: text, icon and average
/// accuracy (percent) for each group and overall.
pub fn render_table(reports: &[(&str, &GroundingReport)]) -> String {
    let mut groups: Vec<String> = Vec::new();
    for (_, r) in reports {
        for g in r.group_order() {
            if !groups.contains(&g) {
                groups.push(g);
            }
        }
    }
    let label_w = reports
        .iter()
        .map(|(l, _)| l.len())
        .max()
        .unwrap_or(0)
        .max(5);
    let cell = 6;
    let block = cell * 3;
    let mut out = String::new();
    let _ = write!(out, "{:label_w$}", "");
    for g in groups.iter().map(String::as_str).chain(["Avg"]) {
        let _ = write!(out, " |{g:^block$}");
    }
    out.push('\n');
    let _ = write!(out, "{:label_w$}", "Model");
    for _ in 0..=groups.len() {
        let _ = write!(out, " |{:>cell$}{:>cell$}{:>cell$}", "text", "icon", "avg");
    }
    out.push('\n');
    for (label, r) in reports {
        let _ = write!(out, "{label:label_w$}");
        let empty = CategoryScore::default();
        for c in groups
            .iter()
            .map(|g| r.groups.get(g).unwrap_or(&empty))
            .chain([&r.overall])
        {
            let _ = write!(
                out,
                " |{:>cell$}{:>cell$}{:>cell$}",
                pct(&c.text),
                pct(&c.icon),
                pct(&c.all)
            );
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskVerdicts {
    pub task_id: String,
    pub site: String,
    pub steps: usize,
    pub final_status: FinalStatus,
    /// One entry per repetition; `None` when that judgment failed.
    pub verdicts: Vec<Option<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub success_rate: Option<f64>,
    pub valid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub tasks: Vec<TaskVerdicts>,
    pub repetitions: Vec<Repetition>,
    pub mean: Option<f64>,
    /// Population standard deviation over repetitions with a success rate.
    pub stddev: Option<f64>,
    /// Per-site success rate pooled over all valid judgments.
    pub sites: BTreeMap<String, f64>,
    /// Valid judgments over attempted ones.
    pub coverage: f64,
    pub judged_by_model: bool,
}

fn site_of(rec: &TrajectoryRecord) -> String {
    if let Some(id) = &rec.task_id {
        if let Some((site, _)) = id.split_once("--") {
            return site.to_string();
        }
    }
    let url = rec
        .start_url
        .split_once("://")
        .map_or(rec.start_url.as_str(), |(_, rest)| rest);
    url.split('/').next().unwrap_or_default().to_string()
}

/// Ask the judge about one trajectory.
pub fn judge_trajectory(rec: &TrajectoryRecord, gw: &Gateway) -> Option<bool> {
    let shots: Vec<Screenshot> = rec
        .last_screenshots(JUDGE_WINDOW)
        .into_iter()
        .cloned()
        .collect();
    let req = render_trajectory_judge_prompt(
        gw.profile(),
        &rec.objective,
        &shots,
        rec.final_response.as_deref(),
    );
    match gw.complete(&req) {
        Ok(text) => {
            let upper = text.to_ascii_uppercase();
            if upper.contains("NOT SUCCESS") {
                Some(false)
            } else if upper.contains("SUCCESS") {
                Some(true)
            } else {
                log::warn!("unreadable judge reply for {:?}: {text:?}", rec.task_id);
                None
            }
        }
        Err(e) => {
            log::warn!("judge failed for {:?}: {e}", rec.task_id);
            None
        }
    }
}

/// Success rates over `repetitions` judgments of each record. Without a
/// judge the simulator's goal check is used once per repetition.
pub fn summarize_trajectories(
    records: &[TrajectoryRecord],
    judge: Option<&Gateway>,
    repetitions: usize,
) -> Result<TrajectoryReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let reps = repetitions.max(1);
    let tasks: Vec<TaskVerdicts> = records
        .iter()
        .enumerate()
        .map(|(i, rec)| TaskVerdicts {
            task_id: rec.task_id.clone().unwrap_or_else(|| format!("task-{i}")),
            site: site_of(rec),
            steps: rec.interactive_steps(),
            final_status: rec.final_status,
            verdicts: (0..reps)
                .map(|_| match judge {
                    Some(gw) => judge_trajectory(rec, gw),
                    None => rec.goal_reached,
                })
                .collect(),
        })
        .collect();
    let repetitions: Vec<Repetition> = (0..reps)
        .map(|r| {
            let valid: Vec<bool> = tasks.iter().filter_map(|t| t.verdicts[r]).collect();
            let rate = (!valid.is_empty())
                .then(|| valid.iter().filter(|v| **v).count() as f64 / valid.len() as f64);
            Repetition {
                success_rate: rate,
                valid: valid.len(),
            }
        })
        .collect();
    let rates: Vec<f64> = repetitions.iter().filter_map(|r| r.success_rate).collect();
    let mean = (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64);
    let stddev = mean
        .map(|m| (rates.iter().map(|r| (r - m).powi(2)).sum::<f64>() / rates.len() as f64).sqrt());
    let mut per_site: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for t in &tasks {
        let e = per_site.entry(t.site.clone()).or_default();
        for v in t.verdicts.iter().flatten() {
            e.0 += *v as usize;
            e.1 += 1;
        }
    }
    let sites = per_site
        .into_iter()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(s, (k, n))| (s, k as f64 / n as f64))
        .collect();
    let attempted = tasks.len() * reps;
    let valid = tasks
        .iter()
        .flat_map(|t| t.verdicts.iter())
        .filter(|v| v.is_some())
        .count();
    Ok(TrajectoryReport {
        tasks,
        repetitions,
        mean,
        stddev,
        sites,
        coverage: valid as f64 / attempted as f64,
        judged_by_model: judge.is_some(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepHistogram {
    /// steps_a − steps_b → number of tasks.
    pub bins: BTreeMap<i64, usize>,
    pub per_task: BTreeMap<String, i64>,
}

/// Per-task difference in environment steps between two runs of the same
/// tasks. Refinement inferences are not steps.
pub fn step_histogram(
    a: &[TrajectoryRecord],
    b: &[TrajectoryRecord],
) -> Result<StepHistogram, EvalError> {
    let key = |r: &TrajectoryRecord| r.task_id.clone().unwrap_or_else(|| r.objective.clone());
    let a_map: BTreeMap<String, usize> =
        a.iter().map(|r| (key(r), r.interactive_steps())).collect();
    let b_map: BTreeMap<String, usize> =
        b.iter().map(|r| (key(r), r.interactive_steps())).collect();
    let unmatched: Vec<String> = a_map
        .keys()
        .filter(|k| !b_map.contains_key(*k))
        .chain(b_map.keys().filter(|k| !a_map.contains_key(*k)))
        .cloned()
        .collect();
    if !unmatched.is_empty() {
        return Err(EvalError::Unmatched(unmatched));
    }
    let per_task: BTreeMap<String, i64> = a_map
        .iter()
        .map(|(k, sa)| (k.clone(), *sa as i64 - b_map[k] as i64))
        .collect();
    let mut bins = BTreeMap::new();
    for d in per_task.values() {
        *bins.entry(*d).or_insert(0) += 1;
    }
    Ok(StepHistogram { bins, per_task })
}
