use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use regionfocus::agent::{run_trajectory, FinalStatus, LoopConfig, TrajectoryRecord};
use regionfocus::evalkit::{
    judge_trajectory, load_grounding_tasks, step_histogram, summarize_trajectories, EvalError,
    UiType, JUDGE_WINDOW,
};
use regionfocus::fixtures;
use regionfocus::gateway::{
    BackendProfile, ChatRequest, Gateway, GatewayError, ModelBackend, RecordingBackend,
    ReplayBackend,
};
use regionfocus::{Digest, Dims, Screenshot};

fn write_image(dir: &std::path::Path, name: &str, w: u32, h: u32) {
    Screenshot::solid(Dims::new(w, h).unwrap(), [200, 200, 200])
        .save_png(dir.join(name))
        .unwrap();
}

#[test]
fn loader_rejects_bad_rows_and_keeps_good_ones() {
    let dir = tempfile::tempdir().unwrap();
    write_image(dir.path(), "a.png", 100, 50);
    let rows = [
        r#"{"id": "ok", "image": "a.png", "instruction": "press ok", "gt_box": [10, 10, 30, 20], "group": "Office", "ui_type": "text"}"#,
        r#"{"id": 7, "img_filename": "a.png", "instruction": "gear", "bbox": [0.4, 0, 100, 49.6], "category": "Development", "data_type": "icon"}"#,
        r#"{"image": "a.png", "instruction": "x", "gt_box": [0, 0, 1, 1], "group": "OS", "ui_type": "text"}"#,
        r#"{"id": "ok", "image": "a.png", "instruction": "again", "gt_box": [0, 0, 1, 1], "group": "OS", "ui_type": "text"}"#,
        r#"{"id": "wide", "image": "a.png", "instruction": "x", "gt_box": [0, 0, 101, 10], "group": "OS", "ui_type": "text"}"#,
        r#"{"id": "flipped", "image": "a.png", "instruction": "x", "gt_box": [30, 0, 10, 10], "group": "OS", "ui_type": "text"}"#,
        r#"{"id": "kind", "image": "a.png", "instruction": "x", "gt_box": [0, 0, 1, 1], "group": "OS", "ui_type": "banner"}"#,
        r#"{"id": "noimg", "image": "missing.png", "instruction": "x", "gt_box": [0, 0, 1, 1], "group": "OS", "ui_type": "text"}"#,
        r#"{"id": "blank", "image": "a.png", "instruction": "  ", "gt_box": [0, 0, 1, 1], "group": "OS", "ui_type": "text"}"#,
        "not json",
    ];
    let path = dir.path().join("tasks.jsonl");
    std::fs::write(&path, rows.join("\n\n")).unwrap();
    let loaded = load_grounding_tasks(&path).unwrap();

    let ids: Vec<&str> = loaded.tasks.iter().map(|t| t.id.as_str()).collect();
    assert_eq!(ids, ["ok", "7"]);
    let aliased = &loaded.tasks[1];
    assert_eq!(aliased.group, "Dev");
    assert_eq!(aliased.ui_type, UiType::Icon);
    assert_eq!(
        (
            aliased.gt_box.x0,
            aliased.gt_box.y0,
            aliased.gt_box.x1,
            aliased.gt_box.y1
        ),
        (0, 0, 100, 50)
    );

    let rejected: BTreeMap<usize, (Option<&str>, &str)> = loaded
        .rejected
        .iter()
        .map(|r| (r.line, (r.id.as_deref(), r.reason.as_str())))
        .collect();
    assert_eq!(rejected.len(), 8);
    // blank lines between rows keep physical line numbers
    assert_eq!(rejected[&5], (None, "missing id"));
    assert_eq!(rejected[&7], (Some("ok"), "duplicate id"));
    assert!(rejected[&9].1.contains("past the 100x50 image"));
    assert!(rejected[&11].1.contains("reversed"));
    assert!(rejected[&13].1.contains("ui_type"));
    assert!(rejected[&15].1.contains("missing.png"));
    assert_eq!(rejected[&17].1, "missing instruction");
    assert_eq!(rejected[&19].0, None);
}

#[test]
fn loader_reads_a_json_array() {
    let dir = tempfile::tempdir().unwrap();
    write_image(dir.path(), "a.png", 64, 64);
    let path = dir.path().join("tasks.json");
    std::fs::write(
        &path,
        r#"[{"id": "a", "image": "a.png", "instruction": "x", "gt_box": [1, 1, 2, 2], "group": "CAD", "ui_type": "icon"}]"#,
    )
    .unwrap();
    let loaded = load_grounding_tasks(&path).unwrap();
    assert_eq!(loaded.tasks.len(), 1);
    assert!(loaded.rejected.is_empty());
}

#[test]
fn empty_or_all_invalid_files_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert!(matches!(
        load_grounding_tasks(&empty),
        Err(EvalError::NoTasks(_))
    ));
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{}\n[1]\n").unwrap();
    assert!(matches!(
        load_grounding_tasks(&bad),
        Err(EvalError::NoTasks(_))
    ));
    assert!(matches!(
        load_grounding_tasks(&dir.path().join("nope.jsonl")),
        Err(EvalError::Io { .. })
    ));
}

fn record(id: &str, goal: Option<bool>, frames: u8) -> TrajectoryRecord {
    let mut images = BTreeMap::new();
    let mut screenshots = Vec::new();
    for i in 0..frames {
        let s = Screenshot::solid(Dims::new(8, 8).unwrap(), [i, 0, 0]);
        screenshots.push(s.digest());
        images.insert(s.digest(), s);
    }
    TrajectoryRecord {
        task_id: Some(id.to_string()),
        objective: format!("objective for {id}"),
        start_url: "http://shop.test/home".into(),
        steps: Vec::new(),
        final_status: FinalStatus::Finished,
        final_response: None,
        goal_reached: goal,
        screenshots,
        images,
    }
}

#[test]
fn summary_without_judge_uses_the_goal_check() {
    let recs = [
        record("shop--1", Some(true), 1),
        record("shop--2", Some(true), 1),
        record("mail--1", Some(true), 1),
        record("mail--2", Some(false), 1),
    ];
    let report = summarize_trajectories(&recs, None, 3).unwrap();
    assert_eq!(report.repetitions.len(), 3);
    assert_eq!(report.mean, Some(0.75));
    assert_eq!(report.stddev, Some(0.0));
    assert_eq!(report.sites["shop"], 1.0);
    assert_eq!(report.sites["mail"], 0.5);
    assert_eq!(report.coverage, 1.0);
    assert!(!report.judged_by_model);
    assert!(matches!(
        summarize_trajectories(&[], None, 3),
        Err(EvalError::NoRecords)
    ));
}

/// Judge that answers from the objective and remembers what it was shown.
struct Judge {
    seen: Mutex<Vec<Vec<Digest>>>,
    calls: Mutex<usize>,
}

impl ModelBackend for Judge {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        self.seen.lock().unwrap().push(req.image_digests());
        let mut calls = self.calls.lock().unwrap();
        *calls += 1;
        let text = req.text();
        Ok(if text.contains("mail--2") {
            "The order never went out. NOT SUCCESS".into()
        } else if text.contains("shop--3") && (*calls).is_multiple_of(2) {
            "unsure".into()
        } else {
            "SUCCESS".into()
        })
    }
}

#[test]
fn judge_sees_the_last_fifteen_screenshots() {
    let rec = record("shop--1", None, 20);
    let judge = Arc::new(Judge {
        seen: Mutex::new(Vec::new()),
        calls: Mutex::new(0),
    });
    let gw = Gateway::new(judge.clone(), BackendProfile::qwen25_vl());
    assert_eq!(judge_trajectory(&rec, &gw), Some(true));
    let seen = judge.seen.lock().unwrap();
    assert_eq!(JUDGE_WINDOW, 15);
    assert_eq!(seen[0], rec.screenshots[5..].to_vec());
}

#[test]
fn judged_summary_replays_identically() {
    let recs = [
        record("shop--1", None, 3),
        record("mail--2", None, 3),
        record("shop--3", None, 2),
    ];
    let judge = Arc::new(Judge {
        seen: Mutex::new(Vec::new()),
        calls: Mutex::new(0),
    });
    let recorder = Arc::new(RecordingBackend::new(judge));
    let live = Gateway::new(recorder.clone(), BackendProfile::ui_tars());
    let first = summarize_trajectories(&recs, Some(&live), 3).unwrap();
    assert!(first.judged_by_model);
    assert!(first.coverage < 1.0);

    let replay = Gateway::new(
        Arc::new(ReplayBackend::new(recorder.transcript())),
        BackendProfile::ui_tars(),
    );
    let again = summarize_trajectories(&recs, Some(&replay), 3).unwrap();
    assert_eq!(first, again);
    assert_eq!(again.tasks[1].verdicts, vec![Some(false); 3]);

    // with every verdict valid and fixed, repetitions agree exactly
    let steady = [record("shop--1", None, 3), record("mail--2", None, 3)];
    let judge = Arc::new(Judge {
        seen: Mutex::new(Vec::new()),
        calls: Mutex::new(0),
    });
    let report = summarize_trajectories(
        &steady,
        Some(&Gateway::new(judge, BackendProfile::ui_tars())),
        3,
    )
    .unwrap();
    assert_eq!(report.mean, Some(0.5));
    assert_eq!(report.stddev, Some(0.0));
}

#[test]
fn step_histogram_pairs_runs_by_task() {
    let sc = fixtures::shop_recovery();
    let run = |regionfocus: bool| {
        let cfg = LoopConfig {
            regionfocus,
            ..sc.config.clone()
        };
        let mut env = sc.simulator();
        let mut rec = run_trajectory(&mut env, &sc.objective, &cfg, &sc.mock_gateway());
        rec.task_id = Some("shop--kettle".into());
        rec
    };
    let with = run(true);
    let without = run(false);
    let expected = with.interactive_steps() as i64 - without.interactive_steps() as i64;
    assert!(expected < 0);
    let h = step_histogram(std::slice::from_ref(&with), &[without]).unwrap();
    assert_eq!(h.per_task["shop--kettle"], expected);
    assert_eq!(h.bins, BTreeMap::from([(expected, 1)]));

    let other = record("mail--1", None, 1);
    match step_histogram(&[with], &[other]) {
        Err(EvalError::Unmatched(ids)) => assert_eq!(ids, ["shop--kettle", "mail--1"]),
        other => panic!("{other:?}"),
    }
}
