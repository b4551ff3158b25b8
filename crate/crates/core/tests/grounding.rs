use std::collections::BTreeMap;

use regionfocus::agent::{run_grounding, LoopConfig};
use regionfocus::evalkit::{
    load_grounding_tasks, render_table, run_grounding_eval, score_grounding, GroundingTask,
};
use regionfocus::fixtures::{self, Plan};
use regionfocus::gateway::{Gateway, MockRule, MockScript, ScriptedBackend};
use regionfocus::{Point, RegionBox, Screenshot};

fn loaded(fx: &fixtures::GroundingFixture) -> (tempfile::TempDir, Vec<GroundingTask>) {
    let dir = tempfile::tempdir().unwrap();
    fx.write(dir.path()).unwrap();
    let tasks = load_grounding_tasks(&dir.path().join("tasks.jsonl")).unwrap();
    assert!(tasks.rejected.is_empty(), "{:?}", tasks.rejected);
    (dir, tasks.tasks)
}

// Inclusive containment written out independently of the library.
fn inside(p: Point, b: &RegionBox) -> bool {
    (b.x0..=b.x1).contains(&(p.x as i64)) && (b.y0..=b.y1).contains(&(p.y as i64))
}

#[test]
fn mini_fixture_follows_its_plans() {
    let fx = fixtures::grounding_mini();
    let (_dir, tasks) = loaded(&fx);
    assert_eq!(tasks.len(), 30);
    let gw = fx.mock_gateway();
    let on = run_grounding_eval(&tasks, &LoopConfig::default(), &gw, 4);
    let off = run_grounding_eval(
        &tasks,
        &LoopConfig {
            regionfocus: false,
            ..LoopConfig::default()
        },
        &gw,
        4,
    );
    for ((row, task), ft) in on.rows.iter().zip(&tasks).zip(&fx.tasks) {
        let expect_hit = matches!(ft.plan, Plan::Hit | Plan::MissRecovered);
        assert_eq!(row.hit, expect_hit, "{} {:?} {:?}", row.id, ft.plan, row);
        assert_eq!(
            row.hit,
            row.predicted.is_some_and(|p| inside(p, &task.gt_box))
        );
        assert_eq!(row.error.is_some(), ft.plan == Plan::Garbled);
    }
    let hits_on = on.rows.iter().filter(|r| r.hit).count();
    let hits_off = off.rows.iter().filter(|r| r.hit).count();
    assert!(hits_on > hits_off, "{hits_on} vs {hits_off}");
    let mut by_group: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in &on.rows {
        let e = by_group.entry(&r.group).or_default();
        e.0 += r.hit as usize;
        e.1 += 1;
    }
    for (g, (h, n)) in by_group {
        assert_eq!(on.groups[g].all.hits, h);
        assert_eq!(on.groups[g].all.total, n);
    }
    println!(
        "{}",
        render_table(&[("baseline", &off), ("regionfocus", &on)])
    );
}

#[test]
fn miss_then_hit_fixture_improves_accuracy() {
    let fx = fixtures::grounding_miss_then_hit();
    let (_dir, tasks) = loaded(&fx);
    let gw = fx.mock_gateway();
    let on = run_grounding_eval(&tasks, &LoopConfig::default(), &gw, 2);
    let off = run_grounding_eval(
        &tasks,
        &LoopConfig {
            regionfocus: false,
            ..LoopConfig::default()
        },
        &gw,
        2,
    );
    assert_eq!(off.overall.all.hits, 0);
    assert_eq!(on.overall.all.hits, tasks.len());
    assert!(on.rows.iter().all(|r| r.triggered));
}

fn judge_gateway(verdict: &str) -> (Screenshot, Gateway) {
    let fx = fixtures::grounding_miss_then_hit();
    let mut rules: Vec<MockRule> = fx
        .mock
        .rules
        .iter()
        .filter(|r| r.template != "self_judge")
        .cloned()
        .collect();
    rules.push(MockRule::new("self_judge", vec![verdict.into()]));
    let gw = Gateway::new(
        std::sync::Arc::new(ScriptedBackend::new(MockScript { rules })),
        fx.profile.clone(),
    );
    (fx.images[&fx.tasks[0].image].clone(), gw)
}

#[test]
fn judge_verdicts_control_the_refinement() {
    let fx = fixtures::grounding_miss_then_hit();
    let t = &fx.tasks[0];
    for (reply, refine) in [
        ("CORRECT", false),
        ("Hmm, maybe.", false),
        ("INCORRECT", true),
    ] {
        let (img, gw) = judge_gateway(reply);
        let out = run_grounding(&img, &t.instruction, &LoopConfig::default(), &gw);
        assert_eq!(out.focus.is_some(), refine, "{reply}");
        if refine {
            assert_ne!(out.point, out.initial);
            assert!(inside(out.point.unwrap(), &t.gt_box));
        } else {
            assert_eq!(out.point, out.initial);
            assert_eq!(out.inferences.len(), 2);
        }
    }
}

#[test]
fn scoring_edges() {
    let fx = fixtures::grounding_miss_then_hit();
    let (_dir, tasks) = loaded(&fx);
    let t = &tasks[0];
    let b = t.gt_box;
    assert!(score_grounding(b.center(), t));
    assert!(score_grounding(Point::new(b.x1 as u32, b.y1 as u32), t));
    assert!(score_grounding(Point::new(b.x0 as u32, b.y0 as u32), t));
    assert!(!score_grounding(
        Point::new(b.x1 as u32 + 1, b.center().y),
        t
    ));
    assert!(!score_grounding(
        Point::new(b.center().x, b.y0 as u32 - 1),
        t
    ));
}
