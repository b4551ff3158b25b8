use regionfocus::agent::{run_trajectory, FinalStatus, LoopConfig, Origin};
use regionfocus::fixtures::{self, shop_kettle_button};
use regionfocus::focus::InferenceCounts;

fn counts(rec: &regionfocus::agent::TrajectoryRecord) -> Vec<(usize, usize, usize)> {
    rec.focus_rounds().map(|(_, f)| f.counts.triple()).collect()
}

#[test]
fn shop_recovery_reaches_goal_through_aggregation() {
    let sc = fixtures::shop_recovery();
    let mut env = sc.simulator();
    let rec = run_trajectory(&mut env, &sc.objective, &sc.config, &sc.mock_gateway());
    assert_eq!(
        rec.final_status,
        FinalStatus::Finished,
        "{:#?}",
        rec.steps.iter().map(|s| &s.fault).collect::<Vec<_>>()
    );
    assert_eq!(rec.goal_reached, Some(true));
    assert_eq!(rec.steps.len(), 2);
    let s1 = &rec.steps[0];
    assert!(s1.trigger.as_ref().unwrap().fired);
    assert_eq!(counts(&rec), vec![(1, 4, 1)]);
    let refined = s1
        .executed
        .iter()
        .find(|e| e.origin == Origin::Refined)
        .unwrap();
    let p = refined.action.start.unwrap();
    assert!(p.distance_squared(&shop_kettle_button()) <= 4, "{p}");
    assert_eq!(refined.stars_after, 0);
    assert_eq!(InferenceCounts::of(rec.inferences()).triple(), (1, 4, 1));
}

#[test]
fn shop_recovery_without_refinement_hits_the_step_limit() {
    let sc = fixtures::shop_recovery();
    let cfg = LoopConfig {
        regionfocus: false,
        ..sc.config.clone()
    };
    let mut env = sc.simulator();
    let rec = run_trajectory(&mut env, &sc.objective, &cfg, &sc.mock_gateway());
    assert_eq!(rec.final_status, FinalStatus::StepLimit);
    assert_eq!(rec.steps.len(), cfg.max_steps);
    assert_eq!(rec.goal_reached, Some(false));
    assert_eq!(rec.focus_rounds().count(), 0);
}

#[test]
fn single_candidate_skips_aggregation() {
    let sc = fixtures::shop_single_candidate();
    let mut env = sc.simulator();
    let rec = run_trajectory(&mut env, &sc.objective, &sc.config, &sc.mock_gateway());
    assert_eq!(rec.final_status, FinalStatus::Finished);
    assert_eq!(counts(&rec), vec![(1, 4, 0)]);
}

#[test]
fn two_failed_rounds_accumulate_stars() {
    let sc = fixtures::shop_two_failed_rounds();
    let mut env = sc.simulator();
    let rec = run_trajectory(&mut env, &sc.objective, &sc.config, &sc.mock_gateway());
    assert_eq!(rec.final_status, FinalStatus::Finished);
    assert_eq!(rec.goal_reached, Some(true));
    let maps: Vec<usize> = rec.focus_rounds().map(|(_, f)| f.map.len()).collect();
    assert_eq!(maps, vec![0, 1, 2]);
    let last_refined = rec
        .steps
        .iter()
        .flat_map(|s| &s.executed)
        .rfind(|e| e.origin == Origin::Refined)
        .unwrap();
    assert_eq!(last_refined.stars_after, 0);
}
