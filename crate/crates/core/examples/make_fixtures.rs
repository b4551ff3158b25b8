//! Regenerate the committed fixtures under `testdata/v1`.
//!
//! ```text
//! cargo run -p regionfocus --example make_fixtures [-- OUT_DIR]
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use regionfocus::agent::{run_trajectory, LoopConfig};
use regionfocus::canvas::draw_landmarks;
use regionfocus::environment::Simulator;
use regionfocus::evalkit::{load_grounding_tasks, run_grounding_eval};
use regionfocus::fixtures::{self, GroundingFixture, SimScenario};
use regionfocus::gateway::{Gateway, MockScript, RecordingBackend, ScriptedBackend, Transcript};

fn recording(mock: &MockScript) -> Arc<RecordingBackend> {
    Arc::new(RecordingBackend::new(Arc::new(ScriptedBackend::new(
        mock.clone(),
    ))))
}

fn save(mut transcript: Transcript, path: &Path) {
    transcript.sort_by_digest();
    transcript.save(path).unwrap();
}

fn trajectories(out: &Path, sc: &SimScenario) {
    let sim_dir = out.join("sim/shop");
    sc.write_sim(&sim_dir).unwrap();
    sc.write_mock(&out.join(format!("mocks/{}.json", sc.name)))
        .unwrap();
    for (suffix, regionfocus) in [("", true), ("_baseline", false)] {
        let cfg = LoopConfig {
            regionfocus,
            ..sc.config.clone()
        };
        let rec = recording(&sc.mock);
        let gw = Gateway::new(rec.clone(), sc.profile.clone());
        let mut env = Simulator::load(sim_dir.join("script.json")).unwrap();
        let traj = run_trajectory(&mut env, &sc.objective, &cfg, &gw);
        println!(
            "{}{suffix}: {:?} after {} steps",
            sc.name,
            traj.final_status,
            traj.steps.len()
        );
        save(
            rec.transcript(),
            &out.join(format!("transcripts/{}{suffix}.ndjson", sc.name)),
        );
        if regionfocus && sc.name == "shop_two_failed_rounds" {
            for (_, round) in traj.focus_rounds().filter(|(_, f)| !f.map.is_empty()) {
                let base = &traj.images[&round.base];
                let map = draw_landmarks(base, &round.map, &sc.config.focus.style).unwrap();
                let name = format!("golden/{}_map_{}.png", sc.name, round.map.len());
                map.save_png(out.join(name)).unwrap();
            }
        }
    }
}

fn grounding(dir: &Path, fx: &GroundingFixture, subset: Option<usize>) {
    fx.write(dir).unwrap();
    if let Some(n) = subset {
        fs::write(dir.join(format!("tasks{n}.jsonl")), fx.jsonl(Some(n))).unwrap();
    }
    let tasks = load_grounding_tasks(&dir.join("tasks.jsonl"))
        .unwrap()
        .tasks;
    let rec = recording(&fx.mock);
    let gw = Gateway::new(rec.clone(), fx.profile.clone());
    // Both modes, so the transcript also serves `eval grounding`.
    for regionfocus in [false, true] {
        let cfg = LoopConfig {
            regionfocus,
            ..LoopConfig::default()
        };
        let report = run_grounding_eval(&tasks, &cfg, &gw, 1);
        println!(
            "{} regionfocus={regionfocus}: {}/{} hits",
            dir.display(),
            report.overall.all.hits,
            report.overall.all.total
        );
    }
    save(rec.transcript(), &dir.join("transcript.ndjson"));
}

fn main() {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../testdata/v1"));
    for sub in ["mocks", "transcripts", "golden"] {
        fs::create_dir_all(out.join(sub)).unwrap();
    }
    for sc in fixtures::sim_scenarios() {
        trajectories(&out, &sc);
    }
    grounding(
        &out.join("grounding"),
        &fixtures::grounding_mini(),
        Some(10),
    );
    grounding(
        &out.join("grounding_recover"),
        &fixtures::grounding_miss_then_hit(),
        None,
    );
}
