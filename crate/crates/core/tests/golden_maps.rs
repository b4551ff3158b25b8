use std::collections::VecDeque;
use std::path::PathBuf;

use regionfocus::agent::run_trajectory;
use regionfocus::canvas::draw_landmarks;
use regionfocus::fixtures;
use regionfocus::Screenshot;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../testdata/v1/golden")
}

/// 8-connected components of pixels that differ between two images.
fn changed_components(a: &Screenshot, b: &Screenshot) -> Vec<Vec<(u32, u32)>> {
    let (w, h) = (a.dims().width(), a.dims().height());
    let mut changed = vec![false; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            changed[(y * w + x) as usize] = a.pixel(x, y) != b.pixel(x, y);
        }
    }
    let mut seen = vec![false; changed.len()];
    let mut out = Vec::new();
    for start in 0..changed.len() {
        if !changed[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i as u32) % w, (i as u32) / w);
            comp.push((x, y));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = (ny as u32 * w + nx as u32) as usize;
                    if changed[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

#[test]
fn two_failed_rounds_render_the_golden_maps() {
    let sc = fixtures::shop_two_failed_rounds();
    let mut env = sc.simulator();
    let rec = run_trajectory(&mut env, &sc.objective, &sc.config, &sc.mock_gateway());
    let rounds: Vec<_> = rec.focus_rounds().map(|(_, f)| f).collect();
    let stars: Vec<usize> = rounds.iter().map(|f| f.map.len()).collect();
    assert_eq!(stars, [0, 1, 2]);
    for (k, round) in rounds.iter().enumerate() {
        let earlier: Vec<_> = rounds[..k].iter().map(|f| f.focal.unwrap()).collect();
        let marked: Vec<_> = round.map.iter().map(|m| m.at).collect();
        assert_eq!(marked, earlier);
    }

    for round in rounds.iter().filter(|f| !f.map.is_empty()) {
        let base = &rec.images[&round.base];
        let map = draw_landmarks(base, &round.map, &sc.config.focus.style).unwrap();
        let path = golden_dir().join(format!(
            "shop_two_failed_rounds_map_{}.png",
            round.map.len()
        ));
        // regenerate with `cargo run -p regionfocus --example make_fixtures`
        let golden = Screenshot::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(
            map.digest() == golden.digest(),
            "{} differs from the rendered map",
            path.display()
        );

        let comps = changed_components(base, &map);
        assert_eq!(
            comps.len(),
            round.map.len(),
            "one mark per earlier focal point"
        );
        for mark in &round.map {
            let hit = comps
                .iter()
                .filter(|c| c.contains(&(mark.at.x, mark.at.y)))
                .count();
            assert_eq!(hit, 1, "star at {} is not drawn", mark.at);
        }
    }
}
