//! Synthetic fixtures with known answers: a small shop simulator with
//! scripted model replies, and grounding task sets with known boxes.
//!
//! Everything here is deterministic; `examples/make_fixtures.rs` writes it
//! under `testdata/`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use image::{Rgb, RgbImage};
use rand::{rngs::StdRng, Rng, SeedableRng};
use serde_json::json;

use crate::actions::{serialize_parts, Action};
use crate::agent::LoopConfig;
use crate::canvas::{draw_text, fill_rect, stroke_rect, Screenshot};
use crate::environment::{SimScript, Simulator};
use crate::gateway::{
    rescale_model_point, to_model_point, BackendProfile, Gateway, MockRule, MockScript,
    ScriptedBackend,
};
use crate::geometry::{propose_regions, to_region_coords, zoom_spec, Dims, Point};
use crate::RegionBox;

fn rect(x0: i64, y0: i64, x1: i64, y1: i64) -> RegionBox {
    RegionBox {
        x0,
        y0,
        x1,
        y1,
        source_ratio: None,
    }
}

fn canvas(w: u32, h: u32, bg: [u8; 3]) -> RgbImage {
    RgbImage::from_pixel(w, h, Rgb(bg))
}

fn shot(img: RgbImage) -> Screenshot {
    Screenshot::from_rgb(img).expect("fixture canvases are non-empty")
}

/// Reply text for an action on an image of `dims`, in the profile's
/// coordinate space.
pub fn action_reply(
    profile: &BackendProfile,
    thought: Option<&str>,
    action: &Action,
    dims: Dims,
) -> String {
    let model = action
        .try_map_points(|p| Ok::<_, ()>(to_model_point(p, profile, dims)))
        .expect("infallible");
    serialize_parts(thought, &model, profile.dialect).expect("fixture actions serialize")
}

pub fn focal_reply(profile: &BackendProfile, p: Point, dims: Dims) -> String {
    let m = to_model_point(p, profile, dims);
    format!("({}, {})", m.x, m.y)
}

/// The regions the refinement will use for a focal reply of `p`.
pub fn regions_for(
    profile: &BackendProfile,
    p: Point,
    dims: Dims,
    cfg: &LoopConfig,
) -> Vec<RegionBox> {
    let m = to_model_point(p, profile, dims);
    let focal = rescale_model_point(m, profile, dims)
        .expect("in declared space")
        .clamped_to(dims);
    propose_regions(focal, dims, &cfg.focus.ratios).expect("focal inside image")
}

/// A click on full-frame `target` as answered from inside `region`'s zoom.
pub fn region_click_reply(
    profile: &BackendProfile,
    region: &RegionBox,
    target: Point,
    dims: Dims,
) -> String {
    let spec = zoom_spec(region, dims).expect("region inside image");
    let local = to_region_coords(target, &spec).expect("target inside region");
    action_reply(profile, None, &Action::click(local), spec.output)
}

pub const SHOP_SIZE: u32 = 720;
const INK: [u8; 3] = [20, 20, 20];
const WHITE: [u8; 3] = [255, 255, 255];
const HEADER: [u8; 3] = [35, 47, 62];
const BUTTON: [u8; 3] = [255, 153, 0];

const PRODUCTS: [(&str, &str, [u8; 3]); 3] = [
    ("MUG", "$8", [120, 160, 200]),
    ("KETTLE", "$34", [200, 120, 120]),
    ("TOASTER", "$52", [140, 190, 140]),
];

fn tile_x(i: usize) -> i64 {
    40 + 220 * i as i64
}

fn shop_button(i: usize) -> RegionBox {
    let x = tile_x(i);
    rect(x + 30, 360, x + 170, 395)
}

fn shop_image_area(i: usize) -> RegionBox {
    let x = tile_x(i);
    rect(x + 20, 120, x + 180, 300)
}

fn header(img: &mut RgbImage, title: &str) {
    fill_rect(img, &rect(0, 0, SHOP_SIZE as i64, 60), HEADER);
    draw_text(img, title, 20, 22, 2, WHITE);
}

fn shop_home() -> Screenshot {
    let mut img = canvas(SHOP_SIZE, SHOP_SIZE, [248, 248, 248]);
    header(&mut img, "SHOP");
    let search = rect(200, 15, 520, 45);
    fill_rect(&mut img, &search, WHITE);
    stroke_rect(&mut img, &search, 1, [160, 160, 160]);
    draw_text(&mut img, "search", 208, 26, 1, [150, 150, 150]);
    for (i, (name, price, color)) in PRODUCTS.iter().enumerate() {
        let x = tile_x(i);
        stroke_rect(&mut img, &rect(x, 100, x + 200, 420), 1, [210, 210, 210]);
        fill_rect(&mut img, &shop_image_area(i), *color);
        draw_text(&mut img, name, x + 20, 315, 2, INK);
        draw_text(&mut img, price, x + 20, 338, 1, [90, 90, 90]);
        fill_rect(&mut img, &shop_button(i), BUTTON);
        draw_text(&mut img, "ADD TO CART", x + 56, 374, 1, INK);
    }
    draw_text(
        &mut img,
        "free delivery over $50",
        40,
        660,
        1,
        [120, 120, 120],
    );
    shot(img)
}

fn shop_cart(item: &str) -> Screenshot {
    let mut img = canvas(SHOP_SIZE, SHOP_SIZE, [248, 248, 248]);
    header(&mut img, "SHOP / CART");
    draw_text(&mut img, "YOUR CART", 40, 100, 3, INK);
    draw_text(&mut img, &format!("1 x {item}"), 40, 170, 2, INK);
    let checkout = rect(40, 240, 240, 280);
    fill_rect(&mut img, &checkout, [40, 150, 60]);
    draw_text(&mut img, "CHECKOUT", 76, 252, 2, WHITE);
    shot(img)
}

fn shop_script() -> SimScript {
    let b = |i: usize| {
        let r = shop_button(i);
        [r.x0, r.y0, r.x1, r.y1]
    };
    let script = json!({
        "start": "home",
        "pages": [
            {"id": "home", "background": "home.png", "url": "https://shop.test/",
             "hotspots": [
                {"box": b(0), "on": "click", "goto": "cart_other"},
                {"box": b(1), "on": "click", "goto": "cart"},
                {"box": b(2), "on": "click", "goto": "cart_other"}
             ]},
            {"id": "cart", "background": "cart.png", "url": "https://shop.test/cart"},
            {"id": "cart_other", "background": "cart_other.png", "url": "https://shop.test/cart"}
        ],
        "goal": {"page": "cart"}
    });
    SimScript::parse(&script.to_string()).expect("shop script is valid")
}

/// A simulator setup with a scripted model.
#[derive(Debug, Clone)]
pub struct SimScenario {
    pub name: &'static str,
    pub objective: String,
    pub script: SimScript,
    pub backgrounds: BTreeMap<String, Screenshot>,
    pub mock: MockScript,
    pub profile: BackendProfile,
    pub config: LoopConfig,
}

impl SimScenario {
    pub fn simulator(&self) -> Simulator {
        let bg: HashMap<String, Screenshot> = self.backgrounds.clone().into_iter().collect();
        Simulator::new(self.script.clone(), bg).expect("scenario validates")
    }

    pub fn mock_gateway(&self) -> Gateway {
        Gateway::new(
            Arc::new(ScriptedBackend::new(self.mock.clone())),
            self.profile.clone(),
        )
    }

    /// Write `script.json` and the page images into `dir`.
    pub fn write_sim(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("script.json"),
            serde_json::to_string_pretty(&self.script)? + "\n",
        )?;
        for (name, img) in &self.backgrounds {
            img.save_png(dir.join(name)).map_err(io::Error::other)?;
        }
        Ok(())
    }

    pub fn write_mock(&self, path: &Path) -> io::Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.mock)? + "\n")
    }
}

pub const SHOP_OBJECTIVE: &str = "Add the kettle to the shopping cart";

/// Where the shop's scripted model clicks first: the kettle photo, which is
/// not clickable.
pub fn shop_miss() -> Point {
    Point::new(360, 220)
}

pub fn shop_kettle_button() -> Point {
    shop_button(1).center()
}

fn shop_base(name: &'static str, rules: Vec<MockRule>) -> SimScenario {
    let home = shop_home();
    let cart = shop_cart("KETTLE");
    let profile = BackendProfile::ui_tars();
    let dims = home.dims();
    let mut all = vec![
        MockRule::new(
            "agent_step",
            vec![action_reply(
                &profile,
                Some("The kettle is in the cart."),
                &Action::finished(),
                dims,
            )],
        )
        .with_image(cart.digest()),
        MockRule::new(
            "agent_step",
            vec![action_reply(
                &profile,
                Some("I will add the kettle."),
                &Action::click(shop_miss()),
                dims,
            )],
        )
        .with_image(home.digest()),
    ];
    all.extend(rules);
    let config = LoopConfig {
        max_steps: 8,
        ..LoopConfig::default()
    };
    SimScenario {
        name,
        objective: SHOP_OBJECTIVE.to_string(),
        script: shop_script(),
        backgrounds: BTreeMap::from([
            ("home.png".to_string(), home),
            ("cart.png".to_string(), cart),
            ("cart_other.png".to_string(), shop_cart("MUG")),
        ]),
        mock: MockScript { rules: all },
        profile,
        config,
    }
}

fn shop_focal() -> Point {
    Point::new(355, 350)
}

/// First click misses; one refinement round with two distinct candidates
/// picks the kettle button through aggregation.
pub fn shop_recovery() -> SimScenario {
    let profile = BackendProfile::ui_tars();
    let dims = Dims::new(SHOP_SIZE, SHOP_SIZE).unwrap();
    let cfg = LoopConfig::default();
    let regions = regions_for(&profile, shop_focal(), dims, &cfg);
    let name_label = Point::new(320, 322);
    let mut rules = vec![MockRule::new(
        "focal_proposal",
        vec![focal_reply(&profile, shop_focal(), dims)],
    )];
    for (i, r) in regions.iter().enumerate() {
        let target = if i == 0 {
            name_label
        } else {
            shop_kettle_button()
        };
        rules.push(MockRule::new(
            format!("region_action:{i}"),
            vec![region_click_reply(&profile, r, target, dims)],
        ));
    }
    rules.push(MockRule::new("aggregation", vec!["2".into()]));
    shop_base("shop_recovery", rules)
}

/// Every region agrees, so the candidates collapse to one and no
/// aggregation call is made.
pub fn shop_single_candidate() -> SimScenario {
    let profile = BackendProfile::ui_tars();
    let dims = Dims::new(SHOP_SIZE, SHOP_SIZE).unwrap();
    let cfg = LoopConfig::default();
    let regions = regions_for(&profile, shop_focal(), dims, &cfg);
    let mut rules = vec![MockRule::new(
        "focal_proposal",
        vec![focal_reply(&profile, shop_focal(), dims)],
    )];
    for (i, r) in regions.iter().enumerate() {
        rules.push(MockRule::new(
            format!("region_action:{i}"),
            vec![region_click_reply(&profile, r, shop_kettle_button(), dims)],
        ));
    }
    shop_base("shop_single_candidate", rules)
}

/// Focal points of the three rounds in the two-failure scenario.
pub fn two_rounds_focals() -> [Point; 3] {
    [Point::new(100, 220), Point::new(600, 220), shop_focal()]
}

/// Two refinement rounds click photos (no effect) before the third finds the
/// button, so the focal maps carry 0, 1 and 2 stars.
pub fn shop_two_failed_rounds() -> SimScenario {
    let profile = BackendProfile::ui_tars();
    let dims = Dims::new(SHOP_SIZE, SHOP_SIZE).unwrap();
    let cfg = LoopConfig::default();
    let focals = two_rounds_focals();
    let targets = [
        Point::new(110, 230),
        Point::new(610, 230),
        shop_kettle_button(),
    ];
    let per_round: Vec<Vec<RegionBox>> = focals
        .iter()
        .map(|f| regions_for(&profile, *f, dims, &cfg))
        .collect();
    let mut rules = vec![MockRule::new(
        "focal_proposal",
        focals
            .iter()
            .map(|f| focal_reply(&profile, *f, dims))
            .collect(),
    )];
    for i in 0..cfg.focus.ratios.len() {
        let replies = per_round
            .iter()
            .zip(targets)
            .map(|(regions, target)| region_click_reply(&profile, &regions[i], target, dims))
            .collect();
        rules.push(MockRule::new(format!("region_action:{i}"), replies));
    }
    shop_base("shop_two_failed_rounds", rules)
}

pub fn sim_scenarios() -> Vec<SimScenario> {
    vec![
        shop_recovery(),
        shop_single_candidate(),
        shop_two_failed_rounds(),
    ]
}

pub fn sim_scenario(name: &str) -> Option<SimScenario> {
    sim_scenarios().into_iter().find(|s| s.name == name)
}

/// Grounding screenshots share the qwen2.5-vl aspect ratio.
pub const GROUNDING_DIMS: (u32, u32) = (640, 360);

/// What the scripted model does on one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plan {
    /// First guess inside the box, judged correct.
    Hit,
    /// First guess outside, judged incorrect, refinement lands inside.
    MissRecovered,
    /// First guess outside, judged incorrect, refinement also misses.
    MissUnrecovered,
    /// First guess outside but judged correct.
    MissAccepted,
    /// Reply without a parsable action.
    Garbled,
}

#[derive(Debug, Clone)]
pub struct GroundingFixtureTask {
    pub id: String,
    pub image: String,
    pub instruction: String,
    pub gt_box: RegionBox,
    pub group: String,
    pub ui_type: &'static str,
    pub plan: Plan,
}

#[derive(Debug, Clone)]
pub struct GroundingFixture {
    pub tasks: Vec<GroundingFixtureTask>,
    pub images: BTreeMap<String, Screenshot>,
    pub mock: MockScript,
    pub profile: BackendProfile,
}

impl GroundingFixture {
    pub fn jsonl(&self, limit: Option<usize>) -> String {
        let n = limit.unwrap_or(self.tasks.len());
        self.tasks
            .iter()
            .take(n)
            .map(|t| {
                let b = &t.gt_box;
                json!({
                    "id": t.id, "image": t.image, "instruction": t.instruction,
                    "gt_box": [b.x0, b.y0, b.x1, b.y1], "group": t.group, "ui_type": t.ui_type,
                })
                .to_string()
                    + "\n"
            })
            .collect()
    }

    /// Write images, `tasks.jsonl` and `mock.json` into `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir.join("img"))?;
        for (rel, img) in &self.images {
            img.save_png(dir.join(rel)).map_err(io::Error::other)?;
        }
        fs::write(dir.join("tasks.jsonl"), self.jsonl(None))?;
        fs::write(
            dir.join("mock.json"),
            serde_json::to_string_pretty(&self.mock)? + "\n",
        )?;
        Ok(())
    }

    pub fn mock_gateway(&self) -> Gateway {
        Gateway::new(
            Arc::new(ScriptedBackend::new(self.mock.clone())),
            self.profile.clone(),
        )
    }
}

const WORDS: [&str; 12] = [
    "Export", "Save", "Render", "Commit", "Layers", "Plot", "Merge", "Build", "Print", "Share",
    "Sketch", "Undo",
];

fn group_palette(g: usize) -> ([u8; 3], [u8; 3]) {
    const P: [([u8; 3], [u8; 3]); 6] = [
        ([30, 30, 36], [60, 60, 72]),
        ([236, 236, 240], [200, 200, 214]),
        ([52, 58, 70], [90, 100, 120]),
        ([244, 240, 230], [214, 206, 190]),
        ([250, 250, 250], [220, 228, 240]),
        ([0, 90, 140], [0, 60, 100]),
    ];
    P[g % P.len()]
}

fn ink_for(bg: [u8; 3]) -> [u8; 3] {
    if bg.iter().map(|c| *c as u32).sum::<u32>() > 384 {
        [15, 15, 15]
    } else {
        [240, 240, 240]
    }
}

fn draw_icon(img: &mut RgbImage, b: &RegionBox, ink: [u8; 3]) {
    stroke_rect(img, b, 2, ink);
    let c = b.center();
    fill_rect(
        img,
        &rect(c.x as i64 - 1, b.y0 + 4, c.x as i64 + 2, b.y1 - 4),
        ink,
    );
    fill_rect(
        img,
        &rect(b.x0 + 4, c.y as i64 - 1, b.x1 - 4, c.y as i64 + 2),
        ink,
    );
}

fn overlaps(a: &RegionBox, b: &RegionBox, pad: i64) -> bool {
    a.x0 - pad < b.x1 && b.x0 - pad < a.x1 && a.y0 - pad < b.y1 && b.y0 - pad < a.y1
}

/// Draw one task screen; returns the image and the target's box.
fn grounding_screen(
    rng: &mut StdRng,
    group: usize,
    word: &str,
    icon: bool,
) -> (Screenshot, RegionBox) {
    let (w, h) = GROUNDING_DIMS;
    let (bg, chrome) = group_palette(group);
    let ink = ink_for(bg);
    let mut img = canvas(w, h, bg);
    fill_rect(&mut img, &rect(0, 0, w as i64, 28), chrome);
    let target = if icon {
        let (x, y) = (rng.gen_range(40..580), rng.gen_range(60..290));
        rect(x, y, x + 20, y + 20)
    } else {
        let (x, y) = (rng.gen_range(40..480), rng.gen_range(60..290));
        rect(x - 2, y - 2, x + 16 * word.len() as i64 + 2, y + 18)
    };
    if icon {
        draw_icon(&mut img, &target, ink);
    } else {
        draw_text(&mut img, word, target.x0 + 2, target.y0 + 2, 2, ink);
    }
    let mut placed = vec![target];
    for k in 0..6 {
        let label = WORDS[(k * 5 + group) % WORDS.len()];
        let b = if k % 2 == 0 {
            let (x, y) = (rng.gen_range(10..600), rng.gen_range(34..336));
            rect(x, y, x + 20, y + 20)
        } else {
            let (x, y) = (
                rng.gen_range(10..620 - 8 * label.len() as i64),
                rng.gen_range(34..350),
            );
            rect(x, y, x + 8 * label.len() as i64, y + 8)
        };
        if placed.iter().any(|p| overlaps(p, &b, 40)) {
            continue;
        }
        if k % 2 == 0 {
            fill_rect(&mut img, &b, chrome);
        } else {
            draw_text(&mut img, label, b.x0, b.y0, 1, ink);
        }
        placed.push(b);
    }
    (shot(img), target)
}

/// A point outside `b` but within 40 px of its centre, so it stays inside
/// every region around a focal point next to the target.
fn near_miss(b: &RegionBox, dims: Dims) -> Point {
    let c = b.center();
    let y = if b.y1 + 12 < dims.height() as i64 {
        b.y1 + 12
    } else {
        b.y0 - 12
    };
    Point::new(c.x, y as u32)
}

fn grounding_rules(
    profile: &BackendProfile,
    t: &GroundingFixtureTask,
    dims: Dims,
    cfg: &LoopConfig,
) -> Vec<MockRule> {
    let b = &t.gt_box;
    let center = b.center();
    let miss = near_miss(b, dims);
    let ins = t.instruction.as_str();
    let mut rules = Vec::new();
    let first = match t.plan {
        Plan::Hit => Some(center),
        Plan::Garbled => None,
        _ => Some(miss),
    };
    let native = match first {
        Some(p) => action_reply(profile, None, &Action::click(p), dims),
        None => "I cannot find it on this screen.".to_string(),
    };
    rules.push(MockRule::new("agent_step", vec![native]).containing(ins));
    let verdict = match t.plan {
        Plan::Hit | Plan::MissAccepted => "CORRECT",
        _ => "INCORRECT",
    };
    rules.push(MockRule::new("self_judge", vec![verdict.into()]).containing(ins));
    if matches!(t.plan, Plan::MissRecovered | Plan::MissUnrecovered) {
        let focal = Point::new(center.x + 6, center.y + 3);
        rules.push(
            MockRule::new("focal_proposal", vec![focal_reply(profile, focal, dims)])
                .containing(ins),
        );
        let target = if t.plan == Plan::MissRecovered {
            center
        } else {
            miss
        };
        for (i, r) in regions_for(profile, focal, dims, cfg).iter().enumerate() {
            rules.push(
                MockRule::new(
                    format!("region_action:{i}"),
                    vec![region_click_reply(profile, r, target, dims)],
                )
                .containing(ins),
            );
        }
    }
    rules
}

fn build_grounding(seed: u64, plans: &[(usize, Plan)], prefix: &str) -> GroundingFixture {
    let profile = BackendProfile::qwen25_vl();
    let dims = Dims::new(GROUNDING_DIMS.0, GROUNDING_DIMS.1).unwrap();
    let cfg = LoopConfig::default();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut tasks = Vec::new();
    let mut images = BTreeMap::new();
    let mut rules = Vec::new();
    for (n, (group, plan)) in plans.iter().enumerate() {
        let gname = crate::evalkit::GROUP_ORDER[*group];
        let icon = n % 2 == 1;
        let word = WORDS[(n * 7 + group) % WORDS.len()];
        let (img, gt_box) = grounding_screen(&mut rng, *group, word, icon);
        let id = format!("{prefix}{}-{:02}", gname.to_ascii_lowercase(), n);
        let rel = format!("img/{id}.png");
        let instruction = if icon {
            format!("Click the {} tool icon [{id}]", word.to_ascii_lowercase())
        } else {
            format!("Click the \"{word}\" label [{id}]")
        };
        let t = GroundingFixtureTask {
            id,
            image: rel.clone(),
            instruction,
            gt_box,
            group: gname.to_string(),
            ui_type: if icon { "icon" } else { "text" },
            plan: *plan,
        };
        rules.extend(grounding_rules(&profile, &t, dims, &cfg));
        images.insert(rel, img);
        tasks.push(t);
    }
    GroundingFixture {
        tasks,
        images,
        mock: MockScript { rules },
        profile,
    }
}

/// 30 tasks, five per group, mixing every [`Plan`].
pub fn grounding_mini() -> GroundingFixture {
    let mut plans = Vec::new();
    for g in 0..6 {
        for k in 0..5 {
            let plan = match k {
                0 => Plan::Hit,
                1 => Plan::MissRecovered,
                2 if g == 5 => Plan::Garbled,
                2 => Plan::Hit,
                3 => Plan::MissAccepted,
                _ if g % 2 == 0 => Plan::MissRecovered,
                _ => Plan::MissUnrecovered,
            };
            plans.push((g, plan));
        }
    }
    build_grounding(7, &plans, "")
}

/// Every first guess misses and every refinement recovers.
pub fn grounding_miss_then_hit() -> GroundingFixture {
    let plans: Vec<(usize, Plan)> = (0..4).map(|g| (g, Plan::MissRecovered)).collect();
    build_grounding(11, &plans, "recover-")
}
