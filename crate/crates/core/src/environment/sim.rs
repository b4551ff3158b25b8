//! Scripted GUI simulator: static page images plus clickable hotspots.
//!
//! Script format (image paths are relative to the script file):
//!
//! ```json
//! {
//!   "start": "home",
//!   "pages": [
//!     {"id": "home", "background": "home.png", "url": "https://shop.test/",
//!      "hotspots": [
//!        {"box": [40, 20, 240, 52], "on": "click", "types_into": "search", "goto": "results"},
//!        {"box": [300, 200, 380, 236], "on": "click", "goto": "cart"}
//!      ]}
//!   ],
//!   "goal": {"page": "cart", "fields": {"search": "kettle"}}
//! }
//! ```
//!
//! A hotspot fires when an action of kind `on` starts inside its box. With
//! `types_into` it focuses that text field; typed text is drawn into the box
//! and a trailing `\n` (or newline) submits, following `goto`. Without
//! `types_into` a match navigates to `goto` directly. Actions outside every
//! hotspot leave the screen untouched.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{split_submit, EnvError, EnvKind, Environment, StepOutcome};
use crate::actions::{Action, ActionKind};
use crate::canvas::{self, Screenshot};
use crate::geometry::Point;
use crate::RegionBox;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl ValidationError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotspotSpec {
    #[serde(rename = "box")]
    pub area: [i64; 4],
    pub on: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goto: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub types_into: Option<String>,
}

impl HotspotSpec {
    pub fn region(&self) -> RegionBox {
        let [x0, y0, x1, y1] = self.area;
        RegionBox {
            x0,
            y0,
            x1,
            y1,
            source_ratio: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageSpec {
    pub id: String,
    pub background: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default)]
    pub hotspots: Vec<HotspotSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fields: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScript {
    pub start: String,
    pub pages: Vec<PageSpec>,
    #[serde(default)]
    pub goal: GoalSpec,
}

/// A text field: the hotspot that focuses it, located on one page.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub id: String,
    pub page: usize,
    pub hotspot: usize,
}

impl SimScript {
    pub fn parse(json: &str) -> Result<Self, ValidationError> {
        serde_json::from_str(json).map_err(|e| ValidationError::new("$", e.to_string()))
    }

    fn page_index(&self, id: &str) -> Option<usize> {
        self.pages.iter().position(|p| p.id == id)
    }

    /// Check references and geometry against the loaded backgrounds.
    pub fn validate(
        &self,
        backgrounds: &HashMap<String, Screenshot>,
    ) -> Result<(), ValidationError> {
        let mut ids = HashSet::new();
        for (i, page) in self.pages.iter().enumerate() {
            if !ids.insert(page.id.as_str()) {
                return Err(ValidationError::new(
                    format!("pages[{i}].id"),
                    format!("duplicate page id {:?}", page.id),
                ));
            }
        }
        if self.page_index(&self.start).is_none() {
            return Err(ValidationError::new(
                "start",
                format!("unknown page {:?}", self.start),
            ));
        }
        let mut fields = HashSet::new();
        for (i, page) in self.pages.iter().enumerate() {
            let bg = backgrounds.get(&page.background).ok_or_else(|| {
                ValidationError::new(
                    format!("pages[{i}].background"),
                    format!("no image {:?}", page.background),
                )
            })?;
            for (j, h) in page.hotspots.iter().enumerate() {
                let path = format!("pages[{i}].hotspots[{j}]");
                let b = h.region();
                if b.width() <= 0 || b.height() <= 0 || !b.is_within(bg.dims()) {
                    return Err(ValidationError::new(
                        format!("{path}.box"),
                        format!("{b} is empty or outside the {} background", bg.dims()),
                    ));
                }
                if let Some(g) = &h.goto {
                    if self.page_index(g).is_none() {
                        return Err(ValidationError::new(
                            format!("{path}.goto"),
                            format!("unknown page {g:?}"),
                        ));
                    }
                }
                match &h.types_into {
                    Some(f) => {
                        if !fields.insert(f.clone()) {
                            return Err(ValidationError::new(
                                format!("{path}.types_into"),
                                format!("field {f:?} is declared twice"),
                            ));
                        }
                    }
                    None if h.goto.is_none() => {
                        return Err(ValidationError::new(
                            path,
                            "a hotspot needs goto or types_into",
                        ));
                    }
                    None => {}
                }
            }
        }
        if let Some(p) = &self.goal.page {
            if self.page_index(p).is_none() {
                return Err(ValidationError::new(
                    "goal.page",
                    format!("unknown page {p:?}"),
                ));
            }
        }
        for f in self.goal.fields.keys() {
            if !fields.contains(f) {
                return Err(ValidationError::new(
                    format!("goal.fields.{f}"),
                    "no hotspot types into this field",
                ));
            }
        }
        Ok(())
    }
}

const FOCUS_COLOR: [u8; 3] = [30, 110, 230];

#[derive(Debug, Clone)]
pub struct Simulator {
    script: SimScript,
    backgrounds: HashMap<String, Screenshot>,
    fields: Vec<FieldSpec>,
    page: usize,
    values: BTreeMap<String, String>,
    focused: Option<usize>,
    closed: bool,
    rendered: Option<Screenshot>,
}

impl Simulator {
    /// Build from a script and its background images keyed by path.
    pub fn new(
        script: SimScript,
        backgrounds: HashMap<String, Screenshot>,
    ) -> Result<Self, ValidationError> {
        script.validate(&backgrounds)?;
        let mut fields = Vec::new();
        for (pi, page) in script.pages.iter().enumerate() {
            for (hi, h) in page.hotspots.iter().enumerate() {
                if let Some(id) = &h.types_into {
                    fields.push(FieldSpec {
                        id: id.clone(),
                        page: pi,
                        hotspot: hi,
                    });
                }
            }
        }
        let page = script.page_index(&script.start).expect("validated");
        Ok(Self {
            script,
            backgrounds,
            fields,
            page,
            values: BTreeMap::new(),
            focused: None,
            closed: false,
            rendered: None,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let script = SimScript::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut backgrounds = HashMap::new();
        for (i, page) in script.pages.iter().enumerate() {
            if backgrounds.contains_key(&page.background) {
                continue;
            }
            let img = Screenshot::load(dir.join(&page.background)).map_err(|e| {
                ValidationError::new(
                    format!("pages[{i}].background"),
                    format!("{}: {e}", page.background),
                )
            })?;
            backgrounds.insert(page.background.clone(), img);
        }
        Ok(Self::new(script, backgrounds)?)
    }

    pub fn script(&self) -> &SimScript {
        &self.script
    }

    pub fn page_id(&self) -> &str {
        &self.script.pages[self.page].id
    }

    pub fn field(&self, id: &str) -> Option<&str> {
        self.values.get(id).map(String::as_str)
    }

    fn render(&self) -> Screenshot {
        let page = &self.script.pages[self.page];
        let bg = &self.backgrounds[&page.background];
        let on_page: Vec<(usize, &FieldSpec)> = self
            .fields
            .iter()
            .enumerate()
            .filter(|(_, f)| f.page == self.page)
            .collect();
        if on_page.is_empty() {
            return bg.clone();
        }
        let mut img = bg.to_rgb();
        for (fi, f) in on_page {
            let b = page.hotspots[f.hotspot].region();
            if let Some(text) = self.values.get(&f.id) {
                let inner = RegionBox {
                    x0: b.x0 + 2,
                    y0: b.y0 + 2,
                    x1: b.x1 - 2,
                    y1: b.y1 - 2,
                    source_ratio: None,
                };
                canvas::fill_rect(&mut img, &inner, [255, 255, 255]);
                let scale = ((b.height() - 4) / 8).clamp(1, 3) as u32;
                let top = b.y0 + (b.height() - 8 * scale as i64) / 2;
                canvas::draw_text(&mut img, text, b.x0 + 4, top, scale, [0, 0, 0]);
            }
            if self.focused == Some(fi) {
                canvas::stroke_rect(&mut img, &b, 2, FOCUS_COLOR);
            }
        }
        Screenshot::from_rgb(img).expect("background dims are positive")
    }

    fn current(&mut self) -> Screenshot {
        if self.rendered.is_none() {
            self.rendered = Some(self.render());
        }
        self.rendered.clone().expect("just rendered")
    }

    fn goto(&mut self, page: &str) {
        self.page = self.script.page_index(page).expect("validated");
        self.focused = None;
    }

    fn hit(&self, action: &Action, at: Point) -> Option<usize> {
        self.script.pages[self.page]
            .hotspots
            .iter()
            .position(|h| h.on == action.kind && h.region().covers(at))
    }

    fn submit_focused(&mut self) -> String {
        let Some(fi) = self.focused else {
            return "no focused field".into();
        };
        let f = self.fields[fi].clone();
        match self.script.pages[f.page].hotspots[f.hotspot].goto.clone() {
            Some(g) => {
                self.goto(&g);
                format!("submitted {}; now on {g}", f.id)
            }
            None => format!("submitted {}", f.id),
        }
    }

    fn step(&mut self, action: &Action) -> (bool, String) {
        match action.kind {
            ActionKind::Finished | ActionKind::CallUser | ActionKind::Terminate => {
                (true, format!("{action}"))
            }
            ActionKind::Type => {
                let Some(fi) = self.focused else {
                    return (false, "typed with no focused field".into());
                };
                let raw = action.text.as_deref().unwrap_or_default();
                let (text, submit) = split_submit(raw);
                let id = self.fields[fi].id.clone();
                self.values.insert(id.clone(), text.to_string());
                let info = if submit {
                    self.submit_focused()
                } else {
                    format!("typed into {id}")
                };
                (false, info)
            }
            ActionKind::Hotkey => {
                let keys = action
                    .text
                    .as_deref()
                    .unwrap_or_default()
                    .to_ascii_lowercase();
                if matches!(keys.trim(), "enter" | "return") {
                    (false, self.submit_focused())
                } else {
                    (false, format!("hotkey {keys:?} ignored"))
                }
            }
            _ => {
                let Some(at) = action.start else {
                    return (false, format!("{action} has no target"));
                };
                let Some(hi) = self.hit(action, at) else {
                    return (false, format!("{action} hit nothing"));
                };
                let h = self.script.pages[self.page].hotspots[hi].clone();
                match &h.types_into {
                    Some(id) => {
                        self.focused = self.fields.iter().position(|f| &f.id == id);
                        (false, format!("focused {id}"))
                    }
                    None => {
                        let target = h.goto.clone().expect("validated");
                        self.goto(&target);
                        (false, format!("navigated to {target}"))
                    }
                }
            }
        }
    }
}

impl Environment for Simulator {
    fn observe(&mut self) -> Result<Screenshot, EnvError> {
        if self.closed {
            return Err(EnvError::Closed);
        }
        Ok(self.current())
    }

    fn apply(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        if self.closed {
            return Err(EnvError::Closed);
        }
        action
            .validate()
            .map_err(|e| EnvError::Malformed(e.to_string()))?;
        let (terminated, info) = self.step(action);
        self.rendered = None;
        Ok(StepOutcome {
            screenshot: self.current(),
            terminated,
            info,
        })
    }

    fn url(&self) -> String {
        let page = &self.script.pages[self.page];
        page.url
            .clone()
            .unwrap_or_else(|| format!("sim://{}", page.id))
    }

    fn kind(&self) -> EnvKind {
        EnvKind::Interactive
    }

    fn goal_reached(&self) -> Option<bool> {
        let goal = &self.script.goal;
        let page_ok = goal.page.as_ref().is_none_or(|p| p == self.page_id());
        let fields_ok = goal
            .fields
            .iter()
            .all(|(k, v)| self.values.get(k) == Some(v));
        Some(page_ok && fields_ok)
    }

    fn close(&mut self) {
        self.closed = true;
    }
}
