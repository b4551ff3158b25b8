//! Vision-language model access: request types, backends and prompt rendering.

mod http;
pub mod prompts;
mod replay;
mod scripted;

use std::fmt;
use std::sync::Arc;
use std::sync::LazyLock;

use regex::Regex;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::actions::{Dialect, ParseError, ParseErrorKind};
use crate::canvas::{Digest, Screenshot};
use crate::geometry::{Dims, GeometryError, Point};

pub use http::HttpBackend;
pub use prompts::*;
pub use replay::{RecordingBackend, ReplayBackend, Transcript, TranscriptRecord};
pub use scripted::{MockRule, MockScript, ScriptedBackend};

/// Which prompt a request was rendered from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    AgentStep,
    RegionAction { index: usize },
    FocalProposal,
    RegionBox,
    SelfJudge,
    Aggregation,
    TrajectoryJudge,
}

impl TemplateId {
    pub fn base_name(&self) -> &'static str {
        match self {
            TemplateId::AgentStep => "agent_step",
            TemplateId::RegionAction { .. } => "region_action",
            TemplateId::FocalProposal => "focal_proposal",
            TemplateId::RegionBox => "region_box",
            TemplateId::SelfJudge => "self_judge",
            TemplateId::Aggregation => "aggregation",
            TemplateId::TrajectoryJudge => "trajectory_judge",
        }
    }

    /// Requests whose images may carry landmarks.
    pub fn is_annotated(&self) -> bool {
        matches!(
            self,
            TemplateId::FocalProposal | TemplateId::SelfJudge | TemplateId::Aggregation
        )
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemplateId::RegionAction { index } => write!(f, "region_action:{index}"),
            other => f.write_str(other.base_name()),
        }
    }
}

impl std::str::FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "agent_step" => TemplateId::AgentStep,
            "focal_proposal" => TemplateId::FocalProposal,
            "region_box" => TemplateId::RegionBox,
            "self_judge" => TemplateId::SelfJudge,
            "aggregation" => TemplateId::Aggregation,
            "trajectory_judge" => TemplateId::TrajectoryJudge,
            other => {
                let index = other
                    .strip_prefix("region_action:")
                    .and_then(|i| i.parse().ok())
                    .ok_or_else(|| format!("unknown template id {other:?}"))?;
                TemplateId::RegionAction { index }
            }
        })
    }
}

impl Serialize for TemplateId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TemplateId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Image(Screenshot),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl Message {
    pub fn new(role: Role, parts: Vec<Part>) -> Self {
        Self { role, parts }
    }

    pub fn text(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            parts: vec![Part::Text(text.into())],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: String::new(),
            api_key_env: "REGIONFOCUS_API_KEY".into(),
            timeout_secs: 120,
            max_retries: 3,
            backoff_base_ms: 500,
        }
    }
}

/// A model family: the coordinate space it answers in and its output grammar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendProfile {
    pub name: String,
    pub declared_resolution: Dims,
    pub dialect: Dialect,
    #[serde(default = "default_max_images")]
    pub max_images: usize,
    #[serde(default)]
    pub endpoint: EndpointConfig,
}

fn default_max_images() -> usize {
    16
}

impl BackendProfile {
    pub fn new(name: impl Into<String>, declared_resolution: Dims, dialect: Dialect) -> Self {
        Self {
            name: name.into(),
            declared_resolution,
            dialect,
            max_images: default_max_images(),
            endpoint: EndpointConfig::default(),
        }
    }

    pub fn ui_tars() -> Self {
        let mut p = Self::new("ui-tars", Dims::new(1440, 1440).unwrap(), Dialect::UiTarsV1);
        p.endpoint.model = "ui-tars-72b-dpo".into();
        p
    }

    pub fn qwen25_vl() -> Self {
        let mut p = Self::new(
            "qwen2.5-vl",
            Dims::new(2240, 1260).unwrap(),
            Dialect::ComputerUseToolCall,
        );
        p.endpoint.model = "qwen2.5-vl-72b-instruct".into();
        p
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "ui-tars" => Some(Self::ui_tars()),
            "qwen2.5-vl" => Some(Self::qwen25_vl()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub template: TemplateId,
    pub messages: Vec<Message>,
    pub profile: BackendProfile,
    pub temperature: f64,
    pub max_tokens: u32,
}

pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

impl ChatRequest {
    pub fn new(template: TemplateId, messages: Vec<Message>, profile: &BackendProfile) -> Self {
        Self {
            template,
            messages,
            profile: profile.clone(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn images(&self) -> impl Iterator<Item = &Screenshot> {
        self.messages
            .iter()
            .flat_map(|m| m.parts.iter())
            .filter_map(|p| match p {
                Part::Image(s) => Some(s),
                Part::Text(_) => None,
            })
    }

    pub fn image_digests(&self) -> Vec<Digest> {
        self.images().map(Screenshot::digest).collect()
    }

    /// All text parts joined by newlines.
    pub fn text(&self) -> String {
        let parts: Vec<&str> = self
            .messages
            .iter()
            .flat_map(|m| m.parts.iter())
            .filter_map(|p| match p {
                Part::Text(t) => Some(t.as_str()),
                Part::Image(_) => None,
            })
            .collect();
        parts.join("\n")
    }

    /// Replay key: hash of template id, text, image digests and profile name.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        let mut field = |tag: &[u8], bytes: &[u8]| {
            h.update(tag);
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        };
        field(b"T", self.template.to_string().as_bytes());
        field(b"P", self.profile.name.as_bytes());
        for m in &self.messages {
            field(b"R", serde_json::to_string(&m.role).unwrap().as_bytes());
            for p in &m.parts {
                match p {
                    Part::Text(t) => field(b"t", t.as_bytes()),
                    Part::Image(img) => field(b"i", &img.digest().0.to_be_bytes()),
                }
            }
        }
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let n = self.images().count();
        if n > self.profile.max_images {
            return Err(GatewayError::ContextLimit(format!(
                "{n} images exceed the {} allowed by profile {}",
                self.profile.max_images, self.profile.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("context limit exceeded: {0}")]
    ContextLimit(String),
    #[error("no recorded reply for {template} request {digest}")]
    ReplayMiss { digest: String, template: String },
    #[error("scripted backend: {0}")]
    Script(String),
    #[error("invalid response: {0}")]
    Decode(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The single model-inference primitive. Implementations must tolerate
/// concurrent calls.
pub trait ModelBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError>;
}

/// A backend bound to the profile requests are rendered for.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ModelBackend>,
    profile: BackendProfile,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("profile", &self.profile.name)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ModelBackend>, profile: BackendProfile) -> Self {
        Self { backend, profile }
    }

    pub fn profile(&self) -> &BackendProfile {
        &self.profile
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        req.validate()?;
        let reply = self.backend.complete(req);
        match &reply {
            Ok(text) => log::debug!("{} {} -> {:?}", req.template, &req.digest()[..12], text),
            Err(e) => log::warn!("{} {} failed: {e}", req.template, &req.digest()[..12]),
        }
        reply
    }
}

static PAIR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)").unwrap());
static QUAD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)").unwrap());
static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").unwrap());

/// First `(x, y)` pair in a focal-proposal reply.
pub fn parse_focal_reply(text: &str) -> Result<Point, ParseError> {
    let caps = PAIR.captures(text).ok_or(ParseError {
        position: 0,
        kind: ParseErrorKind::MalformedCoordinates("no (x, y) pair in reply".into()),
    })?;
    let at = caps.get(0).unwrap().start();
    let num = |i: usize| {
        caps[i].parse::<u32>().map_err(|_| ParseError {
            position: at,
            kind: ParseErrorKind::MalformedCoordinates(format!(
                "{} does not fit a pixel index",
                &caps[i]
            )),
        })
    };
    Ok(Point::new(num(1)?, num(2)?))
}

/// First `(x1, y1, x2, y2)` tuple, normalized so the first corner is the upper-left.
pub fn parse_region_box_reply(text: &str) -> Result<(Point, Point), ParseError> {
    let caps = QUAD.captures(text).ok_or(ParseError {
        position: 0,
        kind: ParseErrorKind::MalformedCoordinates("no (x1, y1, x2, y2) tuple in reply".into()),
    })?;
    let at = caps.get(0).unwrap().start();
    let mut n = [0u32; 4];
    for (i, slot) in n.iter_mut().enumerate() {
        *slot = caps[i + 1].parse().map_err(|_| ParseError {
            position: at,
            kind: ParseErrorKind::MalformedCoordinates("corner does not fit a pixel index".into()),
        })?;
    }
    Ok((
        Point::new(n[0].min(n[2]), n[1].min(n[3])),
        Point::new(n[0].max(n[2]), n[1].max(n[3])),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeVerdict {
    Correct,
    Incorrect,
    Ambiguous,
}

/// Case-insensitive token scan; both or neither verdict word is ambiguous.
pub fn parse_judge_reply(text: &str) -> JudgeVerdict {
    let mut correct = false;
    let mut incorrect = false;
    for token in text.split(|c: char| !c.is_alphanumeric()) {
        if token.eq_ignore_ascii_case("correct") {
            correct = true;
        } else if token.eq_ignore_ascii_case("incorrect") {
            incorrect = true;
        }
    }
    match (correct, incorrect) {
        (true, false) => JudgeVerdict::Correct,
        (false, true) => JudgeVerdict::Incorrect,
        _ => JudgeVerdict::Ambiguous,
    }
}

/// First integer in the reply if it is a valid label in `1..=k`.
pub fn parse_aggregation_reply(text: &str, k: usize) -> Option<usize> {
    let n: usize = INTEGER.find(text)?.as_str().parse().ok()?;
    (1..=k).contains(&n).then_some(n)
}

/// Map a point from the profile's declared coordinate space onto `actual`.
///
/// Bounds are inclusive so a reply on the far edge of the declared space is
/// accepted; the result may then equal `actual`'s width or height and
/// callers clamp it onto the image.
pub fn rescale_model_point(
    p: Point,
    profile: &BackendProfile,
    actual: Dims,
) -> Result<Point, GeometryError> {
    let declared = profile.declared_resolution;
    if p.x > declared.width() || p.y > declared.height() {
        return Err(GeometryError::PointOutside {
            x: p.x,
            y: p.y,
            width: declared.width(),
            height: declared.height(),
        });
    }
    let axis = |v: u32, from: u32, to: u32| -> u32 {
        // integer round-half-up of v * to / from
        ((2 * v as u64 * to as u64 + from as u64) / (2 * from as u64)) as u32
    };
    Ok(Point::new(
        axis(p.x, declared.width(), actual.width()),
        axis(p.y, declared.height(), actual.height()),
    ))
}

/// Inverse of [`rescale_model_point`]: a point on `actual` expressed in the
/// declared space, for writing actions back into model-facing history.
pub fn to_model_point(p: Point, profile: &BackendProfile, actual: Dims) -> Point {
    let declared = profile.declared_resolution;
    let axis = |v: u32, from: u32, to: u32| -> u32 {
        ((2 * v as u64 * to as u64 + from as u64) / (2 * from as u64)) as u32
    };
    Point::new(
        axis(p.x, actual.width(), declared.width()).min(declared.width()),
        axis(p.y, actual.height(), declared.height()).min(declared.height()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(w: u32, h: u32) -> Dims {
        Dims::new(w, h).unwrap()
    }

    #[test]
    fn template_ids_round_trip() {
        for t in [
            TemplateId::AgentStep,
            TemplateId::RegionAction { index: 3 },
            TemplateId::FocalProposal,
            TemplateId::RegionBox,
            TemplateId::SelfJudge,
            TemplateId::Aggregation,
            TemplateId::TrajectoryJudge,
        ] {
            assert_eq!(t.to_string().parse::<TemplateId>().unwrap(), t);
        }
        assert!("region_action:x".parse::<TemplateId>().is_err());
    }

    #[test]
    fn focal_replies() {
        assert_eq!(
            parse_focal_reply("```\n(312, 480)\n```").unwrap(),
            Point::new(312, 480)
        );
        assert_eq!(parse_focal_reply("(0,0)").unwrap(), Point::new(0, 0));
        assert!(parse_focal_reply("I cannot determine").is_err());
        assert!(parse_focal_reply("(99999999999, 1)").is_err());
    }

    #[test]
    fn region_box_reply_orders_corners() {
        let (a, b) = parse_region_box_reply("(40, 50, 10, 20)").unwrap();
        assert_eq!((a, b), (Point::new(10, 20), Point::new(40, 50)));
        assert!(parse_region_box_reply("(1, 2)").is_err());
    }

    #[test]
    fn judge_replies() {
        assert_eq!(
            parse_judge_reply("INCORRECT - the star is on empty space"),
            JudgeVerdict::Incorrect
        );
        assert_eq!(parse_judge_reply("correct"), JudgeVerdict::Correct);
        assert_eq!(parse_judge_reply("maybe"), JudgeVerdict::Ambiguous);
        assert_eq!(
            parse_judge_reply("CORRECT or INCORRECT?"),
            JudgeVerdict::Ambiguous
        );
        assert_eq!(
            parse_judge_reply("Incorrectly placed"),
            JudgeVerdict::Ambiguous
        );
    }

    #[test]
    fn aggregation_replies() {
        assert_eq!(parse_aggregation_reply("2", 3), Some(2));
        assert_eq!(parse_aggregation_reply("Label 3.", 3), Some(3));
        assert_eq!(parse_aggregation_reply("7", 3), None);
        assert_eq!(parse_aggregation_reply("0", 3), None);
        assert_eq!(parse_aggregation_reply("none", 3), None);
    }

    #[test]
    fn rescale_examples() {
        let mut p = BackendProfile::ui_tars();
        assert_eq!(
            rescale_model_point(Point::new(720, 720), &p, dims(1440, 1440)).unwrap(),
            Point::new(720, 720)
        );
        assert_eq!(
            rescale_model_point(Point::new(720, 720), &p, dims(2880, 2880)).unwrap(),
            Point::new(1440, 1440)
        );
        assert!(rescale_model_point(Point::new(1441, 0), &p, dims(1440, 1440)).is_err());
        p.declared_resolution = dims(2240, 1260);
        assert_eq!(
            rescale_model_point(Point::new(2240, 1260), &p, dims(1120, 630)).unwrap(),
            Point::new(1120, 630)
        );
        // per-axis ratio oracle in floating point
        for (x, y) in [(1, 1), (333, 777), (2239, 5)] {
            let got = rescale_model_point(Point::new(x, y), &p, dims(1000, 700)).unwrap();
            assert_eq!(got.x, (x as f64 * 1000.0 / 2240.0).round() as u32);
            assert_eq!(got.y, (y as f64 * 700.0 / 1260.0).round() as u32);
        }
    }

    #[test]
    fn builtin_profiles() {
        assert_eq!(
            BackendProfile::ui_tars().declared_resolution,
            dims(1440, 1440)
        );
        assert_eq!(
            BackendProfile::qwen25_vl().declared_resolution,
            dims(2240, 1260)
        );
        assert_eq!(BackendProfile::ui_tars().dialect, Dialect::UiTarsV1);
        assert_eq!(
            BackendProfile::qwen25_vl().dialect,
            Dialect::ComputerUseToolCall
        );
        assert_eq!(EndpointConfig::default().timeout_secs, 120);
        assert_eq!(EndpointConfig::default().max_retries, 3);
    }

    #[test]
    fn request_digest_depends_on_every_input() {
        let p = BackendProfile::ui_tars();
        let img = Screenshot::solid(dims(4, 4), [1, 2, 3]);
        let base = ChatRequest::new(
            TemplateId::AgentStep,
            vec![Message::new(
                Role::User,
                vec![Part::Text("hi".into()), Part::Image(img.clone())],
            )],
            &p,
        );
        let d = base.digest();
        assert_eq!(d, base.clone().digest());
        let mut t = base.clone();
        t.template = TemplateId::RegionAction { index: 0 };
        assert_ne!(t.digest(), d);
        let mut q = base.clone();
        q.profile = BackendProfile::qwen25_vl();
        assert_ne!(q.digest(), d);
        let mut i = base.clone();
        i.messages[0].parts[1] = Part::Image(Screenshot::solid(dims(4, 4), [1, 2, 4]));
        assert_ne!(i.digest(), d);
        let mut x = base;
        x.messages[0].parts[0] = Part::Text("hi!".into());
        assert_ne!(x.digest(), d);
    }

    #[test]
    fn too_many_images_is_a_context_error() {
        let mut p = BackendProfile::ui_tars();
        p.max_images = 1;
        let img = Part::Image(Screenshot::solid(dims(2, 2), [0, 0, 0]));
        let req = ChatRequest::new(
            TemplateId::TrajectoryJudge,
            vec![Message::new(Role::User, vec![img.clone(), img])],
            &p,
        );
        assert!(matches!(req.validate(), Err(GatewayError::ContextLimit(_))));
    }
}
