//! Dialect-independent agent actions and the two model output grammars.
//!
//! Kind mapping between the grammars is fixed:
//!
//! | internal     | `UiTarsV1`              | `ComputerUseToolCall`          |
//! |--------------|-------------------------|--------------------------------|
//! | Click        | `click`                 | `left_click`                   |
//! | DoubleClick  | `left_double`           | `double_click`                 |
//! | RightClick   | `right_single`          | `right_click`                  |
//! | Drag         | `drag`                  | `left_click_drag`              |
//! | Hotkey       | `hotkey`                | `key`                          |
//! | Type         | `type`                  | `type`                         |
//! | Scroll       | `scroll` (direction)    | `scroll` (signed `pixels`)     |
//! | MouseMove    | unsupported             | `mouse_move`                   |
//! | Wait         | `wait`                  | `wait`                         |
//! | Finished     | `finished`              | `terminate` status=success     |
//! | CallUser     | `call_user`             | `terminate` status=failure     |
//! | Terminate    | `finished` / `call_user`| `terminate`                    |
//!
//! Serializing a kind a grammar cannot express fails with
//! [`ActionError::Unsupported`]. `middle_click` has no internal kind and is
//! rejected by the tool-call parser.

mod tool_call;
mod uitars;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, GeometryError, Point};
use crate::ZoomSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    DoubleClick,
    RightClick,
    Drag,
    Hotkey,
    Type,
    Scroll,
    MouseMove,
    Wait,
    Finished,
    CallUser,
    Terminate,
}

impl ActionKind {
    pub const ALL: [ActionKind; 12] = [
        ActionKind::Click,
        ActionKind::DoubleClick,
        ActionKind::RightClick,
        ActionKind::Drag,
        ActionKind::Hotkey,
        ActionKind::Type,
        ActionKind::Scroll,
        ActionKind::MouseMove,
        ActionKind::Wait,
        ActionKind::Finished,
        ActionKind::CallUser,
        ActionKind::Terminate,
    ];

    pub fn needs_start(self) -> bool {
        matches!(
            self,
            ActionKind::Click
                | ActionKind::DoubleClick
                | ActionKind::RightClick
                | ActionKind::MouseMove
                | ActionKind::Drag
        )
    }

    /// Ends the episode.
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            ActionKind::Finished | ActionKind::CallUser | ActionKind::Terminate
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        match s.trim().to_ascii_lowercase().as_str() {
            "up" => Some(Direction::Up),
            "down" => Some(Direction::Down),
            "left" => Some(Direction::Left),
            "right" => Some(Direction::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    /// Scroll amount; positive scrolls up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amount: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<Status>,
}

impl Action {
    pub fn bare(kind: ActionKind) -> Self {
        Self {
            kind,
            start: None,
            end: None,
            text: None,
            direction: None,
            amount: None,
            status: None,
        }
    }

    pub fn at(kind: ActionKind, p: Point) -> Self {
        Self {
            start: Some(p),
            ..Self::bare(kind)
        }
    }

    pub fn click(p: Point) -> Self {
        Self::at(ActionKind::Click, p)
    }

    pub fn drag(from: Point, to: Point) -> Self {
        Self {
            end: Some(to),
            ..Self::at(ActionKind::Drag, from)
        }
    }

    pub fn type_text(text: impl Into<String>) -> Self {
        Self {
            text: Some(text.into()),
            ..Self::bare(ActionKind::Type)
        }
    }

    pub fn hotkey(keys: impl Into<String>) -> Self {
        Self {
            text: Some(keys.into()),
            ..Self::bare(ActionKind::Hotkey)
        }
    }

    pub fn scroll(at: Option<Point>, direction: Option<Direction>, amount: Option<i64>) -> Self {
        Self {
            start: at,
            direction,
            amount,
            ..Self::bare(ActionKind::Scroll)
        }
    }

    pub fn terminate(status: Status) -> Self {
        Self {
            status: Some(status),
            ..Self::bare(ActionKind::Terminate)
        }
    }

    pub fn finished() -> Self {
        Self::bare(ActionKind::Finished)
    }

    /// Check the per-kind field requirements.
    pub fn validate(&self) -> Result<(), ActionError> {
        let bad = |why: &str| {
            Err(ActionError::Invalid {
                kind: self.kind,
                reason: why.to_string(),
            })
        };
        if self.kind.needs_start() && self.start.is_none() {
            return bad("a start coordinate is required");
        }
        if (self.kind == ActionKind::Drag) != self.end.is_some() {
            return bad("only drag carries an end coordinate, and drag requires one");
        }
        match self.kind {
            ActionKind::Type | ActionKind::Hotkey if self.text.is_none() => bad("text is required"),
            ActionKind::Scroll if self.direction.is_none() && self.amount.is_none() => {
                bad("direction or amount is required")
            }
            ActionKind::Terminate if self.status.is_none() => bad("status is required"),
            ActionKind::Finished
            | ActionKind::Wait
            | ActionKind::CallUser
            | ActionKind::Terminate
                if self.start.is_some() =>
            {
                bad("no coordinates allowed")
            }
            _ => Ok(()),
        }
    }

    /// Apply `f` to every coordinate field.
    pub fn try_map_points<E>(
        &self,
        mut f: impl FnMut(Point) -> Result<Point, E>,
    ) -> Result<Action, E> {
        let mut out = self.clone();
        if let Some(p) = out.start {
            out.start = Some(f(p)?);
        }
        if let Some(p) = out.end {
            out.end = Some(f(p)?);
        }
        Ok(out)
    }

    /// Stable textual identity, used to compare actions across steps.
    pub fn signature(&self) -> String {
        serde_json::to_string(self).expect("action serializes")
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = serde_json::to_value(self.kind).expect("kind serializes");
        write!(f, "{}", name.as_str().unwrap_or("?"))?;
        if let Some(p) = self.start {
            write!(f, " {p}")?;
        }
        if let Some(p) = self.end {
            write!(f, " -> {p}")?;
        }
        if let Some(t) = &self.text {
            write!(f, " {t:?}")?;
        }
        if let Some(d) = self.direction {
            write!(f, " {}", d.as_str())?;
        }
        if let Some(a) = self.amount {
            write!(f, " {a:+}")?;
        }
        if let Some(s) = self.status {
            write!(f, " {s:?}")?;
        }
        Ok(())
    }
}

/// True iff the action interacts with a specific point.
pub fn is_coordinate_action(action: &Action) -> bool {
    action.start.is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dialect {
    UiTarsV1,
    ComputerUseToolCall,
}

/// One parsed model reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelTurn {
    pub thought: Option<String>,
    pub action: Action,
    pub raw: String,
}

impl ModelTurn {
    /// Build a turn by serializing `action`, so `raw` always reparses.
    pub fn compose(
        thought: Option<String>,
        action: Action,
        dialect: Dialect,
    ) -> Result<ModelTurn, ActionError> {
        let raw = serialize_parts(thought.as_deref(), &action, dialect)?;
        Ok(ModelTurn {
            thought,
            action,
            raw,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("no action found")]
    NoAction,
    #[error("more than one action in a single reply")]
    MultipleActions,
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("action {0:?} is not supported")]
    UnsupportedAction(String),
    #[error("malformed coordinates: {0}")]
    MalformedCoordinates(String),
    #[error("missing argument {0:?}")]
    MissingArgument(String),
    #[error("invalid argument {name:?}: {reason}")]
    InvalidArgument { name: String, reason: String },
    #[error("malformed action: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {position}: {kind}")]
pub struct ParseError {
    pub position: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn new(position: usize, kind: ParseErrorKind) -> Self {
        Self { position, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActionError {
    #[error("{kind:?} action is invalid: {reason}")]
    Invalid { kind: ActionKind, reason: String },
    #[error("{kind:?} cannot be expressed in {dialect:?}: {reason}")]
    Unsupported {
        kind: ActionKind,
        dialect: Dialect,
        reason: String,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub fn parse(text: &str, dialect: Dialect) -> Result<ModelTurn, ParseError> {
    let (thought, action) = match dialect {
        Dialect::UiTarsV1 => uitars::parse(text)?,
        Dialect::ComputerUseToolCall => tool_call::parse(text)?,
    };
    Ok(ModelTurn {
        thought,
        action,
        raw: text.to_string(),
    })
}

pub fn serialize(turn: &ModelTurn, dialect: Dialect) -> Result<String, ActionError> {
    serialize_parts(turn.thought.as_deref(), &turn.action, dialect)
}

pub fn serialize_parts(
    thought: Option<&str>,
    action: &Action,
    dialect: Dialect,
) -> Result<String, ActionError> {
    action.validate()?;
    match dialect {
        Dialect::UiTarsV1 => uitars::serialize(thought, action),
        Dialect::ComputerUseToolCall => tool_call::serialize(thought, action),
    }
}

/// Map region-local coordinates back onto the full frame.
pub fn rebase(action: &Action, spec: &ZoomSpec) -> Result<Action, GeometryError> {
    action.try_map_points(|p| geometry::to_full_coords(p, spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{zoom_spec, Dims};
    use crate::RegionBox;

    fn pt(x: u32, y: u32) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn validation_rules() {
        assert!(Action::click(pt(1, 2)).validate().is_ok());
        assert!(Action::bare(ActionKind::Click).validate().is_err());
        assert!(Action {
            end: None,
            ..Action::drag(pt(1, 1), pt(2, 2))
        }
        .validate()
        .is_err());
        assert!(Action::bare(ActionKind::Scroll).validate().is_err());
        assert!(Action::scroll(None, Some(Direction::Up), None)
            .validate()
            .is_ok());
        assert!(Action::bare(ActionKind::Terminate).validate().is_err());
        assert!(Action {
            start: Some(pt(1, 1)),
            ..Action::finished()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn coordinate_actions() {
        assert!(is_coordinate_action(&Action::click(pt(3, 4))));
        assert!(!is_coordinate_action(&Action::finished()));
        assert!(is_coordinate_action(&Action::scroll(
            Some(pt(1, 1)),
            Some(Direction::Down),
            None
        )));
    }

    #[test]
    fn rebase_examples() {
        let image = Dims::new(1000, 1000).unwrap();
        let spec = zoom_spec(&RegionBox::new(250, 250, 750, 750).unwrap(), image).unwrap();
        assert_eq!(
            rebase(&Action::click(pt(0, 0)), &spec).unwrap(),
            Action::click(pt(250, 250))
        );
        let t = Action::type_text("hello");
        assert_eq!(rebase(&t, &spec).unwrap(), t);

        let wide = Dims::new(2240, 1260).unwrap();
        let spec = zoom_spec(&RegionBox::new(1344, 0, 2240, 1008).unwrap(), wide).unwrap();
        let d = rebase(&Action::drag(pt(100, 100), pt(200, 200)), &spec).unwrap();
        assert_eq!(d, Action::drag(pt(1424, 80), pt(1504, 160)));
        assert!(rebase(&Action::click(pt(1120, 5)), &spec).is_err());
    }

    #[test]
    fn signature_distinguishes_fields() {
        assert_eq!(
            Action::click(pt(1, 2)).signature(),
            Action::click(pt(1, 2)).signature()
        );
        assert_ne!(
            Action::click(pt(1, 2)).signature(),
            Action::click(pt(1, 3)).signature()
        );
    }
}
