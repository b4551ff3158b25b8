//! `<tool_call>{"name": "computer_use", "arguments": {...}}</tool_call>` grammar.
//!
//! `left_click_drag` carries its start point in a `start_coordinate`
//! argument; the upstream schema only names the end point.

use serde_json::{json, Map, Value};

use super::{
    Action, ActionError, ActionKind, Dialect, Direction, ParseError, ParseErrorKind as K, Status,
};
use crate::geometry::Point;

const OPEN: &str = "<tool_call>";
const CLOSE: &str = "</tool_call>";
const TOOL_NAME: &str = "computer_use";

/// Pixels used when a direction-only scroll is expressed in this grammar.
pub const DEFAULT_SCROLL_PIXELS: i64 = 5;

/// Seconds written for `wait`, matching the other grammar's fixed sleep.
pub const DEFAULT_WAIT_SECONDS: i64 = 5;

fn err(position: usize, kind: K) -> ParseError {
    ParseError::new(position, kind)
}

pub(super) fn parse(text: &str) -> Result<(Option<String>, Action), ParseError> {
    let opens: Vec<usize> = text.match_indices(OPEN).map(|(i, _)| i).collect();
    let open = match opens.as_slice() {
        [] => return Err(err(0, K::NoAction)),
        [one] => *one,
        [_, second, ..] => return Err(err(*second, K::MultipleActions)),
    };
    let body_from = open + OPEN.len();
    let body_to = text[body_from..]
        .find(CLOSE)
        .map(|i| body_from + i)
        .unwrap_or(text.len());
    let body = &text[body_from..body_to];
    let thought = Some(text[..open].trim())
        .filter(|t| !t.is_empty())
        .map(str::to_string);

    let call: Value = serde_json::from_str(body.trim()).map_err(|e| {
        err(
            body_from,
            K::Malformed(format!("tool call is not JSON: {e}")),
        )
    })?;
    let call = call.as_object().ok_or_else(|| {
        err(
            body_from,
            K::Malformed("tool call must be an object".into()),
        )
    })?;
    match call.get("name").and_then(Value::as_str) {
        Some(TOOL_NAME) => {}
        Some(other) => return Err(err(body_from, K::UnknownAction(other.to_string()))),
        None => return Err(err(body_from, K::MissingArgument("name".into()))),
    }
    let args = match call.get("arguments") {
        Some(Value::Object(m)) => m.clone(),
        // some servers double-encode the arguments
        Some(Value::String(s)) => match serde_json::from_str::<Value>(s) {
            Ok(Value::Object(m)) => m,
            _ => {
                return Err(err(
                    body_from,
                    K::Malformed("arguments string is not a JSON object".into()),
                ))
            }
        },
        Some(_) => {
            return Err(err(
                body_from,
                K::Malformed("arguments must be an object".into()),
            ))
        }
        None => return Err(err(body_from, K::MissingArgument("arguments".into()))),
    };
    Ok((thought, build(&args, body_from)?))
}

fn build(args: &Map<String, Value>, at: usize) -> Result<Action, ParseError> {
    let name = args
        .get("action")
        .ok_or_else(|| err(at, K::MissingArgument("action".into())))?
        .as_str()
        .ok_or_else(|| invalid(at, "action", "must be a string"))?;
    let coord = |key: &str| args.get(key).map(|v| parse_point(v, key, at)).transpose();
    let need = |key: &str| coord(key)?.ok_or_else(|| err(at, K::MissingArgument(key.to_string())));
    let action = match name {
        "left_click" => Action::at(ActionKind::Click, need("coordinate")?),
        "double_click" => Action::at(ActionKind::DoubleClick, need("coordinate")?),
        "right_click" => Action::at(ActionKind::RightClick, need("coordinate")?),
        "mouse_move" => Action::at(ActionKind::MouseMove, need("coordinate")?),
        "left_click_drag" => Action::drag(need("start_coordinate")?, need("coordinate")?),
        "key" => {
            let keys = args
                .get("keys")
                .ok_or_else(|| err(at, K::MissingArgument("keys".into())))?;
            let keys = keys
                .as_array()
                .ok_or_else(|| invalid(at, "keys", "must be an array"))?;
            let mut names = Vec::with_capacity(keys.len());
            for k in keys {
                match k.as_str() {
                    Some(s) if !s.trim().is_empty() && !s.contains(char::is_whitespace) => {
                        names.push(s)
                    }
                    _ => return Err(invalid(at, "keys", "entries must be non-empty key names")),
                }
            }
            if names.is_empty() {
                return Err(invalid(at, "keys", "at least one key is required"));
            }
            Action::hotkey(names.join(" "))
        }
        "type" => {
            let text = args
                .get("text")
                .ok_or_else(|| err(at, K::MissingArgument("text".into())))?;
            Action::type_text(
                text.as_str()
                    .ok_or_else(|| invalid(at, "text", "must be a string"))?,
            )
        }
        "scroll" => {
            let pixels = args
                .get("pixels")
                .ok_or_else(|| err(at, K::MissingArgument("pixels".into())))?;
            let amount =
                as_integer(pixels).ok_or_else(|| invalid(at, "pixels", "must be an integer"))?;
            Action::scroll(coord("coordinate")?, None, Some(amount))
        }
        "wait" => Action::bare(ActionKind::Wait),
        "terminate" => {
            let status = match args.get("status").and_then(Value::as_str) {
                Some("success") => Status::Success,
                Some("failure") => Status::Failure,
                Some(other) => return Err(invalid(at, "status", &format!("{other:?}"))),
                None => return Err(err(at, K::MissingArgument("status".into()))),
            };
            Action::terminate(status)
        }
        "middle_click" => return Err(err(at, K::UnsupportedAction(name.to_string()))),
        other => return Err(err(at, K::UnknownAction(other.to_string()))),
    };
    Ok(action)
}

fn invalid(at: usize, name: &str, reason: &str) -> ParseError {
    err(
        at,
        K::InvalidArgument {
            name: name.to_string(),
            reason: reason.to_string(),
        },
    )
}

fn as_integer(v: &Value) -> Option<i64> {
    v.as_i64().or_else(|| {
        v.as_f64()
            .filter(|f| f.fract() == 0.0 && f.abs() < 9.0e15)
            .map(|f| f as i64)
    })
}

fn parse_point(v: &Value, key: &str, at: usize) -> Result<Point, ParseError> {
    let bad = || err(at, K::MalformedCoordinates(format!("{key}: {v}")));
    let items = v.as_array().filter(|a| a.len() == 2).ok_or_else(bad)?;
    let mut xy = [0u32; 2];
    for (slot, item) in xy.iter_mut().zip(items) {
        *slot = as_integer(item)
            .and_then(|n| u32::try_from(n).ok())
            .ok_or_else(bad)?;
    }
    Ok(Point::new(xy[0], xy[1]))
}

fn unsupported(action: &Action, reason: &str) -> ActionError {
    ActionError::Unsupported {
        kind: action.kind,
        dialect: Dialect::ComputerUseToolCall,
        reason: reason.to_string(),
    }
}

pub(super) fn serialize(thought: Option<&str>, action: &Action) -> Result<String, ActionError> {
    let xy = |p: Option<Point>| p.map(|p| json!([p.x, p.y]));
    let mut args = Map::new();
    let mut put = |k: &str, v: Value| {
        args.insert(k.to_string(), v);
    };
    match action.kind {
        ActionKind::Click
        | ActionKind::DoubleClick
        | ActionKind::RightClick
        | ActionKind::MouseMove => {
            let name = match action.kind {
                ActionKind::Click => "left_click",
                ActionKind::DoubleClick => "double_click",
                ActionKind::RightClick => "right_click",
                _ => "mouse_move",
            };
            put("action", json!(name));
            put("coordinate", xy(action.start).unwrap_or(Value::Null));
        }
        ActionKind::Drag => {
            put("action", json!("left_click_drag"));
            put("start_coordinate", xy(action.start).unwrap_or(Value::Null));
            put("coordinate", xy(action.end).unwrap_or(Value::Null));
        }
        ActionKind::Hotkey => {
            let keys: Vec<&str> = action
                .text
                .as_deref()
                .unwrap_or_default()
                .split_whitespace()
                .collect();
            if keys.is_empty() {
                return Err(unsupported(action, "no key names"));
            }
            put("action", json!("key"));
            put("keys", json!(keys));
        }
        ActionKind::Type => {
            put("action", json!("type"));
            put("text", json!(action.text.as_deref().unwrap_or_default()));
        }
        ActionKind::Scroll => {
            let pixels = match (action.amount, action.direction) {
                (Some(a), _) => a,
                (None, Some(Direction::Up)) => DEFAULT_SCROLL_PIXELS,
                (None, Some(Direction::Down)) => -DEFAULT_SCROLL_PIXELS,
                (None, _) => {
                    return Err(unsupported(
                        action,
                        "only vertical scrolling is expressible",
                    ))
                }
            };
            put("action", json!("scroll"));
            if let Some(c) = xy(action.start) {
                put("coordinate", c);
            }
            put("pixels", json!(pixels));
        }
        ActionKind::Wait => {
            put("action", json!("wait"));
            put("time", json!(DEFAULT_WAIT_SECONDS));
        }
        ActionKind::Finished | ActionKind::CallUser | ActionKind::Terminate => {
            let status = match (action.kind, action.status) {
                (ActionKind::Finished, _) => "success",
                (ActionKind::CallUser, _) => "failure",
                (_, Some(Status::Failure)) => "failure",
                _ => "success",
            };
            put("action", json!("terminate"));
            put("status", json!(status));
        }
    }
    let call = json!({ "name": TOOL_NAME, "arguments": Value::Object(args) });
    let call = format!("{OPEN}\n{call}\n{CLOSE}");
    Ok(match thought {
        Some(t) => format!("{t}\n{call}"),
        None => call,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar_example() {
        let text = r#"<tool_call>{"name": "computer_use", "arguments": {"action": "left_click", "coordinate": [100, 200]}}</tool_call>"#;
        let (thought, a) = parse(text).unwrap();
        assert_eq!(thought, None);
        assert_eq!(a, Action::click(Point::new(100, 200)));
    }

    #[test]
    fn thought_and_string_arguments() {
        let text = "I should type.\n<tool_call>\n{\"name\": \"computer_use\", \"arguments\": \"{\\\"action\\\": \\\"type\\\", \\\"text\\\": \\\"hi\\\"}\"}\n</tool_call>";
        let (thought, a) = parse(text).unwrap();
        assert_eq!(thought.as_deref(), Some("I should type."));
        assert_eq!(a, Action::type_text("hi"));
    }

    #[test]
    fn scroll_sign_follows_schema() {
        let down = Action::scroll(Some(Point::new(10, 10)), Some(Direction::Down), None);
        let text = serialize(None, &down).unwrap();
        assert!(text.contains(r#""action":"scroll""#), "{text}");
        assert!(text.contains(r#""pixels":-5"#), "{text}");
        let (_, back) = parse(&text).unwrap();
        assert_eq!(back.amount, Some(-5));
        assert!(serialize(None, &Action::scroll(None, Some(Direction::Left), None)).is_err());
    }

    #[test]
    fn terminate_table() {
        let s = serialize(None, &Action::finished()).unwrap();
        assert_eq!(parse(&s).unwrap().1, Action::terminate(Status::Success));
        let s = serialize(None, &Action::bare(ActionKind::CallUser)).unwrap();
        assert_eq!(parse(&s).unwrap().1, Action::terminate(Status::Failure));
    }

    #[test]
    fn errors() {
        let wrap = |args: &str| {
            format!(r#"<tool_call>{{"name": "computer_use", "arguments": {args}}}</tool_call>"#)
        };
        assert_eq!(parse("nothing").unwrap_err().kind, K::NoAction);
        assert_eq!(
            parse(&format!("{0}{0}", wrap(r#"{"action":"wait"}"#)))
                .unwrap_err()
                .kind,
            K::MultipleActions
        );
        assert!(matches!(
            parse("<tool_call>{oops</tool_call>").unwrap_err().kind,
            K::Malformed(_)
        ));
        assert!(matches!(
            parse(r#"<tool_call>{"name": "browser", "arguments": {}}</tool_call>"#)
                .unwrap_err()
                .kind,
            K::UnknownAction(_)
        ));
        assert!(matches!(
            parse(&wrap(r#"{"action":"middle_click"}"#))
                .unwrap_err()
                .kind,
            K::UnsupportedAction(_)
        ));
        assert!(matches!(
            parse(&wrap(r#"{"action":"fly"}"#)).unwrap_err().kind,
            K::UnknownAction(_)
        ));
        assert!(matches!(
            parse(&wrap(r#"{"action":"left_click"}"#)).unwrap_err().kind,
            K::MissingArgument(_)
        ));
        assert!(matches!(
            parse(&wrap(r#"{"action":"left_click","coordinate":[1.5,2]}"#))
                .unwrap_err()
                .kind,
            K::MalformedCoordinates(_)
        ));
        assert!(matches!(
            parse(&wrap(r#"{"action":"left_click_drag","coordinate":[1,2]}"#))
                .unwrap_err()
                .kind,
            K::MissingArgument(_)
        ));
        assert!(matches!(
            parse(&wrap(r#"{"action":"terminate","status":"meh"}"#))
                .unwrap_err()
                .kind,
            K::InvalidArgument { .. }
        ));
    }
}
