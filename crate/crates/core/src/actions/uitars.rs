//! `Thought: ... / Action: name(key='value', ...)` grammar.

use std::sync::LazyLock;

use regex::Regex;

use super::{Action, ActionError, ActionKind, Dialect, Direction, ParseError, ParseErrorKind as K};
use crate::geometry::Point;

static COORDS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^\s*(?:<\|box_start\|>)?\s*\(?\s*(\d+)\s*,\s*(\d+)\s*(?:,\s*(\d+)\s*,\s*(\d+)\s*)?\)?\s*(?:<\|box_end\|>)?\s*$",
    )
    .unwrap()
});

// What may follow the closing quote of an argument value.
static AFTER_VALUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:,\s*[A-Za-z_][A-Za-z0-9_]*\s*=|,?\s*$)").unwrap());

fn err(position: usize, kind: K) -> ParseError {
    ParseError::new(position, kind)
}

/// Blank out code fences (including the literal `\n` the prompt writes next
/// to them) without moving any byte offsets.
fn mask_fences(text: &str) -> String {
    let mut bytes = text.as_bytes().to_vec();
    for pat in ["\\n```", "```\\n", "```"] {
        let mut from = 0;
        while let Some(i) = find_bytes(&bytes[from..], pat.as_bytes()) {
            let at = from + i;
            bytes[at..at + pat.len()].fill(b' ');
            from = at + pat.len();
        }
    }
    // only ASCII bytes were overwritten with ASCII, so this stays valid UTF-8
    String::from_utf8(bytes).expect("masking preserves UTF-8")
}

fn find_bytes(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

/// Byte offsets of lines whose first non-blank text starts with `prefix`,
/// pointing just past the prefix.
fn marker_offsets(text: &str, prefix: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut line_start = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if trimmed.starts_with(prefix) {
            let at = line_start + (line.len() - trimmed.len());
            out.push((line_start, at + prefix.len()));
        }
        line_start += line.len();
    }
    out
}

pub(super) fn parse(text: &str) -> Result<(Option<String>, Action), ParseError> {
    let masked = mask_fences(text);
    let actions = marker_offsets(&masked, "Action:");
    let (line_start, body_start) = match actions.as_slice() {
        [] => return Err(err(0, K::NoAction)),
        [one] => *one,
        [_, second, ..] => return Err(err(second.0, K::MultipleActions)),
    };
    let thought = marker_offsets(&masked[..line_start], "Thought:")
        .last()
        .map(|&(_, from)| masked[from..line_start].trim().to_string())
        .filter(|t| !t.is_empty());
    let action = parse_call(&masked[body_start..], body_start)?;
    Ok((thought, action))
}

fn parse_call(body: &str, offset: usize) -> Result<Action, ParseError> {
    let lead = body.len() - body.trim_start().len();
    let rest = &body[lead..];
    let name_len = rest
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .unwrap_or(rest.len());
    let name = &rest[..name_len];
    let at = offset + lead;
    if name.is_empty() {
        return Err(err(at, K::Malformed("expected an action name".into())));
    }
    let after = &rest[name_len..];
    let open_rel = after.len() - after.trim_start().len();
    if !after[open_rel..].starts_with('(') {
        return Err(err(
            at + name_len + open_rel,
            K::Malformed("expected '(' after action name".into()),
        ));
    }
    let args_from = name_len + open_rel + 1;
    let close = match rest.rfind(')') {
        Some(c) if c >= args_from => c,
        _ => return Err(err(at + rest.len(), K::Malformed("missing ')'".into()))),
    };
    if !rest[close + 1..].trim().is_empty() {
        return Err(err(
            at + close + 1,
            K::Malformed("unexpected text after the action".into()),
        ));
    }
    let args = parse_kwargs(&rest[args_from..close], at + args_from)?;
    build(name, at, args)
}

struct Arg<'a> {
    name: &'a str,
    value: &'a str,
    at: usize,
}

fn parse_kwargs(s: &str, offset: usize) -> Result<Vec<Arg<'_>>, ParseError> {
    let mut out: Vec<Arg> = Vec::new();
    let mut i = 0;
    let skip_ws = |i: &mut usize| {
        while let Some(c) = s[*i..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            *i += c.len_utf8();
        }
    };
    loop {
        skip_ws(&mut i);
        if i >= s.len() {
            break;
        }
        let key_len = s[i..]
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(s.len() - i);
        if key_len == 0 {
            return Err(err(
                offset + i,
                K::Malformed("expected an argument name".into()),
            ));
        }
        let name = &s[i..i + key_len];
        i += key_len;
        skip_ws(&mut i);
        if !s[i..].starts_with('=') {
            return Err(err(
                offset + i,
                K::Malformed(format!("expected '=' after {name}")),
            ));
        }
        i += 1;
        skip_ws(&mut i);
        let (value, at, next) = match s[i..].chars().next() {
            Some(q @ ('\'' | '"')) => {
                let from = i + 1;
                let close = s[from..]
                    .match_indices(q)
                    .map(|(j, _)| from + j)
                    .find(|&j| AFTER_VALUE.is_match(&s[j + 1..]))
                    .ok_or_else(|| {
                        err(
                            offset + i,
                            K::Malformed(format!("unterminated value for {name}")),
                        )
                    })?;
                (&s[from..close], from, close + 1)
            }
            _ => {
                let end = s[i..].find(',').map(|j| i + j).unwrap_or(s.len());
                (s[i..end].trim(), i, end)
            }
        };
        if out.iter().any(|a| a.name == name) {
            return Err(err(
                offset + at,
                K::Malformed(format!("argument {name} given twice")),
            ));
        }
        out.push(Arg {
            name,
            value,
            at: offset + at,
        });
        i = next;
        skip_ws(&mut i);
        if s[i..].starts_with(',') {
            i += 1;
        } else if i < s.len() {
            return Err(err(
                offset + i,
                K::Malformed("expected ',' between arguments".into()),
            ));
        }
    }
    Ok(out)
}

fn parse_point(value: &str, at: usize) -> Result<Point, ParseError> {
    let bad = || err(at, K::MalformedCoordinates(format!("{value:?}")));
    let caps = COORDS.captures(value).ok_or_else(bad)?;
    let num = |i: usize| {
        caps.get(i)
            .map(|m| m.as_str().parse::<u32>().map_err(|_| bad()))
            .transpose()
    };
    let (x, y) = (num(1)?.ok_or_else(bad)?, num(2)?.ok_or_else(bad)?);
    match (num(3)?, num(4)?) {
        (Some(x2), Some(y2)) => Ok(Point::new(
            ((x as u64 + x2 as u64) / 2) as u32,
            ((y as u64 + y2 as u64) / 2) as u32,
        )),
        _ => Ok(Point::new(x, y)),
    }
}

fn build(name: &str, at: usize, args: Vec<Arg>) -> Result<Action, ParseError> {
    let (kind, allowed): (ActionKind, &[&str]) = match name {
        "click" => (ActionKind::Click, &["start_box"]),
        "left_double" => (ActionKind::DoubleClick, &["start_box"]),
        "right_single" => (ActionKind::RightClick, &["start_box"]),
        "drag" => (ActionKind::Drag, &["start_box", "end_box"]),
        "hotkey" => (ActionKind::Hotkey, &["key"]),
        "type" => (ActionKind::Type, &["content"]),
        "scroll" => (ActionKind::Scroll, &["start_box", "direction"]),
        "wait" => (ActionKind::Wait, &[]),
        "finished" => (ActionKind::Finished, &["content"]),
        "call_user" => (ActionKind::CallUser, &["content"]),
        other => return Err(err(at, K::UnknownAction(other.to_string()))),
    };
    if let Some(a) = args.iter().find(|a| !allowed.contains(&a.name)) {
        return Err(err(
            a.at,
            K::InvalidArgument {
                name: a.name.to_string(),
                reason: format!("not accepted by {name}"),
            },
        ));
    }
    let get = |key: &str| args.iter().find(|a| a.name == key);
    let require = |key: &str| get(key).ok_or_else(|| err(at, K::MissingArgument(key.to_string())));
    let point = |key: &str| get(key).map(|a| parse_point(a.value, a.at)).transpose();

    let mut action = Action::bare(kind);
    match kind {
        ActionKind::Click | ActionKind::DoubleClick | ActionKind::RightClick => {
            require("start_box")?;
            action.start = point("start_box")?;
        }
        ActionKind::Drag => {
            require("start_box")?;
            require("end_box")?;
            action.start = point("start_box")?;
            action.end = point("end_box")?;
        }
        ActionKind::Hotkey => action.text = Some(require("key")?.value.to_string()),
        ActionKind::Type => action.text = Some(require("content")?.value.to_string()),
        ActionKind::Scroll => {
            action.start = point("start_box")?;
            let d = require("direction")?;
            action.direction = Some(Direction::parse(d.value).ok_or_else(|| {
                err(
                    d.at,
                    K::InvalidArgument {
                        name: "direction".into(),
                        reason: format!("{:?}", d.value),
                    },
                )
            })?);
        }
        ActionKind::Finished | ActionKind::CallUser => {
            action.text = get("content").map(|a| a.value.to_string())
        }
        _ => {}
    }
    Ok(action)
}

fn box_arg(p: Point) -> String {
    format!("'<|box_start|>({},{})<|box_end|>'", p.x, p.y)
}

fn unsupported(action: &Action, reason: &str) -> ActionError {
    ActionError::Unsupported {
        kind: action.kind,
        dialect: Dialect::UiTarsV1,
        reason: reason.to_string(),
    }
}

pub(super) fn serialize(thought: Option<&str>, action: &Action) -> Result<String, ActionError> {
    let start = || action.start.map(box_arg).unwrap_or_default();
    let with_content = |name: &str| match &action.text {
        Some(t) => format!("{name}(content='{t}')"),
        None => format!("{name}()"),
    };
    let call = match action.kind {
        ActionKind::Click => format!("click(start_box={})", start()),
        ActionKind::DoubleClick => format!("left_double(start_box={})", start()),
        ActionKind::RightClick => format!("right_single(start_box={})", start()),
        ActionKind::Drag => {
            let end = action.end.map(box_arg).unwrap_or_default();
            format!("drag(start_box={}, end_box={end})", start())
        }
        ActionKind::Hotkey => format!(
            "hotkey(key='{}')",
            action.text.as_deref().unwrap_or_default()
        ),
        ActionKind::Type => format!(
            "type(content='{}')",
            action.text.as_deref().unwrap_or_default()
        ),
        ActionKind::Scroll => {
            if action.amount.is_some() {
                return Err(unsupported(
                    action,
                    "scroll takes a direction, not an amount",
                ));
            }
            let dir = action
                .direction
                .ok_or_else(|| unsupported(action, "scroll needs a direction"))?;
            match action.start {
                Some(p) => format!(
                    "scroll(start_box={}, direction='{}')",
                    box_arg(p),
                    dir.as_str()
                ),
                None => format!("scroll(direction='{}')", dir.as_str()),
            }
        }
        ActionKind::MouseMove => {
            return Err(unsupported(
                action,
                "no pointer-move action in this grammar",
            ))
        }
        ActionKind::Wait => "wait()".to_string(),
        ActionKind::Finished => with_content("finished"),
        ActionKind::CallUser => with_content("call_user"),
        ActionKind::Terminate => match action.status {
            Some(super::Status::Failure) => "call_user()".to_string(),
            _ => "finished()".to_string(),
        },
    };
    Ok(match thought {
        Some(t) => format!("Thought: {t}\nAction: {call}"),
        None => format!("Action: {call}"),
    })
}
