use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use regionfocus::actions::{
    parse, serialize_parts, Action, ActionKind, Dialect, Direction, Status,
};
use regionfocus::geometry::Point;

const GRAMMAR: &str = include_str!("../../../docs/action-grammar.md");

fn corpus(tag: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Option<String> = None;
    for line in GRAMMAR.lines() {
        match &mut current {
            None if line.trim_start() == format!("```{tag}") => current = Some(String::new()),
            Some(_) if line.trim_start() == "```" => out.push(current.take().unwrap()),
            Some(buf) => {
                buf.push_str(line);
                buf.push('\n');
            }
            None => {}
        }
    }
    out
}

fn point() -> impl Strategy<Value = Point> {
    (0u32..4000, 0u32..4000).prop_map(|(x, y)| Point::new(x, y))
}

fn words() -> impl Strategy<Value = String> {
    proptest::collection::vec("[a-zA-Z0-9]{1,8}", 1..5).prop_map(|w| w.join(" "))
}

fn thought() -> impl Strategy<Value = Option<String>> {
    proptest::option::of(words())
}

fn uitars_action() -> impl Strategy<Value = Action> {
    prop_oneof![
        point().prop_map(Action::click),
        point().prop_map(|p| Action::at(ActionKind::DoubleClick, p)),
        point().prop_map(|p| Action::at(ActionKind::RightClick, p)),
        (point(), point()).prop_map(|(a, b)| Action::drag(a, b)),
        words().prop_map(Action::hotkey),
        words().prop_map(Action::type_text),
        (
            proptest::option::of(point()),
            prop_oneof![
                Just(Direction::Up),
                Just(Direction::Down),
                Just(Direction::Left),
                Just(Direction::Right)
            ]
        )
            .prop_map(|(p, d)| Action::scroll(p, Some(d), None)),
        Just(Action::bare(ActionKind::Wait)),
        proptest::option::of(words()).prop_map(|t| Action {
            text: t,
            ..Action::finished()
        }),
        proptest::option::of(words()).prop_map(|t| Action {
            text: t,
            ..Action::bare(ActionKind::CallUser)
        }),
    ]
}

fn tool_call_action() -> impl Strategy<Value = Action> {
    prop_oneof![
        point().prop_map(Action::click),
        point().prop_map(|p| Action::at(ActionKind::DoubleClick, p)),
        point().prop_map(|p| Action::at(ActionKind::RightClick, p)),
        point().prop_map(|p| Action::at(ActionKind::MouseMove, p)),
        (point(), point()).prop_map(|(a, b)| Action::drag(a, b)),
        words().prop_map(Action::hotkey),
        words().prop_map(Action::type_text),
        (proptest::option::of(point()), -2000i64..2000).prop_map(|(p, n)| Action::scroll(
            p,
            None,
            Some(n)
        )),
        Just(Action::bare(ActionKind::Wait)),
        prop_oneof![Just(Status::Success), Just(Status::Failure)].prop_map(Action::terminate),
    ]
}

fn round_trip(dialect: Dialect, strategy: impl Strategy<Value = (Option<String>, Action)>) {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        ..Config::default()
    });
    runner
        .run(&strategy, |(thought, action)| {
            let text = serialize_parts(thought.as_deref(), &action, dialect).unwrap();
            let turn =
                parse(&text, dialect).map_err(|e| TestCaseError::fail(format!("{text:?}: {e}")))?;
            prop_assert_eq!(&turn.action, &action, "{}", text);
            prop_assert_eq!(&turn.thought, &thought, "{}", text);
            Ok(())
        })
        .unwrap();
}

#[test]
fn uitars_round_trip() {
    round_trip(Dialect::UiTarsV1, (thought(), uitars_action()));
}

#[test]
fn tool_call_round_trip() {
    round_trip(
        Dialect::ComputerUseToolCall,
        (thought(), tool_call_action()),
    );
}

#[test]
fn grammar_examples_parse() {
    for (tag, dialect) in [
        ("ui-tars-v1", Dialect::UiTarsV1),
        ("computer-use-tool-call", Dialect::ComputerUseToolCall),
    ] {
        let seeds = corpus(tag);
        assert!(seeds.len() >= 10, "{tag}: only {} examples", seeds.len());
        for s in seeds {
            let turn = parse(&s, dialect).unwrap_or_else(|e| panic!("{s:?}: {e}"));
            turn.action.validate().unwrap();
        }
    }
}

#[test]
fn documented_examples_decode_as_written() {
    let t = parse(
        "Thought: click the search icon\nAction: click(start_box='<|box_start|>(123,456)<|box_end|>')",
        Dialect::UiTarsV1,
    )
    .unwrap();
    assert_eq!(t.thought.as_deref(), Some("click the search icon"));
    assert_eq!(t.action, Action::click(Point::new(123, 456)));

    let t = parse(
        "<tool_call>{\"name\": \"computer_use\", \"arguments\": {\"action\": \"left_click\", \"coordinate\": [100, 200]}}</tool_call>",
        Dialect::ComputerUseToolCall,
    )
    .unwrap();
    assert_eq!(t.thought, None);
    assert_eq!(t.action, Action::click(Point::new(100, 200)));
}

fn mutate(rng: &mut StdRng, seed: &[u8]) -> Vec<u8> {
    let mut bytes = seed.to_vec();
    let edits = rng.gen_range(1..8);
    for _ in 0..edits {
        let op = rng.gen_range(0..4);
        let at = if bytes.is_empty() {
            0
        } else {
            rng.gen_range(0..bytes.len())
        };
        match op {
            0 if !bytes.is_empty() => bytes[at] = rng.gen(),
            1 => bytes.insert(at, rng.gen()),
            2 if !bytes.is_empty() => {
                bytes.remove(at);
            }
            _ => {
                let end = (at + rng.gen_range(0..16)).min(bytes.len());
                bytes.truncate(end.max(at));
            }
        }
    }
    bytes
}

#[test]
fn random_bytes_never_panic() {
    let mut rng = StdRng::seed_from_u64(7);
    let seeds: Vec<String> = corpus("ui-tars-v1")
        .into_iter()
        .chain(corpus("computer-use-tool-call"))
        .collect();
    for i in 0..100_000 {
        let bytes = if i % 2 == 0 {
            mutate(&mut rng, seeds[i % seeds.len()].as_bytes())
        } else {
            let len = rng.gen_range(0..128);
            (0..len).map(|_| rng.gen()).collect()
        };
        let text = String::from_utf8_lossy(&bytes);
        for dialect in [Dialect::UiTarsV1, Dialect::ComputerUseToolCall] {
            if let Ok(turn) = parse(&text, dialect) {
                assert!(
                    turn.action.validate().is_ok(),
                    "{text:?} parsed into an invalid action"
                );
            }
        }
    }
}
