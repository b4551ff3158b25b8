//! Prompt templates and request rendering.
//!
//! The focal-proposal text and both native action prompts are used exactly
//! as the model families expect them. The judge, aggregation, region-box and
//! trajectory-judge wordings are our own.

use thiserror::Error;

use super::{BackendProfile, ChatRequest, Message, Part, Role, TemplateId};
use crate::actions::Dialect;
use crate::canvas::Screenshot;

pub const FOCAL_TEMPLATE: &str = r#"You are a GUI agent. You are given a task, a current web screenshot, and a history of your previous focused points on the same page (indicated by pink stars in the screenshot). Your job is to output the most relevant point in the screenshot corresponding to the objective. You must avoid the pink-starred coordinates and choose a valid clickable area.

## Other Information
OBJECTIVE: {objective}
URL: {url}

## Output Format
```
(x1, y1)
```
where x1, y1 are the coordinates of the target element, and must differ from any pink-starred coordinates.

## Note
- Ensure the chosen coordinate is a valid clickable area not visibly covered by pink stars in the screenshot.
"#;

pub const UITARS_ACTION_TEMPLATE: &str = r#"You are a GUI agent. You are given a task and your action history, with screenshots. 
You need to perform the next action to complete the task.

## Other Information
OBJECTIVE: {objective}
URL: {url}

## Output Format
```\nThought: ...
Action: ...\n```

## Action Space
click(start_box='<|box_start|>(x1,y1)<|box_end|>')
left_double(start_box='<|box_start|>(x1,y1)<|box_end|>')
right_single(start_box='<|box_start|>(x1,y1)<|box_end|>')
drag(start_box='<|box_start|>(x1,y1)<|box_end|>', end_box='<|box_start|>(x3,y3)<|box_end|>')
hotkey(key='')
type(content='') #If you want to submit your input, use "\" at the end of `content`.
scroll(start_box='<|box_start|>(x1,y1)<|box_end|>', direction='down or up or right or left')
wait() #Sleep for 5s and take a screenshot to check for any changes.
finished()
call_user() # Submit the task and call the user when the task is unsolvable, or when you need the user's help.

## Note
- Use English in `Thought` part.
- Summarize your next action (with its target element) in one sentence in `Thought` part.
"#;

pub const COMPUTER_USE_SYSTEM_TEMPLATE: &str = r#"You are a helpful assistant.

# Tools

You may call one or more functions to assist with the user query.

You are provided with function signatures within <tools></tools> XML tags:
<tools>
{
    "type": "function",
    "function": {
        "name": "computer_use",
        "description": """Use a mouse and keyboard to interact with a computer, and take screenshots.
            * This is an interface to a desktop GUI. You do not have access to a terminal or applications menu. You must click on desktop icons to start applications.
            * Some applications may take time to start or process actions, so you may need to wait and take successive screenshots to see the results of your actions. E.g. if you click on Firefox and a window doesn't open, try wait and taking another screenshot.
            * The screen's resolution is {self.display_width_px}x{self.display_height_px}.
            * Whenever you intend to move the cursor to click on an element like an icon, you should consult a screenshot to determine the coordinates of the element before moving the cursor.
            * If you tried clicking on a program or link but it failed to load, even after waiting, try adjusting your cursor position so that the tip of the cursor visually falls on the element that you want to click.
            * Make sure to click any buttons, links, icons, etc with the cursor tip in the center of the element. Don't click boxes on their edges unless asked."""
        "parameters": {
            "properties": {
                "action": {
                    "description": """
                        The action to perform. The available actions are:
                        * `key`: Performs key down presses on the arguments passed in order, then performs key releases in reverse order.
                        * `type`: Type a string of text on the keyboard.
                        * `mouse_move`: Move the cursor to a specified (x, y) pixel coordinate on the screen.
                        * `left_click`: Click the left mouse button.
                        * `left_click_drag`: Click and drag the cursor to a specified (x, y) pixel coordinate on the screen.
                        * `right_click`: Click the right mouse button.
                        * `middle_click`: Click the middle mouse button.
                        * `double_click`: Double-click the left mouse button.
                        * `scroll`: Performs a scroll of the mouse scroll wheel.
                        * `wait`: Wait specified seconds for the change to happen.
                        * `terminate`: Terminate the current task and report its completion status.
                        """,
                    "enum": [
                        "key",
                        "type",
                        "mouse_move",
                        "left_click",
                        "left_click_drag",
                        "right_click",
                        "middle_click",
                        "double_click",
                        "scroll",
                        "wait",
                        "terminate",
                    ],
                    "type": "string",
                },
                "keys": {
                    "description": "Required only by `action=key`.",
                    "type": "array",
                },
                "text": {
                    "description": "Required only by `action=type`.",
                    "type": "string",
                },
                "coordinate": {
                    "description": "(x, y): The x (pixels from the left edge) and y (pixels from the top edge) coordinates to move the mouse to. Required only by `action=mouse_move` and `action=left_click_drag`.",
                    "type": "array",
                },
                "pixels": {
                    "description": "The amount of scrolling to perform. Positive values scroll up, negative values scroll down. Required only by `action=scroll`.",
                    "type": "number",
                },
                "time": {
                    "description": "The seconds to wait. Required only by `action=wait`.",
                    "type": "number",
                },
                "status": {
                    "description": "The status of the task. Required only by `action=terminate`.",
                    "type": "string",
                    "enum": ["success", "failure"],
                },
            },
            "required": ["action"],
            "type": "object",
        }
    }
}
For each function call, return a json object with function name and arguments within <tool_call></tool_call> XML tags:
<tool_call>
{"name": <function-name>, "arguments": <args-json-object>}
</tool_call>"#;

pub const COMPUTER_USE_TASK_TEMPLATE: &str =
    "## Other Information\nOBJECTIVE: {objective}\nURL: {url}\n";

pub const JUDGE_TEMPLATE: &str = "You are checking a GUI agent's prediction. The screenshot shows a pink star labelled 1 at the point the agent chose for the objective below.

OBJECTIVE: {objective}

Decide whether the star sits on the element the objective refers to. Reply with exactly one word: CORRECT or INCORRECT.
";

pub const AGGREGATION_TEMPLATE: &str = "You are a GUI agent choosing the next action. Several candidate actions were proposed for the objective below. Each candidate that interacts with a point is drawn in the screenshot as a pink star carrying its number.

OBJECTIVE: {objective}

## Candidates
{candidates}
Reply with a single number from 1 to {k}: the candidate that best advances the objective.
";

pub const REGION_BOX_TEMPLATE: &str = "You are a GUI agent. You are given a task and a current web screenshot. Output the region of the screenshot most relevant to the objective as the coordinates of its upper-left and bottom-right corners.

## Other Information
OBJECTIVE: {objective}
URL: {url}

## Output Format
```
(x1, y1, x2, y2)
```
";

pub const TRAJECTORY_JUDGE_TEMPLATE: &str = "You are evaluating whether a web agent completed its task. The task, the last {n} screenshots of the agent's trajectory (oldest first) and the agent's final response are given.

TASK: {objective}
FINAL RESPONSE: {response}

Judge only from what the screenshots and response show. Reply with SUCCESS or NOT SUCCESS.
";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("aggregation needs at least one candidate")]
    NoCandidates,
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

fn user(parts: Vec<Part>) -> Message {
    Message::new(Role::User, parts)
}

/// The model family's native action prompt on `screenshot`. `history`
/// holds earlier raw replies, oldest first.
pub fn render_agent_prompt(
    profile: &BackendProfile,
    template: TemplateId,
    objective: &str,
    url: &str,
    screenshot: &Screenshot,
    history: &[String],
) -> ChatRequest {
    let vars = [("objective", objective), ("url", url)];
    let mut messages = match profile.dialect {
        Dialect::UiTarsV1 => vec![user(vec![Part::Text(fill(UITARS_ACTION_TEMPLATE, &vars))])],
        Dialect::ComputerUseToolCall => {
            let d = profile.declared_resolution;
            let system = COMPUTER_USE_SYSTEM_TEMPLATE
                .replace("{self.display_width_px}", &d.width().to_string())
                .replace("{self.display_height_px}", &d.height().to_string());
            vec![
                Message::text(Role::System, system),
                user(vec![Part::Text(fill(COMPUTER_USE_TASK_TEMPLATE, &vars))]),
            ]
        }
    };
    messages.extend(
        history
            .iter()
            .map(|h| Message::text(Role::Assistant, h.clone())),
    );
    messages.push(user(vec![Part::Image(screenshot.clone())]));
    ChatRequest::new(template, messages, profile)
}

pub fn render_focal_prompt(
    profile: &BackendProfile,
    objective: &str,
    url: &str,
    map_image: &Screenshot,
) -> ChatRequest {
    let text = fill(FOCAL_TEMPLATE, &[("objective", objective), ("url", url)]);
    ChatRequest::new(
        TemplateId::FocalProposal,
        vec![user(vec![Part::Text(text), Part::Image(map_image.clone())])],
        profile,
    )
}

/// Append a follow-up instruction to the last user message.
pub fn with_note(mut req: ChatRequest, note: &str) -> ChatRequest {
    if let Some(m) = req.messages.iter_mut().rev().find(|m| m.role == Role::User) {
        m.parts.push(Part::Text(note.to_string()));
    }
    req
}

pub fn render_judge_prompt(
    profile: &BackendProfile,
    objective: &str,
    starred_image: &Screenshot,
) -> ChatRequest {
    let text = fill(JUDGE_TEMPLATE, &[("objective", objective)]);
    ChatRequest::new(
        TemplateId::SelfJudge,
        vec![user(vec![
            Part::Text(text),
            Part::Image(starred_image.clone()),
        ])],
        profile,
    )
}

/// `options[i]` describes the candidate labelled `i + 1`.
pub fn render_aggregation_prompt(
    profile: &BackendProfile,
    objective: &str,
    candidate_image: &Screenshot,
    options: &[String],
) -> Result<ChatRequest, PromptError> {
    if options.is_empty() {
        return Err(PromptError::NoCandidates);
    }
    let listing: String = options
        .iter()
        .enumerate()
        .map(|(i, o)| format!("{}. {o}\n", i + 1))
        .collect();
    let k = options.len().to_string();
    let text = fill(
        AGGREGATION_TEMPLATE,
        &[
            ("objective", objective),
            ("candidates", &listing),
            ("k", &k),
        ],
    );
    Ok(ChatRequest::new(
        TemplateId::Aggregation,
        vec![user(vec![
            Part::Text(text),
            Part::Image(candidate_image.clone()),
        ])],
        profile,
    ))
}

pub fn render_region_box_prompt(
    profile: &BackendProfile,
    objective: &str,
    url: &str,
    image: &Screenshot,
) -> ChatRequest {
    let text = fill(
        REGION_BOX_TEMPLATE,
        &[("objective", objective), ("url", url)],
    );
    ChatRequest::new(
        TemplateId::RegionBox,
        vec![user(vec![Part::Text(text), Part::Image(image.clone())])],
        profile,
    )
}

pub fn render_trajectory_judge_prompt(
    profile: &BackendProfile,
    objective: &str,
    screenshots: &[Screenshot],
    final_response: Option<&str>,
) -> ChatRequest {
    let n = screenshots.len().to_string();
    let text = fill(
        TRAJECTORY_JUDGE_TEMPLATE,
        &[
            ("objective", objective),
            ("response", final_response.unwrap_or("(none)")),
            ("n", &n),
        ],
    );
    let mut parts = vec![Part::Text(text)];
    parts.extend(screenshots.iter().cloned().map(Part::Image));
    ChatRequest::new(TemplateId::TrajectoryJudge, vec![user(parts)], profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Dims;
    use sha2::{Digest as _, Sha256};

    fn img(c: u8) -> Screenshot {
        Screenshot::solid(Dims::new(8, 8).unwrap(), [c, c, c])
    }

    fn sha(s: &str) -> String {
        Sha256::digest(s.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    #[test]
    fn focal_prompt_substitutes_and_keeps_avoidance_clause() {
        let p = BackendProfile::ui_tars();
        let req = render_focal_prompt(&p, "buy a kettle", "https://a.com", &img(1));
        let text = req.text();
        assert!(text.contains("OBJECTIVE: buy a kettle"));
        assert!(text.contains("URL: https://a.com"));
        assert!(text.contains(
            "You must avoid the pink-starred coordinates and choose a valid clickable area."
        ));
        assert_eq!(req.image_digests(), vec![img(1).digest()]);

        let empty = render_focal_prompt(&p, "x", "", &img(1)).text();
        assert!(empty.contains("URL: \n"));
        assert_eq!(
            empty,
            FOCAL_TEMPLATE
                .replace("{objective}", "x")
                .replace("{url}", "")
        );
    }

    #[test]
    fn template_text_is_pinned() {
        assert_eq!(
            sha(FOCAL_TEMPLATE),
            "164b0084f79d0c7c9144d3d6e7deee3d4b1685f5d6e7e34c21c368378907b029"
        );
        assert_eq!(
            sha(UITARS_ACTION_TEMPLATE),
            "e8b287adefa20b3e2be0d99ba7d4348d67462953dc74b13c1b4c10157af58210"
        );
        assert_eq!(
            sha(COMPUTER_USE_SYSTEM_TEMPLATE),
            "411b23ed61575e6c93c05e4e82338e4c3a4ea0fcfc7b52eafa78aba8560ba6b7"
        );
        let a = render_focal_prompt(&BackendProfile::ui_tars(), "o", "u", &img(2)).digest();
        let b = render_focal_prompt(&BackendProfile::ui_tars(), "o", "u", &img(2)).digest();
        assert_eq!(a, b);
        assert!(UITARS_ACTION_TEMPLATE.contains("```\\nThought: ...\nAction: ...\\n```"));
        assert!(COMPUTER_USE_SYSTEM_TEMPLATE.ends_with(
            "<tool_call>\n{\"name\": <function-name>, \"arguments\": <args-json-object>}\n</tool_call>"
        ));
    }

    #[test]
    fn native_prompts_per_dialect() {
        let shot = img(3);
        let tars = render_agent_prompt(
            &BackendProfile::ui_tars(),
            TemplateId::AgentStep,
            "o",
            "u",
            &shot,
            &[],
        );
        assert_eq!(tars.messages.len(), 2);
        assert!(tars.text().contains("call_user()"));
        assert_eq!(tars.image_digests(), vec![shot.digest()]);

        let hist = vec!["Action: wait()".to_string()];
        let qwen = render_agent_prompt(
            &BackendProfile::qwen25_vl(),
            TemplateId::AgentStep,
            "o",
            "u",
            &shot,
            &hist,
        );
        assert_eq!(qwen.messages[0].role, Role::System);
        assert!(qwen
            .text()
            .contains("The screen's resolution is 2240x1260."));
        assert!(!qwen.text().contains("display_width_px"));
        assert_eq!(
            qwen.messages[2],
            Message::text(Role::Assistant, "Action: wait()")
        );
    }

    #[test]
    fn judge_prompt_restricts_tokens_and_attaches_starred_image() {
        let starred = img(9);
        let req = render_judge_prompt(&BackendProfile::ui_tars(), "close", &starred);
        assert!(req.text().contains("CORRECT or INCORRECT"));
        assert_eq!(req.image_digests(), vec![starred.digest()]);
    }

    #[test]
    fn aggregation_prompt_enumerates_labels() {
        let opts: Vec<String> = (1..=3).map(|i| format!("click at star {i}")).collect();
        let req =
            render_aggregation_prompt(&BackendProfile::ui_tars(), "o", &img(4), &opts).unwrap();
        let text = req.text();
        for i in 1..=3 {
            assert!(text.contains(&format!("{i}. click at star {i}")));
        }
        assert!(text.contains("from 1 to 3"));
        assert!(
            render_aggregation_prompt(&BackendProfile::ui_tars(), "o", &img(4), &opts[..1]).is_ok()
        );
        assert_eq!(
            render_aggregation_prompt(&BackendProfile::ui_tars(), "o", &img(4), &[]).unwrap_err(),
            PromptError::NoCandidates
        );
    }

    #[test]
    fn notes_extend_the_user_turn() {
        let req = with_note(
            render_focal_prompt(&BackendProfile::ui_tars(), "o", "u", &img(5)),
            "try again",
        );
        assert!(req.text().ends_with("try again"));
    }
}
