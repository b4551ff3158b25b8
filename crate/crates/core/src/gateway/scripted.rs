//! Deterministic mock backend driven by a JSON rule list.
//!
//! ```json
//! {"rules": [
//!   {"template": "focal_proposal", "replies": ["(312, 480)"]},
//!   {"template": "region_action:0", "replies": ["Action: click(start_box='(10,10)')"]},
//!   {"template": "*", "contains": "kettle", "image": "00ab12cd34ef5678", "replies": ["1"], "sticky": false}
//! ]}
//! ```
//!
//! The first rule whose filters all match and which still has a reply
//! answers. Replies are consumed in order; a `sticky` rule (the default)
//! keeps repeating its last reply once exhausted. `template` is `*`, a base
//! name such as `region_action` (any index), or an exact id. Concurrent
//! region requests should use indexed rules so consumption order does not
//! depend on thread scheduling.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatRequest, GatewayError, ModelBackend};
use crate::canvas::Digest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub replies: Vec<String>,
    #[serde(default = "sticky_default")]
    pub sticky: bool,
}

fn sticky_default() -> bool {
    true
}

impl MockRule {
    pub fn new(template: impl Into<String>, replies: Vec<String>) -> Self {
        Self {
            template: template.into(),
            image: None,
            contains: None,
            replies,
            sticky: true,
        }
    }

    pub fn once(mut self) -> Self {
        self.sticky = false;
        self
    }

    pub fn with_image(mut self, digest: Digest) -> Self {
        self.image = Some(digest);
        self
    }

    pub fn containing(mut self, text: impl Into<String>) -> Self {
        self.contains = Some(text.into());
        self
    }

    fn matches(&self, req: &ChatRequest) -> bool {
        let id = req.template.to_string();
        let template_ok = self.template == "*"
            || self.template == id
            || self.template == req.template.base_name();
        template_ok
            && self.image.is_none_or(|d| req.image_digests().contains(&d))
            && self
                .contains
                .as_ref()
                .is_none_or(|c| req.text().contains(c.as_str()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
}

impl MockScript {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| GatewayError::Script(format!("{}: {e}", path.display())))
    }
}

pub struct ScriptedBackend {
    script: MockScript,
    cursors: Mutex<Vec<usize>>,
}

impl ScriptedBackend {
    pub fn new(script: MockScript) -> Self {
        let cursors = Mutex::new(vec![0; script.rules.len()]);
        Self { script, cursors }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        MockScript::load(path).map(Self::new)
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let mut cursors = self.cursors.lock().expect("mock cursor lock");
        for (rule, cursor) in self.script.rules.iter().zip(cursors.iter_mut()) {
            if !rule.matches(req) {
                continue;
            }
            if let Some(reply) = rule.replies.get(*cursor) {
                *cursor += 1;
                return Ok(reply.clone());
            }
            if rule.sticky {
                if let Some(last) = rule.replies.last() {
                    return Ok(last.clone());
                }
            }
        }
        Err(GatewayError::Script(format!(
            "no scripted reply for {} request {}",
            req.template,
            req.digest()
        )))
    }
}
