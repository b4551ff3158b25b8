//! Live backend speaking the common chat-completions JSON format.

use std::time::Duration;

use base64::Engine as _;
use rand::Rng;
use serde_json::{json, Value};

use super::{ChatRequest, EndpointConfig, GatewayError, ModelBackend, Part, Role};

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: EndpointConfig,
    api_key: Option<String>,
}

enum Failure {
    Retry(String),
    Fatal(GatewayError),
}

impl HttpBackend {
    /// Reads the bearer token from the variable named in `endpoint.api_key_env`.
    pub fn new(endpoint: EndpointConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&endpoint.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(endpoint.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Self {
            client,
            endpoint,
            api_key,
        })
    }

    pub fn wire_body(&self, req: &ChatRequest) -> Result<Value, GatewayError> {
        let mut messages = Vec::with_capacity(req.messages.len());
        for m in &req.messages {
            let mut content = Vec::with_capacity(m.parts.len());
            for p in &m.parts {
                content.push(match p {
                    Part::Text(t) => json!({ "type": "text", "text": t }),
                    Part::Image(img) => {
                        let png = img.to_png_bytes().map_err(|e| GatewayError::Decode(e.to_string()))?;
                        let b64 = base64::engine::general_purpose::STANDARD.encode(png);
                        json!({ "type": "image_url", "image_url": { "url": format!("data:image/png;base64,{b64}") } })
                    }
                });
            }
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            messages.push(json!({ "role": role, "content": content }));
        }
        Ok(json!({
            "model": self.endpoint.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }))
    }

    fn attempt(&self, body: &Value) -> Result<String, Failure> {
        let url = format!(
            "{}/chat/completions",
            self.endpoint.base_url.trim_end_matches('/')
        );
        let mut call = self.client.post(url).json(body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| Failure::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| Failure::Retry(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(Failure::Retry(format!("HTTP {status}: {}", snippet(&text))));
        }
        if status == 413 || (status == 400 && mentions_context_limit(&text)) {
            return Err(Failure::Fatal(GatewayError::ContextLimit(snippet(&text))));
        }
        if !(200..300).contains(&status) {
            return Err(Failure::Fatal(GatewayError::Http {
                status,
                body: snippet(&text),
            }));
        }
        extract_content(&text).map_err(Failure::Fatal)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self
            .endpoint
            .backoff_base_ms
            .saturating_mul(1 << attempt.min(16));
        let jitter: f64 = rand::thread_rng().gen_range(0.5..1.5);
        Duration::from_millis((base as f64 * jitter) as u64)
    }
}

impl ModelBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let body = self.wire_body(req)?;
        let attempts = self.endpoint.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt - 1));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(why)) => {
                    log::warn!(
                        "{} attempt {}/{attempts} failed: {why}",
                        req.template,
                        attempt + 1
                    );
                    last = why;
                }
            }
        }
        Err(GatewayError::Transport {
            attempts,
            message: last,
        })
    }
}

fn snippet(s: &str) -> String {
    s.chars().take(300).collect()
}

fn mentions_context_limit(body: &str) -> bool {
    let lower = body.to_ascii_lowercase();
    [
        "context length",
        "context_length",
        "maximum context",
        "too long",
        "too many images",
    ]
    .iter()
    .any(|k| lower.contains(k))
}

fn extract_content(body: &str) -> Result<String, GatewayError> {
    let v: Value = serde_json::from_str(body).map_err(|e| GatewayError::Decode(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .ok_or_else(|| GatewayError::Decode("response has no choices[0].message.content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect()),
        other => Err(GatewayError::Decode(format!("unexpected content {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_extraction() {
        let s = r#"{"choices":[{"message":{"role":"assistant","content":"(1, 2)"}}]}"#;
        assert_eq!(extract_content(s).unwrap(), "(1, 2)");
        let a = r#"{"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]}"#;
        assert_eq!(extract_content(a).unwrap(), "ab");
        assert!(extract_content(r#"{"choices":[]}"#).is_err());
        assert!(extract_content("not json").is_err());
    }

    #[test]
    fn context_limit_detection() {
        assert!(mentions_context_limit(
            "This model's maximum context length is 32768 tokens"
        ));
        assert!(!mentions_context_limit("bad request: temperature"));
    }
}
