//! Client side of the browser-bridge WebSocket protocol.
//!
//! Every frame is one JSON object. Requests carry a strictly increasing `id`,
//! an `op` and op-specific `params`; each is answered exactly once:
//!
//! ```json
//! {"id": 3, "op": "click", "params": {"x": 120, "y": 48}}
//! {"id": 3, "status": "ok", "payload": {}}
//! {"id": 4, "op": "observe", "params": {}}
//! {"id": 4, "status": "ok", "payload": {"png": "<base64>", "url": "http://..."}}
//! {"id": 5, "status": "error", "error": "x=5000 is outside the 1440x1440 viewport"}
//! ```
//!
//! | op             | params                                     |
//! |----------------|--------------------------------------------|
//! | `navigate`     | `url`                                      |
//! | `observe`      | none                                       |
//! | `click`, `double_click`, `right_click` | `x`, `y`           |
//! | `type`         | `text`, `submit` (bool)                    |
//! | `key`          | `keys` (array of key names)                |
//! | `scroll`       | optional `x`, `y`; `direction` or `amount` |
//! | `drag`         | `x`, `y`, `to_x`, `to_y`                   |
//! | `wait`         | `ms`                                       |
//! | `close`        | none                                       |

use std::net::TcpStream;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use super::{split_submit, EnvError, EnvKind, Environment, StepOutcome};
use crate::actions::{Action, ActionKind};
use crate::canvas::Screenshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeRequest {
    pub id: u64,
    pub op: String,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeReply {
    pub id: Option<u64>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub payload: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BridgeReply {
    pub fn ok(id: u64, payload: Value) -> Self {
        Self {
            id: Some(id),
            status: "ok".into(),
            payload,
            error: None,
        }
    }

    pub fn error(id: Option<u64>, message: impl Into<String>) -> Self {
        Self {
            id,
            status: "error".into(),
            payload: Value::Null,
            error: Some(message.into()),
        }
    }
}

/// Protocol op and params for an action; `None` for terminal actions.
pub fn action_request(
    action: &Action,
    wait_ms: u64,
) -> Result<Option<(&'static str, Value)>, EnvError> {
    let xy = |a: &Action| {
        a.start
            .map(|p| (p.x, p.y))
            .ok_or_else(|| EnvError::Malformed(format!("{a} needs a point")))
    };
    Ok(Some(match action.kind {
        ActionKind::Click => {
            let (x, y) = xy(action)?;
            ("click", json!({ "x": x, "y": y }))
        }
        ActionKind::DoubleClick => {
            let (x, y) = xy(action)?;
            ("double_click", json!({ "x": x, "y": y }))
        }
        ActionKind::RightClick => {
            let (x, y) = xy(action)?;
            ("right_click", json!({ "x": x, "y": y }))
        }
        ActionKind::Drag => {
            let (x, y) = xy(action)?;
            let end = action
                .end
                .ok_or_else(|| EnvError::Malformed("drag needs an end point".into()))?;
            (
                "drag",
                json!({ "x": x, "y": y, "to_x": end.x, "to_y": end.y }),
            )
        }
        ActionKind::Type => {
            let (text, submit) = split_submit(action.text.as_deref().unwrap_or_default());
            ("type", json!({ "text": text, "submit": submit }))
        }
        ActionKind::Hotkey => {
            let keys: Vec<&str> = action
                .text
                .as_deref()
                .unwrap_or_default()
                .split_whitespace()
                .collect();
            ("key", json!({ "keys": keys }))
        }
        ActionKind::Scroll => {
            let mut params = serde_json::Map::new();
            if let Some(p) = action.start {
                params.insert("x".into(), json!(p.x));
                params.insert("y".into(), json!(p.y));
            }
            if let Some(d) = action.direction {
                params.insert("direction".into(), json!(d.as_str()));
            }
            if let Some(a) = action.amount {
                params.insert("amount".into(), json!(a));
            }
            ("scroll", Value::Object(params))
        }
        ActionKind::Wait => ("wait", json!({ "ms": wait_ms })),
        ActionKind::MouseMove => {
            return Err(EnvError::Unsupported(
                "the bridge has no pointer-move op".into(),
            ))
        }
        ActionKind::Finished | ActionKind::CallUser | ActionKind::Terminate => return Ok(None),
    }))
}

/// A real browser behind the bridge.
pub struct BridgeEnvironment {
    socket: WebSocket<MaybeTlsStream<TcpStream>>,
    next_id: u64,
    url: String,
    settle: Duration,
    wait_ms: u64,
    closed: bool,
}

impl BridgeEnvironment {
    /// Connect and, when `start_url` is given, navigate there.
    pub fn connect(
        address: &str,
        start_url: Option<&str>,
        settle: Duration,
    ) -> Result<Self, EnvError> {
        let (socket, _) =
            tungstenite::connect(address).map_err(|e| EnvError::Protocol(e.to_string()))?;
        let mut env = Self {
            socket,
            next_id: 1,
            url: String::new(),
            settle,
            wait_ms: 5000,
            closed: false,
        };
        if let Some(u) = start_url {
            env.request("navigate", json!({ "url": u }))?;
            env.url = u.to_string();
        }
        Ok(env)
    }

    pub fn with_wait_ms(mut self, ms: u64) -> Self {
        self.wait_ms = ms;
        self
    }

    /// Send one request and wait for its reply payload.
    pub fn request(&mut self, op: &str, params: Value) -> Result<Value, EnvError> {
        if self.closed {
            return Err(EnvError::Closed);
        }
        let id = self.next_id;
        self.next_id += 1;
        let req = BridgeRequest {
            id,
            op: op.to_string(),
            params,
        };
        let frame = serde_json::to_string(&req).expect("request serializes");
        self.socket
            .send(Message::Text(frame))
            .map_err(|e| EnvError::Protocol(e.to_string()))?;
        loop {
            let msg = self
                .socket
                .read()
                .map_err(|e| EnvError::Protocol(e.to_string()))?;
            let text = match msg {
                Message::Text(t) => t,
                Message::Close(_) => {
                    return Err(EnvError::Protocol("bridge closed the connection".into()))
                }
                _ => continue,
            };
            let reply: BridgeReply = serde_json::from_str(&text)
                .map_err(|e| EnvError::Protocol(format!("bad reply {text:?}: {e}")))?;
            if reply.id != Some(id) {
                return Err(EnvError::Protocol(format!(
                    "expected reply {id}, got {:?}",
                    reply.id
                )));
            }
            return match reply.status.as_str() {
                "ok" => Ok(reply.payload),
                _ => Err(EnvError::Remote(
                    reply.error.unwrap_or_else(|| "unspecified error".into()),
                )),
            };
        }
    }
}

impl Environment for BridgeEnvironment {
    fn observe(&mut self) -> Result<Screenshot, EnvError> {
        let payload = self.request("observe", json!({}))?;
        if let Some(u) = payload.get("url").and_then(Value::as_str) {
            self.url = u.to_string();
        }
        let b64 = payload
            .get("png")
            .and_then(Value::as_str)
            .ok_or_else(|| EnvError::Protocol("observe reply has no png".into()))?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(b64)
            .map_err(|e| EnvError::Protocol(format!("png is not base64: {e}")))?;
        Ok(Screenshot::from_png_bytes(&bytes)?)
    }

    fn apply(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        action
            .validate()
            .map_err(|e| EnvError::Malformed(e.to_string()))?;
        let terminated = match action_request(action, self.wait_ms)? {
            Some((op, params)) => {
                self.request(op, params)?;
                false
            }
            None => true,
        };
        if !self.settle.is_zero() {
            std::thread::sleep(self.settle);
        }
        let screenshot = self.observe()?;
        Ok(StepOutcome {
            screenshot,
            terminated,
            info: format!("{action}"),
        })
    }

    fn url(&self) -> String {
        self.url.clone()
    }

    fn kind(&self) -> EnvKind {
        EnvKind::Interactive
    }

    fn close(&mut self) {
        if !self.closed {
            let _ = self.request("close", json!({}));
            let _ = self.socket.close(None);
            self.closed = true;
        }
    }
}

impl Drop for BridgeEnvironment {
    fn drop(&mut self) {
        self.close();
    }
}

/// In-process bridge for tests: one page with a button that changes colour
/// when clicked and a text field that shows typed text.
pub mod stub {
    use std::net::{SocketAddr, TcpListener};
    use std::thread::JoinHandle;

    use base64::Engine as _;
    use image::{Rgb, RgbImage};
    use serde_json::{json, Value};
    use tungstenite::Message;

    use super::{BridgeReply, BridgeRequest};
    use crate::canvas::{self, Screenshot};
    use crate::geometry::Dims;
    use crate::RegionBox;

    pub fn button_box(viewport: Dims) -> RegionBox {
        let (cx, cy) = (viewport.width() as i64 / 2, viewport.height() as i64 / 2);
        RegionBox {
            x0: cx - 60,
            y0: cy - 20,
            x1: cx + 60,
            y1: cy + 20,
            source_ratio: None,
        }
    }

    pub fn field_box(viewport: Dims) -> RegionBox {
        let cx = viewport.width() as i64 / 2;
        RegionBox {
            x0: cx - 150,
            y0: 40,
            x1: cx + 150,
            y1: 80,
            source_ratio: None,
        }
    }

    struct Page {
        viewport: Dims,
        url: String,
        pressed: bool,
        text: String,
        last_id: u64,
    }

    impl Page {
        fn render(&self) -> Screenshot {
            let mut img = RgbImage::from_pixel(
                self.viewport.width(),
                self.viewport.height(),
                Rgb([245, 245, 245]),
            );
            let color = if self.pressed {
                [40, 160, 60]
            } else {
                [40, 90, 200]
            };
            canvas::fill_rect(&mut img, &button_box(self.viewport), color);
            let field = field_box(self.viewport);
            canvas::stroke_rect(&mut img, &field, 1, [90, 90, 90]);
            canvas::draw_text(
                &mut img,
                &self.text,
                field.x0 + 6,
                field.y0 + 12,
                2,
                [0, 0, 0],
            );
            Screenshot::from_rgb(img).expect("viewport is positive")
        }

        fn point(&self, params: &Value, kx: &str, ky: &str) -> Result<(u32, u32), String> {
            let get = |k: &str| {
                params
                    .get(k)
                    .and_then(Value::as_u64)
                    .ok_or(format!("missing integer {k}"))
            };
            let (x, y) = (get(kx)?, get(ky)?);
            if x >= self.viewport.width() as u64 || y >= self.viewport.height() as u64 {
                return Err(format!(
                    "({x}, {y}) is outside the {} viewport",
                    self.viewport
                ));
            }
            Ok((x as u32, y as u32))
        }

        fn handle(&mut self, req: &BridgeRequest) -> Result<Value, String> {
            if req.id <= self.last_id {
                return Err(format!(
                    "id {} is not greater than {}",
                    req.id, self.last_id
                ));
            }
            self.last_id = req.id;
            let p = &req.params;
            match req.op.as_str() {
                "navigate" => {
                    self.url = p
                        .get("url")
                        .and_then(Value::as_str)
                        .ok_or("missing url")?
                        .to_string();
                    self.pressed = false;
                    self.text.clear();
                }
                "observe" => {
                    let png = self.render().to_png_bytes().map_err(|e| e.to_string())?;
                    let b64 = base64::engine::general_purpose::STANDARD.encode(png);
                    return Ok(json!({ "png": b64, "url": self.url }));
                }
                "click" | "double_click" | "right_click" => {
                    let (x, y) = self.point(p, "x", "y")?;
                    if req.op == "click"
                        && button_box(self.viewport).covers(crate::Point::new(x, y))
                    {
                        self.pressed = !self.pressed;
                    }
                }
                "drag" => {
                    self.point(p, "x", "y")?;
                    self.point(p, "to_x", "to_y")?;
                }
                "type" => self.text.push_str(
                    p.get("text")
                        .and_then(Value::as_str)
                        .ok_or("missing text")?,
                ),
                "key" => {
                    p.get("keys")
                        .and_then(Value::as_array)
                        .ok_or("missing keys")?;
                }
                "scroll" => {
                    if p.get("x").is_some() {
                        self.point(p, "x", "y")?;
                    }
                }
                "wait" | "close" => {}
                other => return Err(format!("unknown op {other:?}")),
            }
            Ok(json!({}))
        }
    }

    pub struct StubServer {
        addr: SocketAddr,
        handle: Option<JoinHandle<()>>,
    }

    impl StubServer {
        /// Listen on an ephemeral local port and serve one controller.
        pub fn start(viewport: Dims) -> std::io::Result<Self> {
            let listener = TcpListener::bind("127.0.0.1:0")?;
            let addr = listener.local_addr()?;
            let handle = std::thread::spawn(move || {
                let Ok((stream, _)) = listener.accept() else {
                    return;
                };
                let Ok(mut ws) = tungstenite::accept(stream) else {
                    return;
                };
                let mut page = Page {
                    viewport,
                    url: "about:blank".into(),
                    pressed: false,
                    text: String::new(),
                    last_id: 0,
                };
                while let Ok(msg) = ws.read() {
                    let text = match msg {
                        Message::Text(t) => t,
                        Message::Close(_) => break,
                        _ => continue,
                    };
                    let (reply, done) = match serde_json::from_str::<BridgeRequest>(&text) {
                        Ok(req) => {
                            let done = req.op == "close";
                            match page.handle(&req) {
                                Ok(payload) => (BridgeReply::ok(req.id, payload), done),
                                Err(e) => (BridgeReply::error(Some(req.id), e), false),
                            }
                        }
                        Err(e) => {
                            let id = serde_json::from_str::<Value>(&text)
                                .ok()
                                .and_then(|v| v.get("id")?.as_u64());
                            (
                                BridgeReply::error(id, format!("malformed request: {e}")),
                                false,
                            )
                        }
                    };
                    let frame = serde_json::to_string(&reply).expect("reply serializes");
                    if ws.send(Message::Text(frame)).is_err() || done {
                        break;
                    }
                }
            });
            Ok(Self {
                addr,
                handle: Some(handle),
            })
        }

        pub fn url(&self) -> String {
            format!("ws://{}", self.addr)
        }

        pub fn join(mut self) {
            if let Some(h) = self.handle.take() {
                let _ = h.join();
            }
        }
    }
}
