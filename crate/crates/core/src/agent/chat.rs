//! Chat-completions transport: a live HTTP client and a scripted mock.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub const API_KEY_VAR: &str = "ADSORB_AGENT_API_KEY";
pub const BASE_URL_VAR: &str = "ADSORB_AGENT_BASE_URL";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChatError {
    #[error("authentication failed (HTTP {status}); set {var} to a valid API key")]
    Auth { status: u16, var: &'static str },
    #[error("no API key: set {0}")]
    MissingKey(&'static str),
    #[error("chat request timed out after {seconds} s")]
    Timeout { seconds: f64 },
    #[error("chat transport error: {0}")]
    Transport(String),
    #[error("chat endpoint returned HTTP {status}: {excerpt}")]
    Http { status: u16, excerpt: String },
    #[error("chat response does not match the schema ({reason}): {excerpt}")]
    Schema { reason: String, excerpt: String },
    #[error("invalid chat request: {0}")]
    Request(String),
    #[error("mock chat: {0}")]
    Mock(String),
}

impl ChatError {
    fn retryable(&self) -> bool {
        match self {
            ChatError::Timeout { .. } | ChatError::Transport(_) => true,
            ChatError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    /// Attempts per module (planner parse retries, planner/critic cycles,
    /// transport retries).
    pub max_retries: usize,
    pub timeout_secs: f64,
    /// First backoff delay; doubles on each retry.
    pub backoff_ms: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            temperature: 1.0,
            top_p: 1.0,
            max_retries: 3,
            timeout_secs: 60.0,
            backoff_ms: 500,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), ChatError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ChatError::Request(format!(
                "temperature {} must be ≥ 0",
                self.temperature
            )));
        }
        if self.max_retries < 1 {
            return Err(ChatError::Request("max_retries must be ≥ 1".into()));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(ChatError::Request("timeout must be positive".into()));
        }
        Ok(())
    }
}

pub trait ChatBackend: Send {
    fn chat(&mut self, messages: &[Message]) -> Result<String, ChatError>;
}

fn excerpt(s: &str) -> String {
    const MAX: usize = 200;
    match s.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}…", &s[..i]),
        None => s.to_string(),
    }
}

/// `choices[0].message.content` of a chat-completions body.
pub fn extract_content(body: &str) -> Result<String, ChatError> {
    let schema = |reason: &str| ChatError::Schema {
        reason: reason.into(),
        excerpt: excerpt(body),
    };
    let v: Value = serde_json::from_str(body).map_err(|e| schema(&format!("not JSON: {e}")))?;
    let first = v
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or_else(|| schema("missing choices[0]"))?;
    first
        .pointer("/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| schema("missing choices[0].message.content"))
}

pub struct HttpChat {
    config: LlmConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpChat {
    pub fn new(config: LlmConfig, api_key: impl Into<String>) -> Result<Self, ChatError> {
        config.validate()?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build();
        Ok(HttpChat {
            config,
            api_key: api_key.into(),
            agent,
        })
    }

    /// Key from ADSORB_AGENT_API_KEY; ADSORB_AGENT_BASE_URL overrides the
    /// configured endpoint.
    pub fn from_env(mut config: LlmConfig) -> Result<Self, ChatError> {
        let key = std::env::var(API_KEY_VAR)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(ChatError::MissingKey(API_KEY_VAR))?;
        if let Ok(url) = std::env::var(BASE_URL_VAR) {
            if !url.trim().is_empty() {
                config.base_url = url;
            }
        }
        Self::new(config, key)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &Value) -> Result<String, ChatError> {
        let response = self
            .agent
            .post(&self.endpoint())
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body.clone());
        match response {
            Ok(r) => {
                let text = r.into_string().map_err(|e| ChatError::Transport(e.to_string()))?;
                extract_content(&text)
            }
            Err(ureq::Error::Status(status @ (401 | 403), _)) => Err(ChatError::Auth {
                status,
                var: API_KEY_VAR,
            }),
            Err(ureq::Error::Status(status, r)) => Err(ChatError::Http {
                status,
                excerpt: excerpt(&r.into_string().unwrap_or_default()),
            }),
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") || msg.contains("Timeout") {
                    Err(ChatError::Timeout {
                        seconds: self.config.timeout_secs,
                    })
                } else {
                    Err(ChatError::Transport(msg))
                }
            }
        }
    }
}

impl ChatBackend for HttpChat {
    fn chat(&mut self, messages: &[Message]) -> Result<String, ChatError> {
        if messages.is_empty() {
            return Err(ChatError::Request("no messages".into()));
        }
        let body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
            "top_p": self.config.top_p,
        });
        let mut delay = self.config.backoff_ms;
        let mut n = 1;
        loop {
            match self.attempt(&body) {
                Err(e) if e.retryable() && n < self.config.max_retries => {
                    std::thread::sleep(Duration::from_millis(delay));
                    delay = delay.saturating_mul(2);
                    n += 1;
                }
                other => return other,
            }
        }
    }
}

/// One fixture file: `{"match": {"system": ...}, "responses": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(rename = "match")]
    pub matcher: MockMatch,
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockMatch {
    pub system: String,
}

/// Replays scripted replies in order, regardless of what is asked.
#[derive(Debug, Clone)]
pub struct MockChat {
    responses: Vec<String>,
    cursor: usize,
    pub calls: Vec<Vec<Message>>,
}

impl MockChat {
    pub fn scripted(responses: Vec<String>) -> Self {
        MockChat {
            responses,
            cursor: 0,
            calls: Vec::new(),
        }
    }

    /// Loads the fixture in `dir` whose `match.system` equals `system`.
    pub fn load(dir: &Path, system: &str) -> Result<Self, ChatError> {
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| ChatError::Mock(format!("cannot read {}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for path in files {
            let text =
                std::fs::read_to_string(&path).map_err(|e| ChatError::Mock(format!("{}: {e}", path.display())))?;
            let script: MockScript =
                serde_json::from_str(&text).map_err(|e| ChatError::Mock(format!("{}: {e}", path.display())))?;
            if script.matcher.system == system {
                return Ok(Self::scripted(script.responses));
            }
        }
        Err(ChatError::Mock(format!(
            "no fixture in {} matches system '{system}'",
            dir.display()
        )))
    }

    pub fn remaining(&self) -> usize {
        self.responses.len() - self.cursor
    }
}

impl ChatBackend for MockChat {
    fn chat(&mut self, messages: &[Message]) -> Result<String, ChatError> {
        if messages.is_empty() {
            return Err(ChatError::Request("no messages".into()));
        }
        self.calls.push(messages.to_vec());
        let reply = self
            .responses
            .get(self.cursor)
            .cloned()
            .ok_or_else(|| ChatError::Mock(format!("script exhausted after {} replies", self.responses.len())))?;
        self.cursor += 1;
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::thread;

    /// Local stand-in for a chat-completions server. Each request is passed
    /// to `reply`, which returns (status, body, delay).
    fn serve(reply: impl Fn(usize, &str) -> (u16, String, u64) + Send + 'static) -> (String, Arc<AtomicUsize>) {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", server.server_addr().to_ip().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        thread::spawn(move || {
            for mut req in server.incoming_requests() {
                let mut body = String::new();
                req.as_reader().read_to_string(&mut body).unwrap();
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let (status, text, delay) = reply(n, &body);
                thread::spawn(move || {
                    thread::sleep(Duration::from_millis(delay));
                    let _ = req.respond(tiny_http::Response::from_string(text).with_status_code(status));
                });
            }
        });
        (url, hits)
    }

    fn config(url: &str) -> LlmConfig {
        LlmConfig {
            base_url: url.into(),
            timeout_secs: 0.5,
            backoff_ms: 1,
            ..LlmConfig::default()
        }
    }

    fn ok_body(content: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    #[test]
    fn round_trip_sends_the_wire_fields() {
        let (url, _) = serve(|_, body| {
            let v: Value = serde_json::from_str(body).unwrap();
            let echo = format!(
                "{}|{}|{}|{}",
                v["model"], v["messages"][0]["role"], v["messages"][0]["content"], v["temperature"]
            );
            (200, ok_body(&echo), 0)
        });
        let mut c = HttpChat::new(config(&url), "k").unwrap();
        let reply = c.chat(&[Message::user("hi")]).unwrap();
        assert_eq!(reply, "\"gpt-4o\"|\"user\"|\"hi\"|1.0");
    }

    #[test]
    fn unauthorized_names_the_variable_and_is_not_retried() {
        let (url, hits) = serve(|_, _| (401, "{}".into(), 0));
        let err = HttpChat::new(config(&url), "bad")
            .unwrap()
            .chat(&[Message::user("x")])
            .unwrap_err();
        assert!(matches!(err, ChatError::Auth { status: 401, .. }));
        assert!(err.to_string().contains(API_KEY_VAR));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn missing_choices_is_a_schema_error_with_excerpt() {
        let (url, _) = serve(|_, _| (200, r#"{"object":"chat.completion","choices":[]}"#.into(), 0));
        match HttpChat::new(config(&url), "k").unwrap().chat(&[Message::user("x")]) {
            Err(ChatError::Schema { excerpt, .. }) => assert!(excerpt.contains("chat.completion")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn timeout_is_distinct_and_retried() {
        let (url, hits) = serve(|_, _| (200, ok_body("late"), 1500));
        let err = HttpChat::new(config(&url), "k")
            .unwrap()
            .chat(&[Message::user("x")])
            .unwrap_err();
        assert!(matches!(err, ChatError::Timeout { .. }), "{err:?}");
        thread::sleep(Duration::from_millis(100));
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn server_errors_are_retried_then_succeed() {
        let (url, hits) = serve(|n, _| {
            if n < 2 {
                (503, "busy".into(), 0)
            } else {
                (200, ok_body("ok"), 0)
            }
        });
        assert_eq!(
            HttpChat::new(config(&url), "k")
                .unwrap()
                .chat(&[Message::user("x")])
                .unwrap(),
            "ok"
        );
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn config_validation() {
        assert!(LlmConfig {
            temperature: -0.1,
            ..LlmConfig::default()
        }
        .validate()
        .is_err());
        assert!(LlmConfig {
            max_retries: 0,
            ..LlmConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn mock_replays_in_order_and_exhausts() {
        let mut m = MockChat::scripted(vec!["a".into(), "b".into()]);
        let msgs = [Message::user("q")];
        assert_eq!(m.chat(&msgs).unwrap(), "a");
        assert_eq!(m.chat(&msgs).unwrap(), "b");
        assert!(matches!(m.chat(&msgs), Err(ChatError::Mock(_))));
    }

    #[test]
    fn mock_loads_by_system() {
        let dir = tempfile::tempdir().unwrap();
        for (f, sys) in [("a.json", "H/Pt(111)"), ("b.json", "OH/Au(111)")] {
            let s = MockScript {
                matcher: MockMatch { system: sys.into() },
                responses: vec![sys.to_string()],
            };
            std::fs::write(dir.path().join(f), serde_json::to_string(&s).unwrap()).unwrap();
        }
        let mut m = MockChat::load(dir.path(), "OH/Au(111)").unwrap();
        assert_eq!(m.chat(&[Message::user("q")]).unwrap(), "OH/Au(111)");
        assert!(MockChat::load(dir.path(), "NNH/Pt(111)").is_err());
    }

    #[test]
    fn missing_key_in_env() {
        // the variable is never set in the test environment
        if std::env::var(API_KEY_VAR).is_err() {
            assert!(matches!(
                HttpChat::from_env(LlmConfig::default()),
                Err(ChatError::MissingKey(API_KEY_VAR))
            ));
        }
    }
}
