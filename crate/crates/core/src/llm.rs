//! Chat-completion wire client and the backend abstraction used by the
//! instruction compiler and the LLM-driven baseline policy.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmClientConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub temperature: f64,
    pub max_inflight: usize,
    pub backoff_base_s: f64,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model: "gpt-4".into(),
            token_env: "MMH_LLM_TOKEN".into(),
            timeout_s: 60.0,
            max_retries: 3,
            temperature: 0.0,
            max_inflight: 4,
            backoff_base_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid client config: {0}")]
    Config(String),
    #[error("no messages to send")]
    EmptyMessages,
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// HTTP client speaking the common chat-completions JSON shape.
pub struct HttpChatClient {
    cfg: LlmClientConfig,
    agent: ureq::Agent,
    slots: Semaphore,
}

impl HttpChatClient {
    pub fn new(cfg: LlmClientConfig) -> Result<Self, LlmError> {
        if !(cfg.timeout_s > 0.0) {
            return Err(LlmError::Config("timeout_s must be positive".into()));
        }
        if cfg.max_inflight == 0 {
            return Err(LlmError::Config("max_inflight must be at least 1".into()));
        }
        if !(cfg.backoff_base_s >= 0.0) {
            return Err(LlmError::Config("backoff_base_s must be non-negative".into()));
        }
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs_f64(cfg.timeout_s)).build();
        let slots = Semaphore { free: Mutex::new(cfg.max_inflight), cv: Condvar::new() };
        Ok(Self { cfg, agent, slots })
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.cfg
    }

    fn attempt(&self, body: &Value) -> Result<String, (LlmError, bool)> {
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Ok(token) = std::env::var(&self.cfg.token_env) {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        let resp = match req.send_json(body.clone()) {
            Ok(r) => r,
            Err(ureq::Error::Status(code @ (401 | 403), _)) => return Err((LlmError::Auth(code), false)),
            Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                return Err((LlmError::Transport(format!("HTTP {code}")), true))
            }
            Err(ureq::Error::Status(code, _)) => {
                return Err((LlmError::Protocol(format!("unexpected HTTP {code}")), false))
            }
            Err(ureq::Error::Transport(t)) => return Err((LlmError::Transport(t.to_string()), true)),
        };
        let v: Value =
            resp.into_json().map_err(|e| (LlmError::Protocol(format!("response body is not JSON: {e}")), false))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| (LlmError::Protocol("missing choices[0].message.content".into()), false))
    }
}

impl ChatBackend for HttpChatClient {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::EmptyMessages);
        }
        let body = json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": self.cfg.temperature,
        });
        let _permit = self.slots.acquire();
        let mut delay = self.cfg.backoff_base_s;
        let mut retries = 0;
        loop {
            match self.attempt(&body) {
                Ok(s) => return Ok(s),
                Err((e, true)) if retries < self.cfg.max_retries => {
                    log::warn!("chat request failed ({e}); retry {} in {delay:.2}s", retries + 1);
                    std::thread::sleep(Duration::from_secs_f64(delay));
                    delay *= 2.0;
                    retries += 1;
                }
                Err((e, _)) => return Err(e),
            }
        }
    }
}

/// Convenience wrapper: one request through any backend.
pub fn chat_request(backend: &dyn ChatBackend, messages: &[ChatMessage]) -> Result<String, LlmError> {
    backend.chat(messages)
}

/// In-memory backend replaying canned replies in order; the last reply
/// repeats once the script runs out. Records every request.
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<Result<String, LlmError>>>,
    last: Mutex<Option<Result<String, LlmError>>>,
    requests: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_results(replies.into_iter().map(|s| Ok(s.into())))
    }

    pub fn with_results(replies: impl IntoIterator<Item = Result<String, LlmError>>) -> Self {
        Self {
            replies: Mutex::new(replies.into_iter().collect()),
            last: Mutex::new(None),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::EmptyMessages);
        }
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).push(messages.to_vec());
        let next = self.replies.lock().unwrap_or_else(|e| e.into_inner()).pop_front();
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        match next {
            Some(r) => {
                *last = Some(r.clone());
                r
            }
            None => last.clone().unwrap_or_else(|| Err(LlmError::Transport("script exhausted".into()))),
        }
    }
}

pub mod stub {
    //! Minimal local HTTP server answering chat-completion requests from a
    //! fixed script, for offline tests and demos.

    use serde_json::json;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::{SocketAddr, TcpListener, TcpStream};
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::{Arc, Mutex};
    use std::thread::JoinHandle;

    #[derive(Debug, Clone)]
    pub enum StubReply {
        /// 200 with the text wrapped as `choices[0].message.content`.
        Content(String),
        /// Arbitrary status and raw body.
        Raw(u16, String),
    }

    pub struct StubServer {
        addr: SocketAddr,
        bodies: Arc<Mutex<Vec<String>>>,
        stop: Arc<AtomicBool>,
        handle: Option<JoinHandle<()>>,
    }

    impl StubServer {
        pub fn start(script: Vec<StubReply>) -> std::io::Result<Self> {
            let listener = TcpListener::bind("127.0.0.1:0")?;
            let addr = listener.local_addr()?;
            let bodies = Arc::new(Mutex::new(Vec::new()));
            let stop = Arc::new(AtomicBool::new(false));
            let (b, s) = (bodies.clone(), stop.clone());
            let handle = std::thread::spawn(move || {
                let mut i = 0usize;
                for conn in listener.incoming() {
                    if s.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = conn else { continue };
                    let reply = script.get(i.min(script.len().saturating_sub(1))).cloned();
                    i += 1;
                    let _ = serve(stream, reply, &b);
                }
            });
            Ok(Self { addr, bodies, stop, handle: Some(handle) })
        }

        pub fn url(&self) -> String {
            format!("http://{}/v1/chat/completions", self.addr)
        }

        /// Request bodies received so far.
        pub fn requests(&self) -> Vec<String> {
            self.bodies.lock().unwrap_or_else(|e| e.into_inner()).clone()
        }
    }

    impl Drop for StubServer {
        fn drop(&mut self) {
            self.stop.store(true, Ordering::SeqCst);
            let _ = TcpStream::connect(self.addr);
            if let Some(h) = self.handle.take() {
                let _ = h.join();
            }
        }
    }

    fn serve(stream: TcpStream, reply: Option<StubReply>, bodies: &Mutex<Vec<String>>) -> std::io::Result<()> {
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut len = 0usize;
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Ok(());
            }
            let t = line.trim_end();
            if t.is_empty() {
                break;
            }
            if let Some((k, v)) = t.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
        }
        let mut body = vec![0u8; len];
        reader.read_exact(&mut body)?;
        bodies.lock().unwrap_or_else(|e| e.into_inner()).push(String::from_utf8_lossy(&body).into_owned());
        let (status, text) = match reply {
            Some(StubReply::Content(c)) => {
                (200, json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": c}}]}).to_string())
            }
            Some(StubReply::Raw(code, b)) => (code, b),
            None => (500, String::new()),
        };
        let mut out = stream;
        write!(
            out,
            "HTTP/1.1 {status} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
            text.len()
        )?;
        out.flush()
    }
}
