//! Completion clients.

use super::{EngineConfig, ReasoningError};
use serde_json::{json, Value};
use std::fmt;
use std::sync::Mutex;
use std::time::Duration;

const SYSTEM: &str = "You are a meticulous smart contract security auditor. Answer only with the requested JSON.";

/// Sends one prompt, returns the response text. Errors are plain messages
/// and must never contain the credential.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, String>;
}

/// Chat-completion client over HTTP.
pub struct HttpClient {
    endpoint: String,
    model: String,
    key: String,
    deterministic: bool,
    http: reqwest::blocking::Client,
}

impl fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpClient").field("endpoint", &self.endpoint).field("model", &self.model).field("key", &"[REDACTED]").finish()
    }
}

impl HttpClient {
    pub fn from_config(cfg: &EngineConfig) -> Result<Self, ReasoningError> {
        let var = cfg.api_key_env.clone().ok_or_else(|| ReasoningError::BadConfig("remote mode needs --api-key-env".into()))?;
        let key = std::env::var(&var)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| ReasoningError::EngineUnreachable(format!("credential variable {var} is not set")))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| ReasoningError::EngineUnreachable(format!("http client: {e}")))?;
        Ok(HttpClient {
            endpoint: cfg.endpoint.clone().unwrap_or_default(),
            model: cfg.model.clone().unwrap_or_default(),
            key,
            deterministic: cfg.deterministic,
            http,
        })
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": SYSTEM},
                {"role": "user", "content": prompt},
            ],
        });
        if self.deterministic {
            body["temperature"] = json!(0);
            body["top_p"] = json!(1);
            body["seed"] = json!(0);
        }
        body
    }
}

/// Text of the first choice in a chat-completion response.
pub fn response_text(v: &Value) -> Option<String> {
    let c = v.get("choices")?.get(0)?;
    c.pointer("/message/content").or_else(|| c.get("text")).and_then(Value::as_str).map(str::to_string)
}

impl CompletionClient for HttpClient {
    fn complete(&self, prompt: &str) -> Result<String, String> {
        let resp = self
            .http
            .post(&self.endpoint)
            .bearer_auth(&self.key)
            .json(&self.request_body(prompt))
            .send()
            // reqwest errors carry the URL, never headers
            .map_err(|e| format!("request failed: {}", e.without_url()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("endpoint answered {status}"));
        }
        let v: Value = resp.json().map_err(|e| format!("response is not JSON: {}", e.without_url()))?;
        response_text(&v).ok_or_else(|| "response has no choices".to_string())
    }
}

type Responder = dyn Fn(&str, usize) -> Result<String, String> + Send + Sync;

/// Client answering from a closure of (prompt, call number); records every
/// prompt it receives.
pub struct ScriptedClient {
    responder: Box<Responder>,
    calls: Mutex<Vec<String>>,
}

impl ScriptedClient {
    pub fn new(f: impl Fn(&str, usize) -> Result<String, String> + Send + Sync + 'static) -> Self {
        ScriptedClient { responder: Box::new(f), calls: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().expect("lock").clone()
    }
}

impl CompletionClient for ScriptedClient {
    fn complete(&self, prompt: &str) -> Result<String, String> {
        let n = {
            let mut c = self.calls.lock().expect("lock");
            c.push(prompt.to_string());
            c.len() - 1
        };
        (self.responder)(prompt, n)
    }
}

impl<T: CompletionClient + ?Sized> CompletionClient for std::sync::Arc<T> {
    fn complete(&self, prompt: &str) -> Result<String, String> {
        (**self).complete(prompt)
    }
}
