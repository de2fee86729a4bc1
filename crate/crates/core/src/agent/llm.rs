//! Chat-completion client over a pluggable HTTP transport.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ledger::{CostLedger, Usage};
use super::prompt::{Message, Role};
use super::schema::{prefill_for, OutputSchema};

pub const ENV_ENDPOINT: &str = "CHAOSCYCLE_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "CHAOSCYCLE_LLM_API_KEY";
pub const ENV_MODEL: &str = "CHAOSCYCLE_LLM_MODEL";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-4o-2024-08-06";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("no API key: set {ENV_API_KEY} or OPENAI_API_KEY")]
    MissingCredential,
    #[error("transport failed: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("unexpected provider response: {0}")]
    BadResponse(String),
    #[error(transparent)]
    Schema(#[from] super::schema::OutputError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

pub trait Transport {
    fn post_json(&self, url: &str, headers: &[(&str, String)], body: &Value) -> Result<HttpResponse, String>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmConfig {
    pub endpoint: String,
    pub api_key: String,
    pub model: String,
}

impl LlmConfig {
    /// Reads endpoint, key and model from the environment; fails before any call when the key is missing.
    pub fn from_env() -> Result<Self, LlmError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, LlmError> {
        let api_key = get(ENV_API_KEY)
            .or_else(|| get("OPENAI_API_KEY"))
            .filter(|k| !k.trim().is_empty())
            .ok_or(LlmError::MissingCredential)?;
        Ok(LlmConfig {
            endpoint: get(ENV_ENDPOINT).unwrap_or_else(|| DEFAULT_ENDPOINT.into()),
            api_key,
            model: get(ENV_MODEL).unwrap_or_else(|| DEFAULT_MODEL.into()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChatParams {
    pub temperature: f64,
    pub seed: u64,
}

impl Default for ChatParams {
    fn default() -> Self {
        ChatParams {
            temperature: 0.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub max_attempts: u32,
    pub base_ms: u64,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            max_attempts: 5,
            base_ms: 1000,
        }
    }
}

pub struct LlmClient<T: Transport> {
    pub config: LlmConfig,
    pub transport: T,
    pub backoff: Backoff,
    pub sleep: Box<dyn Fn(u64)>,
}

impl<T: Transport> LlmClient<T> {
    pub fn new(config: LlmConfig, transport: T) -> Self {
        LlmClient {
            config,
            transport,
            backoff: Backoff::default(),
            sleep: Box::new(|ms| std::thread::sleep(std::time::Duration::from_millis(ms))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    /// Reply text without the prefill.
    pub text: String,
    pub usage: Usage,
    pub attempts: u32,
}

fn role(r: Role) -> &'static str {
    match r {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || status >= 500
}

/// Sends messages plus the schema prefill; retries 429 and 5xx with exponential backoff.
/// Usage is recorded in `ledger` under `phase`.
pub fn chat_complete<T: Transport>(
    client: &LlmClient<T>,
    messages: &[Message],
    schema: &OutputSchema,
    params: ChatParams,
    ledger: &mut CostLedger,
    phase: &str,
) -> Result<Completion, LlmError> {
    let prefill = prefill_for(schema)?;
    let mut msgs: Vec<Value> = messages
        .iter()
        .map(|m| json!({"role": role(m.role), "content": m.content}))
        .collect();
    msgs.push(json!({"role": "assistant", "content": prefill}));
    let body = json!({
        "model": client.config.model,
        "messages": msgs,
        "temperature": params.temperature,
        "seed": params.seed,
    });
    let headers = [("Authorization", format!("Bearer {}", client.config.api_key))];
    let mut last = String::new();
    for attempt in 1..=client.backoff.max_attempts.max(1) {
        if attempt > 1 {
            (client.sleep)(client.backoff.base_ms << (attempt - 2).min(16));
        }
        let resp = match client.transport.post_json(&client.config.endpoint, &headers, &body) {
            Ok(r) => r,
            Err(e) => {
                last = e;
                continue;
            }
        };
        if retryable(resp.status) {
            last = format!("HTTP {}", resp.status);
            continue;
        }
        if resp.status >= 400 {
            return Err(LlmError::Status {
                status: resp.status,
                body: resp.body,
            });
        }
        let v: Value = serde_json::from_str(&resp.body).map_err(|e| LlmError::BadResponse(e.to_string()))?;
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::BadResponse("no choices[0].message.content".into()))?
            .to_string();
        let usage = Usage {
            input_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            output_tokens: v
                .pointer("/usage/completion_tokens")
                .and_then(Value::as_u64)
                .unwrap_or(0),
        };
        ledger.record(phase, usage);
        return Ok(Completion {
            text,
            usage,
            attempts: attempt,
        });
    }
    Err(LlmError::RetriesExhausted {
        attempts: client.backoff.max_attempts.max(1),
        last,
    })
}

#[cfg(feature = "http")]
pub struct UreqTransport {
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl Default for UreqTransport {
    fn default() -> Self {
        UreqTransport {
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(300))
                .build(),
        }
    }
}

#[cfg(feature = "http")]
impl Transport for UreqTransport {
    fn post_json(&self, url: &str, headers: &[(&str, String)], body: &Value) -> Result<HttpResponse, String> {
        let mut req = self.agent.post(url);
        for (k, v) in headers {
            req = req.set(k, v);
        }
        match req.send_json(body) {
            Ok(resp) => Ok(HttpResponse {
                status: resp.status(),
                body: resp.into_string().map_err(|e| e.to_string())?,
            }),
            Err(ureq::Error::Status(status, resp)) => Ok(HttpResponse {
                status,
                body: resp.into_string().unwrap_or_default(),
            }),
            Err(e) => Err(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::cell::RefCell;

    use super::*;
    use crate::agent::schema::{parse_structured_output, FieldKind, SchemaField};

    struct Scripted(RefCell<Vec<HttpResponse>>, RefCell<u32>);

    impl Transport for Scripted {
        fn post_json(&self, _: &str, _: &[(&str, String)], body: &Value) -> Result<HttpResponse, String> {
            *self.1.borrow_mut() += 1;
            let last = body["messages"].as_array().unwrap().last().unwrap().clone();
            assert_eq!(last["role"], "assistant");
            Ok(self.0.borrow_mut().remove(0))
        }
    }

    fn ok(content: &str) -> HttpResponse {
        HttpResponse {
            status: 200,
            body: json!({
                "choices": [{"message": {"content": content}}],
                "usage": {"prompt_tokens": 120, "completion_tokens": 8}
            })
            .to_string(),
        }
    }

    fn config() -> LlmConfig {
        LlmConfig::from_lookup(|k| (k == ENV_API_KEY).then(|| "k".to_string())).unwrap()
    }

    fn schema() -> OutputSchema {
        OutputSchema::new(vec![SchemaField::new("k8s_summary", FieldKind::String)])
    }

    #[test]
    fn retries_rate_limits() {
        let busy = HttpResponse {
            status: 429,
            body: String::new(),
        };
        let transport = Scripted(
            RefCell::new(vec![busy.clone(), busy, ok(r#" "a pod"}"#)]),
            RefCell::new(0),
        );
        let mut client = LlmClient::new(config(), transport);
        let slept = std::rc::Rc::new(RefCell::new(Vec::new()));
        let s = slept.clone();
        client.sleep = Box::new(move |ms| s.borrow_mut().push(ms));
        let mut ledger = CostLedger::default();
        let out = chat_complete(
            &client,
            &[],
            &schema(),
            ChatParams::default(),
            &mut ledger,
            "preprocess",
        )
        .unwrap();
        assert_eq!(out.attempts, 3);
        assert_eq!(*client.transport.1.borrow(), 3);
        assert_eq!(*slept.borrow(), [1000, 2000]);
        assert_eq!(ledger.phases["preprocess"].input_tokens, 120);
        assert_eq!(
            parse_structured_output(&out.text, &schema()).unwrap()["k8s_summary"],
            "a pod"
        );
    }

    #[test]
    fn missing_key_fails_before_calls() {
        assert_eq!(LlmConfig::from_lookup(|_| None), Err(LlmError::MissingCredential));
    }
}
