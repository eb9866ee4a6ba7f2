use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::cache::ResponseCache;
use super::message::{ChatRequest, Fingerprint};
use super::{schema, GatewayError};
use crate::http::{self, HttpResponse, Outcome, RateLimiter, RetryPolicy};

pub const DEFAULT_KEY_ENV: &str = "LLM_API_KEY";

/// Where and how to reach one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    /// Base URL up to and including the API version, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    /// Environment variable holding the bearer key; defaults to `LLM_API_KEY`.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Model name sent on the wire, when it differs from the local alias.
    #[serde(default)]
    pub remote_model: Option<String>,
    #[serde(default)]
    pub requests_per_second: Option<f64>,
}

impl Endpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        Endpoint { base_url: base_url.into(), api_key_env: None, remote_model: None, requests_per_second: None }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path.trim_start_matches('/'))
    }

    fn api_key(&self) -> Option<String> {
        std::env::var(self.api_key_env.as_deref().unwrap_or(DEFAULT_KEY_ENV)).ok()
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Keyed by model alias; `"default"` catches models without an entry.
    pub endpoints: HashMap<String, Endpoint>,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    /// Serve from cache only; a miss is an error and no request is sent.
    pub offline: bool,
    pub run_id: String,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            endpoints: HashMap::new(),
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(300),
            offline: false,
            run_id: "default".into(),
        }
    }
}

/// Result of a chat call with the key that locates it in the cache.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion<T> {
    pub value: T,
    pub fingerprint: Fingerprint,
    pub from_cache: bool,
}

/// One client for every endpoint. Shareable across worker threads: rate
/// limiting is per endpoint and cache writes are serialized.
pub struct Gateway {
    config: GatewayConfig,
    cache: ResponseCache,
    agent: ureq::Agent,
    limiters: HashMap<String, RateLimiter>,
    attempts: AtomicU64,
}

impl Gateway {
    pub fn new(config: GatewayConfig, cache: ResponseCache) -> Self {
        let limiters = config
            .endpoints
            .iter()
            .map(|(k, e)| {
                let l = match e.requests_per_second {
                    Some(rps) if rps > 0.0 => RateLimiter::new(rps, rps.ceil()),
                    _ => RateLimiter::unlimited(),
                };
                (k.clone(), l)
            })
            .collect();
        Gateway { agent: http::agent(config.timeout), config, cache, limiters, attempts: AtomicU64::new(0) }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// HTTP attempts made so far, across all calls.
    pub fn attempts(&self) -> u64 {
        self.attempts.load(Ordering::Relaxed)
    }

    pub(crate) fn endpoint(&self, model: &str) -> Result<(&str, &Endpoint), GatewayError> {
        self.config
            .endpoints
            .get_key_value(model)
            .or_else(|| self.config.endpoints.get_key_value("default"))
            .map(|(k, e)| (k.as_str(), e))
            .ok_or_else(|| GatewayError::Config(format!("no endpoint configured for model `{model}`")))
    }

    fn wire_body(req: &ChatRequest, endpoint: &Endpoint) -> Value {
        let mut body = json!({
            "model": endpoint.remote_model.as_deref().unwrap_or(&req.model),
            "messages": req.messages,
            "temperature": req.temperature,
        });
        if let Some(n) = req.max_output_tokens {
            body["max_tokens"] = json!(n);
        }
        if let Some(s) = &req.response_schema {
            body["tools"] = json!([{
                "type": "function",
                "function": {"name": s.name, "description": s.description, "parameters": s.parameters},
            }]);
            body["tool_choice"] = json!({"type": "function", "function": {"name": s.name}});
        }
        body
    }

    /// Sends `body` as JSON (or a prepared multipart payload) with retries.
    pub(crate) fn send(
        &self,
        endpoint_key: &str,
        endpoint: &Endpoint,
        method: &str,
        path: &str,
        body: Option<(&str, Vec<u8>)>,
    ) -> Result<HttpResponse, GatewayError> {
        if self.config.offline {
            return Err(GatewayError::Offline(format!("{method} {path}")));
        }
        let url = endpoint.url(path);
        let key = endpoint.api_key();
        let unlimited = RateLimiter::unlimited();
        let limiter = self.limiters.get(endpoint_key).unwrap_or(&unlimited);
        let send = || {
            let auth = key.as_ref().map(|k| format!("Bearer {k}"));
            let resp = match (method, &body) {
                ("GET", _) => {
                    let mut r = self.agent.get(&url);
                    if let Some(a) = &auth {
                        r = r.header("Authorization", a);
                    }
                    r.call()
                }
                (_, Some((content_type, bytes))) => {
                    let mut r = self.agent.post(&url).header("Content-Type", *content_type);
                    if let Some(a) = &auth {
                        r = r.header("Authorization", a);
                    }
                    r.send(&bytes[..])
                }
                (_, None) => {
                    let mut r = self.agent.post(&url);
                    if let Some(a) = &auth {
                        r = r.header("Authorization", a);
                    }
                    r.send_empty()
                }
            };
            http::read_response(resp)
        };
        let on_attempt = |_| {
            self.attempts.fetch_add(1, Ordering::Relaxed);
        };
        match http::with_retries(&self.config.retry, limiter, send, |_| false, on_attempt) {
            Outcome::Done(r) if (200..300).contains(&r.status) => Ok(r),
            Outcome::Done(r) => Err(GatewayError::BadRequest { status: r.status, body: http::truncate(&r.body, 500).to_string() }),
            Outcome::RateLimited { attempts } => Err(GatewayError::RateLimited { attempts }),
            Outcome::Failed { last, .. } => Err(GatewayError::Transport(last)),
        }
    }

    /// Returns the raw response body, from cache when present.
    pub fn exchange(&self, req: &ChatRequest) -> Result<Completion<String>, GatewayError> {
        req.validate().map_err(GatewayError::Config)?;
        let fp = req.fingerprint();
        if let Some(hit) = self.cache.get(&fp) {
            return Ok(Completion { value: hit.raw_response, fingerprint: fp, from_cache: true });
        }
        if self.config.offline {
            return Err(GatewayError::CacheMiss(fp));
        }
        let (key, endpoint) = self.endpoint(&req.model)?;
        let body = serde_json::to_vec(&Self::wire_body(req, endpoint)).expect("in-memory serialization");
        let resp = self.send(key, endpoint, "POST", "chat/completions", Some(("application/json", body)))?;
        // Only cache bodies we can interpret, so a bad reply is retried next run.
        extract_text(&resp.body).or_else(|_| extract_arguments(&resp.body).map(|_| String::new()))?;
        self.cache.insert(req, fp.clone(), resp.body.clone(), &self.config.run_id)?;
        Ok(Completion { value: resp.body, fingerprint: fp, from_cache: false })
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<Completion<String>, GatewayError> {
        let ex = self.exchange(req)?;
        Ok(Completion { value: extract_text(&ex.value)?, ..ex })
    }

    /// Assistant text of a chat completion.
    pub fn chat_complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        self.complete(req).map(|c| c.value)
    }

    /// Function-call arguments, validated against the request's schema.
    pub fn complete_structured(&self, req: &ChatRequest) -> Result<Completion<Value>, GatewayError> {
        let schema = req
            .response_schema
            .as_ref()
            .ok_or_else(|| GatewayError::Config("structured call without a response schema".into()))?;
        let ex = self.exchange(req)?;
        let args = extract_arguments(&ex.value)?;
        schema::validate(&schema.parameters, &args)
            .map_err(|v| GatewayError::SchemaViolation { path: v.path, message: v.message })?;
        Ok(Completion { value: args, fingerprint: ex.fingerprint, from_cache: ex.from_cache })
    }

    pub fn chat_complete_structured(&self, req: &ChatRequest) -> Result<Value, GatewayError> {
        self.complete_structured(req).map(|c| c.value)
    }

    /// The cached raw response for `fp`; never touches the network.
    pub fn replay(&self, fp: &Fingerprint) -> Result<String, GatewayError> {
        self.cache
            .get(fp)
            .map(|e| e.raw_response)
            .ok_or_else(|| GatewayError::CacheMiss(fp.clone()))
    }
}

fn first_message(body: &str) -> Result<Value, GatewayError> {
    let v: Value = serde_json::from_str(body).map_err(|e| GatewayError::UnexpectedResponse(format!("not JSON: {e}")))?;
    v.pointer("/choices/0/message")
        .cloned()
        .ok_or_else(|| GatewayError::UnexpectedResponse("no choices[0].message".into()))
}

pub fn extract_text(body: &str) -> Result<String, GatewayError> {
    let m = first_message(body)?;
    m.get("content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| GatewayError::UnexpectedResponse("message has no text content".into()))
}

/// Arguments of the first tool call; falls back to the legacy
/// `function_call` field and then to JSON in the message content.
pub fn extract_arguments(body: &str) -> Result<Value, GatewayError> {
    let m = first_message(body)?;
    let raw = m
        .pointer("/tool_calls/0/function/arguments")
        .or_else(|| m.pointer("/function_call/arguments"))
        .or_else(|| m.get("content"))
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::UnexpectedResponse("message has no tool call".into()))?;
    serde_json::from_str(raw).map_err(|e| GatewayError::SchemaViolation { path: String::new(), message: format!("arguments are not JSON: {e}") })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_text_and_arguments() {
        let text = r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}]}"#;
        assert_eq!(extract_text(text).unwrap(), "hello");
        let call = r#"{"choices":[{"message":{"role":"assistant","content":null,"tool_calls":[{"type":"function","function":{"name":"f","arguments":"{\"status\":\"No Exploit\"}"}}]}}]}"#;
        assert_eq!(extract_arguments(call).unwrap()["status"], "No Exploit");
        assert!(extract_text(call).is_err());
        assert!(matches!(extract_text("nope"), Err(GatewayError::UnexpectedResponse(_))));
    }

    #[test]
    fn wire_body_carries_tools() {
        use crate::gateway::{ChatMessage, ResponseSchema};
        let req = ChatRequest::new("gpt-4", vec![ChatMessage::user("x")]).with_schema(ResponseSchema {
            name: "report".into(),
            description: "d".into(),
            parameters: json!({"type": "object"}),
        });
        let mut ep = Endpoint::new("http://h/v1/");
        ep.remote_model = Some("gpt-4-0613".into());
        let b = Gateway::wire_body(&req, &ep);
        assert_eq!(b["model"], "gpt-4-0613");
        assert_eq!(b["tools"][0]["function"]["name"], "report");
        assert_eq!(b["tool_choice"]["function"]["name"], "report");
        assert_eq!(ep.url("/chat/completions"), "http://h/v1/chat/completions");
    }

    #[test]
    fn offline_miss_is_an_error() {
        use crate::gateway::ChatMessage;
        let gw = Gateway::new(GatewayConfig { offline: true, ..Default::default() }, ResponseCache::in_memory());
        let req = ChatRequest::new("m", vec![ChatMessage::user("x")]);
        assert!(matches!(gw.chat_complete(&req), Err(GatewayError::CacheMiss(_))));
        assert_eq!(gw.attempts(), 0);
    }
}
