use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage { role, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }
}

/// A function-calling schema the model must answer through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSchema {
    pub name: String,
    pub description: String,
    /// JSON Schema for the function arguments.
    pub parameters: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(default)]
    pub response_schema: Option<ResponseSchema>,
    #[serde(default)]
    pub max_output_tokens: Option<u32>,
}

/// Hex SHA-256 identifying a request in the response cache.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fingerprint(pub String);

impl std::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        ChatRequest {
            model: model.into(),
            messages,
            temperature: 0.0,
            response_schema: None,
            max_output_tokens: None,
        }
    }

    pub fn with_schema(mut self, schema: ResponseSchema) -> Self {
        self.response_schema = Some(schema);
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.messages.is_empty() {
            return Err("request has no messages".into());
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        Ok(())
    }

    /// Hash of (model, messages, schema, temperature) over a canonical JSON
    /// encoding: object keys sorted, no whitespace.
    pub fn fingerprint(&self) -> Fingerprint {
        let canonical = serde_json::json!({
            "model": self.model,
            "messages": self.messages,
            "schema": self.response_schema,
            "temperature": self.temperature,
        });
        let bytes = serde_json::to_vec(&canonical).expect("in-memory serialization");
        Fingerprint(hex::encode(Sha256::digest(&bytes)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(content: &str) -> ChatRequest {
        ChatRequest::new("gpt-4", vec![ChatMessage::system("sys"), ChatMessage::user(content)])
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        assert_eq!(req("a").fingerprint(), req("a").fingerprint());
        assert_ne!(req("a").fingerprint(), req("a ").fingerprint());
        assert_ne!(req("a").fingerprint(), req("a").with_temperature(0.5).fingerprint());
        // Not part of the key.
        let mut r = req("a");
        r.max_output_tokens = Some(10);
        assert_eq!(r.fingerprint(), req("a").fingerprint());
        assert_eq!(req("a").fingerprint().0.len(), 64);
    }

    #[test]
    fn validation() {
        assert!(req("a").validate().is_ok());
        assert!(ChatRequest::new("m", vec![]).validate().is_err());
        assert!(req("a").with_temperature(-1.0).validate().is_err());
        assert!(req("a").with_temperature(f64::NAN).validate().is_err());
    }
}
