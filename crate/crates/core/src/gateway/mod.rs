//! Chat-completion gateway: one client for hosted and self-hosted models,
//! structured (function-calling) output, a replay cache, and fine-tune jobs.

mod cache;
mod client;
mod finetune;
mod message;
pub mod schema;

pub use cache::{CachedExchange, RequestSummary, ResponseCache};
pub use client::{extract_arguments, extract_text, Completion, Endpoint, Gateway, GatewayConfig, DEFAULT_KEY_ENV};
pub use finetune::{validate_training_file, FinetuneJob, JobStatus};
pub use message::{ChatMessage, ChatRequest, Fingerprint, ResponseSchema, Role};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("request rejected with HTTP {status}: {body}")]
    BadRequest { status: u16, body: String },
    #[error("structured output violates schema at `{path}`: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("no cached response for {0}")]
    CacheMiss(Fingerprint),
    #[error("offline mode: refusing to send {0}")]
    Offline(String),
    #[error("unexpected response: {0}")]
    UnexpectedResponse(String),
    #[error("training file rejected (line {line}): {reason}")]
    UploadRejected { line: usize, reason: String },
    #[error("fine-tune job {job_id} failed")]
    JobFailed { job_id: String },
    #[error("cache: {0}")]
    Cache(String),
    #[error("gateway config: {0}")]
    Config(String),
}
