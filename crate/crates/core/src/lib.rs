//! Harness for LLM-based smart-contract vulnerability detection.
//!
//! The pipeline runs in stages, each backed by one module:
//!
//! - [`corpus`]: fetch verified Solidity sources, strip comments, count GPT-2
//!   tokens and apply the token budget.
//! - [`taxonomy`]: the eight vulnerability classes, tool-report ingestion and
//!   majority-vote gold labels.
//! - [`prompts`]: detection and generation training prompts, Alpaca and chat
//!   renderings, dataset export.
//! - [`gateway`]: chat-completion client with structured output, a replay
//!   cache and fine-tune job orchestration.
//! - [`detectors`]: fine-tuned, zero-shot, zero-shot + critic, auditor/critic
//!   ranking and random-baseline strategies.
//! - [`evaluation`]: confusion counts, per-class and binary metrics,
//!   support-weighted F1 and report tables.
//! - [`cli`]: the `solaudit` command line.

pub mod address;
pub mod cli;
pub mod corpus;
pub mod detectors;
pub mod evaluation;
pub mod gateway;
pub mod http;
pub mod jsonl;
pub mod parallel;
pub mod prompts;
pub mod taxonomy;

pub use address::Address;
pub use corpus::ContractRecord;
pub use parallel::Execution;
pub use taxonomy::{LabelSet, VulnClass};
