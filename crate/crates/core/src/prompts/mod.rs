//! Training prompts (detection and generation, vulnerable and clean), their
//! Alpaca and chat renderings, and fine-tuning dataset export.

mod build;
mod export;
mod render;
pub mod templates;

pub use build::{
    build_detection_prompt, build_generation_prompt, detection_input, detection_output, vulnerability_block, PromptCase,
    PromptRecord, PromptStyle,
};
pub use export::{
    build_prompts, export_dataset, render_line, rendered_tokens, stratified_cap, write_prompts, DatasetManifest, Rendering,
    SubsetSpec,
};
pub use render::{alpaca_line, chat_line, render_alpaca, render_alpaca_query, render_chat, render_chat_query, validate_chat_line};

use crate::address::Address;

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("{0}: record has no gold labels")]
    Unlabeled(Address),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
