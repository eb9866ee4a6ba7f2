//! The eight-class vulnerability taxonomy, normalization of static-analysis
//! tool reports, and gold labelling by majority vote.

mod class;
mod config;
mod reports;
mod vote;

pub use class::{LabelSet, UnknownClass, VulnClass};
pub use config::{DetectorTable, Quorum, SwcEntry, SwcMapping, TaxonomyConfig, Tool, ToolSet, VotePolicy};
pub use reports::{load_tool_report, parse_tool_report, ReportMode, ToolFinding, ToolReport};
pub use vote::{label_corpus, majority_vote, LabelSummary};

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("{tool}: unknown detector id `{id}` (line {line})")]
    UnknownDetectorId { tool: Tool, id: String, line: usize },
    #[error("{path}:{line}: malformed report line: {msg}")]
    MalformedReport { path: String, line: usize, msg: String },
    #[error("taxonomy config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
