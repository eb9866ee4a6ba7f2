//! Contract acquisition, cleaning, token measurement and the token budget.

mod bpe;
mod explorer;
mod store;
mod strip;

use serde::{Deserialize, Serialize};

pub use bpe::{count_tokens, BpeError, Gpt2Bpe, ENCODER_SHA256, VOCAB_SHA256};
pub use explorer::{ExplorerClient, FetchedSource};
pub use store::{read_records, write_records};
pub use strip::{clean_source, collapse_blank_lines, strip_comments};

use crate::address::Address;
use crate::parallel::{self, Execution};
use crate::taxonomy::LabelSet;

pub const DEFAULT_MAX_TOKENS: usize = 7340;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("unterminated block comment starting on line {line}")]
    UnterminatedBlockComment { line: usize },
    #[error("unterminated string literal starting on line {line}")]
    UnterminatedString { line: usize },
    #[error("{0}: explorer has no verified source")]
    Unverified(Address),
    #[error("{address}: rate limited after {attempts} attempts")]
    RateLimited { address: Address, attempts: u32 },
    #[error("transport: {0}")]
    Transport(String),
    #[error("environment variable `{0}` holding the explorer API key is not set")]
    MissingApiKey(String),
    #[error("{path}:{line}: {msg}")]
    Format { path: String, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One contract as it moves through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractRecord {
    pub address: Address,
    /// Source as downloaded; never persisted.
    #[serde(skip)]
    pub raw_source: String,
    pub cleaned_source: String,
    pub token_count: usize,
    #[serde(default)]
    pub solc_version: String,
    /// Gold labels, absent until the corpus is labelled.
    #[serde(default)]
    pub labels: Option<LabelSet>,
}

impl ContractRecord {
    pub fn from_raw(address: Address, raw_source: String, solc_version: String) -> Self {
        ContractRecord {
            address,
            raw_source,
            cleaned_source: String::new(),
            token_count: 0,
            solc_version,
            labels: None,
        }
    }

    /// Cleans `raw_source` and recomputes the token count.
    pub fn clean(&mut self) -> Result<(), CorpusError> {
        self.cleaned_source = clean_source(&self.raw_source)?;
        self.token_count = count_tokens(&self.cleaned_source);
        Ok(())
    }

    pub fn gold(&self) -> LabelSet {
        self.labels.unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub max_tokens: usize,
    pub explorer_base_url: String,
    pub api_key_env_var: String,
    /// Chain id for multichain explorer endpoints; omitted when `None`.
    pub chain_id: Option<u64>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            max_tokens: DEFAULT_MAX_TOKENS,
            explorer_base_url: "https://api.etherscan.io/v2/api".into(),
            api_key_env_var: "ETHERSCAN_API_KEY".into(),
            chain_id: Some(1),
        }
    }
}

/// Cleans and measures every record. Records are independent, so this fans
/// out under [`Execution::Parallel`].
pub fn clean_all(mode: Execution, records: &mut [ContractRecord]) -> Vec<(Address, CorpusError)> {
    let errors = std::sync::Mutex::new(Vec::new());
    parallel::map_mut(mode, records, |r| {
        if let Err(e) = r.clean() {
            errors.lock().expect("error sink").push((r.address.clone(), e));
        }
    });
    let mut errors = errors.into_inner().expect("error sink");
    errors.sort_by(|a, b| a.0.cmp(&b.0));
    errors
}

/// Splits records into those within the token budget and those over it.
/// A record exactly at `max_tokens` is kept. Input order is preserved.
pub fn filter_by_budget(records: Vec<ContractRecord>, config: &CorpusConfig) -> (Vec<ContractRecord>, Vec<ContractRecord>) {
    records.into_iter().partition(|r| r.token_count <= config.max_tokens)
}

/// Reads the `pragma solidity` constraint, if any, as a version hint.
pub fn pragma_version(source: &str) -> Option<String> {
    let re = regex::Regex::new(r"pragma\s+solidity\s+([^;]+);").expect("static regex");
    re.captures(source).map(|c| c[1].trim().to_string())
}
