//! Client for Etherscan-compatible `getsourcecode` endpoints.

use std::time::Duration;

use indexmap::IndexMap;
use serde::Deserialize;

use super::{ContractRecord, CorpusConfig, CorpusError};
use crate::address::Address;
use crate::http::{self, Outcome, RateLimiter, RetryPolicy};
use crate::parallel::{self, Execution};

#[derive(Debug, Clone, PartialEq)]
pub struct FetchedSource {
    pub address: Address,
    pub contract_name: String,
    pub solc_version: String,
    pub source: String,
}

pub struct ExplorerClient {
    config: CorpusConfig,
    api_key: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
    limiter: RateLimiter,
}

#[derive(Deserialize)]
struct Envelope {
    #[serde(default)]
    status: String,
    #[serde(default)]
    message: String,
    result: serde_json::Value,
}

#[derive(Deserialize)]
struct SourceEntry {
    #[serde(rename = "SourceCode", default)]
    source_code: String,
    #[serde(rename = "ContractName", default)]
    contract_name: String,
    #[serde(rename = "CompilerVersion", default)]
    compiler_version: String,
}

#[derive(Deserialize)]
struct SourceFile {
    content: String,
}

#[derive(Deserialize)]
struct StandardJson {
    sources: IndexMap<String, SourceFile>,
}

fn file_marker(name: &str) -> String {
    format!("// ---- file: {name} ----\n")
}

fn join_files(files: IndexMap<String, SourceFile>) -> String {
    let mut out = String::new();
    for (name, file) in files {
        out.push_str(&file_marker(&name));
        out.push_str(&file.content);
        if !file.content.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

/// Flattens the `SourceCode` field. Multi-file contracts arrive either as a
/// `{name: {content}}` object or as standard-json input wrapped in an extra
/// pair of braces; files are concatenated in the order returned, each
/// preceded by a one-line comment marker.
pub fn flatten_source_code(source_code: &str) -> String {
    let trimmed = source_code.trim();
    if let Some(inner) = trimmed.strip_prefix("{{").and_then(|s| s.strip_suffix("}}")) {
        if let Ok(std_json) = serde_json::from_str::<StandardJson>(&format!("{{{inner}}}")) {
            return join_files(std_json.sources);
        }
    }
    if trimmed.starts_with('{') {
        if let Ok(std_json) = serde_json::from_str::<StandardJson>(trimmed) {
            return join_files(std_json.sources);
        }
        if let Ok(files) = serde_json::from_str::<IndexMap<String, SourceFile>>(trimmed) {
            return join_files(files);
        }
    }
    source_code.to_string()
}

fn is_throttle_notice(body: &str) -> bool {
    serde_json::from_str::<Envelope>(body)
        .map(|env| env.status == "0" && env.result.as_str().is_some_and(|r| r.to_ascii_lowercase().contains("rate limit")))
        .unwrap_or(false)
}

impl ExplorerClient {
    /// Reads the API key from the environment variable named in `config`.
    pub fn from_env(config: CorpusConfig, retry: RetryPolicy, limiter: RateLimiter) -> Result<Self, CorpusError> {
        let api_key = std::env::var(&config.api_key_env_var)
            .map_err(|_| CorpusError::MissingApiKey(config.api_key_env_var.clone()))?;
        Ok(Self::with_key(config, api_key, retry, limiter))
    }

    pub fn with_key(config: CorpusConfig, api_key: String, retry: RetryPolicy, limiter: RateLimiter) -> Self {
        ExplorerClient {
            config,
            api_key,
            agent: http::agent(Duration::from_secs(60)),
            retry,
            limiter,
        }
    }

    pub fn fetch(&self, address: &Address) -> Result<FetchedSource, CorpusError> {
        let send = || {
            let mut req = self
                .agent
                .get(&self.config.explorer_base_url)
                .query("module", "contract")
                .query("action", "getsourcecode")
                .query("address", address.as_str())
                .query("apikey", &self.api_key);
            if let Some(chain) = self.config.chain_id {
                req = req.query("chainid", chain.to_string());
            }
            http::read_response(req.call())
        };
        let resp = match http::with_retries(&self.retry, &self.limiter, send, |r| is_throttle_notice(&r.body), |_| {}) {
            Outcome::Done(r) => r,
            Outcome::RateLimited { attempts } => return Err(CorpusError::RateLimited { address: address.clone(), attempts }),
            Outcome::Failed { last, .. } => return Err(CorpusError::Transport(last)),
        };
        if resp.status != 200 {
            return Err(CorpusError::Transport(format!("HTTP {}: {}", resp.status, http::truncate(&resp.body, 200))));
        }
        let env: Envelope =
            serde_json::from_str(&resp.body).map_err(|e| CorpusError::Transport(format!("undecodable explorer reply: {e}")))?;
        let entries: Vec<SourceEntry> = match env.result {
            serde_json::Value::Array(_) => serde_json::from_value(env.result)
                .map_err(|e| CorpusError::Transport(format!("undecodable explorer result: {e}")))?,
            other => {
                return Err(CorpusError::Transport(format!(
                    "explorer error: {} {}",
                    env.message,
                    other.as_str().unwrap_or_default()
                )))
            }
        };
        let entry = entries
            .into_iter()
            .next()
            .filter(|e| !e.source_code.trim().is_empty())
            .ok_or_else(|| CorpusError::Unverified(address.clone()))?;
        Ok(FetchedSource {
            address: address.clone(),
            contract_name: entry.contract_name,
            solc_version: entry.compiler_version,
            source: flatten_source_code(&entry.source_code),
        })
    }

    /// Downloads the verified source into a raw (uncleaned) record.
    pub fn fetch_verified_source(&self, address: &Address) -> Result<ContractRecord, CorpusError> {
        let f = self.fetch(address)?;
        Ok(ContractRecord::from_raw(f.address, f.source, f.solc_version))
    }

    /// Fetches many addresses with at most `workers` requests in flight.
    /// Results keep the input order.
    pub fn fetch_all(&self, addresses: &[Address], workers: usize) -> Vec<Result<ContractRecord, CorpusError>> {
        parallel::with_workers(workers, || parallel::map(Execution::Parallel, addresses, |a| self.fetch_verified_source(a)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_file_passes_through() {
        assert_eq!(flatten_source_code("contract A {}"), "contract A {}");
    }

    #[test]
    fn multi_file_object_keeps_returned_order() {
        let sc = r#"{"B.sol":{"content":"contract B {}"},"A.sol":{"content":"contract A {}\n"}}"#;
        assert_eq!(
            flatten_source_code(sc),
            "// ---- file: B.sol ----\ncontract B {}\n// ---- file: A.sol ----\ncontract A {}\n"
        );
    }

    #[test]
    fn standard_json_with_double_braces() {
        let sc = r#"{{"language":"Solidity","sources":{"z.sol":{"content":"z"},"a.sol":{"content":"a"}},"settings":{}}}"#;
        assert_eq!(flatten_source_code(sc), "// ---- file: z.sol ----\nz\n// ---- file: a.sol ----\na\n");
    }

    #[test]
    fn markers_disappear_after_cleaning() {
        let sc = r#"{"A.sol":{"content":"contract A {}"}}"#;
        assert_eq!(crate::corpus::clean_source(&flatten_source_code(sc)).unwrap(), "contract A {}\n");
    }

    #[test]
    fn throttle_notice_detection() {
        assert!(is_throttle_notice(r#"{"status":"0","message":"NOTOK","result":"Max rate limit reached"}"#));
        assert!(!is_throttle_notice(r#"{"status":"0","message":"NOTOK","result":"Invalid API Key"}"#));
        assert!(!is_throttle_notice("not json"));
    }
}
