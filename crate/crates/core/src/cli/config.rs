use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::gateway::Endpoint;
use crate::prompts::Rendering;

pub const CONFIG_ENV: &str = "SOLAUDIT_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: u64,
    /// Worker pool size; also the bound on in-flight requests.
    pub workers: usize,
    pub offline: bool,
    /// Abort on the first unparseable model reply or unknown detector id.
    pub strict: bool,
    pub run_id: Option<String>,
    pub corpus: CorpusSection,
    pub taxonomy: TaxonomySection,
    pub detectors: DetectorsSection,
    pub http: HttpSection,
    /// Keyed by model alias; `default` serves any model without its own entry.
    pub endpoints: BTreeMap<String, Endpoint>,
    pub models: BTreeMap<String, ModelSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out: PathBuf::from("out"),
            seed: 42,
            workers: 4,
            offline: false,
            strict: false,
            run_id: None,
            corpus: CorpusSection::default(),
            taxonomy: TaxonomySection::default(),
            detectors: DetectorsSection::default(),
            http: HttpSection::default(),
            endpoints: BTreeMap::new(),
            models: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub max_tokens: usize,
    pub explorer_base_url: String,
    pub api_key_env: String,
    /// 0 leaves the chain id out of explorer requests.
    pub chain_id: u64,
    /// Explorer requests per second.
    pub requests_per_second: f64,
    pub addresses_file: Option<PathBuf>,
    /// Directory of `<address>.sol` files used instead of the explorer.
    pub sources_dir: Option<PathBuf>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        let c = crate::corpus::CorpusConfig::default();
        CorpusSection {
            max_tokens: c.max_tokens,
            explorer_base_url: c.explorer_base_url,
            api_key_env: c.api_key_env_var,
            chain_id: c.chain_id.unwrap_or(0),
            requests_per_second: 5.0,
            addresses_file: None,
            sources_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaxonomySection {
    /// SWC mapping, detector tables and vote policy; embedded defaults when unset.
    pub path: Option<PathBuf>,
    /// Normalized tool reports keyed by tool name.
    pub reports: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorsSection {
    pub synonyms: Option<PathBuf>,
    pub threshold: String,
    /// Correctness, severity and profitability weights.
    pub weights: [f64; 3],
    pub top_k: usize,
}

impl Default for DetectorsSection {
    fn default() -> Self {
        DetectorsSection { synonyms: None, threshold: "gt1c".into(), weights: [0.5, 0.25, 0.25], top_k: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpSection {
    /// Response cache; `<out>/runs/cache.jsonl` when unset.
    pub cache: Option<PathBuf>,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for HttpSection {
    fn default() -> Self {
        HttpSection { cache: None, timeout_secs: 300, max_attempts: 5, base_delay_ms: 1000, max_delay_ms: 60_000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Prompt rendering a fine-tuned model was trained on.
    pub rendering: Option<Rendering>,
}

/// Replaces `${NAME}` with the value of environment variable `NAME`; `$$`
/// is a literal `$`.
pub fn interpolate(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String, String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if let Some(after) = tail.strip_prefix("$$") {
            out.push('$');
            rest = after;
        } else if let Some(body) = tail.strip_prefix("${") {
            let end = body.find('}').ok_or_else(|| "unterminated `${`".to_string())?;
            let name = &body[..end];
            let value = lookup(name).ok_or_else(|| format!("environment variable `{name}` is not set"))?;
            out.push_str(&value);
            rest = &body[end + 1..];
        } else {
            out.push('$');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn interpolate_value(v: &mut toml::Value, path: &str) -> Result<(), String> {
    match v {
        toml::Value::String(s) => {
            *s = interpolate(s, |n| std::env::var(n).ok()).map_err(|e| format!("{path}: {e}"))?;
        }
        toml::Value::Array(items) => {
            for (i, item) in items.iter_mut().enumerate() {
                interpolate_value(item, &format!("{path}[{i}]"))?;
            }
        }
        toml::Value::Table(t) => {
            for (k, item) in t.iter_mut() {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                interpolate_value(item, &p)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// A loaded configuration and the uninterpolated snapshot recorded in
/// manifests, so secrets pulled from the environment never reach disk.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub snapshot: serde_json::Value,
    pub source: Option<PathBuf>,
}

impl LoadedConfig {
    pub fn defaults() -> Self {
        let config = RunConfig::default();
        let snapshot = serde_json::to_value(&config).expect("in-memory serialization");
        LoadedConfig { config, snapshot, source: None }
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let err = |m: String| CliError::config(format!("{}: {m}", origin.display()));
        let raw: toml::Value = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        let snapshot_cfg: RunConfig = raw.clone().try_into().map_err(|e: toml::de::Error| err(e.to_string()))?;
        let mut resolved = raw;
        interpolate_value(&mut resolved, "").map_err(err)?;
        let mut config: RunConfig = resolved.try_into().map_err(|e: toml::de::Error| err(e.to_string()))?;
        let base = origin.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        let mut snap = snapshot_cfg;
        snap.resolve_paths(base);
        Ok(LoadedConfig {
            snapshot: serde_json::to_value(&snap).expect("in-memory serialization"),
            config,
            source: Some(origin.to_path_buf()),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    /// `--config` first, then `SOLAUDIT_CONFIG`, else built-in defaults.
    pub fn discover(flag: Option<&Path>) -> Result<Self, CliError> {
        match flag {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::defaults()),
            },
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    fn resolve_paths(&mut self, base: &Path) {
        rebase(base, &mut self.out);
        for p in [
            &mut self.corpus.addresses_file,
            &mut self.corpus.sources_dir,
            &mut self.taxonomy.path,
            &mut self.detectors.synonyms,
            &mut self.http.cache,
        ]
        .into_iter()
        .flatten()
        {
            rebase(base, p);
        }
        for p in self.taxonomy.reports.values_mut() {
            rebase(base, p);
        }
    }

    /// Every file the configuration names must exist.
    pub fn check_paths(&self) -> Result<(), CliError> {
        let named = [
            ("corpus.addresses_file", &self.corpus.addresses_file),
            ("corpus.sources_dir", &self.corpus.sources_dir),
            ("taxonomy.path", &self.taxonomy.path),
            ("detectors.synonyms", &self.detectors.synonyms),
        ];
        for (key, p) in named {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(CliError::config(format!("{key}: {} does not exist", p.display())));
                }
            }
        }
        for (tool, p) in &self.taxonomy.reports {
            if !p.exists() {
                return Err(CliError::config(format!("taxonomy.reports.{tool}: {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn run_id(&self) -> String {
        self.run_id.clone().unwrap_or_else(|| format!("seed-{}", self.seed))
    }

    pub fn cache_path(&self) -> PathBuf {
        self.http.cache.clone().unwrap_or_else(|| self.out.join("runs").join("cache.jsonl"))
    }
}
