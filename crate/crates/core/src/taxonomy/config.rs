use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::class::{LabelSet, VulnClass};
use super::TaxonomyError;

const DEFAULT_TAXONOMY: &str = include_str!("../../data/taxonomy.toml");

/// The five static-analysis tools whose findings are voted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tool {
    Osiris,
    Oyente,
    Mythril,
    Slither,
    SmartCheck,
}

impl Tool {
    pub const ALL: [Tool; 5] = [Tool::Osiris, Tool::Oyente, Tool::Mythril, Tool::Slither, Tool::SmartCheck];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Tool::Osiris => "Osiris",
            Tool::Oyente => "Oyente",
            Tool::Mythril => "Mythril",
            Tool::Slither => "Slither",
            Tool::SmartCheck => "SmartCheck",
        }
    }
}

impl fmt::Display for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tool {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tool::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| TaxonomyError::Config(format!("unknown tool `{s}`")))
    }
}

/// Bitmask over [`Tool`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ToolSet(u8);

impl ToolSet {
    pub const ALL: ToolSet = ToolSet(0b1_1111);

    pub fn from_bits(bits: u8) -> ToolSet {
        ToolSet(bits & Self::ALL.0)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn insert(&mut self, t: Tool) {
        self.0 |= 1 << t.index();
    }

    pub fn contains(self, t: Tool) -> bool {
        self.0 & (1 << t.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersection(self, other: ToolSet) -> ToolSet {
        ToolSet(self.0 & other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Tool> {
        Tool::ALL.into_iter().filter(move |t| self.contains(*t))
    }
}

impl FromIterator<Tool> for ToolSet {
    fn from_iter<I: IntoIterator<Item = Tool>>(iter: I) -> Self {
        let mut s = ToolSet::default();
        for t in iter {
            s.insert(t);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwcEntry {
    pub id: String,
    pub name: String,
}

/// SWC id and display name for every class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwcMapping {
    entries: [SwcEntry; 8],
}

impl SwcMapping {
    pub fn new(entries: [SwcEntry; 8]) -> Result<Self, TaxonomyError> {
        let re = Regex::new(r"^SWC-\d+$").expect("static regex");
        for (c, e) in VulnClass::ALL.iter().zip(entries.iter()) {
            if !re.is_match(&e.id) {
                return Err(TaxonomyError::Config(format!("{c}: `{}` is not an SWC id", e.id)));
            }
            if e.name.trim().is_empty() {
                return Err(TaxonomyError::Config(format!("{c}: empty display name")));
            }
        }
        Ok(SwcMapping { entries })
    }

    pub fn entry(&self, c: VulnClass) -> &SwcEntry {
        &self.entries[c.index()]
    }

    pub fn swc_id(&self, c: VulnClass) -> &str {
        &self.entry(c).id
    }

    pub fn display_name(&self, c: VulnClass) -> &str {
        &self.entry(c).name
    }

    /// `SWC-107 - Reentrancy`
    pub fn line(&self, c: VulnClass) -> String {
        let e = self.entry(c);
        format!("{} - {}", e.id, e.name)
    }

    /// Display name without a trailing parenthetical, e.g. `Arithmetic`.
    pub fn short_name(&self, c: VulnClass) -> &str {
        let name = self.display_name(c);
        match name.find(" (") {
            Some(i) => &name[..i],
            None => name,
        }
    }

    pub fn class_for_swc_id(&self, id: &str) -> Option<VulnClass> {
        VulnClass::ALL
            .into_iter()
            .find(|c| self.swc_id(*c).eq_ignore_ascii_case(id))
    }
}

impl Default for SwcMapping {
    fn default() -> Self {
        TaxonomyConfig::default().swc
    }
}

/// How many supporting tools must agree before a class becomes a gold label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quorum {
    /// floor(n/2)+1 of the class's n supporting tools.
    StrictMajority,
    /// At least k of the class's supporting tools.
    AtLeast(usize),
}

impl Quorum {
    pub fn required(self, supporting: usize) -> usize {
        match self {
            Quorum::StrictMajority => supporting / 2 + 1,
            Quorum::AtLeast(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VotePolicy {
    supporting: [ToolSet; 8],
    pub quorum: Quorum,
}

impl VotePolicy {
    pub fn new(supporting: [ToolSet; 8], quorum: Quorum) -> Result<Self, TaxonomyError> {
        for (c, s) in VulnClass::ALL.iter().zip(supporting.iter()) {
            if s.is_empty() {
                return Err(TaxonomyError::Config(format!("{c}: no supporting tools")));
            }
        }
        if let Quorum::AtLeast(0) = quorum {
            return Err(TaxonomyError::Config("quorum k must be at least 1".into()));
        }
        Ok(VotePolicy { supporting, quorum })
    }

    /// Every class supported by all five tools.
    pub fn uniform(quorum: Quorum) -> Self {
        VotePolicy { supporting: [ToolSet::ALL; 8], quorum }
    }

    pub fn supporting_tools(&self, c: VulnClass) -> ToolSet {
        self.supporting[c.index()]
    }

    pub fn required_votes(&self, c: VulnClass) -> usize {
        self.quorum.required(self.supporting_tools(c).len())
    }
}

impl Default for VotePolicy {
    fn default() -> Self {
        TaxonomyConfig::default().vote
    }
}

/// Per-tool detector id to class table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DetectorTable {
    by_id: HashMap<String, VulnClass>,
}

impl DetectorTable {
    pub fn classify(&self, detector_id: &str) -> Option<VulnClass> {
        self.by_id.get(&normalize_detector_id(detector_id)).copied()
    }

    pub fn classes(&self) -> LabelSet {
        self.by_id.values().copied().collect()
    }

    fn insert(&mut self, id: &str, c: VulnClass) -> Result<(), TaxonomyError> {
        match self.by_id.insert(normalize_detector_id(id), c) {
            Some(prev) if prev != c => Err(TaxonomyError::Config(format!(
                "detector id `{id}` maps to both {prev} and {c}"
            ))),
            _ => Ok(()),
        }
    }
}

fn normalize_detector_id(id: &str) -> String {
    id.trim().to_ascii_lowercase()
}

/// Everything the taxonomy needs from configuration: SWC names, detector
/// tables and the vote policy.
#[derive(Debug, Clone)]
pub struct TaxonomyConfig {
    pub swc: SwcMapping,
    pub detectors: [DetectorTable; 5],
    pub vote: VotePolicy,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTaxonomy {
    swc: BTreeMap<String, SwcEntry>,
    #[serde(default)]
    detectors: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    #[serde(default)]
    vote: RawVote,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawVote {
    #[serde(default)]
    quorum: Option<String>,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    supporting: BTreeMap<String, Vec<String>>,
}

impl TaxonomyConfig {
    pub fn from_toml(text: &str) -> Result<Self, TaxonomyError> {
        let raw: RawTaxonomy = toml::from_str(text).map_err(|e| TaxonomyError::Config(e.to_string()))?;

        let mut swc: [Option<SwcEntry>; 8] = Default::default();
        for (k, v) in raw.swc {
            let c: VulnClass = k.parse().map_err(|e: super::class::UnknownClass| TaxonomyError::Config(e.to_string()))?;
            swc[c.index()] = Some(v);
        }
        let mut entries = Vec::with_capacity(8);
        for (c, e) in VulnClass::ALL.iter().zip(swc) {
            entries.push(e.ok_or_else(|| TaxonomyError::Config(format!("[swc] is missing {c}")))?);
        }
        let swc = SwcMapping::new(entries.try_into().expect("eight entries"))?;

        let mut detectors: [DetectorTable; 5] = Default::default();
        for (tool_name, table) in raw.detectors {
            let tool: Tool = tool_name.parse()?;
            for (class_name, ids) in table {
                let c: VulnClass = class_name
                    .parse()
                    .map_err(|e: super::class::UnknownClass| TaxonomyError::Config(e.to_string()))?;
                for id in ids {
                    detectors[tool.index()].insert(&id, c)?;
                }
            }
        }

        let quorum = match raw.vote.quorum.as_deref() {
            None | Some("strict-majority") => Quorum::StrictMajority,
            Some("k-of-n") => Quorum::AtLeast(
                raw.vote
                    .k
                    .ok_or_else(|| TaxonomyError::Config("quorum `k-of-n` needs `k`".into()))?,
            ),
            Some(other) => return Err(TaxonomyError::Config(format!("unknown quorum `{other}`"))),
        };

        let mut supporting = [ToolSet::default(); 8];
        for c in VulnClass::ALL {
            supporting[c.index()] = Tool::ALL
                .into_iter()
                .filter(|t| detectors[t.index()].classes().contains(c))
                .collect();
        }
        for (class_name, tools) in raw.vote.supporting {
            let c: VulnClass = class_name
                .parse()
                .map_err(|e: super::class::UnknownClass| TaxonomyError::Config(e.to_string()))?;
            supporting[c.index()] = tools.iter().map(|t| t.parse()).collect::<Result<ToolSet, _>>()?;
        }
        let vote = VotePolicy::new(supporting, quorum)?;

        Ok(TaxonomyConfig { swc, detectors, vote })
    }

    pub fn load(path: &Path) -> Result<Self, TaxonomyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TaxonomyError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn detector_table(&self, tool: Tool) -> &DetectorTable {
        &self.detectors[tool.index()]
    }
}

impl Default for TaxonomyConfig {
    fn default() -> Self {
        static PARSED: std::sync::OnceLock<TaxonomyConfig> = std::sync::OnceLock::new();
        PARSED
            .get_or_init(|| TaxonomyConfig::from_toml(DEFAULT_TAXONOMY).expect("embedded taxonomy is valid"))
            .clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_covers_every_class() {
        let cfg = TaxonomyConfig::default();
        assert_eq!(cfg.swc.line(VulnClass::RENT), "SWC-107 - Reentrancy");
        assert_eq!(cfg.swc.short_name(VulnClass::ARTHM), "Arithmetic");
        for c in VulnClass::ALL {
            assert!(!cfg.vote.supporting_tools(c).is_empty(), "{c}");
        }
    }

    #[test]
    fn slither_reentrancy_maps_to_rent() {
        let cfg = TaxonomyConfig::default();
        assert_eq!(cfg.detector_table(Tool::Slither).classify("reentrancy-eth"), Some(VulnClass::RENT));
        assert_eq!(cfg.detector_table(Tool::Slither).classify("naming-convention"), None);
    }

    #[test]
    fn rejects_bad_swc_id() {
        let bad = DEFAULT_TAXONOMY.replace("SWC-107", "SWC107");
        assert!(matches!(TaxonomyConfig::from_toml(&bad), Err(TaxonomyError::Config(_))));
    }

    #[test]
    fn supporting_override_and_k_of_n() {
        let text = format!(
            "{}\n[vote.supporting]\nRENT = [\"Slither\", \"Mythril\"]\n",
            DEFAULT_TAXONOMY.replace("quorum = \"strict-majority\"", "quorum = \"k-of-n\"\nk = 2")
        );
        let cfg = TaxonomyConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.vote.quorum, Quorum::AtLeast(2));
        assert_eq!(cfg.vote.supporting_tools(VulnClass::RENT).len(), 2);
    }

    #[test]
    fn strict_majority_thresholds() {
        assert_eq!(Quorum::StrictMajority.required(5), 3);
        assert_eq!(Quorum::StrictMajority.required(4), 3);
        assert_eq!(Quorum::StrictMajority.required(2), 2);
        assert_eq!(Quorum::StrictMajority.required(1), 1);
    }
}
