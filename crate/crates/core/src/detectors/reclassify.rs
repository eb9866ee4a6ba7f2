use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::parse::{find_phrase, normalize, swc_ids};
use super::DetectorError;
use crate::taxonomy::{SwcMapping, VulnClass};

const EMBEDDED: &str = include_str!("../../data/synonyms.toml");

/// Phrase table for mapping free-text findings onto the taxonomy: SWC ids,
/// display names and short names from the mapping, plus configured synonyms.
#[derive(Debug, Clone)]
pub struct SynonymTable {
    mapping: SwcMapping,
    phrases: Vec<(String, VulnClass)>,
}

#[derive(Deserialize)]
struct SynonymFile {
    synonyms: BTreeMap<String, Vec<String>>,
}

impl SynonymTable {
    pub fn new(mapping: SwcMapping, synonyms: &[(VulnClass, String)]) -> Self {
        let mut phrases = Vec::new();
        let mut add = |p: &str, c: VulnClass| {
            let p = normalize(p);
            if !p.is_empty() {
                phrases.push((p, c));
            }
        };
        for c in VulnClass::ALL {
            add(mapping.display_name(c), c);
            add(mapping.short_name(c), c);
        }
        for (c, p) in synonyms {
            add(p, *c);
        }
        SynonymTable { mapping, phrases }
    }

    pub fn from_toml(text: &str, mapping: SwcMapping) -> Result<Self, DetectorError> {
        let file: SynonymFile = toml::from_str(text).map_err(|e| DetectorError::Config(format!("synonym table: {e}")))?;
        let mut entries = Vec::new();
        for (class, list) in file.synonyms {
            let c: VulnClass = class.parse().map_err(|e| DetectorError::Config(format!("synonym table: {e}")))?;
            entries.extend(list.into_iter().map(|p| (c, p)));
        }
        Ok(Self::new(mapping, &entries))
    }

    pub fn load(path: &Path, mapping: SwcMapping) -> Result<Self, DetectorError> {
        let text = std::fs::read_to_string(path).map_err(|e| DetectorError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, mapping)
    }

    pub fn mapping(&self) -> &SwcMapping {
        &self.mapping
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }
}

impl Default for SynonymTable {
    fn default() -> Self {
        Self::from_toml(EMBEDDED, SwcMapping::default()).expect("embedded synonym table is valid")
    }
}

/// Maps a free-text vulnerability name to a class. An SWC id from the
/// taxonomy wins; otherwise the earliest phrase match, longest first on ties.
/// Anything else is outside the taxonomy.
pub fn reclassify(vuln_text: &str, table: &SynonymTable) -> Option<VulnClass> {
    for cap in swc_ids().captures_iter(vuln_text) {
        if let Some(c) = table.mapping.class_for_swc_id(&format!("SWC-{}", &cap[1])) {
            return Some(c);
        }
    }
    let hay = normalize(vuln_text);
    table
        .phrases
        .iter()
        .filter_map(|(p, c)| find_phrase(&hay, p).map(|start| (start, std::cmp::Reverse(p.len()), *c)))
        .min_by_key(|&(start, len, c)| (start, len, c.index()))
        .map(|(_, _, c)| c)
}
