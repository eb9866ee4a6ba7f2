use serde::{Deserialize, Serialize};

use super::templates::*;
use crate::corpus::ContractRecord;
use crate::taxonomy::{LabelSet, SwcMapping};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    Detection,
    Generation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptCase {
    Vulnerable,
    Clean,
}

impl PromptCase {
    pub fn of(labels: LabelSet) -> Self {
        if labels.is_empty() {
            PromptCase::Clean
        } else {
            PromptCase::Vulnerable
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub style: PromptStyle,
    pub case: PromptCase,
}

/// One `<swc id> - <name>` line per class, canonical order, `\n`-joined.
pub fn vulnerability_block(labels: LabelSet, mapping: &SwcMapping) -> String {
    labels.iter().map(|c| mapping.line(c)).collect::<Vec<_>>().join("\n")
}

/// Expected detection answer for a label set. Vulnerable answers list only
/// the present classes; clean answers list all eight.
pub fn detection_output(labels: LabelSet, mapping: &SwcMapping) -> String {
    match PromptCase::of(labels) {
        PromptCase::Vulnerable => format!("{DETECTION_VULNERABLE_HEADER}\n{}", vulnerability_block(labels, mapping)),
        PromptCase::Clean => format!("{DETECTION_CLEAN_HEADER}\n{}", vulnerability_block(LabelSet::FULL, mapping)),
    }
}

pub fn detection_input(cleaned_source: &str) -> String {
    format!("{DETECTION_INPUT_PREFIX}{cleaned_source}")
}

/// Detection prompt for `record`; unlabelled records are treated as clean.
pub fn build_detection_prompt(record: &ContractRecord, mapping: &SwcMapping) -> PromptRecord {
    let labels = record.gold();
    PromptRecord {
        instruction: DETECTION_INSTRUCTION.to_string(),
        input: detection_input(&record.cleaned_source),
        output: detection_output(labels, mapping),
        style: PromptStyle::Detection,
        case: PromptCase::of(labels),
    }
}

/// Generation prompt for `record`: the request names all eight classes
/// under a "1 or more of" or "none of" header, and the answer is the code.
pub fn build_generation_prompt(record: &ContractRecord, mapping: &SwcMapping) -> PromptRecord {
    let case = PromptCase::of(record.gold());
    let header = match case {
        PromptCase::Vulnerable => GENERATION_VULNERABLE_INPUT,
        PromptCase::Clean => GENERATION_CLEAN_INPUT,
    };
    PromptRecord {
        instruction: GENERATION_INSTRUCTION.to_string(),
        input: format!("{header}\n{}", vulnerability_block(LabelSet::FULL, mapping)),
        output: record.cleaned_source.clone(),
        style: PromptStyle::Generation,
        case,
    }
}
