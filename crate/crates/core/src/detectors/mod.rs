//! Detection strategies. Each turns one contract into a [`Prediction`]:
//! a fine-tuned model answering the detection prompt, zero-shot structured
//! detection with an optional critic pass, auditor/critic ranking with a
//! score threshold, and a seeded random baseline.

mod finetuned;
mod gptlens;
mod parse;
mod random;
mod reclassify;
mod run;
mod zeroshot;

use serde::{Deserialize, Serialize};

use crate::address::Address;
use crate::gateway::{Fingerprint, GatewayError};
use crate::taxonomy::{LabelSet, VulnClass};

pub use finetuned::{detect_finetuned, finetuned_messages, FinetunedModel};
pub use gptlens::{
    apply_threshold, auditor_schema, gptlens_audit, gptlens_critic, gptlens_rank, grading_schema, CriticScore, GptLensConfig,
    RankWeights, ScoredFinding, Threshold, ThresholdCmp, ThresholdConfig, PRESET_CHAIN,
};
pub use parse::{parse_detection_output, ParsedDetection};
pub use random::{random_baseline, random_labels};
pub use reclassify::{reclassify, SynonymTable};
pub use run::{read_predictions, run_critic, run_detection, write_predictions, DetectorSpec, ScoringMode};
pub use zeroshot::{
    critic_pass, critic_schema, critic_system_prompt, critic_user_prompt, detect_zero_shot, zero_shot_schema, zero_shot_system_prompt,
    CriticOutcome, CriticStatus, ZeroShotOutcome, ZeroShotStatus,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Finetuned,
    #[serde(rename = "zeroshot")]
    ZeroShot,
    #[serde(rename = "zeroshot-critic")]
    ZeroShotCritic,
    #[serde(rename = "gptlens")]
    GptLens,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::Finetuned, Strategy::ZeroShot, Strategy::ZeroShotCritic, Strategy::GptLens, Strategy::Random];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Finetuned => "finetuned",
            Strategy::ZeroShot => "zeroshot",
            Strategy::ZeroShotCritic => "zeroshot-critic",
            Strategy::GptLens => "gptlens",
            Strategy::Random => "random",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy `{s}` (expected one of finetuned, zeroshot, zeroshot-critic, gptlens, random)"))
    }
}

/// A vulnerability claim made by a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    /// The vulnerability as the model named it.
    pub vuln_text: String,
    pub mapped_class: Option<VulnClass>,
    pub code_excerpt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_span: Option<(u32, u32)>,
    #[serde(default)]
    pub reasoning: String,
}

/// Irregularities tolerated while producing a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictionFlag {
    /// The reply could not be interpreted; the prediction is empty.
    Unparseable { detail: String },
    /// A vulnerable header followed by no recognizable class.
    VacuousList,
    /// The structured status disagrees with the findings it came with.
    StatusMismatch { detail: String },
    /// A critic grade outside [0, 10] was clamped.
    ClampedGrade { finding: usize, axis: String, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub address: Address,
    pub labels: LabelSet,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Cache fingerprints of every model exchange behind this prediction.
    #[serde(default)]
    pub provenance: Vec<Fingerprint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<PredictionFlag>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<Finding>,
    /// Findings a critic rejected.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<Finding>,
    /// Critic grades aligned with `findings`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<CriticScore>,
}

impl Prediction {
    pub fn new(address: Address, labels: LabelSet, strategy: Strategy) -> Self {
        Prediction {
            address,
            labels,
            strategy,
            model: None,
            provenance: Vec::new(),
            flags: Vec::new(),
            findings: Vec::new(),
            rejected: Vec::new(),
            scores: Vec::new(),
        }
    }
}

/// Classes named by the mapped findings.
pub fn labels_of(findings: &[Finding]) -> LabelSet {
    findings.iter().filter_map(|f| f.mapped_class).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum DetectorError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("unparseable response: {detail}")]
    UnparseableResponse { detail: String, fingerprint: Option<Fingerprint> },
    #[error("critic status `{status}` contradicts {rejected} rejected finding(s)")]
    InconsistentCriticStatus { status: String, rejected: usize, outcome: Box<CriticOutcome> },
    #[error("invalid critic reply: {0}")]
    InvalidCriticReply(String),
    #[error("detector config: {0}")]
    Config(String),
    #[error("{address}: {source}")]
    Contract { address: Address, source: Box<DetectorError> },
    #[error(transparent)]
    Io(#[from] crate::jsonl::JsonlError),
}
