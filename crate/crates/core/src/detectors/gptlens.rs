use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::reclassify::{reclassify, SynonymTable};
use super::{DetectorError, Finding, PredictionFlag};
use crate::gateway::{ChatMessage, ChatRequest, Fingerprint, Gateway, GatewayError, ResponseSchema};
use crate::prompts::vulnerability_block;
use crate::taxonomy::{LabelSet, SwcMapping};

/// Critic grades plus the weighted final score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticScore {
    pub correctness: f64,
    pub severity: f64,
    pub profitability: f64,
    pub final_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankWeights {
    pub correctness: f64,
    pub severity: f64,
    pub profitability: f64,
}

impl RankWeights {
    pub fn new(correctness: f64, severity: f64, profitability: f64) -> Result<Self, DetectorError> {
        let w = [correctness, severity, profitability];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DetectorError::Config(format!(
                "rank weights must be non-negative and sum to 1, got ({correctness}, {severity}, {profitability})"
            )));
        }
        Ok(RankWeights { correctness, severity, profitability })
    }
}

impl Default for RankWeights {
    fn default() -> Self {
        RankWeights { correctness: 0.5, severity: 0.25, profitability: 0.25 }
    }
}

pub fn gptlens_rank(correctness: f64, severity: f64, profitability: f64, w: &RankWeights) -> f64 {
    w.correctness * correctness + w.severity * severity + w.profitability * profitability
}

impl CriticScore {
    pub fn new(correctness: f64, severity: f64, profitability: f64, w: &RankWeights) -> Self {
        CriticScore { correctness, severity, profitability, final_score: gptlens_rank(correctness, severity, profitability, w) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFinding {
    pub finding: Finding,
    pub score: CriticScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdCmp {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub cmp: ThresholdCmp,
    pub bound: f64,
}

impl Threshold {
    pub fn passes(&self, x: f64) -> bool {
        match self.cmp {
            ThresholdCmp::Ge => x >= self.bound,
            ThresholdCmp::Gt => x > self.bound,
        }
    }
}

/// Inclusion rule for critic-scored findings, named like `gt1c`
/// (correctness > 1), `gte1c` (correctness >= 1) or `gt5f-gt5c`
/// (final score > 5 and correctness > 5).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub name: String,
    pub correctness: Threshold,
    pub final_score: Option<Threshold>,
}

/// The correctness chain from loosest to strictest.
pub const PRESET_CHAIN: [&str; 8] = ["gte1c", "gt1c", "gt2c", "gt3c", "gt4c", "gt5c", "gt6c", "gt7c"];

fn threshold_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:gt(\d+(?:\.\d+)?)f-)?(gte|gt)(\d+(?:\.\d+)?)c$").expect("static regex"))
}

impl ThresholdConfig {
    /// The chain plus `gt5f-gt5c`, in table order.
    pub fn presets() -> Vec<ThresholdConfig> {
        let mut names: Vec<&str> = PRESET_CHAIN.to_vec();
        names.insert(6, "gt5f-gt5c");
        names.into_iter().map(|n| n.parse().expect("preset names parse")).collect()
    }

    pub fn admits(&self, s: &CriticScore) -> bool {
        self.correctness.passes(s.correctness) && self.final_score.is_none_or(|t| t.passes(s.final_score))
    }
}

impl std::str::FromStr for ThresholdConfig {
    type Err = DetectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DetectorError::Config(format!("threshold `{s}` is not of the form gt<N>c, gte<N>c or gt<N>f-gt<N>c"));
        let cap = threshold_re().captures(s).ok_or_else(bad)?;
        let num = |m: regex::Match| -> Result<f64, DetectorError> {
            let v: f64 = m.as_str().parse().map_err(|_| bad())?;
            if !(0.0..=10.0).contains(&v) {
                return Err(DetectorError::Config(format!("threshold `{s}`: bound {v} outside [0, 10]")));
            }
            Ok(v)
        };
        let cmp = if &cap[2] == "gte" { ThresholdCmp::Ge } else { ThresholdCmp::Gt };
        Ok(ThresholdConfig {
            name: s.to_string(),
            correctness: Threshold { cmp, bound: num(cap.get(3).expect("group 3 is mandatory"))? },
            final_score: cap
                .get(1)
                .map(|m| num(m).map(|bound| Threshold { cmp: ThresholdCmp::Gt, bound }))
                .transpose()?,
        })
    }
}

/// Classes of the mapped findings admitted by `cfg`.
pub fn apply_threshold(scored: &[ScoredFinding], cfg: &ThresholdConfig) -> LabelSet {
    scored
        .iter()
        .filter(|s| cfg.admits(&s.score))
        .filter_map(|s| s.finding.mapped_class)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GptLensConfig {
    pub auditor: String,
    pub critic: String,
    pub top_k: usize,
    pub weights: RankWeights,
    pub threshold: ThresholdConfig,
}

impl GptLensConfig {
    pub fn new(auditor: impl Into<String>, critic: impl Into<String>) -> Self {
        GptLensConfig {
            auditor: auditor.into(),
            critic: critic.into(),
            top_k: 3,
            weights: RankWeights::default(),
            threshold: "gt1c".parse().expect("preset"),
        }
    }
}

fn auditor_prompt(mapping: &SwcMapping, top_k: usize) -> String {
    format!(
        "You are a smart contract auditor reviewing Ethereum contracts written in Solidity. \
Identify the most critical vulnerabilities in the contract you are given, considering only these classes:\n{}\n\n\
Report at most {top_k} vulnerabilities, most critical first. For each, name the class as \"SWC-ID - Vulnerability name\", \
quote the vulnerable code and explain briefly why it is exploitable. Report an empty list if no listed class applies.",
        vulnerability_block(LabelSet::FULL, mapping)
    )
}

const CRITIC_PROMPT: &str = "You are a harsh critic of smart contract audit reports. For each reported vulnerability, check the code and the reasoning, then grade it from 0 to 10 on three axes:
- correctness: whether the reasoning holds and the code is really vulnerable
- severity: how much damage an exploit would cause
- profitability: how much an attacker could gain from it
Return one entry per vulnerability id with a short criticism.

Example: a report says withdraw() sends ether with call.value before setting the balance to zero, enabling reentrancy. The claim is right and funds can be drained: correctness 9, severity 9, profitability 8.
Example: a report says an owner-only setter reads block.timestamp for a log message, enabling time manipulation. The timestamp guards nothing: correctness 1, severity 1, profitability 0.";

pub fn auditor_schema() -> ResponseSchema {
    ResponseSchema {
        name: "report_vulnerabilities".into(),
        description: "List the most critical vulnerabilities found.".into(),
        parameters: json!({
            "type": "object",
            "required": ["findings"],
            "properties": {
                "findings": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["vulnerability", "code"],
                        "properties": {
                            "vulnerability": {"type": "string"},
                            "function_name": {"type": "string"},
                            "code": {"type": "string"},
                            "reason": {"type": "string"},
                            "line_start": {"type": "integer", "minimum": 1},
                            "line_end": {"type": "integer", "minimum": 1}
                        }
                    }
                }
            }
        }),
    }
}

pub fn grading_schema() -> ResponseSchema {
    ResponseSchema {
        name: "grade_vulnerabilities".into(),
        description: "Grade every listed vulnerability.".into(),
        parameters: json!({
            "type": "object",
            "required": ["scores"],
            "properties": {
                "scores": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["id", "correctness", "severity", "profitability"],
                        "properties": {
                            "id": {"type": "integer", "minimum": 1},
                            "correctness": {"type": "number"},
                            "severity": {"type": "number"},
                            "profitability": {"type": "number"},
                            "criticism": {"type": "string"}
                        }
                    }
                }
            }
        }),
    }
}

fn decode<T: for<'de> Deserialize<'de>>(v: serde_json::Value) -> Result<T, DetectorError> {
    serde_json::from_value(v).map_err(|e| {
        DetectorError::Gateway(GatewayError::SchemaViolation { path: String::new(), message: e.to_string() })
    })
}

#[derive(Deserialize)]
struct AuditItem {
    vulnerability: String,
    code: String,
    #[serde(default)]
    function_name: Option<String>,
    #[serde(default)]
    reason: String,
    line_start: Option<u32>,
    line_end: Option<u32>,
}

#[derive(Deserialize)]
struct AuditReply {
    findings: Vec<AuditItem>,
}

/// Auditor stage: up to `top_k` findings in the order the model ranked them.
/// Names are kept verbatim in `vuln_text` and mapped separately.
pub fn gptlens_audit(
    gateway: &Gateway,
    model: &str,
    source: &str,
    top_k: usize,
    synonyms: &SynonymTable,
) -> Result<(Vec<Finding>, Fingerprint), DetectorError> {
    let req = ChatRequest::new(
        model,
        vec![ChatMessage::system(auditor_prompt(synonyms.mapping(), top_k)), ChatMessage::user(source)],
    )
    .with_schema(auditor_schema());
    let reply = gateway.complete_structured(&req)?;
    let parsed: AuditReply = decode(reply.value)?;
    let findings = parsed
        .findings
        .into_iter()
        .take(top_k)
        .map(|it| Finding {
            mapped_class: reclassify(&it.vulnerability, synonyms),
            vuln_text: it.vulnerability,
            code_excerpt: match it.function_name {
                Some(name) if !name.is_empty() && !it.code.contains(&name) => format!("// {name}\n{}", it.code),
                _ => it.code,
            },
            line_span: match (it.line_start, it.line_end) {
                (Some(a), Some(b)) => Some((a.min(b), a.max(b))),
                (Some(a), None) | (None, Some(a)) => Some((a, a)),
                _ => None,
            },
            reasoning: it.reason,
        })
        .collect();
    Ok((findings, reply.fingerprint))
}

fn critic_user_prompt(findings: &[Finding]) -> String {
    let mut out = String::from("Grade these vulnerabilities.\n\n");
    for (i, f) in findings.iter().enumerate() {
        out.push_str(&format!(
            "id: {}\nvulnerability: {}\ncode:\n{}\nreason: {}\n\n",
            i + 1,
            f.vuln_text,
            f.code_excerpt,
            f.reasoning
        ));
    }
    out
}

#[derive(Deserialize)]
struct GradeItem {
    id: u64,
    correctness: f64,
    severity: f64,
    profitability: f64,
}

#[derive(Deserialize)]
struct GradeReply {
    scores: Vec<GradeItem>,
}

/// Scored findings, clamp flags and the critic exchange fingerprint.
pub type Critique = (Vec<ScoredFinding>, Vec<PredictionFlag>, Option<Fingerprint>);

/// Critic stage: one score per finding, aligned with the input order.
/// Grades outside [0, 10] are clamped and reported as flags.
pub fn gptlens_critic(
    gateway: &Gateway,
    model: &str,
    findings: &[Finding],
    weights: &RankWeights,
) -> Result<Critique, DetectorError> {
    if findings.is_empty() {
        return Ok((Vec::new(), Vec::new(), None));
    }
    let req = ChatRequest::new(
        model,
        vec![ChatMessage::system(CRITIC_PROMPT), ChatMessage::user(critic_user_prompt(findings))],
    )
    .with_schema(grading_schema());
    let reply = gateway.complete_structured(&req)?;
    let parsed: GradeReply = decode(reply.value)?;

    let mut by_id: BTreeMap<usize, GradeItem> = BTreeMap::new();
    for g in parsed.scores {
        let id = usize::try_from(g.id).unwrap_or(usize::MAX);
        if !(1..=findings.len()).contains(&id) {
            return Err(DetectorError::InvalidCriticReply(format!("score id {} outside 1..={}", g.id, findings.len())));
        }
        if by_id.insert(id - 1, g).is_some() {
            return Err(DetectorError::InvalidCriticReply(format!("finding {id} graded twice")));
        }
    }

    let mut flags = Vec::new();
    let mut scored = Vec::with_capacity(findings.len());
    for (i, f) in findings.iter().enumerate() {
        let g = by_id
            .get(&i)
            .ok_or_else(|| DetectorError::InvalidCriticReply(format!("finding {} was not graded", i + 1)))?;
        let mut clamp = |axis: &str, v: f64| {
            let c = if v.is_nan() { 0.0 } else { v.clamp(0.0, 10.0) };
            if c != v {
                flags.push(PredictionFlag::ClampedGrade { finding: i + 1, axis: axis.into(), value: v });
            }
            c
        };
        let (c, s, p) = (clamp("correctness", g.correctness), clamp("severity", g.severity), clamp("profitability", g.profitability));
        scored.push(ScoredFinding { finding: f.clone(), score: CriticScore::new(c, s, p, weights) });
    }
    Ok((scored, flags, Some(reply.fingerprint)))
}
