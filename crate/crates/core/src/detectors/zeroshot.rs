use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::reclassify::{reclassify, SynonymTable};
use super::{DetectorError, Finding};
use crate::gateway::{ChatMessage, ChatRequest, Fingerprint, Gateway, GatewayError, ResponseSchema};
use crate::prompts::vulnerability_block;
use crate::taxonomy::{LabelSet, SwcMapping};

const ZERO_SHOT_HEAD: &str = "You are a world renown smart contract auditor. You must analyze Ethereum smart contracts to detect exploits and develop example code to test the exploit to validate it. You are able to utilize fuzzing techniques to locate and fix weaknesses in the contracts, while also understanding the concepts of cryptography, blockchain technology, and secure coding practices. \nThe specific exploits you MUST search for in each smart contract are;";

const ZERO_SHOT_RULES: &str = "Rules you MUST follow:
- Be brief and to the point
- Think step by step
- Try your best to avoid false positives in exploit identification
- Provide the code vulnerable code from the smart contract with line numbers
- \"Status\" should be only \"No Exploit\" or \"Exploit Found\"";

const CRITIC_SYSTEM: &str = "The vulnerabilities and listed code combinations are likely to contain mistakes. As a harsh vulnerability critic, your duty is to scrutinize the exploit listed and associated code and evaluate the correctness and severity of given vulnerabilities and associated reasoning and provide a 'confirm' or 'reject' response with detailed feedback.

Rules you MUST follow:
- Be brief and to the point
- Think step by step
- \"Status\" should only be 'No changes recommended' when you have not rejected any exploits identified and have not put any rejected exploits in exploits_rejected, or 'Changes recommended' if you have rejected any exploits and stored them in exploits_rejected
- \"Exploits\" should contain the confirmed exploits with your feedback
- \"Exploits_rejected\" should contain the rejected exploits with the reason for rejection";

const CRITIC_USER_HEAD: &str = "please critique these exploit and code combinations for Ethereum smart contracts written in Solidity: \n\n";

pub fn zero_shot_system_prompt(mapping: &SwcMapping) -> String {
    format!("{ZERO_SHOT_HEAD}\n{}\n\n{ZERO_SHOT_RULES}", vulnerability_block(LabelSet::FULL, mapping))
}

pub fn zero_shot_schema() -> ResponseSchema {
    ResponseSchema {
        name: "report_exploits".into(),
        description: "Report the outcome of the smart contract audit.".into(),
        parameters: json!({
            "type": "object",
            "required": ["status", "exploits"],
            "properties": {
                "status": {"type": "string", "enum": ["No Exploit", "Exploit Found"]},
                "exploits": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["exploit", "code"],
                        "properties": {
                            "exploit": {"type": "string", "description": "SWC id and name of the exploit"},
                            "code": {"type": "string", "description": "the vulnerable code"},
                            "line_start": {"type": "integer", "minimum": 1},
                            "line_end": {"type": "integer", "minimum": 1},
                            "reasoning": {"type": "string"}
                        }
                    }
                }
            }
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeroShotStatus {
    #[serde(rename = "No Exploit")]
    NoExploit,
    #[serde(rename = "Exploit Found")]
    ExploitFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotOutcome {
    pub status: ZeroShotStatus,
    pub findings: Vec<Finding>,
    pub fingerprint: Fingerprint,
}

#[derive(Deserialize)]
struct ExploitItem {
    exploit: String,
    code: String,
    line_start: Option<u32>,
    line_end: Option<u32>,
    #[serde(default)]
    reasoning: String,
}

fn span(start: Option<u32>, end: Option<u32>) -> Option<(u32, u32)> {
    match (start, end) {
        (Some(a), Some(b)) => Some((a.min(b), a.max(b))),
        (Some(a), None) | (None, Some(a)) => Some((a, a)),
        (None, None) => None,
    }
}

fn decode<T: for<'de> Deserialize<'de>>(v: Value) -> Result<T, DetectorError> {
    serde_json::from_value(v).map_err(|e| {
        DetectorError::Gateway(GatewayError::SchemaViolation { path: String::new(), message: e.to_string() })
    })
}

pub fn detect_zero_shot(
    gateway: &Gateway,
    model: &str,
    source: &str,
    synonyms: &SynonymTable,
) -> Result<ZeroShotOutcome, DetectorError> {
    let req = ChatRequest::new(
        model,
        vec![ChatMessage::system(zero_shot_system_prompt(synonyms.mapping())), ChatMessage::user(source)],
    )
    .with_schema(zero_shot_schema());
    let reply = gateway.complete_structured(&req)?;
    let status: ZeroShotStatus = decode(reply.value["status"].clone())?;
    let items: Vec<ExploitItem> = decode(reply.value["exploits"].clone())?;
    let findings = items
        .into_iter()
        .map(|it| Finding {
            mapped_class: reclassify(&it.exploit, synonyms),
            vuln_text: it.exploit,
            code_excerpt: it.code,
            line_span: span(it.line_start, it.line_end),
            reasoning: it.reasoning,
        })
        .collect();
    Ok(ZeroShotOutcome { status, findings, fingerprint: reply.fingerprint })
}

/// One `EXPLOIT n` block per finding, numbered from 1.
pub fn critic_user_prompt(findings: &[Finding]) -> String {
    let mut out = String::from(CRITIC_USER_HEAD);
    for (i, f) in findings.iter().enumerate() {
        let lines = match f.line_span {
            Some((a, b)) => format!("Lines {a}-{b}: "),
            None => String::new(),
        };
        out.push_str(&format!(
            "======== EXPLOIT {} ========\n\nexploit : {} \n\ncode : {lines}\n{} \n\n",
            i + 1,
            f.vuln_text,
            f.code_excerpt
        ));
    }
    out
}

pub fn critic_system_prompt() -> &'static str {
    CRITIC_SYSTEM
}

pub fn critic_schema() -> ResponseSchema {
    let item = |note: &str| {
        json!({
            "type": "object",
            "required": ["exploit_id"],
            "properties": {
                "exploit_id": {"type": "integer", "minimum": 1, "description": "the EXPLOIT number"},
                "exploit": {"type": "string"},
                note: {"type": "string"}
            }
        })
    };
    ResponseSchema {
        name: "critique_exploits".into(),
        description: "Confirm or reject each listed exploit.".into(),
        parameters: json!({
            "type": "object",
            "required": ["status", "exploits", "exploits_rejected"],
            "properties": {
                "status": {"type": "string", "enum": ["No changes recommended", "Changes recommended"]},
                "exploits": {"type": "array", "items": item("feedback")},
                "exploits_rejected": {"type": "array", "items": item("reason")}
            }
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticStatus {
    #[serde(rename = "No changes recommended")]
    NoChanges,
    #[serde(rename = "Changes recommended")]
    Changes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticOutcome {
    pub confirmed: Vec<Finding>,
    pub rejected: Vec<Finding>,
    pub fingerprint: Option<Fingerprint>,
}

#[derive(Deserialize)]
struct CriticItem {
    exploit_id: u64,
}

#[derive(Deserialize)]
struct CriticReply {
    status: CriticStatus,
    exploits: Vec<CriticItem>,
    exploits_rejected: Vec<CriticItem>,
}

/// Asks the critic to confirm or reject each finding. Findings the critic
/// does not mention are treated as rejected; the reply's status must agree
/// with the final partition.
pub fn critic_pass(gateway: &Gateway, model: &str, findings: &[Finding]) -> Result<CriticOutcome, DetectorError> {
    if findings.is_empty() {
        return Ok(CriticOutcome { confirmed: Vec::new(), rejected: Vec::new(), fingerprint: None });
    }
    let req = ChatRequest::new(
        model,
        vec![ChatMessage::system(CRITIC_SYSTEM), ChatMessage::user(critic_user_prompt(findings))],
    )
    .with_schema(critic_schema());
    let reply = gateway.complete_structured(&req)?;
    let parsed: CriticReply = decode(reply.value)?;

    let ids = |items: &[CriticItem]| -> Result<BTreeSet<usize>, DetectorError> {
        items
            .iter()
            .map(|it| match usize::try_from(it.exploit_id) {
                Ok(n) if (1..=findings.len()).contains(&n) => Ok(n - 1),
                _ => Err(DetectorError::InvalidCriticReply(format!(
                    "exploit_id {} outside 1..={}",
                    it.exploit_id,
                    findings.len()
                ))),
            })
            .collect()
    };
    let confirmed_ids = ids(&parsed.exploits)?;
    let rejected_ids = ids(&parsed.exploits_rejected)?;
    if let Some(both) = confirmed_ids.intersection(&rejected_ids).next() {
        return Err(DetectorError::InvalidCriticReply(format!("exploit {} both confirmed and rejected", both + 1)));
    }

    let mut outcome = CriticOutcome { confirmed: Vec::new(), rejected: Vec::new(), fingerprint: Some(reply.fingerprint) };
    for (i, f) in findings.iter().enumerate() {
        if confirmed_ids.contains(&i) {
            outcome.confirmed.push(f.clone());
        } else {
            outcome.rejected.push(f.clone());
        }
    }
    let consistent = (parsed.status == CriticStatus::NoChanges) == outcome.rejected.is_empty();
    if !consistent {
        let status = match parsed.status {
            CriticStatus::NoChanges => "No changes recommended",
            CriticStatus::Changes => "Changes recommended",
        };
        return Err(DetectorError::InconsistentCriticStatus {
            status: status.into(),
            rejected: outcome.rejected.len(),
            outcome: Box::new(outcome),
        });
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::schema;

    #[test]
    fn system_prompt_lists_all_classes() {
        let p = zero_shot_system_prompt(&SwcMapping::default());
        assert!(p.contains("practices. \nThe specific exploits you MUST search for in each smart contract are;\nSWC-132 - Locked Ether\n"));
        assert!(p.contains("SWC-104 - Unhandled Exception (Unchecked Call Return Value)\n\nRules you MUST follow:\n"));
        assert!(p.ends_with("- \"Status\" should be only \"No Exploit\" or \"Exploit Found\""));
    }

    #[test]
    fn schema_accepts_reference_replies() {
        let s = zero_shot_schema().parameters;
        schema::validate(&s, &json!({"status": "No Exploit", "exploits": []})).unwrap();
        schema::validate(
            &s,
            &json!({"status": "Exploit Found", "exploits": [{"exploit": "SWC-107 - Reentrancy", "code": "x()", "line_start": 3}]}),
        )
        .unwrap();
        let e = schema::validate(&s, &json!({"status": "maybe", "exploits": []})).unwrap_err();
        assert_eq!(e.path, "/status");
    }

    #[test]
    fn critic_prompt_layout() {
        let f = Finding {
            vuln_text: "SWC-107 - Reentrancy".into(),
            mapped_class: None,
            code_excerpt: "function f() public {\n}".into(),
            line_span: Some((138, 144)),
            reasoning: String::new(),
        };
        let p = critic_user_prompt(&[f.clone(), Finding { line_span: None, ..f }]);
        assert_eq!(
            p,
            "please critique these exploit and code combinations for Ethereum smart contracts written in Solidity: \n\n\
             ======== EXPLOIT 1 ========\n\nexploit : SWC-107 - Reentrancy \n\ncode : Lines 138-144: \nfunction f() public {\n} \n\n\
             ======== EXPLOIT 2 ========\n\nexploit : SWC-107 - Reentrancy \n\ncode : \nfunction f() public {\n} \n\n"
        );
    }

    #[test]
    fn spans_are_ordered() {
        assert_eq!(span(Some(9), Some(3)), Some((3, 9)));
        assert_eq!(span(None, Some(4)), Some((4, 4)));
        assert_eq!(span(None, None), None);
    }
}
