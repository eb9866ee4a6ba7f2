use serde::{Deserialize, Serialize};

use super::parse::parse_detection_output;
use super::{DetectorError, Prediction, PredictionFlag, Strategy};
use crate::corpus::ContractRecord;
use crate::gateway::{ChatMessage, ChatRequest, Gateway};
use crate::prompts::{build_detection_prompt, render_alpaca_query, render_chat_query, Rendering};
use crate::taxonomy::SwcMapping;

/// A model trained on the detection prompts, queried in the rendering it
/// was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetunedModel {
    pub name: String,
    pub rendering: Rendering,
}

/// The query for `record`: the detection prompt without its answer.
pub fn finetuned_messages(record: &ContractRecord, rendering: Rendering, mapping: &SwcMapping) -> Vec<ChatMessage> {
    let prompt = build_detection_prompt(record, mapping);
    match rendering {
        Rendering::AlpacaInstruct => vec![ChatMessage::user(render_alpaca_query(&prompt))],
        Rendering::ChatMessages => render_chat_query(&prompt),
    }
}

pub fn detect_finetuned(
    gateway: &Gateway,
    model: &FinetunedModel,
    record: &ContractRecord,
    mapping: &SwcMapping,
) -> Result<Prediction, DetectorError> {
    let req = ChatRequest::new(&model.name, finetuned_messages(record, model.rendering, mapping));
    let reply = gateway.complete(&req)?;
    let parsed = parse_detection_output(&reply.value, mapping).map_err(|e| match e {
        DetectorError::UnparseableResponse { detail, .. } => {
            DetectorError::UnparseableResponse { detail, fingerprint: Some(reply.fingerprint.clone()) }
        }
        other => other,
    })?;
    let mut p = Prediction::new(record.address.clone(), parsed.labels, Strategy::Finetuned);
    p.model = Some(model.name.clone());
    p.provenance.push(reply.fingerprint);
    if parsed.vacuous {
        p.flags.push(PredictionFlag::VacuousList);
    }
    Ok(p)
}
