use serde::Serialize;

use super::build::PromptRecord;
use super::templates::ALPACA_PREAMBLE;
use crate::gateway::{ChatMessage, Role};

/// Alpaca instruct rendering with the standard preamble. The input section
/// is emitted even when the input is empty.
pub fn render_alpaca(p: &PromptRecord) -> String {
    alpaca_text(&p.instruction, &p.input, &p.output)
}

/// The Alpaca prompt up to and including the response header, used when
/// querying a model trained on this format.
pub fn render_alpaca_query(p: &PromptRecord) -> String {
    alpaca_text(&p.instruction, &p.input, "")
}

fn alpaca_text(instruction: &str, input: &str, output: &str) -> String {
    format!("{ALPACA_PREAMBLE}\n\n### Instruction:\n{instruction}\n\n### Input:\n{input}\n\n### Response:\n{output}")
}

/// system = instruction, user = input, assistant = output.
pub fn render_chat(p: &PromptRecord) -> Vec<ChatMessage> {
    vec![
        ChatMessage::new(Role::System, &p.instruction),
        ChatMessage::new(Role::User, &p.input),
        ChatMessage::new(Role::Assistant, &p.output),
    ]
}

/// The query half of [`render_chat`]: system and user only.
pub fn render_chat_query(p: &PromptRecord) -> Vec<ChatMessage> {
    let mut m = render_chat(p);
    m.pop();
    m
}

#[derive(Serialize)]
pub(crate) struct AlpacaLine<'a> {
    pub instruction: &'a str,
    pub input: &'a str,
    pub output: &'a str,
}

#[derive(Serialize)]
pub(crate) struct ChatLine<'a> {
    pub messages: &'a [ChatMessage],
}

pub fn alpaca_line(p: &PromptRecord) -> String {
    serde_json::to_string(&AlpacaLine { instruction: &p.instruction, input: &p.input, output: &p.output })
        .expect("in-memory serialization")
}

pub fn chat_line(p: &PromptRecord) -> String {
    serde_json::to_string(&ChatLine { messages: &render_chat(p) }).expect("in-memory serialization")
}

/// Checks one line of a chat fine-tuning upload: an object whose
/// `messages` array holds `{role, content}` objects with known roles,
/// string contents, and at least one assistant turn.
pub fn validate_chat_line(line: &str) -> Result<(), String> {
    let v: serde_json::Value = serde_json::from_str(line).map_err(|e| format!("not JSON: {e}"))?;
    let messages = v
        .get("messages")
        .and_then(|m| m.as_array())
        .ok_or("missing `messages` array")?;
    if messages.is_empty() {
        return Err("`messages` is empty".into());
    }
    let mut assistant = false;
    for (i, m) in messages.iter().enumerate() {
        let role = m
            .get("role")
            .and_then(|r| r.as_str())
            .ok_or_else(|| format!("messages[{i}]: missing `role`"))?;
        match role {
            "system" | "user" => {}
            "assistant" => assistant = true,
            other => return Err(format!("messages[{i}]: unsupported role `{other}`")),
        }
        if !m.get("content").is_some_and(|c| c.is_string()) {
            return Err(format!("messages[{i}]: `content` must be a string"));
        }
    }
    if !assistant {
        return Err("no assistant message".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::{PromptCase, PromptStyle};

    fn sample() -> PromptRecord {
        PromptRecord {
            instruction: "Do the thing.".into(),
            input: "".into(),
            output: "Done.".into(),
            style: PromptStyle::Detection,
            case: PromptCase::Clean,
        }
    }

    #[test]
    fn alpaca_has_each_header_once() {
        let r = render_alpaca(&sample());
        for h in ["### Instruction:", "### Input:", "### Response:"] {
            assert_eq!(r.matches(h).count(), 1, "{h}");
        }
        assert!(r.contains("### Input:\n\n\n### Response:\nDone."));
        assert!(render_alpaca_query(&sample()).ends_with("### Response:\n"));
    }

    #[test]
    fn chat_roles_in_order() {
        let m = render_chat(&sample());
        let roles: Vec<Role> = m.iter().map(|m| m.role).collect();
        assert_eq!(roles, [Role::System, Role::User, Role::Assistant]);
        assert_eq!(m[2].content, "Done.");
        assert_eq!(render_chat_query(&sample()).len(), 2);
    }

    #[test]
    fn chat_line_shape() {
        let line = chat_line(&sample());
        assert_eq!(
            line,
            r#"{"messages":[{"role":"system","content":"Do the thing."},{"role":"user","content":""},{"role":"assistant","content":"Done."}]}"#
        );
        validate_chat_line(&line).unwrap();
        assert_eq!(alpaca_line(&sample()), r#"{"instruction":"Do the thing.","input":"","output":"Done."}"#);
    }

    #[test]
    fn chat_validator_rejects_bad_lines() {
        assert!(validate_chat_line("{").is_err());
        assert!(validate_chat_line(r#"{"messages":[]}"#).is_err());
        assert!(validate_chat_line(r#"{"messages":[{"role":"user","content":"x"}]}"#).is_err());
        assert!(validate_chat_line(r#"{"messages":[{"role":"robot","content":"x"}]}"#).is_err());
        assert!(validate_chat_line(r#"{"messages":[{"role":"assistant","content":3}]}"#).is_err());
    }
}
