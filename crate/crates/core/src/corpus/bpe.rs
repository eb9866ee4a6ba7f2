//! GPT-2 byte-level BPE token counting.
//!
//! The vocabulary (`encoder.json`) and merge list (`vocab.bpe`) are the
//! original GPT-2 release files, vendored under `data/gpt2/` and checked
//! against pinned SHA-256 digests when first loaded.

use std::collections::HashMap;
use std::sync::OnceLock;

use fancy_regex::Regex;
use sha2::{Digest, Sha256};

const ENCODER_JSON: &str = include_str!("../../data/gpt2/encoder.json");
const VOCAB_BPE: &str = include_str!("../../data/gpt2/vocab.bpe");

pub const ENCODER_SHA256: &str = "6401aa8aac4e480b02ed2713037078c26fab6fc9f1882012e746fe9bd87bc99b";
pub const VOCAB_SHA256: &str = "1ce1664773c50f3e0cc8842619a93edc4624525b728b188a9e0be33b7726adc5";

const PRETOKENIZE: &str = r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+";

#[derive(Debug, thiserror::Error)]
pub enum BpeError {
    #[error("{file}: checksum mismatch (expected {expected}, found {found})")]
    Checksum { file: &'static str, expected: &'static str, found: String },
    #[error("{0}")]
    Data(String),
}

pub struct Gpt2Bpe {
    /// Token id of each raw byte.
    byte_tokens: [u32; 256],
    /// (left, right) -> (rank, merged token id)
    merges: HashMap<(u32, u32), (u32, u32)>,
    pattern: Regex,
}

/// The GPT-2 reversible byte to printable-char table.
fn bytes_to_unicode() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut n = 0u32;
    for b in 0..=255u32 {
        let printable = (0x21..=0x7e).contains(&b) || (0xa1..=0xac).contains(&b) || (0xae..=0xff).contains(&b);
        table[b as usize] = if printable {
            char::from_u32(b).expect("latin-1 codepoint")
        } else {
            let c = char::from_u32(256 + n).expect("shifted codepoint");
            n += 1;
            c
        };
    }
    table
}

fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

impl Gpt2Bpe {
    pub fn from_files(encoder_json: &str, vocab_bpe: &str) -> Result<Self, BpeError> {
        let encoder: HashMap<String, u32> =
            serde_json::from_str(encoder_json).map_err(|e| BpeError::Data(format!("encoder.json: {e}")))?;

        let byte_chars = bytes_to_unicode();
        let mut byte_tokens = [0u32; 256];
        for (b, ch) in byte_chars.iter().enumerate() {
            byte_tokens[b] = *encoder
                .get(&ch.to_string())
                .ok_or_else(|| BpeError::Data(format!("encoder.json lacks byte token {b}")))?;
        }

        let mut merges = HashMap::new();
        for (rank, line) in vocab_bpe.lines().filter(|l| !l.starts_with("#version") && !l.trim().is_empty()).enumerate() {
            let (a, b) = line
                .split_once(' ')
                .ok_or_else(|| BpeError::Data(format!("vocab.bpe: bad merge line `{line}`")))?;
            let lookup = |s: &str| {
                encoder
                    .get(s)
                    .copied()
                    .ok_or_else(|| BpeError::Data(format!("vocab.bpe: `{s}` not in vocabulary")))
            };
            let merged = lookup(&format!("{a}{b}"))?;
            merges.entry((lookup(a)?, lookup(b)?)).or_insert((rank as u32, merged));
        }

        let pattern = Regex::new(PRETOKENIZE).map_err(|e| BpeError::Data(e.to_string()))?;
        Ok(Gpt2Bpe { byte_tokens, merges, pattern })
    }

    /// The vendored GPT-2 tokenizer, verified and built once per process.
    pub fn global() -> &'static Gpt2Bpe {
        static BPE: OnceLock<Gpt2Bpe> = OnceLock::new();
        BPE.get_or_init(|| Self::vendored().expect("vendored GPT-2 files are intact"))
    }

    pub fn vendored() -> Result<Self, BpeError> {
        for (file, data, expected) in [
            ("encoder.json", ENCODER_JSON, ENCODER_SHA256),
            ("vocab.bpe", VOCAB_BPE, VOCAB_SHA256),
        ] {
            let found = sha256_hex(data.as_bytes());
            if found != expected {
                return Err(BpeError::Checksum { file, expected, found });
            }
        }
        Self::from_files(ENCODER_JSON, VOCAB_BPE)
    }

    fn merge_piece(&self, piece: &[u8], out: &mut Vec<u32>) {
        let mut word: Vec<u32> = piece.iter().map(|b| self.byte_tokens[*b as usize]).collect();
        while word.len() > 1 {
            let best = word
                .windows(2)
                .filter_map(|w| self.merges.get(&(w[0], w[1])).map(|&(rank, merged)| (rank, w[0], w[1], merged)))
                .min_by_key(|m| m.0);
            let Some((_, left, right, merged)) = best else { break };
            let mut next = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && word[i] == left && word[i + 1] == right {
                    next.push(merged);
                    i += 2;
                } else {
                    next.push(word[i]);
                    i += 1;
                }
            }
            word = next;
        }
        out.extend(word);
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        let mut consumed = 0;
        for m in self.pattern.find_iter(text) {
            match m {
                Ok(m) => {
                    self.merge_piece(m.as_str().as_bytes(), &mut ids);
                    consumed = m.end();
                }
                // Backtracking limit hit: encode the remainder char by char.
                Err(e) => {
                    log::warn!("pretokenizer error ({e}); encoding remainder per character");
                    let mut buf = [0u8; 4];
                    for ch in text[consumed..].chars() {
                        self.merge_piece(ch.encode_utf8(&mut buf).as_bytes(), &mut ids);
                    }
                    break;
                }
            }
        }
        ids
    }

    pub fn count(&self, text: &str) -> usize {
        self.encode(text).len()
    }
}

/// Number of GPT-2 tokens in `text`.
pub fn count_tokens(text: &str) -> usize {
    Gpt2Bpe::global().count(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vendored_files_match_pinned_checksums() {
        assert!(Gpt2Bpe::vendored().is_ok());
    }

    #[test]
    fn known_encodings() {
        let bpe = Gpt2Bpe::global();
        assert_eq!(bpe.encode(""), Vec::<u32>::new());
        assert_eq!(bpe.encode("hello world"), vec![31373, 995]);
        assert_eq!(count_tokens("hello world"), 2);
    }

    #[test]
    fn byte_table_is_a_bijection() {
        let t = bytes_to_unicode();
        let mut seen: Vec<char> = t.to_vec();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 256);
    }

    #[test]
    fn tampered_data_is_rejected() {
        assert!(Gpt2Bpe::from_files("{}", VOCAB_BPE).is_err());
    }
}
