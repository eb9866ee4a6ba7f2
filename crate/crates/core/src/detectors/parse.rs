use std::sync::OnceLock;

use regex::Regex;

use super::DetectorError;
use crate::taxonomy::{LabelSet, SwcMapping, VulnClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedDetection {
    pub labels: LabelSet,
    /// A vulnerable header with no recognizable class after it.
    pub vacuous: bool,
}

fn headers() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\bhas\s+(?:(none)\s+of|(?:1|one)\s+or\s+more\s+of)\b").expect("static regex")
    })
}

pub(crate) fn swc_ids() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bSWC[-\s]?(\d+)\b").expect("static regex"))
}

/// Lowercases and collapses whitespace runs to one space.
pub(crate) fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Byte offset of the first whole-word occurrence of `needle` in `hay`;
/// both normalized.
pub(crate) fn find_phrase(hay: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    let word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
    let lead = word(needle.chars().next());
    let tail = word(needle.chars().next_back());
    let mut from = 0;
    while let Some(i) = hay[from..].find(needle).map(|i| i + from) {
        let before = hay[..i].chars().next_back();
        let after = hay[i + needle.len()..].chars().next();
        if !(lead && word(before)) && !(tail && word(after)) {
            return Some(i);
        }
        from = i + hay[i..].chars().next().map_or(1, char::len_utf8);
    }
    None
}

/// Classes named in `text` by SWC id or by (short) display name.
pub(crate) fn classes_named(text: &str, mapping: &SwcMapping) -> LabelSet {
    let mut found = LabelSet::EMPTY;
    for cap in swc_ids().captures_iter(text) {
        if let Some(c) = mapping.class_for_swc_id(&format!("SWC-{}", &cap[1])) {
            found.insert(c);
        }
    }
    let hay = normalize(text);
    for c in VulnClass::ALL {
        if !found.contains(c) && find_phrase(&hay, &normalize(mapping.short_name(c))).is_some() {
            found.insert(c);
        }
    }
    found
}

/// Reads a detection answer. The first header decides: "has none of" means
/// no vulnerabilities whatever follows, "has 1 or more of" means the classes
/// named after it.
pub fn parse_detection_output(text: &str, mapping: &SwcMapping) -> Result<ParsedDetection, DetectorError> {
    let Some(cap) = headers().captures(text) else {
        return Err(DetectorError::UnparseableResponse {
            detail: format!("no detection header in {:?}", crate::http::truncate(text, 120)),
            fingerprint: None,
        });
    };
    if cap.get(1).is_some() {
        return Ok(ParsedDetection { labels: LabelSet::EMPTY, vacuous: false });
    }
    let rest = &text[cap.get(0).expect("whole match").end()..];
    let labels = classes_named(rest, mapping);
    Ok(ParsedDetection { labels, vacuous: labels.is_empty() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::detection_output;

    #[test]
    fn phrase_boundaries() {
        assert_eq!(find_phrase("a reentrancy.", "reentrancy"), Some(2));
        assert_eq!(find_phrase("nonreentrancy reentrancy", "reentrancy"), Some(14));
        assert_eq!(find_phrase("use tx.origin!", "tx.origin"), Some(4));
        assert_eq!(find_phrase("dosage", "dos"), None);
        assert_eq!(normalize("  Time\n  Manipulation "), "time manipulation");
    }

    fn m() -> SwcMapping {
        SwcMapping::default()
    }

    #[test]
    fn clean_header_wins_over_listed_classes() {
        let text = detection_output(LabelSet::EMPTY, &m());
        assert_eq!(text.lines().count(), 9);
        assert_eq!(parse_detection_output(&text, &m()).unwrap(), ParsedDetection { labels: LabelSet::EMPTY, vacuous: false });
    }

    #[test]
    fn ids_and_names() {
        let text = "The provided contract has 1 or more of the following vulnerabilities:\n\"SWC-101 - Arithmetic\"\n\"SWC-104 - Unhandled Exception\"";
        let p = parse_detection_output(text, &m()).unwrap();
        assert_eq!(p.labels, LabelSet::from([VulnClass::ARTHM, VulnClass::UE]));
        assert!(!p.vacuous);

        let names = "the provided contract HAS ONE OR MORE OF the following: (reentrancy); Locked Ether.";
        assert_eq!(parse_detection_output(names, &m()).unwrap().labels, LabelSet::from([VulnClass::LE, VulnClass::RENT]));
    }

    #[test]
    fn id_prefixes_do_not_collide() {
        let text = "has 1 or more of: SWC-1070, SWC-10";
        let p = parse_detection_output(text, &m()).unwrap();
        assert!(p.labels.is_empty());
        assert!(p.vacuous);
    }

    #[test]
    fn no_header_is_unparseable() {
        assert!(matches!(
            parse_detection_output("lorem ipsum SWC-107", &m()),
            Err(DetectorError::UnparseableResponse { .. })
        ));
    }

    #[test]
    fn every_rendered_output_round_trips() {
        for s in LabelSet::all_subsets() {
            assert_eq!(parse_detection_output(&detection_output(s, &m()), &m()).unwrap().labels, s, "{s}");
        }
    }
}
