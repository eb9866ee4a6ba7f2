use std::path::Path;

use serde::Deserialize;

use super::class::VulnClass;
use super::config::{TaxonomyConfig, Tool};
use super::TaxonomyError;
use crate::address::Address;

/// One normalized finding from a static-analysis tool.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ToolFinding {
    pub tool: Tool,
    pub address: Address,
    pub vuln: VulnClass,
    pub raw_detector_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportMode {
    /// Unknown detector ids are logged and skipped.
    #[default]
    Lenient,
    /// Unknown detector ids are an error.
    Strict,
}

#[derive(Debug, Clone, Default)]
pub struct ToolReport {
    pub findings: Vec<ToolFinding>,
    /// Detector ids with no class mapping, in order of first appearance.
    pub unmapped: Vec<String>,
}

#[derive(Deserialize)]
struct ReportLine {
    address: String,
    #[serde(alias = "raw_detector_id", alias = "detector")]
    detector_id: String,
}

/// Parses a normalized report: one `{"address":…,"detector_id":…}` object per
/// line. Blank lines are ignored.
pub fn parse_tool_report(
    tool: Tool,
    text: &str,
    origin: &str,
    taxonomy: &TaxonomyConfig,
    mode: ReportMode,
) -> Result<ToolReport, TaxonomyError> {
    let table = taxonomy.detector_table(tool);
    let mut report = ToolReport::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |msg: String| TaxonomyError::MalformedReport { path: origin.to_string(), line: line_no, msg };
        let parsed: ReportLine = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let address: Address = parsed.address.parse().map_err(|e: crate::address::MalformedAddress| malformed(e.to_string()))?;
        match table.classify(&parsed.detector_id) {
            Some(vuln) => report.findings.push(ToolFinding {
                tool,
                address,
                vuln,
                raw_detector_id: parsed.detector_id,
            }),
            None if mode == ReportMode::Strict => {
                return Err(TaxonomyError::UnknownDetectorId { tool, id: parsed.detector_id, line: line_no })
            }
            None => {
                if !report.unmapped.contains(&parsed.detector_id) {
                    log::warn!("{tool}: skipping unmapped detector id `{}`", parsed.detector_id);
                    report.unmapped.push(parsed.detector_id);
                }
            }
        }
    }
    Ok(report)
}

pub fn load_tool_report(
    tool: Tool,
    path: &Path,
    taxonomy: &TaxonomyConfig,
    mode: ReportMode,
) -> Result<ToolReport, TaxonomyError> {
    let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_tool_report(tool, &text, &path.display().to_string(), taxonomy, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ADDR: &str = "0x00000000000000000000000000000000000000aa";

    fn parse(tool: Tool, text: &str, mode: ReportMode) -> Result<ToolReport, TaxonomyError> {
        parse_tool_report(tool, text, "test", &TaxonomyConfig::default(), mode)
    }

    #[test]
    fn slither_reentrancy_line() {
        let r = parse(Tool::Slither, &format!(r#"{{"address":"{ADDR}","detector_id":"reentrancy-eth"}}"#), ReportMode::Strict).unwrap();
        assert_eq!(r.findings.len(), 1);
        assert_eq!(r.findings[0].tool, Tool::Slither);
        assert_eq!(r.findings[0].vuln, VulnClass::RENT);
        assert_eq!(r.findings[0].raw_detector_id, "reentrancy-eth");
    }

    #[test]
    fn empty_report() {
        let r = parse(Tool::Mythril, "", ReportMode::Strict).unwrap();
        assert!(r.findings.is_empty());
        assert!(r.unmapped.is_empty());
    }

    #[test]
    fn unmapped_id_strict_vs_lenient() {
        let text = format!(
            "{{\"address\":\"{ADDR}\",\"detector_id\":\"naming-convention\"}}\n{{\"address\":\"{ADDR}\",\"detector_id\":\"tx-origin\"}}\n"
        );
        let err = parse(Tool::Slither, &text, ReportMode::Strict).unwrap_err();
        assert!(matches!(err, TaxonomyError::UnknownDetectorId { line: 1, .. }), "{err}");

        let r = parse(Tool::Slither, &text, ReportMode::Lenient).unwrap();
        assert_eq!(r.unmapped, vec!["naming-convention".to_string()]);
        assert_eq!(r.findings[0].vuln, VulnClass::TxOrigin);
    }

    #[test]
    fn malformed_lines_report_position() {
        let err = parse(Tool::Oyente, "\n{not json}\n", ReportMode::Lenient).unwrap_err();
        assert!(matches!(err, TaxonomyError::MalformedReport { line: 2, .. }));
        let err = parse(Tool::Oyente, r#"{"address":"0x12","detector_id":"reentrancy"}"#, ReportMode::Lenient).unwrap_err();
        assert!(matches!(err, TaxonomyError::MalformedReport { line: 1, .. }));
    }
}
