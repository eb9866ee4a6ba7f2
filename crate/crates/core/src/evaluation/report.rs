use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvalError, MetricsReport};
use crate::taxonomy::VulnClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    /// Aligned plain-text tables.
    Text,
    Csv,
    /// One JSON report per line, full precision.
    Jsonl,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Text, ReportFormat::Csv, ReportFormat::Jsonl];

    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Text => "report.txt",
            ReportFormat::Csv => "report.csv",
            ReportFormat::Jsonl => "report.jsonl",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" | "txt" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" | "json" => Ok(ReportFormat::Jsonl),
            other => Err(format!("unknown report format `{other}` (expected text, csv or jsonl)")),
        }
    }
}

/// Rounds a value to three decimals, ties away from zero, working on the
/// shortest decimal representation so that e.g. 0.0005 becomes 0.001.
pub fn round_half_up(x: f64) -> String {
    round_digits(x, 3)
}

fn round_digits(x: f64, places: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{}", x.abs());
    let (int, frac) = s.split_once('.').unwrap_or((&s, ""));
    let mut digits: Vec<u8> = int.bytes().chain(frac.bytes().chain(std::iter::repeat(b'0')).take(places)).map(|b| b - b'0').collect();
    if frac.as_bytes().get(places).is_some_and(|d| *d >= b'5') {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - places;
    let text: String = digits.iter().map(|d| char::from(b'0' + d)).collect();
    let zero = digits.iter().all(|d| *d == 0);
    let sign = if x < 0.0 && !zero { "-" } else { "" };
    if places == 0 {
        format!("{sign}{text}")
    } else {
        format!("{sign}{}.{}", &text[..split], &text[split..])
    }
}

fn f1_headers() -> Vec<String> {
    VulnClass::ALL.iter().map(|c| format!("{} F1", c.abbrev())).collect()
}

fn table(headers: &[String], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..headers.len())
        .map(|i| rows.iter().map(|r| r[i].len()).chain([headers[i].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[0]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(headers);
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders reports as one document. Text and CSV show three decimals;
/// JSONL keeps full precision.
pub fn render_report(reports: &[MetricsReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => {
            let mut headers = vec!["Model".to_string(), "Weighted F1".to_string()];
            headers.extend(f1_headers());
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| {
                    let mut row = vec![r.name.clone(), round_half_up(r.weighted_f1)];
                    row.extend(r.per_class.iter().map(|c| round_half_up(c.metrics.f1)));
                    row
                })
                .collect();
            let binary_headers: Vec<String> =
                ["Model", "Contracts", "Precision", "Recall", "F1", "Specificity", "Accuracy"].map(String::from).to_vec();
            let binary_rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| {
                    let b = &r.binary;
                    vec![
                        r.name.clone(),
                        r.n_contracts.to_string(),
                        round_half_up(b.precision),
                        round_half_up(b.recall),
                        round_half_up(b.f1),
                        round_half_up(b.specificity),
                        round_half_up(b.accuracy),
                    ]
                })
                .collect();
            format!("Per-class F1\n\n{}\nBinary detection\n\n{}", table(&headers, &rows), table(&binary_headers, &binary_rows))
        }
        ReportFormat::Csv => {
            let mut headers = vec!["model".to_string(), "strategy".into(), "n_contracts".into(), "weighted_f1".into()];
            headers.extend(VulnClass::ALL.iter().map(|c| format!("{}_f1", c.abbrev())));
            headers.extend(
                ["binary_precision", "binary_recall", "binary_f1", "binary_specificity", "binary_accuracy"].map(String::from),
            );
            let mut out = headers.join(",");
            out.push('\n');
            for r in reports {
                let mut row = vec![
                    csv_field(&r.name),
                    r.strategy.map(|s| s.to_string()).unwrap_or_default(),
                    r.n_contracts.to_string(),
                    round_half_up(r.weighted_f1),
                ];
                row.extend(r.per_class.iter().map(|c| round_half_up(c.metrics.f1)));
                let b = &r.binary;
                row.extend([b.precision, b.recall, b.f1, b.specificity, b.accuracy].map(round_half_up));
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out
        }
        ReportFormat::Jsonl => crate::jsonl::to_string(reports),
    }
}

/// Writes all three formats into `dir`.
pub fn write_reports(reports: &[MetricsReport], dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| EvalError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    for f in ReportFormat::ALL {
        let path = dir.join(f.file_name());
        std::fs::write(&path, render_report(reports, f)).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::address::Address;
    use crate::detectors::{Prediction, Strategy};
    use crate::evaluation::{evaluate, GoldLabels, SupportWeighting};
    use crate::taxonomy::LabelSet;

    #[test]
    fn rounding() {
        assert_eq!(round_half_up(0.0), "0.000");
        assert_eq!(round_half_up(1.0), "1.000");
        assert_eq!(round_half_up(2.0 / 3.0), "0.667");
        assert_eq!(round_half_up(0.0005), "0.001");
        assert_eq!(round_half_up(0.1235), "0.124");
        assert_eq!(round_half_up(0.12349), "0.123");
        assert_eq!(round_half_up(0.9995), "1.000");
        assert_eq!(round_half_up(0.776), "0.776");
        assert_eq!(round_half_up(1e-20), "0.000");
    }

    fn zero_report() -> MetricsReport {
        let gold: GoldLabels = [(Address::from_index(0), LabelSet::from([VulnClass::RENT]))].into_iter().collect();
        let mut p = Prediction::new(Address::from_index(0), LabelSet::EMPTY, Strategy::Finetuned);
        p.model = Some("m1".into());
        evaluate(&[p], &gold, SupportWeighting::Gold).unwrap()
    }

    #[test]
    fn zero_row_and_column_order() {
        let text = render_report(&[zero_report()], ReportFormat::Text);
        let mut lines = text.lines().skip(2);
        let header = lines.next().unwrap();
        let expected: Vec<&str> = ["Weighted F1", "LE F1", "ARTHM F1", "DOS F1", "RENT F1", "TimeM F1", "TimeO F1", "TxOrigin F1", "UE F1"].to_vec();
        let mut at = 0;
        for h in expected {
            let i = header[at..].find(h).unwrap() + at;
            at = i + h.len();
        }
        lines.next();
        let row = lines.next().unwrap();
        assert!(row.starts_with("m1"));
        assert_eq!(row.split_whitespace().skip(1).collect::<Vec<_>>(), ["0.000"; 9]);

        let csv = render_report(&[zero_report()], ReportFormat::Csv);
        let mut l = csv.lines();
        assert!(l.next().unwrap().starts_with("model,strategy,n_contracts,weighted_f1,LE_f1,ARTHM_f1,DOS_f1,RENT_f1,"));
        assert!(l.next().unwrap().starts_with("m1,finetuned,1,0.000,0.000"));
    }

    #[test]
    fn jsonl_keeps_precision() {
        let r = zero_report();
        let back: MetricsReport = serde_json::from_str(render_report(std::slice::from_ref(&r), ReportFormat::Jsonl).trim()).unwrap();
        assert_eq!(back, r);
    }
}
