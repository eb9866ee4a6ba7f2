use std::io::{BufWriter, Write};
use std::path::Path;

use super::{ContractRecord, CorpusError};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.display().to_string(), source }
}

/// Writes one JSON record per line.
pub fn write_records(path: &Path, records: &[ContractRecord]) -> Result<(), CorpusError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(path))?;
    }
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| CorpusError::Io { path: path.display().to_string(), source: e.into() })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_records(path: &Path) -> Result<Vec<ContractRecord>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CorpusError::Format {
                path: path.display().to_string(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::address::Address;
    use crate::corpus::count_tokens;
    use crate::taxonomy::{LabelSet, VulnClass};

    #[test]
    fn persisted_records_reproduce_token_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let mut a = ContractRecord::from_raw(Address::from_index(1), "contract A { uint x; } // c".into(), "v0.4.24".into());
        a.clean().unwrap();
        a.labels = Some(LabelSet::from([VulnClass::RENT]));
        let mut b = ContractRecord::from_raw(Address::from_index(2), "contract B {}".into(), String::new());
        b.clean().unwrap();
        write_records(&path, &[a.clone(), b]).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains("raw_source"));
        assert!(text.lines().next().unwrap().contains(r#""labels":["RENT"]"#));

        let back = read_records(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].labels, a.labels);
        assert_eq!(back[1].labels, None);
        for r in &back {
            assert_eq!(count_tokens(&r.cleaned_source), r.token_count);
        }
    }

    #[test]
    fn bad_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "\n{\"address\":\"0x1\"}\n").unwrap();
        assert!(matches!(read_records(&path), Err(CorpusError::Format { line: 2, .. })));
    }
}
