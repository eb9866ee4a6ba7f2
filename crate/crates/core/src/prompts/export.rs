use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::build::{build_detection_prompt, build_generation_prompt, PromptCase, PromptRecord, PromptStyle};
use super::render::{alpaca_line, chat_line, render_alpaca, render_chat};
use super::PromptError;
use crate::corpus::{count_tokens, ContractRecord};
use crate::parallel::{self, Execution};
use crate::taxonomy::SwcMapping;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rendering {
    #[serde(rename = "alpaca")]
    AlpacaInstruct,
    #[serde(rename = "chat")]
    ChatMessages,
}

impl std::str::FromStr for Rendering {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alpaca" => Ok(Rendering::AlpacaInstruct),
            "chat" => Ok(Rendering::ChatMessages),
            other => Err(format!("unknown rendering `{other}` (expected alpaca or chat)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetSpec {
    pub detection: bool,
    pub generation: bool,
    /// Upper bound on exported lines; `None` exports everything.
    pub cap: Option<usize>,
    pub seed: u64,
}

impl SubsetSpec {
    pub fn detection_only(cap: Option<usize>, seed: u64) -> Self {
        SubsetSpec { detection: true, generation: false, cap, seed }
    }

    pub fn full(cap: Option<usize>, seed: u64) -> Self {
        SubsetSpec { detection: true, generation: true, cap, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub total_records: usize,
    pub detection_count: usize,
    pub generation_count: usize,
    pub vulnerable_count: usize,
    pub clean_count: usize,
    pub token_total: usize,
    pub rendering: Rendering,
    pub seed: u64,
    pub cap: Option<usize>,
}

/// Builds the prompts selected by `spec` for every record: for each contract
/// the detection prompt, then the generation prompt.
pub fn build_prompts(records: &[ContractRecord], mapping: &SwcMapping, spec: &SubsetSpec) -> Result<Vec<PromptRecord>, PromptError> {
    let mut out = Vec::with_capacity(records.len() * 2);
    for r in records {
        if r.labels.is_none() {
            return Err(PromptError::Unlabeled(r.address.clone()));
        }
        if spec.detection {
            out.push(build_detection_prompt(r, mapping));
        }
        if spec.generation {
            out.push(build_generation_prompt(r, mapping));
        }
    }
    Ok(out)
}

/// Seeded sample of `cap` prompts, stratified by vulnerable/clean with
/// proportional allocation; survivors keep their original order.
pub fn stratified_cap(prompts: Vec<PromptRecord>, cap: usize, seed: u64) -> Vec<PromptRecord> {
    if cap >= prompts.len() {
        return prompts;
    }
    let vulnerable: Vec<usize> = (0..prompts.len()).filter(|&i| prompts[i].case == PromptCase::Vulnerable).collect();
    let clean: Vec<usize> = (0..prompts.len()).filter(|&i| prompts[i].case == PromptCase::Clean).collect();
    let want_v = ((cap * vulnerable.len()) as f64 / prompts.len() as f64).round() as usize;
    let want_v = want_v.min(vulnerable.len()).max(cap.saturating_sub(clean.len()));
    let want_c = cap - want_v;

    let mut keep = Vec::with_capacity(cap);
    for (stream, pool, n) in [(0u64, &vulnerable, want_v), (1, &clean, want_c)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        keep.extend(sample(&mut rng, pool.len(), n).into_iter().map(|j| pool[j]));
    }
    keep.sort_unstable();
    let mut slots: Vec<Option<PromptRecord>> = prompts.into_iter().map(Some).collect();
    keep.into_iter().map(|i| slots[i].take().expect("index sampled once")).collect()
}

pub fn rendered_tokens(p: &PromptRecord, rendering: Rendering) -> usize {
    match rendering {
        Rendering::AlpacaInstruct => count_tokens(&render_alpaca(p)),
        Rendering::ChatMessages => render_chat(p).iter().map(|m| count_tokens(&m.content)).sum(),
    }
}

pub fn render_line(p: &PromptRecord, rendering: Rendering) -> String {
    match rendering {
        Rendering::AlpacaInstruct => alpaca_line(p),
        Rendering::ChatMessages => chat_line(p),
    }
}

/// Writes the selected prompts as a line-delimited dataset. The file
/// depends only on (records, rendering, spec).
pub fn export_dataset(
    records: &[ContractRecord],
    mapping: &SwcMapping,
    rendering: Rendering,
    path: &Path,
    spec: &SubsetSpec,
    mode: Execution,
) -> Result<DatasetManifest, PromptError> {
    let mut prompts = build_prompts(records, mapping, spec)?;
    if let Some(cap) = spec.cap {
        prompts = stratified_cap(prompts, cap, spec.seed);
    }
    let manifest = write_prompts(&prompts, rendering, path, mode)?;
    Ok(DatasetManifest { seed: spec.seed, cap: spec.cap, ..manifest })
}

pub fn write_prompts(prompts: &[PromptRecord], rendering: Rendering, path: &Path, mode: Execution) -> Result<DatasetManifest, PromptError> {
    let rendered: Vec<(String, usize)> = parallel::map(mode, prompts, |p| (render_line(p, rendering), rendered_tokens(p, rendering)));

    let io = |source| PromptError::Io { path: path.display().to_string(), source };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for (line, _) in &rendered {
        w.write_all(line.as_bytes()).map_err(io)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)?;

    let count = |pred: &dyn Fn(&PromptRecord) -> bool| prompts.iter().filter(|p| pred(p)).count();
    Ok(DatasetManifest {
        total_records: prompts.len(),
        detection_count: count(&|p| p.style == PromptStyle::Detection),
        generation_count: count(&|p| p.style == PromptStyle::Generation),
        vulnerable_count: count(&|p| p.case == PromptCase::Vulnerable),
        clean_count: count(&|p| p.case == PromptCase::Clean),
        token_total: rendered.iter().map(|(_, t)| t).sum(),
        rendering,
        seed: 0,
        cap: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::address::Address;
    use crate::taxonomy::{LabelSet, VulnClass};

    fn corpus(n: u64) -> Vec<ContractRecord> {
        (0..n)
            .map(|i| {
                let mut r = ContractRecord::from_raw(Address::from_index(i), String::new(), String::new());
                r.cleaned_source = format!("contract C{i} {{ uint x = {i}; }}\n");
                r.labels = Some(if i % 3 == 0 { LabelSet::EMPTY } else { LabelSet::from([VulnClass::ARTHM]) });
                r
            })
            .collect()
    }

    #[test]
    fn cap_above_size_exports_everything() {
        let dir = tempfile::tempdir().unwrap();
        let m = export_dataset(
            &corpus(10),
            &SwcMapping::default(),
            Rendering::ChatMessages,
            &dir.path().join("d.jsonl"),
            &SubsetSpec::detection_only(Some(4000), 7),
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(m.total_records, 10);
        assert_eq!(m.detection_count, 10);
        assert_eq!(m.generation_count, 0);
    }

    #[test]
    fn detection_and_generation_double_the_count() {
        let dir = tempfile::tempdir().unwrap();
        let m = export_dataset(
            &corpus(5),
            &SwcMapping::default(),
            Rendering::AlpacaInstruct,
            &dir.path().join("d.jsonl"),
            &SubsetSpec::full(None, 0),
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(m.total_records, 10);
        assert_eq!(m.detection_count + m.generation_count, m.total_records);
    }

    #[test]
    fn stratified_cap_preserves_proportions_and_order() {
        let prompts = build_prompts(&corpus(300), &SwcMapping::default(), &SubsetSpec::detection_only(None, 0)).unwrap();
        let picked = stratified_cap(prompts.clone(), 30, 42);
        assert_eq!(picked.len(), 30);
        let vulnerable = picked.iter().filter(|p| p.case == PromptCase::Vulnerable).count();
        assert_eq!(vulnerable, 20);
        let positions: Vec<usize> = picked.iter().map(|p| prompts.iter().position(|q| q == p).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(stratified_cap(prompts.clone(), 30, 42), picked);
        assert_ne!(stratified_cap(prompts, 30, 43), picked);
    }

    #[test]
    fn unlabeled_records_are_rejected() {
        let mut rs = corpus(2);
        rs[1].labels = None;
        assert!(matches!(
            build_prompts(&rs, &SwcMapping::default(), &SubsetSpec::full(None, 0)),
            Err(PromptError::Unlabeled(_))
        ));
    }

    #[test]
    fn rendering_names() {
        assert_eq!("alpaca".parse::<Rendering>().unwrap(), Rendering::AlpacaInstruct);
        assert_eq!("chat".parse::<Rendering>().unwrap(), Rendering::ChatMessages);
        assert!("xml".parse::<Rendering>().is_err());
    }
}
