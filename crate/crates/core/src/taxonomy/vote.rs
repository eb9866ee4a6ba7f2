use std::collections::HashMap;

use serde::Serialize;

use super::class::{LabelSet, VulnClass};
use super::config::{ToolSet, VotePolicy};
use super::reports::ToolFinding;
use crate::address::Address;
use crate::corpus::ContractRecord;
use crate::parallel::{self, Execution};

/// Gold labels for one address. A class is included when at least the
/// quorum of its supporting tools reported it; each tool votes at most once
/// per class, and votes from non-supporting tools are ignored.
pub fn majority_vote<'a>(
    findings: impl IntoIterator<Item = &'a ToolFinding>,
    policy: &VotePolicy,
    address: &Address,
) -> LabelSet {
    let mut voters = [ToolSet::default(); VulnClass::COUNT];
    for f in findings {
        if &f.address == address {
            voters[f.vuln.index()].insert(f.tool);
        }
    }
    VulnClass::ALL
        .into_iter()
        .filter(|c| {
            let votes = voters[c.index()].intersection(policy.supporting_tools(*c)).len();
            votes >= policy.required_votes(*c)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelSummary {
    pub total: usize,
    pub vulnerable: usize,
    pub clean: usize,
    /// Records carrying each class, in canonical order.
    pub per_class: Vec<(VulnClass, usize)>,
}

impl std::fmt::Display for LabelSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{} contracts, {} of which contain at least one vulnerability ({} clean)",
            self.total, self.vulnerable, self.clean
        )?;
        for (c, n) in &self.per_class {
            writeln!(f, "  {:<8} {n}", c.abbrev())?;
        }
        Ok(())
    }
}

impl LabelSummary {
    pub fn of(records: &[ContractRecord]) -> Self {
        let mut per_class = [0usize; VulnClass::COUNT];
        let mut vulnerable = 0;
        for r in records {
            let g = r.gold();
            if !g.is_empty() {
                vulnerable += 1;
            }
            for c in g.iter() {
                per_class[c.index()] += 1;
            }
        }
        LabelSummary {
            total: records.len(),
            vulnerable,
            clean: records.len() - vulnerable,
            per_class: VulnClass::ALL.into_iter().map(|c| (c, per_class[c.index()])).collect(),
        }
    }
}

/// Sets `labels` on every record from the pooled tool findings. Tools with
/// no findings for an address count as not reporting.
pub fn label_corpus(
    mode: Execution,
    records: &mut [ContractRecord],
    findings: &[ToolFinding],
    policy: &VotePolicy,
) -> LabelSummary {
    let mut by_address: HashMap<&Address, Vec<&ToolFinding>> = HashMap::new();
    for f in findings {
        by_address.entry(&f.address).or_default().push(f);
    }
    parallel::map_mut(mode, records, |r| {
        let fs = by_address.get(&r.address).map(Vec::as_slice).unwrap_or(&[]);
        r.labels = Some(majority_vote(fs.iter().copied(), policy, &r.address));
    });
    LabelSummary::of(records)
}
