use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::address::Address;
use crate::corpus::ContractRecord;
use crate::detectors::{Prediction, Strategy};
use crate::taxonomy::{LabelSet, VulnClass};

pub type GoldLabels = BTreeMap<Address, LabelSet>;

/// Gold labels of the labelled records.
pub fn gold_from_records(records: &[ContractRecord]) -> GoldLabels {
    records.iter().filter_map(|r| r.labels.map(|l| (r.address.clone(), l))).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// Gold-positive count.
    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }
}

impl std::ops::Add for ClassCounts {
    type Output = ClassCounts;

    fn add(self, o: ClassCounts) -> ClassCounts {
        ClassCounts { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    /// Indexed by [`VulnClass::index`].
    pub per_class: [ClassCounts; 8],
    /// Any-vulnerability view: positive iff the label set is non-empty.
    pub binary: ClassCounts,
    pub n_contracts: u64,
}

impl ConfusionCounts {
    pub fn class(&self, c: VulnClass) -> &ClassCounts {
        &self.per_class[c.index()]
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        let mut per_class = self.per_class;
        for (a, b) in per_class.iter_mut().zip(o.per_class) {
            *a = *a + b;
        }
        ConfusionCounts { per_class, binary: self.binary + o.binary, n_contracts: self.n_contracts + o.n_contracts }
    }
}

pub fn confusion(preds: &[Prediction], gold: &GoldLabels) -> Result<ConfusionCounts, EvalError> {
    let mut seen = BTreeSet::new();
    let mut out = ConfusionCounts::default();
    for p in preds {
        if !seen.insert(&p.address) {
            return Err(EvalError::DuplicatePrediction(p.address.clone()));
        }
        let g = *gold.get(&p.address).ok_or_else(|| EvalError::MissingGold(p.address.clone()))?;
        for c in VulnClass::ALL {
            out.per_class[c.index()].record(p.labels.contains(c), g.contains(c));
        }
        out.binary.record(!p.labels.is_empty(), !g.is_empty());
        out.n_contracts += 1;
    }
    Ok(out)
}

/// Ratio metrics of one confusion cell set; a zero denominator gives 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub specificity: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn class_metrics(c: &ClassCounts) -> Metrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    // Harmonic mean of precision and recall, in count form.
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
    Metrics {
        precision,
        recall,
        f1,
        specificity: ratio(c.tn, c.tn + c.fp),
        accuracy: ratio(c.tp + c.tn, c.total()),
    }
}

pub fn binary_metrics(preds: &[Prediction], gold: &GoldLabels) -> Result<Metrics, EvalError> {
    Ok(class_metrics(&confusion(preds, gold)?.binary))
}

/// Σ support·f1 / Σ support, evaluated as a mixture: supports sharing an F1
/// value are summed as integers first, so equal F1s average to exactly that
/// value.
pub fn weighted_f1(f1: &[f64], support: &[u64]) -> Result<f64, EvalError> {
    let total: u64 = support.iter().sum();
    if total == 0 {
        return Err(EvalError::NoSupport);
    }
    let mut groups: Vec<(f64, u64)> = Vec::with_capacity(f1.len());
    for (&f, &s) in f1.iter().zip(support) {
        match groups.iter_mut().find(|(v, _)| v.to_bits() == f.to_bits()) {
            Some((_, n)) => *n += s,
            None => groups.push((f, s)),
        }
    }
    Ok(groups.iter().map(|&(f, n)| f * (n as f64 / total as f64)).sum())
}

/// Which per-class count weights the F1 average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportWeighting {
    /// Gold-positive contracts per class (tp + fn).
    #[default]
    Gold,
    /// True-positive cells only.
    TruePositives,
}

impl std::str::FromStr for SupportWeighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gold" => Ok(SupportWeighting::Gold),
            "true-positives" | "tp" => Ok(SupportWeighting::TruePositives),
            other => Err(format!("unknown weighting `{other}` (expected gold or true-positives)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: VulnClass,
    pub counts: ClassCounts,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Row label: the model name, or the strategy when none is recorded.
    pub name: String,
    pub strategy: Option<Strategy>,
    pub model: Option<String>,
    pub n_contracts: u64,
    pub weighting: SupportWeighting,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassReport>,
    pub binary_counts: ClassCounts,
    pub binary: Metrics,
}

fn common<T: PartialEq + Clone>(mut it: impl Iterator<Item = T>) -> Option<T> {
    let first = it.next()?;
    it.all(|x| x == first).then_some(first)
}

pub fn evaluate(preds: &[Prediction], gold: &GoldLabels, weighting: SupportWeighting) -> Result<MetricsReport, EvalError> {
    let counts = confusion(preds, gold)?;
    let per_class: Vec<ClassReport> = VulnClass::ALL
        .into_iter()
        .map(|c| ClassReport { class: c, counts: *counts.class(c), metrics: class_metrics(counts.class(c)) })
        .collect();
    let f1: Vec<f64> = per_class.iter().map(|r| r.metrics.f1).collect();
    let support: Vec<u64> = per_class
        .iter()
        .map(|r| match weighting {
            SupportWeighting::Gold => r.counts.support(),
            SupportWeighting::TruePositives => r.counts.tp,
        })
        .collect();
    let strategy = common(preds.iter().map(|p| p.strategy));
    let model = common(preds.iter().map(|p| p.model.clone())).flatten();
    let name = match (&model, strategy) {
        (Some(m), _) => m.clone(),
        (None, Some(s)) => s.to_string(),
        (None, None) => "mixed".to_string(),
    };
    Ok(MetricsReport {
        name,
        strategy,
        model,
        n_contracts: counts.n_contracts,
        weighting,
        weighted_f1: weighted_f1(&f1, &support)?,
        per_class,
        binary_counts: counts.binary,
        binary: class_metrics(&counts.binary),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use VulnClass::*;

    fn pred(i: u64, labels: LabelSet) -> Prediction {
        Prediction::new(Address::from_index(i), labels, Strategy::Random)
    }

    fn gold(sets: &[LabelSet]) -> GoldLabels {
        sets.iter().enumerate().map(|(i, s)| (Address::from_index(i as u64), *s)).collect()
    }

    #[test]
    fn single_contract_cells() {
        let g = gold(&[LabelSet::from([RENT])]);
        let c = confusion(&[pred(0, LabelSet::from([RENT]))], &g).unwrap();
        assert_eq!(c.class(RENT).tp, 1);
        for k in VulnClass::ALL.into_iter().filter(|k| *k != RENT) {
            assert_eq!(*c.class(k), ClassCounts { tn: 1, ..Default::default() });
        }
        let g = gold(&[LabelSet::from([ARTHM])]);
        let c = confusion(&[pred(0, LabelSet::from([RENT]))], &g).unwrap();
        assert_eq!(c.class(RENT).fp, 1);
        assert_eq!(c.class(ARTHM).fn_, 1);
    }

    #[test]
    fn three_contract_table() {
        // gold: {RENT,ARTHM}, {}, {UE}; pred: {RENT}, {UE}, {UE,LE}
        let g = gold(&[LabelSet::from([RENT, ARTHM]), LabelSet::EMPTY, LabelSet::from([UE])]);
        let p = [pred(0, LabelSet::from([RENT])), pred(1, LabelSet::from([UE])), pred(2, LabelSet::from([UE, LE]))];
        let c = confusion(&p, &g).unwrap();
        let cc = |tp, fp, fn_, tn| ClassCounts { tp, fp, fn_, tn };
        assert_eq!(*c.class(RENT), cc(1, 0, 0, 2));
        assert_eq!(*c.class(ARTHM), cc(0, 0, 1, 2));
        assert_eq!(*c.class(UE), cc(1, 1, 0, 1));
        assert_eq!(*c.class(LE), cc(0, 1, 0, 2));
        assert_eq!(*c.class(DOS), cc(0, 0, 0, 3));
        assert_eq!(c.binary, cc(2, 1, 0, 0));
    }

    #[test]
    fn errors() {
        let g = gold(&[LabelSet::EMPTY]);
        assert!(matches!(confusion(&[pred(5, LabelSet::EMPTY)], &g), Err(EvalError::MissingGold(_))));
        assert!(matches!(
            confusion(&[pred(0, LabelSet::EMPTY), pred(0, LabelSet::EMPTY)], &g),
            Err(EvalError::DuplicatePrediction(_))
        ));
    }

    #[test]
    fn class_metric_cases() {
        let m = class_metrics(&ClassCounts { tp: 5, ..Default::default() });
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = class_metrics(&ClassCounts { fn_: 3, ..Default::default() });
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        let m = class_metrics(&ClassCounts { tp: 3, fp: 1, fn_: 2, tn: 0 });
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.6);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_cases() {
        assert_eq!(weighted_f1(&[1.0, 0.0], &[3, 1]).unwrap(), 0.75);
        assert_eq!(weighted_f1(&[0.4, 0.9], &[0, 2]).unwrap(), 0.9);
        assert!(matches!(weighted_f1(&[0.5, 0.5], &[0, 0]), Err(EvalError::NoSupport)));
    }

    #[test]
    fn binary_cases() {
        let g = gold(&[LabelSet::EMPTY, LabelSet::EMPTY]);
        let m = binary_metrics(&[pred(0, LabelSet::EMPTY), pred(1, LabelSet::EMPTY)], &g).unwrap();
        assert_eq!((m.specificity, m.accuracy, m.recall), (1.0, 1.0, 0.0));

        let r = LabelSet::from([RENT]);
        let g = gold(&[r, LabelSet::EMPTY, r, LabelSet::EMPTY]);
        let p = [pred(0, r), pred(1, r), pred(2, LabelSet::EMPTY), pred(3, LabelSet::EMPTY)];
        let m = binary_metrics(&p, &g).unwrap();
        assert_eq!(m, Metrics { precision: 0.5, recall: 0.5, f1: 0.5, specificity: 0.5, accuracy: 0.5 });
    }

    #[test]
    fn report_labels_and_weighting() {
        let g = gold(&[LabelSet::from([RENT]), LabelSet::from([RENT, UE])]);
        let mut p = vec![pred(0, LabelSet::from([RENT])), pred(1, LabelSet::from([RENT]))];
        let r = evaluate(&p, &g, SupportWeighting::Gold).unwrap();
        assert_eq!(r.name, "random");
        // RENT f1 = 1 with support 2, UE f1 = 0 with support 1.
        assert!((r.weighted_f1 - 2.0 / 3.0).abs() < 1e-12);
        let t = evaluate(&p, &g, SupportWeighting::TruePositives).unwrap();
        assert_eq!(t.weighted_f1, 1.0);
        p[0].model = Some("m".into());
        p[1].model = Some("m".into());
        assert_eq!(evaluate(&p, &g, SupportWeighting::Gold).unwrap().name, "m");
    }
}
