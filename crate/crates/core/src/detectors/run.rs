use std::path::Path;

use serde::{Deserialize, Serialize};

use super::finetuned::{detect_finetuned, FinetunedModel};
use super::gptlens::{apply_threshold, gptlens_audit, gptlens_critic, GptLensConfig};
use super::random::random_baseline;
use super::reclassify::SynonymTable;
use super::zeroshot::{critic_pass, detect_zero_shot, ZeroShotStatus};
use super::{labels_of, DetectorError, Finding, Prediction, PredictionFlag, Strategy};
use crate::corpus::ContractRecord;
use crate::gateway::{Fingerprint, Gateway, GatewayError};
use crate::jsonl;
use crate::parallel::{self, Execution};
use crate::taxonomy::LabelSet;

/// What to do with a reply that cannot be interpreted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringMode {
    /// Record an empty, flagged prediction and carry on.
    #[default]
    Lenient,
    /// Abort the run.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum DetectorSpec {
    Finetuned(FinetunedModel),
    #[serde(rename = "zeroshot")]
    ZeroShot { model: String },
    #[serde(rename = "zeroshot-critic")]
    ZeroShotCritic { model: String, critic: String },
    #[serde(rename = "gptlens")]
    GptLens(GptLensConfig),
    Random { seed: u64 },
}

impl DetectorSpec {
    pub fn strategy(&self) -> Strategy {
        match self {
            DetectorSpec::Finetuned(_) => Strategy::Finetuned,
            DetectorSpec::ZeroShot { .. } => Strategy::ZeroShot,
            DetectorSpec::ZeroShotCritic { .. } => Strategy::ZeroShotCritic,
            DetectorSpec::GptLens(_) => Strategy::GptLens,
            DetectorSpec::Random { .. } => Strategy::Random,
        }
    }

    /// Model label used in artifact names and reports.
    pub fn model_label(&self) -> String {
        match self {
            DetectorSpec::Finetuned(m) => m.name.clone(),
            DetectorSpec::ZeroShot { model } => model.clone(),
            DetectorSpec::ZeroShotCritic { model, critic } if model == critic => model.clone(),
            DetectorSpec::ZeroShotCritic { model, critic } => format!("{model}+{critic}"),
            DetectorSpec::GptLens(c) if c.auditor == c.critic => format!("{}-{}", c.auditor, c.threshold.name),
            DetectorSpec::GptLens(c) => format!("{}+{}-{}", c.auditor, c.critic, c.threshold.name),
            DetectorSpec::Random { seed } => format!("random-seed-{seed}"),
        }
    }
}

/// Errors that lenient scoring turns into empty, flagged predictions.
fn recoverable(e: &DetectorError) -> Option<(String, Option<Fingerprint>)> {
    match e {
        DetectorError::UnparseableResponse { detail, fingerprint } => Some((detail.clone(), fingerprint.clone())),
        DetectorError::Gateway(GatewayError::SchemaViolation { path, message }) => {
            Some((format!("schema violation at `{path}`: {message}"), None))
        }
        DetectorError::Gateway(GatewayError::UnexpectedResponse(m)) => Some((m.clone(), None)),
        DetectorError::InvalidCriticReply(m) => Some((m.clone(), None)),
        _ => None,
    }
}

fn settle(
    result: Result<Prediction, DetectorError>,
    record: &ContractRecord,
    strategy: Strategy,
    model: &str,
    scoring: ScoringMode,
    provenance: &[Fingerprint],
) -> Result<Prediction, DetectorError> {
    match result {
        Ok(p) => Ok(p),
        Err(e) => match (scoring, recoverable(&e)) {
            (ScoringMode::Lenient, Some((detail, fp))) => {
                log::warn!("{}: {e}; recording an empty prediction", record.address);
                let mut p = Prediction::new(record.address.clone(), LabelSet::EMPTY, strategy);
                p.model = Some(model.to_string());
                p.provenance.extend(provenance.iter().cloned());
                p.provenance.extend(fp);
                p.flags.push(PredictionFlag::Unparseable { detail });
                Ok(p)
            }
            _ => Err(DetectorError::Contract { address: record.address.clone(), source: Box::new(e) }),
        },
    }
}

fn zero_shot_prediction(
    gateway: &Gateway,
    model: &str,
    record: &ContractRecord,
    synonyms: &SynonymTable,
) -> Result<Prediction, DetectorError> {
    let out = detect_zero_shot(gateway, model, &record.cleaned_source, synonyms)?;
    let mut p = Prediction::new(record.address.clone(), LabelSet::EMPTY, Strategy::ZeroShot);
    p.model = Some(model.to_string());
    p.provenance.push(out.fingerprint);
    match out.status {
        ZeroShotStatus::NoExploit => {
            if !out.findings.is_empty() {
                p.flags.push(PredictionFlag::StatusMismatch {
                    detail: format!("\"No Exploit\" with {} finding(s); findings ignored", out.findings.len()),
                });
            }
        }
        ZeroShotStatus::ExploitFound => {
            if out.findings.is_empty() {
                p.flags.push(PredictionFlag::StatusMismatch { detail: "\"Exploit Found\" without findings".into() });
            }
            p.labels = labels_of(&out.findings);
            p.findings = out.findings;
        }
    }
    Ok(p)
}

/// Runs the critic over the findings of a zero-shot prediction.
fn criticize(
    gateway: &Gateway,
    critic: &str,
    base: &Prediction,
    scoring: ScoringMode,
) -> Result<Prediction, DetectorError> {
    let mut p = Prediction::new(base.address.clone(), LabelSet::EMPTY, Strategy::ZeroShotCritic);
    p.model = Some(match base.model.as_deref() {
        Some(m) if m != critic => format!("{m}+{critic}"),
        Some(m) => m.to_string(),
        None => critic.to_string(),
    });
    p.provenance = base.provenance.clone();
    p.flags = base.flags.iter().filter(|f| !matches!(f, PredictionFlag::Unparseable { .. })).cloned().collect();
    let outcome = match critic_pass(gateway, critic, &base.findings) {
        Ok(o) => o,
        Err(DetectorError::InconsistentCriticStatus { status, rejected, outcome }) if scoring == ScoringMode::Lenient => {
            p.flags.push(PredictionFlag::StatusMismatch {
                detail: format!("critic status \"{status}\" with {rejected} rejected finding(s)"),
            });
            *outcome
        }
        Err(e) => return Err(e),
    };
    p.provenance.extend(outcome.fingerprint);
    p.labels = labels_of(&outcome.confirmed);
    p.findings = outcome.confirmed;
    p.rejected = outcome.rejected;
    Ok(p)
}

fn gptlens_prediction(
    gateway: &Gateway,
    cfg: &GptLensConfig,
    record: &ContractRecord,
    synonyms: &SynonymTable,
) -> Result<Prediction, DetectorError> {
    let (findings, audit_fp) = gptlens_audit(gateway, &cfg.auditor, &record.cleaned_source, cfg.top_k, synonyms)?;
    let (scored, flags, critic_fp) = gptlens_critic(gateway, &cfg.critic, &findings, &cfg.weights)?;
    let mut p = Prediction::new(record.address.clone(), apply_threshold(&scored, &cfg.threshold), Strategy::GptLens);
    p.model = Some(DetectorSpec::GptLens(cfg.clone()).model_label());
    p.provenance.push(audit_fp);
    p.provenance.extend(critic_fp);
    p.flags = flags;
    let (f, s): (Vec<Finding>, Vec<_>) = scored.into_iter().map(|s| (s.finding, s.score)).unzip();
    p.findings = f;
    p.scores = s;
    Ok(p)
}

/// One prediction per record, in record order.
pub fn run_detection(
    spec: &DetectorSpec,
    gateway: Option<&Gateway>,
    records: &[ContractRecord],
    synonyms: &SynonymTable,
    scoring: ScoringMode,
    mode: Execution,
) -> Result<Vec<Prediction>, DetectorError> {
    if let DetectorSpec::Random { seed } = spec {
        let addresses: Vec<_> = records.iter().map(|r| r.address.clone()).collect();
        return Ok(random_baseline(*seed, &addresses, mode));
    }
    let gw = gateway.ok_or_else(|| DetectorError::Config(format!("strategy {} needs a model gateway", spec.strategy())))?;
    let label = spec.model_label();
    let mapping = synonyms.mapping();
    parallel::try_map(mode, records, |r| {
        let result = match spec {
            DetectorSpec::Finetuned(m) => detect_finetuned(gw, m, r, mapping),
            DetectorSpec::ZeroShot { model } => zero_shot_prediction(gw, model, r, synonyms),
            DetectorSpec::ZeroShotCritic { model, critic } => match zero_shot_prediction(gw, model, r, synonyms) {
                Ok(base) => {
                    let provenance = base.provenance.clone();
                    return settle(criticize(gw, critic, &base, scoring), r, spec.strategy(), &label, scoring, &provenance);
                }
                Err(e) => Err(e),
            },
            DetectorSpec::GptLens(cfg) => gptlens_prediction(gw, cfg, r, synonyms),
            DetectorSpec::Random { .. } => unreachable!("handled above"),
        };
        settle(result, r, spec.strategy(), &label, scoring, &[])
    })
}

/// Critic post-pass over stored zero-shot predictions.
pub fn run_critic(
    gateway: &Gateway,
    critic: &str,
    predictions: &[Prediction],
    scoring: ScoringMode,
    mode: Execution,
) -> Result<Vec<Prediction>, DetectorError> {
    if let Some(p) = predictions.iter().find(|p| p.strategy != Strategy::ZeroShot) {
        return Err(DetectorError::Config(format!(
            "the critic pass reads zeroshot predictions, found {} for {}",
            p.strategy, p.address
        )));
    }
    parallel::try_map(mode, predictions, |base| {
        criticize(gateway, critic, base, scoring).or_else(|e| match (scoring, recoverable(&e)) {
            (ScoringMode::Lenient, Some((detail, fp))) => {
                let mut p = Prediction::new(base.address.clone(), LabelSet::EMPTY, Strategy::ZeroShotCritic);
                p.model = Some(critic.to_string());
                p.provenance = base.provenance.clone();
                p.provenance.extend(fp);
                p.flags.push(PredictionFlag::Unparseable { detail });
                Ok(p)
            }
            _ => Err(DetectorError::Contract { address: base.address.clone(), source: Box::new(e) }),
        })
    })
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<(), DetectorError> {
    Ok(jsonl::write(path, predictions)?)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, DetectorError> {
    Ok(jsonl::read(path)?)
}
