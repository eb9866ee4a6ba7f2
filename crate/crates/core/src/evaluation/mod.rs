//! Confusion counts, per-class and binary metrics, support-weighted F1 and
//! report rendering.

mod metrics;
mod report;

pub use metrics::{
    binary_metrics, class_metrics, confusion, evaluate, gold_from_records, weighted_f1, ClassCounts, ClassReport,
    ConfusionCounts, GoldLabels, Metrics, MetricsReport, SupportWeighting,
};
pub use report::{render_report, round_half_up, write_reports, ReportFormat};

use crate::address::Address;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no gold labels for {0}")]
    MissingGold(Address),
    #[error("more than one prediction for {0}")]
    DuplicatePrediction(Address),
    #[error("weighted F1 is undefined: no class has support")]
    NoSupport,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
