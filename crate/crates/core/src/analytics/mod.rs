//! Occurrence ledgers and the statistics computed over them.

mod aggregate;
pub mod export;
mod impact;
mod ledger;

pub use aggregate::{
    corpus_summary, firmware_ids, memory_histogram, memory_share, memory_share_by_component, severity_histogram,
    top_cpes, top_cwes, ClassCounts, CorpusReport, CpeCount, CweCount, SeverityCounts,
};
pub use export::{
    corpus_json, impact_json, read_occurrences_csv, round2, write_occurrences_csv, write_top_cpes_by_class_csv,
    write_top_cpes_by_severity_csv, write_top_cwes_csv, CorpusExtras,
};
pub use impact::{estimate_sbd_impact, estimate_sbd_impact_over, ImpactReport, ReductionFactor};
pub use ledger::{build_occurrences, FirmwareLedger, Occurrence};

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error("no occurrences")]
    EmptyLedger,
    #[error("line {line}: {message}")]
    Format { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
