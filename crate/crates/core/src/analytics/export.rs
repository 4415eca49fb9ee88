//! CSV and JSON exports.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Serialize;

use super::aggregate::{CorpusReport, CpeCount, CweCount};
use super::impact::{ImpactReport, ReductionFactor};
use super::ledger::Occurrence;
use super::AnalyticsError;
use crate::classify::{ClassificationSource, MemoryClass};
use crate::vulndb::SeverityBucket;

pub const OCCURRENCE_COLUMNS: [&str; 7] =
    ["firmware_id", "component_cpe", "cve_id", "cwe_id", "severity", "mem_class", "classification_source"];

pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn round_map<K: Ord + Copy>(m: &BTreeMap<K, f64>) -> BTreeMap<K, f64> {
    m.iter().map(|(k, v)| (*k, round2(*v))).collect()
}

pub fn write_occurrences_csv<W: Write>(out: W, occurrences: &[Occurrence]) -> Result<(), AnalyticsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OCCURRENCE_COLUMNS)?;
    for o in occurrences {
        w.write_record([
            o.firmware_id.as_str(),
            &o.component_cpe,
            &o.cve_id,
            o.cwe_id.as_deref().unwrap_or(""),
            o.severity.as_str(),
            o.mem_class.label(),
            o.classification_source.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_occurrences_csv<R: Read>(input: R) -> Result<Vec<Occurrence>, AnalyticsError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != OCCURRENCE_COLUMNS {
        return Err(AnalyticsError::Format { line: 1, message: format!("unexpected header {header:?}") });
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i as u64 + 2;
        let bad = |message: String| AnalyticsError::Format { line, message };
        let field = |n: usize| row.get(n).unwrap_or("");
        let cwe = field(3);
        out.push(Occurrence {
            firmware_id: field(0).to_owned(),
            component_cpe: field(1).to_owned(),
            cve_id: field(2).to_owned(),
            cwe_id: (!cwe.is_empty()).then(|| cwe.to_owned()),
            severity: field(4).parse::<SeverityBucket>().map_err(|e| bad(e.to_string()))?,
            mem_class: MemoryClass::from_label(field(5)).ok_or_else(|| bad(format!("unknown class {:?}", field(5))))?,
            classification_source: field(6)
                .parse::<ClassificationSource>()
                .map_err(|e| bad(e.to_string()))?,
        });
    }
    Ok(out)
}

pub fn write_top_cwes_csv<W: Write>(out: W, rows: &[CweCount]) -> Result<(), AnalyticsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "cwe_id", "count", "mem_class"])?;
    for (i, r) in rows.iter().enumerate() {
        w.write_record([(i + 1).to_string(), r.cwe_id.clone(), r.count.to_string(), r.mem_class.label().to_owned()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_top_cpes_by_severity_csv<W: Write>(out: W, rows: &[CpeCount]) -> Result<(), AnalyticsError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["rank".to_owned(), "cpe".to_owned(), "total".to_owned()];
    header.extend(SeverityBucket::ALL.iter().map(|b| b.as_str().to_owned()));
    w.write_record(&header)?;
    for (i, r) in rows.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string(), r.cpe.clone(), r.count.to_string()];
        rec.extend(SeverityBucket::ALL.iter().map(|b| r.by_severity.get(b).copied().unwrap_or(0).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_top_cpes_by_class_csv<W: Write>(out: W, rows: &[CpeCount]) -> Result<(), AnalyticsError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["rank".to_owned(), "cpe".to_owned(), "total".to_owned()];
    header.extend(MemoryClass::ALL.iter().map(|c| c.label().to_owned()));
    w.write_record(&header)?;
    for (i, r) in rows.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string(), r.cpe.clone(), r.count.to_string()];
        rec.extend(MemoryClass::ALL.iter().map(|c| r.by_class.get(c).copied().unwrap_or(0).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ImpactJson<'a> {
    firmware_count: u64,
    before: &'a BTreeMap<SeverityBucket, u64>,
    after: &'a BTreeMap<SeverityBucket, u64>,
    before_total: u64,
    after_total: u64,
    eliminated_share: f64,
    reduction_factor: ReductionFactor,
    per_firmware_before: BTreeMap<SeverityBucket, f64>,
    per_firmware_after: BTreeMap<SeverityBucket, f64>,
}

/// Pretty JSON with per-firmware means rounded to two decimals.
pub fn impact_json(report: &ImpactReport) -> Result<String, AnalyticsError> {
    let view = ImpactJson {
        firmware_count: report.firmware_count,
        before: &report.before,
        after: &report.after,
        before_total: report.before_total,
        after_total: report.after_total,
        eliminated_share: report.eliminated_share,
        reduction_factor: report.reduction_factor,
        per_firmware_before: round_map(&report.per_firmware_before),
        per_firmware_after: round_map(&report.per_firmware_after),
    };
    let mut s = serde_json::to_string_pretty(&view)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct CorpusJson<'a> {
    firmware_count: u64,
    occurrence_total: u64,
    mean_occurrences_per_firmware: f64,
    severity_histogram: &'a BTreeMap<SeverityBucket, u64>,
    per_firmware_mean_by_severity: BTreeMap<SeverityBucket, f64>,
    memory_histogram: &'a BTreeMap<MemoryClass, u64>,
    memory_share: Option<f64>,
    top_cwes: &'a [CweCount],
    top_cpes: &'a [CpeCount],
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    memory_share_by_group: &'a BTreeMap<String, f64>,
    warnings: &'a [String],
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    skipped_components: &'a [String],
}

/// Extra fields for `corpus.json` beyond the counts.
#[derive(Debug, Default, Clone)]
pub struct CorpusExtras {
    pub top_cwes: usize,
    pub top_cpes: usize,
    pub memory_share_by_group: BTreeMap<String, f64>,
    /// Inputs that failed.
    pub warnings: Vec<String>,
    /// Components that could not be matched.
    pub skipped_components: Vec<String>,
}

pub fn corpus_json(report: &CorpusReport, extras: &CorpusExtras) -> Result<String, AnalyticsError> {
    let related: u64 =
        report.memory_histogram.iter().filter(|(c, _)| c.is_memory_related()).map(|(_, n)| n).sum();
    let view = CorpusJson {
        firmware_count: report.firmware_count,
        occurrence_total: report.occurrence_total,
        mean_occurrences_per_firmware: round2(report.mean_occurrences_per_firmware()),
        severity_histogram: &report.severity_histogram,
        per_firmware_mean_by_severity: round_map(&report.per_firmware_mean_by_severity()),
        memory_histogram: &report.memory_histogram,
        memory_share: (report.occurrence_total > 0).then(|| related as f64 / report.occurrence_total as f64),
        top_cwes: report.top_cwes(extras.top_cwes),
        top_cpes: report.top_cpes(extras.top_cpes),
        memory_share_by_group: &extras.memory_share_by_group,
        warnings: &extras.warnings,
        skipped_components: &extras.skipped_components,
    };
    let mut s = serde_json::to_string_pretty(&view)?;
    s.push('\n');
    Ok(s)
}
