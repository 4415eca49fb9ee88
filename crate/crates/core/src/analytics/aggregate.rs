//! Histograms, rankings and corpus roll-ups.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ledger::{FirmwareLedger, Occurrence};
use super::AnalyticsError;
use crate::classify::MemoryClass;
use crate::vulndb::{CweRef, SeverityBucket};

pub type SeverityCounts = BTreeMap<SeverityBucket, u64>;
pub type ClassCounts = BTreeMap<MemoryClass, u64>;

pub fn zero_severity() -> SeverityCounts {
    SeverityBucket::ALL.into_iter().map(|b| (b, 0)).collect()
}

pub fn zero_class() -> ClassCounts {
    MemoryClass::ALL.into_iter().map(|c| (c, 0)).collect()
}

pub fn severity_histogram(occurrences: &[Occurrence]) -> SeverityCounts {
    let mut h = zero_severity();
    for o in occurrences {
        *h.entry(o.severity).or_default() += 1;
    }
    h
}

pub fn memory_histogram(occurrences: &[Occurrence]) -> ClassCounts {
    let mut h = zero_class();
    for o in occurrences {
        *h.entry(o.mem_class).or_default() += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CweCount {
    pub cwe_id: String,
    pub count: u64,
    /// Most frequent class among the occurrences (ties to the lower class).
    pub mem_class: MemoryClass,
    pub by_class: ClassCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpeCount {
    pub cpe: String,
    pub count: u64,
    pub by_severity: SeverityCounts,
    pub by_class: ClassCounts,
}

/// Numeric CWE ids first in numeric order, then the NVD sentinels.
fn cwe_sort_key(id: &str) -> (u8, u32, &str) {
    match id.parse::<CweRef>() {
        Ok(CweRef::Id(n)) => (0, n, id),
        _ => (1, 0, id),
    }
}

fn majority(by_class: &ClassCounts) -> MemoryClass {
    by_class
        .iter()
        .max_by_key(|(class, n)| (**n, Reverse(**class)))
        .map(|(c, _)| *c)
        .unwrap_or(MemoryClass::NotMemory)
}

fn sort_cwes(rows: &mut [CweCount]) {
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| cwe_sort_key(&a.cwe_id).cmp(&cwe_sort_key(&b.cwe_id))));
}

fn sort_cpes(rows: &mut [CpeCount]) {
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.cpe.cmp(&b.cpe)));
}

fn cwe_table(occurrences: &[Occurrence]) -> Vec<CweCount> {
    let mut map: BTreeMap<&str, ClassCounts> = BTreeMap::new();
    for o in occurrences {
        if let Some(cwe) = &o.cwe_id {
            *map.entry(cwe).or_insert_with(zero_class).entry(o.mem_class).or_default() += 1;
        }
    }
    let mut rows: Vec<CweCount> = map
        .into_iter()
        .map(|(id, by_class)| CweCount {
            cwe_id: id.to_owned(),
            count: by_class.values().sum(),
            mem_class: majority(&by_class),
            by_class,
        })
        .collect();
    sort_cwes(&mut rows);
    rows
}

fn cpe_table(occurrences: &[Occurrence]) -> Vec<CpeCount> {
    let mut map: BTreeMap<&str, CpeCount> = BTreeMap::new();
    for o in occurrences {
        let row = map.entry(&o.component_cpe).or_insert_with(|| CpeCount {
            cpe: o.component_cpe.clone(),
            count: 0,
            by_severity: zero_severity(),
            by_class: zero_class(),
        });
        row.count += 1;
        *row.by_severity.entry(o.severity).or_default() += 1;
        *row.by_class.entry(o.mem_class).or_default() += 1;
    }
    let mut rows: Vec<CpeCount> = map.into_values().collect();
    sort_cpes(&mut rows);
    rows
}

/// The `n` most frequent CWEs. Occurrences without a CWE are not ranked.
pub fn top_cwes(occurrences: &[Occurrence], n: usize) -> Vec<CweCount> {
    let mut rows = cwe_table(occurrences);
    rows.truncate(n);
    rows
}

pub fn top_cpes(occurrences: &[Occurrence], n: usize) -> Vec<CpeCount> {
    let mut rows = cpe_table(occurrences);
    rows.truncate(n);
    rows
}

/// Fraction of occurrences whose class is memory-related.
pub fn memory_share(occurrences: &[Occurrence]) -> Result<f64, AnalyticsError> {
    if occurrences.is_empty() {
        return Err(AnalyticsError::EmptyLedger);
    }
    let related = occurrences.iter().filter(|o| o.mem_class.is_memory_related()).count();
    Ok(related as f64 / occurrences.len() as f64)
}

pub fn memory_share_by_component(occurrences: &[Occurrence]) -> Result<BTreeMap<String, f64>, AnalyticsError> {
    if occurrences.is_empty() {
        return Err(AnalyticsError::EmptyLedger);
    }
    let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for o in occurrences {
        let e = counts.entry(&o.component_cpe).or_default();
        e.1 += 1;
        if o.mem_class.is_memory_related() {
            e.0 += 1;
        }
    }
    Ok(counts.into_iter().map(|(k, (m, t))| (k.to_owned(), m as f64 / t as f64)).collect())
}

/// Count-level roll-up of one or more firmware ledgers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub firmware_count: u64,
    pub occurrence_total: u64,
    pub severity_histogram: SeverityCounts,
    pub memory_histogram: ClassCounts,
    /// Every CWE seen, ranked.
    pub cwes: Vec<CweCount>,
    /// Every component CPE seen, ranked.
    pub cpes: Vec<CpeCount>,
}

impl CorpusReport {
    pub fn from_ledger(ledger: &FirmwareLedger) -> Self {
        let occ = &ledger.occurrences;
        CorpusReport {
            firmware_count: 1,
            occurrence_total: occ.len() as u64,
            severity_histogram: severity_histogram(occ),
            memory_histogram: memory_histogram(occ),
            cwes: cwe_table(occ),
            cpes: cpe_table(occ),
        }
    }

    pub fn empty() -> Self {
        CorpusReport {
            firmware_count: 0,
            occurrence_total: 0,
            severity_histogram: zero_severity(),
            memory_histogram: zero_class(),
            cwes: Vec::new(),
            cpes: Vec::new(),
        }
    }

    /// Adds counts field by field; rankings are recomputed.
    pub fn merge(&self, other: &CorpusReport) -> CorpusReport {
        fn add<K: Ord + Copy>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> BTreeMap<K, u64> {
            let mut out = a.clone();
            for (k, v) in b {
                *out.entry(*k).or_default() += v;
            }
            out
        }
        let mut cwes: BTreeMap<&str, ClassCounts> = BTreeMap::new();
        for row in self.cwes.iter().chain(&other.cwes) {
            let e = cwes.entry(&row.cwe_id).or_insert_with(zero_class);
            *e = add(e, &row.by_class);
        }
        let mut cwes: Vec<CweCount> = cwes
            .into_iter()
            .map(|(id, by_class)| CweCount {
                cwe_id: id.to_owned(),
                count: by_class.values().sum(),
                mem_class: majority(&by_class),
                by_class,
            })
            .collect();
        sort_cwes(&mut cwes);

        let mut cpes: BTreeMap<&str, CpeCount> = BTreeMap::new();
        for row in self.cpes.iter().chain(&other.cpes) {
            match cpes.get_mut(row.cpe.as_str()) {
                Some(e) => {
                    e.count += row.count;
                    e.by_severity = add(&e.by_severity, &row.by_severity);
                    e.by_class = add(&e.by_class, &row.by_class);
                }
                None => {
                    cpes.insert(&row.cpe, row.clone());
                }
            }
        }
        let mut cpes: Vec<CpeCount> = cpes.into_values().collect();
        sort_cpes(&mut cpes);

        CorpusReport {
            firmware_count: self.firmware_count + other.firmware_count,
            occurrence_total: self.occurrence_total + other.occurrence_total,
            severity_histogram: add(&self.severity_histogram, &other.severity_histogram),
            memory_histogram: add(&self.memory_histogram, &other.memory_histogram),
            cwes,
            cpes,
        }
    }

    pub fn top_cwes(&self, n: usize) -> &[CweCount] {
        &self.cwes[..n.min(self.cwes.len())]
    }

    pub fn top_cpes(&self, n: usize) -> &[CpeCount] {
        &self.cpes[..n.min(self.cpes.len())]
    }

    pub fn mean_occurrences_per_firmware(&self) -> f64 {
        if self.firmware_count == 0 {
            0.0
        } else {
            self.occurrence_total as f64 / self.firmware_count as f64
        }
    }

    pub fn per_firmware_mean_by_severity(&self) -> BTreeMap<SeverityBucket, f64> {
        let n = self.firmware_count.max(1) as f64;
        self.severity_histogram.iter().map(|(b, c)| (*b, *c as f64 / n)).collect()
    }
}

/// Merges ledgers in firmware-id order.
pub fn corpus_summary(ledgers: &[FirmwareLedger]) -> CorpusReport {
    let mut sorted: Vec<&FirmwareLedger> = ledgers.iter().collect();
    sorted.sort_by(|a, b| a.firmware_id.cmp(&b.firmware_id));
    sorted
        .into_iter()
        .fold(CorpusReport::empty(), |acc, l| acc.merge(&CorpusReport::from_ledger(l)))
}

/// Distinct firmware ids in a flat occurrence list.
pub fn firmware_ids(occurrences: &[Occurrence]) -> BTreeSet<&str> {
    occurrences.iter().map(|o| o.firmware_id.as_str()).collect()
}
