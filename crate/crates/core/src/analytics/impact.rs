//! Estimated effect of eliminating memory-safety vulnerabilities.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::aggregate::{firmware_ids, severity_histogram, SeverityCounts};
use super::ledger::Occurrence;
use super::AnalyticsError;
use crate::vulndb::SeverityBucket;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReductionFactor {
    Finite(f64),
    /// Nothing is left after removal.
    Infinite,
}

impl ReductionFactor {
    pub fn value(self) -> f64 {
        match self {
            ReductionFactor::Finite(v) => v,
            ReductionFactor::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for ReductionFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReductionFactor::Finite(v) => write!(f, "{v:.2}"),
            ReductionFactor::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for ReductionFactor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ReductionFactor::Finite(v) => s.serialize_f64(*v),
            ReductionFactor::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ReductionFactor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(ReductionFactor::Finite(v)),
            Raw::Text(t) if t == "inf" => Ok(ReductionFactor::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad reduction factor {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub firmware_count: u64,
    pub before: SeverityCounts,
    pub after: SeverityCounts,
    pub before_total: u64,
    pub after_total: u64,
    pub eliminated_share: f64,
    pub reduction_factor: ReductionFactor,
    pub per_firmware_before: BTreeMap<SeverityBucket, f64>,
    pub per_firmware_after: BTreeMap<SeverityBucket, f64>,
}

/// Removes every memory-related occurrence and compares the counts. The
/// firmware count is the number of distinct firmware ids present.
pub fn estimate_sbd_impact(occurrences: &[Occurrence]) -> Result<ImpactReport, AnalyticsError> {
    let n = firmware_ids(occurrences).len() as u64;
    estimate_sbd_impact_over(occurrences, n)
}

/// As [`estimate_sbd_impact`], averaging over `firmware_count` images, which
/// may include images with no occurrences.
pub fn estimate_sbd_impact_over(occurrences: &[Occurrence], firmware_count: u64) -> Result<ImpactReport, AnalyticsError> {
    if occurrences.is_empty() {
        return Err(AnalyticsError::EmptyLedger);
    }
    let remaining: Vec<Occurrence> = occurrences.iter().filter(|o| !o.mem_class.is_memory_related()).cloned().collect();
    let before = severity_histogram(occurrences);
    let after = severity_histogram(&remaining);
    let before_total = occurrences.len() as u64;
    let after_total = remaining.len() as u64;
    let divisor = firmware_count.max(1) as f64;
    let means = |h: &SeverityCounts| h.iter().map(|(b, c)| (*b, *c as f64 / divisor)).collect();
    Ok(ImpactReport {
        firmware_count,
        per_firmware_before: means(&before),
        per_firmware_after: means(&after),
        before,
        after,
        before_total,
        after_total,
        eliminated_share: 1.0 - after_total as f64 / before_total as f64,
        reduction_factor: if after_total == 0 {
            ReductionFactor::Infinite
        } else {
            ReductionFactor::Finite(before_total as f64 / after_total as f64)
        },
    })
}
