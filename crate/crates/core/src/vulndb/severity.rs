//! CVSS severity bands.

use serde::{Deserialize, Serialize};

use super::record::CveRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeverityBucket {
    None,
    Low,
    Medium,
    High,
    Critical,
}

impl SeverityBucket {
    pub const ALL: [SeverityBucket; 5] = [Self::None, Self::Low, Self::Medium, Self::High, Self::Critical];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
            Self::Critical => "critical",
        }
    }

    /// CVSS v3.x qualitative rating.
    pub fn from_v3(score: f64) -> Self {
        if score <= 0.0 {
            Self::None
        } else if score < 4.0 {
            Self::Low
        } else if score < 7.0 {
            Self::Medium
        } else if score < 9.0 {
            Self::High
        } else {
            Self::Critical
        }
    }

    /// CVSS v2 rating, which has no None or Critical band.
    pub fn from_v2(score: f64) -> Self {
        if score < 4.0 {
            Self::Low
        } else if score < 7.0 {
            Self::Medium
        } else {
            Self::High
        }
    }
}

impl std::fmt::Display for SeverityBucket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SeverityBucket {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown severity {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CvssVersion {
    V3,
    V2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Severity {
    pub bucket: SeverityBucket,
    pub score: Option<f64>,
    pub version: Option<CvssVersion>,
}

/// Prefers the v3 score, falls back to v2, and reports None without either.
pub fn cvss_severity(record: &CveRecord) -> Severity {
    if let Some(v3) = &record.cvss31 {
        Severity { bucket: SeverityBucket::from_v3(v3.score), score: Some(v3.score), version: Some(CvssVersion::V3) }
    } else if let Some(v2) = &record.cvss2 {
        Severity { bucket: SeverityBucket::from_v2(v2.score), score: Some(v2.score), version: Some(CvssVersion::V2) }
    } else {
        Severity { bucket: SeverityBucket::None, score: None, version: None }
    }
}
