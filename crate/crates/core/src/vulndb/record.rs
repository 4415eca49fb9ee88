//! CVE records and their parts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::inventory::{Cpe23, CpeValue};

use super::version::compare_versions;

/// `CVE-YYYY-NNNN+`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CveId(String);

impl CveId {
    pub fn parse(text: &str) -> Option<Self> {
        let rest = text.strip_prefix("CVE-")?;
        let (year, num) = rest.split_once('-')?;
        let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
        (year.len() == 4 && digits(year) && num.len() >= 4 && digits(num)).then(|| CveId(text.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn sort_key(&self) -> (&str, usize, &str) {
        let (year, num) = self.0[4..].split_once('-').expect("validated id");
        (year, num.len(), num)
    }
}

impl fmt::Display for CveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for CveId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for CveId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        CveId::parse(&text).ok_or_else(|| serde::de::Error::custom(format!("invalid CVE id {text:?}")))
    }
}

/// Numeric order: CVE-2021-9999 sorts before CVE-2021-10000.
pub fn cmp_cve_ids(a: &CveId, b: &CveId) -> std::cmp::Ordering {
    a.sort_key().cmp(&b.sort_key())
}

/// A weakness reference from a CVE record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CweRef {
    Id(u32),
    /// NVD-CWE-noinfo: insufficient information.
    NoInfo,
    /// NVD-CWE-Other.
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unrecognised CWE reference {0:?}")]
pub struct CweParseError(pub String);

impl FromStr for CweRef {
    type Err = CweParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("NVD-CWE-noinfo") || t.eq_ignore_ascii_case("CWE-noinfo") {
            return Ok(CweRef::NoInfo);
        }
        if t.eq_ignore_ascii_case("NVD-CWE-Other") || t.eq_ignore_ascii_case("CWE-Other") {
            return Ok(CweRef::Other);
        }
        t.strip_prefix("CWE-")
            .or_else(|| t.strip_prefix("cwe-"))
            .and_then(|n| n.parse().ok())
            .map(CweRef::Id)
            .ok_or_else(|| CweParseError(s.to_owned()))
    }
}

impl fmt::Display for CweRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CweRef::Id(n) => write!(f, "CWE-{n}"),
            CweRef::NoInfo => f.write_str("CWE-noinfo"),
            CweRef::Other => f.write_str("CWE-Other"),
        }
    }
}

impl Serialize for CweRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CweRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvssScore {
    pub score: f64,
    pub vector: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionBound {
    pub value: String,
    pub inclusive: bool,
}

/// One vulnerable-configuration entry: a CPE plus an optional version range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpeMatchRange {
    pub base: Cpe23,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version_start: Option<VersionBound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version_end: Option<VersionBound>,
}

impl CpeMatchRange {
    /// Whether a concrete (vendor, product, version) falls under this entry.
    /// Attributes other than vendor, product and version are not consulted.
    pub fn matches(&self, vendor: &str, product: &str, version: &str) -> bool {
        let attr_eq = |attr: &CpeValue, want: &str| match attr {
            CpeValue::Any => true,
            CpeValue::Na => false,
            CpeValue::Value(v) => v.eq_ignore_ascii_case(want),
        };
        if !attr_eq(&self.base.vendor, vendor) || !attr_eq(&self.base.product, product) {
            return false;
        }
        match &self.base.version {
            CpeValue::Value(v) => compare_versions(version, v).is_eq(),
            CpeValue::Na => false,
            CpeValue::Any => {
                let above_start = self.version_start.as_ref().is_none_or(|b| {
                    let ord = compare_versions(version, &b.value);
                    ord.is_gt() || (b.inclusive && ord.is_eq())
                });
                let below_end = self.version_end.as_ref().is_none_or(|b| {
                    let ord = compare_versions(version, &b.value);
                    ord.is_lt() || (b.inclusive && ord.is_eq())
                });
                above_start && below_end
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CveRecord {
    pub id: CveId,
    pub description: String,
    pub cwe_ids: Vec<CweRef>,
    /// CVSS v3.x base score; a 3.0 metric is used when no 3.1 one exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cvss31: Option<CvssScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cvss2: Option<CvssScore>,
    pub configurations: Vec<CpeMatchRange>,
}
