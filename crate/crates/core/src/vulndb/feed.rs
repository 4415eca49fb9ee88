//! NVD API 2.0 response ingestion.

use serde::Deserialize;

use crate::inventory::{Cpe23, CpeValue};

use super::record::{CpeMatchRange, CveId, CveRecord, CvssScore, CweRef, VersionBound};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("feed document {document}, {location}: {message}")]
pub struct FeedParseError {
    /// Zero-based index of the document in the ingested batch.
    pub document: usize,
    /// `line L column C` for syntax errors, a JSON path otherwise.
    pub location: String,
    pub message: String,
}

#[derive(Deserialize)]
struct Response {
    vulnerabilities: Vec<Item>,
}

#[derive(Deserialize)]
struct Item {
    cve: Cve,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Cve {
    id: String,
    descriptions: Vec<LangString>,
    #[serde(default)]
    metrics: Metrics,
    #[serde(default)]
    weaknesses: Vec<Weakness>,
    #[serde(default)]
    configurations: Vec<Configuration>,
}

#[derive(Deserialize)]
struct LangString {
    lang: String,
    value: String,
}

#[derive(Default, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Metrics {
    #[serde(default)]
    cvss_metric_v31: Vec<Metric>,
    #[serde(default)]
    cvss_metric_v30: Vec<Metric>,
    #[serde(default)]
    cvss_metric_v2: Vec<Metric>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Metric {
    cvss_data: CvssData,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct CvssData {
    base_score: f64,
    vector_string: Option<String>,
}

#[derive(Deserialize)]
struct Weakness {
    description: Vec<LangString>,
}

#[derive(Deserialize)]
struct Configuration {
    #[serde(default)]
    nodes: Vec<Node>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Node {
    #[serde(default)]
    cpe_match: Vec<CpeMatch>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct CpeMatch {
    #[serde(default = "yes")]
    vulnerable: bool,
    criteria: String,
    version_start_including: Option<String>,
    version_start_excluding: Option<String>,
    version_end_including: Option<String>,
    version_end_excluding: Option<String>,
}

fn yes() -> bool {
    true
}

fn bound(including: Option<String>, excluding: Option<String>) -> Option<VersionBound> {
    including
        .map(|value| VersionBound { value, inclusive: true })
        .or(excluding.map(|value| VersionBound { value, inclusive: false }))
}

fn score(metrics: &[Metric], at: impl Fn() -> String, document: usize) -> Result<Option<CvssScore>, FeedParseError> {
    let Some(m) = metrics.first() else { return Ok(None) };
    let s = m.cvss_data.base_score;
    if !(0.0..=10.0).contains(&s) {
        return Err(FeedParseError { document, location: at(), message: format!("CVSS score {s} outside [0, 10]") });
    }
    Ok(Some(CvssScore { score: s, vector: m.cvss_data.vector_string.clone() }))
}

/// Parses one NVD API 2.0 response into records, in document order.
/// Configuration nodes are flattened: every vulnerable `cpeMatch` entry
/// becomes one [`CpeMatchRange`], regardless of the node operator.
pub fn parse_nvd_document(bytes: &[u8], document: usize) -> Result<Vec<CveRecord>, FeedParseError> {
    let response: Response = serde_json::from_slice(bytes).map_err(|e| FeedParseError {
        document,
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut out = Vec::with_capacity(response.vulnerabilities.len());
    for (i, item) in response.vulnerabilities.into_iter().enumerate() {
        let cve = item.cve;
        let at = |field: &str| format!("vulnerabilities[{i}].cve{field}");
        let err = |field: &str, message: String| FeedParseError { document, location: at(field), message };
        let id = CveId::parse(&cve.id).ok_or_else(|| err(".id", format!("invalid CVE id {:?}", cve.id)))?;
        let description = cve
            .descriptions
            .iter()
            .find(|d| d.lang == "en")
            .or(cve.descriptions.first())
            .map(|d| d.value.clone())
            .unwrap_or_default();

        let mut cwe_ids = Vec::new();
        for w in &cve.weaknesses {
            for d in &w.description {
                match d.value.parse::<CweRef>() {
                    Ok(cwe) if !cwe_ids.contains(&cwe) => cwe_ids.push(cwe),
                    Ok(_) => {}
                    Err(e) => log::warn!("{id}: {e}"),
                }
            }
        }

        let v3 = if cve.metrics.cvss_metric_v31.is_empty() {
            score(&cve.metrics.cvss_metric_v30, || at(".metrics.cvssMetricV30[0]"), document)?
        } else {
            score(&cve.metrics.cvss_metric_v31, || at(".metrics.cvssMetricV31[0]"), document)?
        };
        let v2 = score(&cve.metrics.cvss_metric_v2, || at(".metrics.cvssMetricV2[0]"), document)?;

        let mut configurations = Vec::new();
        for m in cve.configurations.into_iter().flat_map(|c| c.nodes).flat_map(|n| n.cpe_match) {
            if !m.vulnerable {
                continue;
            }
            let base = Cpe23::parse(&m.criteria).map_err(|e| err(".configurations", e.to_string()))?;
            let literal_version = matches!(base.version, CpeValue::Value(_) | CpeValue::Na);
            let range = CpeMatchRange {
                version_start: bound(m.version_start_including, m.version_start_excluding).filter(|_| !literal_version),
                version_end: bound(m.version_end_including, m.version_end_excluding).filter(|_| !literal_version),
                base,
            };
            if !configurations.contains(&range) {
                configurations.push(range);
            }
        }

        out.push(CveRecord { id, description, cwe_ids, cvss31: v3, cvss2: v2, configurations });
    }
    Ok(out)
}
