//! Per-firmware occurrence ledgers.

use serde::{Deserialize, Serialize};

use crate::classify::{ClassificationSource, Classifier, ClassifyError, MemoryClass};
use crate::inventory::Cpe23;
use crate::vulndb::{cvss_severity, CveRecord, CweRef, SeverityBucket, VulnIndex};

/// One (firmware, component, CVE) triple. Shared CVEs across components are
/// counted once per component.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Occurrence {
    pub firmware_id: String,
    pub component_cpe: String,
    pub cve_id: String,
    /// `CWE-<n>`, `CWE-noinfo`, `CWE-Other`, or absent.
    pub cwe_id: Option<String>,
    pub severity: SeverityBucket,
    pub mem_class: MemoryClass,
    pub classification_source: ClassificationSource,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirmwareLedger {
    pub firmware_id: String,
    pub occurrences: Vec<Occurrence>,
    pub warnings: Vec<String>,
}

/// The CWE reported for a record: the first one the rule table knows, else
/// the first listed.
fn reported_cwe(record: &CveRecord, classifier: &Classifier<'_>) -> Option<CweRef> {
    record
        .cwe_ids
        .iter()
        .find(|c| matches!(c, CweRef::Id(n) if classifier.table().get(*n).is_some()))
        .or(record.cwe_ids.first())
        .copied()
}

/// Matches each component against the index and classifies every hit.
/// Components without a concrete version are skipped with a warning.
pub fn build_occurrences(
    firmware_id: &str,
    components: &[Cpe23],
    index: &VulnIndex,
    classifier: &Classifier<'_>,
) -> Result<FirmwareLedger, ClassifyError> {
    let mut ledger = FirmwareLedger { firmware_id: firmware_id.to_owned(), ..Default::default() };
    for cpe in components {
        let records = match index.match_cpe(cpe) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{firmware_id}: skipping component: {e}");
                ledger.warnings.push(format!("{firmware_id}: {e}"));
                continue;
            }
        };
        let component_cpe = cpe.to_string();
        for record in records {
            let class = classifier.classify_cve(record)?;
            ledger.occurrences.push(Occurrence {
                firmware_id: firmware_id.to_owned(),
                component_cpe: component_cpe.clone(),
                cve_id: record.id.to_string(),
                cwe_id: reported_cwe(record, classifier).map(|c| c.to_string()),
                severity: cvss_severity(record).bucket,
                mem_class: class.class,
                classification_source: class.source,
            });
        }
    }
    Ok(ledger)
}
