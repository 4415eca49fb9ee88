//! NVD feed ingestion, persistent index and CPE-to-CVE matching.

mod feed;
pub mod fetch;
mod index;
mod record;
mod severity;
mod version;

use std::io;

pub use feed::{parse_nvd_document, FeedParseError};
pub use index::{ingest_nvd_feed, load_index, save_index, FeedMeta, IngestOptions, VulnIndex, INDEX_FORMAT_VERSION};
pub use record::{cmp_cve_ids, CpeMatchRange, CveId, CveRecord, CvssScore, CweParseError, CweRef, VersionBound};
pub use severity::{cvss_severity, CvssVersion, Severity, SeverityBucket};
pub use version::compare_versions;

use crate::inventory::Cpe23;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("index format version {found:?} is not the supported version {expected}")]
    VersionMismatch { found: Option<u64>, expected: u64 },
    #[error("corrupt index: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatchError {
    #[error("CPE {0} has no concrete version")]
    UnresolvedVersion(String),
    #[error("CPE {0} has no concrete vendor/product")]
    UnresolvedProduct(String),
}

pub fn match_cpe<'a>(index: &'a VulnIndex, cpe: &Cpe23) -> Result<Vec<&'a CveRecord>, MatchError> {
    index.match_cpe(cpe)
}
