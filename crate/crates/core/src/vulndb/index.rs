//! In-memory vulnerability index with JSON persistence.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::inventory::{Cpe23, CpeValue};

use super::feed::{parse_nvd_document, FeedParseError};
use super::record::{cmp_cve_ids, CveId, CveRecord};
use super::{IndexError, MatchError};

pub const INDEX_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedMeta {
    pub source_label: String,
    pub record_count: usize,
    pub ingested_at: String,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub source_label: String,
    /// RFC 3339 timestamp recorded in the index; defaults to now.
    pub ingested_at: Option<String>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { source_label: "nvd".into(), ingested_at: None }
    }
}

type ProductKey = (String, String);

#[derive(Debug, Clone)]
pub struct VulnIndex {
    records: BTreeMap<CveId, CveRecord>,
    product_index: HashMap<ProductKey, Vec<CveId>>,
    /// Records with a configuration whose vendor or product is not a literal.
    wildcard: Vec<CveId>,
    feed_meta: FeedMeta,
    duplicate_count: usize,
}

impl PartialEq for VulnIndex {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records && self.feed_meta == other.feed_meta && self.duplicate_count == other.duplicate_count
    }
}

fn literal_lower(value: &CpeValue) -> Option<String> {
    value.literal().map(str::to_lowercase)
}

impl VulnIndex {
    pub fn from_records(records: BTreeMap<CveId, CveRecord>, feed_meta: FeedMeta, duplicate_count: usize) -> Self {
        let mut product_index: HashMap<ProductKey, Vec<CveId>> = HashMap::new();
        let mut wildcard = Vec::new();
        for record in records.values() {
            for range in &record.configurations {
                match (literal_lower(&range.base.vendor), literal_lower(&range.base.product)) {
                    (Some(v), Some(p)) => {
                        let ids = product_index.entry((v, p)).or_default();
                        if ids.last() != Some(&record.id) {
                            ids.push(record.id.clone());
                        }
                    }
                    _ => {
                        if wildcard.last() != Some(&record.id) {
                            wildcard.push(record.id.clone());
                        }
                    }
                }
            }
        }
        let feed_meta = FeedMeta { record_count: records.len(), ..feed_meta };
        VulnIndex { records, product_index, wildcard, feed_meta, duplicate_count }
    }

    pub fn empty(label: &str) -> Self {
        let meta = FeedMeta { source_label: label.into(), record_count: 0, ingested_at: String::new() };
        Self::from_records(BTreeMap::new(), meta, 0)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CveRecord> {
        CveId::parse(id).and_then(|id| self.records.get(&id))
    }

    pub fn records(&self) -> impl Iterator<Item = &CveRecord> {
        self.records.values()
    }

    pub fn feed_meta(&self) -> &FeedMeta {
        &self.feed_meta
    }

    /// Records replaced by a later record with the same id during ingestion.
    pub fn duplicate_count(&self) -> usize {
        self.duplicate_count
    }

    /// CVE ids listed under a literal (vendor, product) pair.
    pub fn ids_for_product(&self, vendor: &str, product: &str) -> &[CveId] {
        self.product_index
            .get(&(vendor.to_lowercase(), product.to_lowercase()))
            .map(Vec::as_slice)
            .unwrap_or_default()
    }

    /// Records with at least one configuration covering `cpe`, sorted by id.
    pub fn match_cpe(&self, cpe: &Cpe23) -> Result<Vec<&CveRecord>, MatchError> {
        let (Some(vendor), Some(product)) = (cpe.vendor.literal(), cpe.product.literal()) else {
            return Err(MatchError::UnresolvedProduct(cpe.to_string()));
        };
        let version = cpe.version.literal().ok_or_else(|| MatchError::UnresolvedVersion(cpe.to_string()))?;
        let mut hits: Vec<&CveRecord> = self
            .ids_for_product(vendor, product)
            .iter()
            .chain(&self.wildcard)
            .filter_map(|id| self.records.get(id))
            .filter(|r| r.configurations.iter().any(|c| c.matches(vendor, product, version)))
            .collect();
        hits.sort_by(|a, b| cmp_cve_ids(&a.id, &b.id));
        hits.dedup_by(|a, b| a.id == b.id);
        Ok(hits)
    }

    /// Checks that the product index only names known records and lists
    /// every literal configuration.
    pub fn check_invariants(&self) -> Result<(), String> {
        for ids in self.product_index.values().chain(std::iter::once(&self.wildcard)) {
            if let Some(missing) = ids.iter().find(|id| !self.records.contains_key(*id)) {
                return Err(format!("{missing} indexed but not stored"));
            }
        }
        for r in self.records.values() {
            for c in &r.configurations {
                let listed = match (literal_lower(&c.base.vendor), literal_lower(&c.base.product)) {
                    (Some(v), Some(p)) => self.product_index.get(&(v, p)).is_some_and(|ids| ids.contains(&r.id)),
                    _ => self.wildcard.contains(&r.id),
                };
                if !listed {
                    return Err(format!("{} configuration {} not indexed", r.id, c.base));
                }
            }
        }
        Ok(())
    }
}

/// Builds an index from NVD API 2.0 documents. A CVE id seen more than once
/// keeps its last occurrence; each replacement counts as a duplicate.
pub fn ingest_nvd_feed<D: AsRef<[u8]>>(documents: &[D], opts: &IngestOptions) -> Result<VulnIndex, FeedParseError> {
    let mut records = BTreeMap::new();
    let mut duplicates = 0;
    for (i, doc) in documents.iter().enumerate() {
        for record in parse_nvd_document(doc.as_ref(), i)? {
            if records.insert(record.id.clone(), record).is_some() {
                duplicates += 1;
            }
        }
    }
    let ingested_at = opts
        .ingested_at
        .clone()
        .unwrap_or_else(|| chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string());
    let meta = FeedMeta { source_label: opts.source_label.clone(), record_count: records.len(), ingested_at };
    Ok(VulnIndex::from_records(records, meta, duplicates))
}

#[derive(Serialize)]
struct IndexFileOut<'a> {
    format_version: u64,
    feed_meta: &'a FeedMeta,
    duplicate_count: usize,
    records: Vec<&'a CveRecord>,
}

#[derive(Deserialize)]
struct IndexHeader {
    format_version: u64,
}

#[derive(Deserialize)]
struct IndexFileIn {
    feed_meta: FeedMeta,
    duplicate_count: usize,
    records: Vec<CveRecord>,
}

/// Writes the index as a single JSON file, replacing `path` atomically.
pub fn save_index(index: &VulnIndex, path: &Path) -> Result<(), IndexError> {
    let out = IndexFileOut {
        format_version: INDEX_FORMAT_VERSION,
        feed_meta: &index.feed_meta,
        duplicate_count: index.duplicate_count,
        records: index.records.values().collect(),
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    serde_json::to_writer(std::io::BufWriter::new(tmp.as_file_mut()), &out)
        .map_err(|e| IndexError::Corrupt(e.to_string()))?;
    tmp.as_file_mut().flush()?;
    tmp.persist(path).map_err(|e| IndexError::Io(e.error))?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<VulnIndex, IndexError> {
    let bytes = fs::read(path)?;
    let header: Option<IndexHeader> = serde_json::from_slice(&bytes).ok();
    match header.map(|h| h.format_version) {
        Some(INDEX_FORMAT_VERSION) => {}
        found => return Err(IndexError::VersionMismatch { found, expected: INDEX_FORMAT_VERSION }),
    }
    let file: IndexFileIn = serde_json::from_slice(&bytes).map_err(|e| IndexError::Corrupt(e.to_string()))?;
    let mut records = BTreeMap::new();
    for r in file.records {
        records.insert(r.id.clone(), r);
    }
    Ok(VulnIndex::from_records(records, file.feed_meta, file.duplicate_count))
}
