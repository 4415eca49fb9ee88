//! Component identification over an extracted tree.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cpe::{to_cpe, Cpe23};
use super::known::{CompiledRule, KnownComponentTable, RuleStrategy};
use super::opkg::parse_opkg_status;
use crate::firmware::{ByteString, ContentReader, EntryKind, FilesystemTree, FsEntry};

pub const MAX_SCAN_BYTES: u64 = 16 * 1024 * 1024;
pub const MIN_RUN_LEN: usize = 6;
pub const MAX_EXCERPT_CHARS: usize = 120;

const STATUS_PATHS: [&str; 3] = ["usr/lib/opkg/status", "var/lib/opkg/status", "var/lib/dpkg/status"];

/// Evidence strategies, declared from most to least authoritative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceSource {
    OpkgStatus,
    VersionString,
    SharedLibraryName,
    KnownPath,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Evidence {
    pub source: EvidenceSource,
    pub path: ByteString,
    pub excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub cpe: Cpe23,
    pub display_name: String,
    pub version_raw: String,
    pub evidence: Vec<Evidence>,
}

impl Component {
    pub fn vendor(&self) -> &str {
        self.cpe.vendor_str()
    }

    pub fn product(&self) -> &str {
        self.cpe.product_str()
    }
}

/// Drops an optional `epoch:` prefix and the distribution revision that
/// starts at the first `-` following a digit.
pub fn normalize_version(raw: &str) -> String {
    let mut v = raw.trim();
    if let Some((epoch, rest)) = v.split_once(':') {
        if !epoch.is_empty() && epoch.bytes().all(|b| b.is_ascii_digit()) {
            v = rest;
        }
    }
    let bytes = v.as_bytes();
    let cut = (1..bytes.len()).find(|&i| bytes[i] == b'-' && bytes[i - 1].is_ascii_digit());
    match cut {
        Some(i) => v[..i].to_owned(),
        None => v.to_owned(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Candidate {
    vendor: String,
    product: String,
    source: EvidenceSource,
    unversioned: bool,
    path: ByteString,
    version_raw: String,
    display_name: String,
    excerpt: String,
}

impl Candidate {
    fn new(
        vendor: &str,
        product: &str,
        source: EvidenceSource,
        path: &ByteString,
        version_raw: String,
        display_name: &str,
        excerpt: &str,
    ) -> Self {
        Candidate {
            vendor: vendor.to_lowercase(),
            product: product.to_lowercase(),
            source,
            unversioned: version_raw.is_empty(),
            path: path.clone(),
            version_raw,
            display_name: display_name.to_owned(),
            excerpt: excerpt.chars().take(MAX_EXCERPT_CHARS).collect(),
        }
    }
}

pub fn identify_components<R>(tree: &FilesystemTree, content: &R) -> Vec<Component>
where
    R: ContentReader + Sync + ?Sized,
{
    identify_components_with(tree, content, KnownComponentTable::builtin())
}

pub fn identify_components_with<R>(tree: &FilesystemTree, content: &R, table: &KnownComponentTable) -> Vec<Component>
where
    R: ContentReader + Sync + ?Sized,
{
    let mut candidates: Vec<Candidate> = tree
        .entries()
        .par_iter()
        .flat_map_iter(|entry| scan_entry(entry, content, table))
        .collect();
    candidates.sort();
    merge(candidates)
}

fn scan_entry<R>(entry: &FsEntry, content: &R, table: &KnownComponentTable) -> Vec<Candidate>
where
    R: ContentReader + ?Sized,
{
    let mut out = Vec::new();
    if entry.kind == EntryKind::Dir {
        return out;
    }
    let path_text = entry.path.to_string_lossy();
    let name = String::from_utf8_lossy(entry.path.file_name()).into_owned();

    for rule in table.with_strategy(RuleStrategy::LibraryName) {
        push_match(&mut out, rule, &name, EvidenceSource::SharedLibraryName, &entry.path);
    }
    for rule in table.with_strategy(RuleStrategy::Path) {
        push_match(&mut out, rule, &path_text, EvidenceSource::KnownPath, &entry.path);
    }

    if entry.kind != EntryKind::File || entry.size > MAX_SCAN_BYTES {
        return out;
    }
    let Some(data) = entry.content_digest.as_deref().and_then(|d| content.read(d)) else {
        return out;
    };
    if STATUS_PATHS.contains(&path_text.as_str()) {
        scan_status(&mut out, data, &entry.path, table);
    }
    scan_version_strings(&mut out, data, &entry.path, table);
    out
}

fn push_match(out: &mut Vec<Candidate>, rule: &CompiledRule, haystack: &str, source: EvidenceSource, path: &ByteString) {
    if let Some((version, excerpt)) = rule.apply(haystack) {
        let r = &rule.rule;
        out.push(Candidate::new(&r.vendor, &r.product, source, path, version, &r.product, excerpt));
    }
}

fn scan_status(out: &mut Vec<Candidate>, data: &[u8], path: &ByteString, table: &KnownComponentTable) {
    let text = String::from_utf8_lossy(data);
    for pkg in parse_opkg_status(&text).packages {
        let excerpt = format!("Package: {} / Version: {}", pkg.package, pkg.version);
        let known = table
            .with_strategy(RuleStrategy::Package)
            .find(|rule| rule.regex.is_match(&pkg.package));
        let (vendor, product) = match known {
            Some(rule) => (rule.rule.vendor.as_str(), rule.rule.product.as_str()),
            None => (pkg.package.as_str(), pkg.package.as_str()),
        };
        out.push(Candidate::new(
            vendor,
            product,
            EvidenceSource::OpkgStatus,
            path,
            pkg.version.clone(),
            &pkg.package,
            &excerpt,
        ));
    }
}

/// Splits `data` into maximal runs of printable ASCII (plus tab).
pub fn printable_runs(data: &[u8], min_len: usize) -> impl Iterator<Item = &str> {
    data.split(|&b| !(b == b'\t' || (0x20..0x7f).contains(&b)))
        .filter(move |run| run.len() >= min_len)
        .map(|run| std::str::from_utf8(run).expect("printable ASCII is UTF-8"))
}

fn scan_version_strings(out: &mut Vec<Candidate>, data: &[u8], path: &ByteString, table: &KnownComponentTable) {
    let mut seen = Vec::new();
    for run in printable_runs(data, MIN_RUN_LEN) {
        for set_idx in table.version_set.matches(run).iter() {
            let rule = &table.rules[table.version_rules[set_idx]];
            let Some((version, excerpt)) = rule.apply(run) else { continue };
            let key = (set_idx, version.clone());
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let r = &rule.rule;
            out.push(Candidate::new(&r.vendor, &r.product, EvidenceSource::VersionString, path, version, &r.product, excerpt));
        }
    }
}

/// Collapses sorted candidates to one component per (vendor, product).
fn merge(candidates: Vec<Candidate>) -> Vec<Component> {
    let mut groups: BTreeMap<(String, String), Vec<Candidate>> = BTreeMap::new();
    for c in candidates {
        groups.entry((c.vendor.clone(), c.product.clone())).or_default().push(c);
    }
    let mut components: Vec<Component> = groups
        .into_values()
        .filter_map(|group| {
            let best = group.iter().min()?;
            let version = normalize_version(&best.version_raw);
            let cpe = to_cpe(&best.vendor, &best.product, &version).ok()?;
            let mut evidence: Vec<Evidence> = group
                .iter()
                .filter(|c| c.unversioned || normalize_version(&c.version_raw) == version)
                .map(|c| Evidence { source: c.source, path: c.path.clone(), excerpt: c.excerpt.clone() })
                .collect();
            evidence.sort();
            evidence.dedup();
            Some(Component {
                cpe,
                display_name: best.display_name.clone(),
                version_raw: best.version_raw.clone(),
                evidence,
            })
        })
        .collect();
    components.sort_by(|a, b| (a.product(), a.vendor()).cmp(&(b.product(), b.vendor())));
    components
}
