//! In-memory representation of an extracted root filesystem.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Byte string used for paths and link targets. Firmware trees are not
/// guaranteed to be UTF-8, so comparisons happen on raw bytes and only the
/// display form is lossy.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ByteString(Vec<u8>);

impl ByteString {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        ByteString(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn to_string_lossy(&self) -> String {
        String::from_utf8_lossy(&self.0).into_owned()
    }

    /// Final path component.
    pub fn file_name(&self) -> &[u8] {
        match self.0.iter().rposition(|&b| b == b'/') {
            Some(idx) => &self.0[idx + 1..],
            None => &self.0,
        }
    }

    /// Parent path, `None` for a top-level entry.
    pub fn parent(&self) -> Option<ByteString> {
        self.0
            .iter()
            .rposition(|&b| b == b'/')
            .map(|idx| ByteString(self.0[..idx].to_vec()))
    }

    /// Normalizes a raw path: drops leading `/`, empty and `.` components and
    /// resolves `..` without escaping the root. Returns `None` for the root.
    pub fn normalize_path(raw: &[u8]) -> Option<ByteString> {
        let mut parts: Vec<&[u8]> = Vec::new();
        for part in raw.split(|&b| b == b'/') {
            match part {
                b"" | b"." => {}
                b".." => {
                    parts.pop();
                }
                other => parts.push(other),
            }
        }
        if parts.is_empty() {
            None
        } else {
            Some(ByteString(parts.join(&b'/')))
        }
    }
}

impl From<&str> for ByteString {
    fn from(s: &str) -> Self {
        ByteString(s.as_bytes().to_vec())
    }
}

impl fmt::Display for ByteString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.0))
    }
}

impl fmt::Debug for ByteString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", String::from_utf8_lossy(&self.0))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ByteStringRepr {
    Text(String),
    Raw { hex: String },
}

impl Serialize for ByteString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match std::str::from_utf8(&self.0) {
            Ok(text) => ByteStringRepr::Text(text.to_owned()),
            Err(_) => ByteStringRepr::Raw { hex: hex::encode(&self.0) },
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ByteString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match ByteStringRepr::deserialize(deserializer)? {
            ByteStringRepr::Text(text) => Ok(ByteString(text.into_bytes())),
            ByteStringRepr::Raw { hex } => hex::decode(hex)
                .map(ByteString)
                .map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    File,
    Dir,
    Symlink,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsEntry {
    pub path: ByteString,
    pub kind: EntryKind,
    pub size: u64,
    pub mode: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_target: Option<ByteString>,
}

impl FsEntry {
    pub fn dir(path: ByteString, mode: u16) -> Self {
        FsEntry { path, kind: EntryKind::Dir, size: 0, mode, content_digest: None, link_target: None }
    }

    pub fn file(path: ByteString, mode: u16, size: u64, digest: String) -> Self {
        FsEntry {
            path,
            kind: EntryKind::File,
            size,
            mode,
            content_digest: Some(digest),
            link_target: None,
        }
    }

    pub fn symlink(path: ByteString, mode: u16, target: ByteString) -> Self {
        FsEntry {
            path,
            kind: EntryKind::Symlink,
            size: target.len() as u64,
            mode,
            content_digest: None,
            link_target: Some(target),
        }
    }
}

/// Sorted, duplicate-free list of entries below an implicit root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilesystemTree {
    pub root_label: String,
    entries: Vec<FsEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("entry paths not sorted or duplicated at {0}")]
    Unsorted(String),
    #[error("path {0} is not normalized")]
    NotNormalized(String),
    #[error("parent of {0} is missing")]
    MissingParent(String),
    #[error("entry {0} violates its kind constraints")]
    BadKind(String),
}

impl FilesystemTree {
    pub fn empty(root_label: impl Into<String>) -> Self {
        FilesystemTree { root_label: root_label.into(), entries: Vec::new() }
    }

    pub fn entries(&self) -> &[FsEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, path: &[u8]) -> Option<&FsEntry> {
        self.entries
            .binary_search_by(|e| e.path.as_bytes().cmp(path))
            .ok()
            .map(|idx| &self.entries[idx])
    }

    pub fn contains(&self, path: &[u8]) -> bool {
        self.get(path).is_some()
    }

    pub fn files(&self) -> impl Iterator<Item = &FsEntry> {
        self.entries.iter().filter(|e| e.kind == EntryKind::File)
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<(), TreeError> {
        for pair in self.entries.windows(2) {
            if pair[0].path >= pair[1].path {
                return Err(TreeError::Unsorted(pair[1].path.to_string_lossy()));
            }
        }
        for entry in &self.entries {
            let normalized = ByteString::normalize_path(entry.path.as_bytes());
            if normalized.as_ref() != Some(&entry.path) {
                return Err(TreeError::NotNormalized(entry.path.to_string_lossy()));
            }
            if let Some(parent) = entry.path.parent() {
                if !self.contains(parent.as_bytes()) {
                    return Err(TreeError::MissingParent(entry.path.to_string_lossy()));
                }
            }
            let ok = match entry.kind {
                EntryKind::File => entry.content_digest.is_some(),
                EntryKind::Dir => entry.size == 0 && entry.content_digest.is_none(),
                EntryKind::Symlink => entry.link_target.is_some(),
            };
            if !ok {
                return Err(TreeError::BadKind(entry.path.to_string_lossy()));
            }
        }
        Ok(())
    }
}

/// Accumulates entries in any order and produces a valid [`FilesystemTree`].
#[derive(Debug, Default)]
pub struct TreeBuilder {
    entries: BTreeMap<ByteString, FsEntry>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an entry after normalizing its path. Root paths are ignored and
    /// a later entry with the same path replaces the earlier one.
    pub fn insert(&mut self, mut entry: FsEntry) {
        let Some(path) = ByteString::normalize_path(entry.path.as_bytes()) else {
            return;
        };
        entry.path = path.clone();
        if entry.kind == EntryKind::Dir {
            entry.size = 0;
            entry.content_digest = None;
        }
        self.entries.insert(path, entry);
    }

    /// Adds missing parent directories and returns the sorted tree.
    pub fn finish(mut self, root_label: impl Into<String>) -> FilesystemTree {
        let missing: Vec<ByteString> = self
            .entries
            .keys()
            .flat_map(|path| {
                let mut parents = Vec::new();
                let mut cur = path.parent();
                while let Some(p) = cur {
                    cur = p.parent();
                    parents.push(p);
                }
                parents
            })
            .filter(|p| !self.entries.contains_key(p))
            .collect();
        for path in missing {
            self.entries.insert(path.clone(), FsEntry::dir(path, 0o755));
        }
        FilesystemTree { root_label: root_label.into(), entries: self.entries.into_values().collect() }
    }
}

/// Resolves a content digest to the file bytes it names.
pub trait ContentReader {
    fn read(&self, digest: &str) -> Option<&[u8]>;
}

/// Content-addressed file bodies keyed by SHA-256 hex digest.
#[derive(Debug, Clone, Default)]
pub struct ContentStore {
    blobs: HashMap<String, Arc<[u8]>>,
}

impl ContentStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `bytes` and returns their digest.
    pub fn insert(&mut self, bytes: Vec<u8>) -> String {
        let digest = sha256_hex(&bytes);
        self.blobs.entry(digest.clone()).or_insert_with(|| Arc::from(bytes));
        digest
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }
}

impl ContentReader for ContentStore {
    fn read(&self, digest: &str) -> Option<&[u8]> {
        self.blobs.get(digest).map(|b| &b[..])
    }
}

/// An extracted tree together with the bytes of its files.
#[derive(Debug, Clone)]
pub struct RootFs {
    pub tree: FilesystemTree,
    pub contents: ContentStore,
}
