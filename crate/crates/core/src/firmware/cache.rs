//! Extraction cache: `<cache>/extracted/<image-digest>/{rootfs/, manifest.json}`.

use std::ffi::OsStr;
use std::fs;
use std::os::unix::ffi::OsStrExt;
use std::os::unix::fs::symlink;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::signature::SignatureHit;
use super::tree::{sha256_hex, ContentReader, ContentStore, EntryKind, FilesystemTree, RootFs};
use super::ExtractError;

const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionManifest {
    pub format_version: u32,
    pub image_digest: String,
    pub source_id: String,
    pub hit: Option<SignatureHit>,
    pub tree: FilesystemTree,
}

pub fn cache_entry_dir(cache_dir: &Path, image_digest: &str) -> PathBuf {
    cache_dir.join("extracted").join(image_digest)
}

fn rel_path(bytes: &[u8]) -> &Path {
    Path::new(OsStr::from_bytes(bytes))
}

/// Writes the tree and its contents below the cache. Concurrent writers of
/// the same digest race on a final rename; the loser discards its copy.
pub fn store(cache_dir: &Path, manifest: &ExtractionManifest, contents: &ContentStore) -> Result<PathBuf, ExtractError> {
    let final_dir = cache_entry_dir(cache_dir, &manifest.image_digest);
    if final_dir.join("manifest.json").is_file() {
        return Ok(final_dir);
    }
    let parent = cache_dir.join("extracted");
    fs::create_dir_all(&parent)?;
    let staging = tempfile::Builder::new().prefix(".staging-").tempdir_in(&parent)?;
    let rootfs = staging.path().join("rootfs");
    fs::create_dir_all(&rootfs)?;
    for entry in manifest.tree.entries() {
        let dest = rootfs.join(rel_path(entry.path.as_bytes()));
        match entry.kind {
            EntryKind::Dir => fs::create_dir_all(&dest)?,
            EntryKind::File => {
                let digest = entry.content_digest.as_deref().unwrap_or_default();
                let data = contents
                    .read(digest)
                    .ok_or_else(|| ExtractError::CorruptMetadata(format!("missing content for {}", entry.path)))?;
                fs::write(&dest, data)?;
            }
            EntryKind::Symlink => {
                let target = entry.link_target.as_ref().map(|t| t.as_bytes()).unwrap_or_default();
                symlink(rel_path(target), &dest)?;
            }
        }
    }
    let json = serde_json::to_vec_pretty(manifest).map_err(|e| ExtractError::CorruptMetadata(e.to_string()))?;
    fs::write(staging.path().join("manifest.json"), json)?;
    let staged = staging.keep();
    match fs::rename(&staged, &final_dir) {
        Ok(()) => Ok(final_dir),
        Err(_) if final_dir.join("manifest.json").is_file() => {
            fs::remove_dir_all(&staged).ok();
            Ok(final_dir)
        }
        Err(e) => {
            fs::remove_dir_all(&staged).ok();
            Err(e.into())
        }
    }
}

/// Reloads a cached extraction, verifying every file digest. Returns `None`
/// when no usable cache entry exists.
pub fn load(cache_dir: &Path, image_digest: &str) -> Option<(ExtractionManifest, RootFs)> {
    let dir = cache_entry_dir(cache_dir, image_digest);
    let raw = fs::read(dir.join("manifest.json")).ok()?;
    let manifest: ExtractionManifest = serde_json::from_slice(&raw).ok()?;
    if manifest.format_version != MANIFEST_VERSION || manifest.image_digest != image_digest {
        return None;
    }
    let rootfs = dir.join("rootfs");
    let mut contents = ContentStore::new();
    for entry in manifest.tree.files() {
        let data = fs::read(rootfs.join(rel_path(entry.path.as_bytes()))).ok()?;
        if Some(sha256_hex(&data).as_str()) != entry.content_digest.as_deref() {
            return None;
        }
        contents.insert(data);
    }
    let fs = RootFs { tree: manifest.tree.clone(), contents };
    Some((manifest, fs))
}

impl ExtractionManifest {
    pub fn new(image_digest: &str, source_id: &str, hit: Option<SignatureHit>, tree: FilesystemTree) -> Self {
        ExtractionManifest {
            format_version: MANIFEST_VERSION,
            image_digest: image_digest.to_owned(),
            source_id: source_id.to_owned(),
            hit,
            tree,
        }
    }
}
