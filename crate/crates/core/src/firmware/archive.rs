//! Ingestion of pre-extracted root filesystems (directories and tarballs).

use std::fs;
use std::io::{self, Read};
use std::os::unix::ffi::OsStrExt;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;

use flate2::read::GzDecoder;
use walkdir::WalkDir;

use super::tree::{ByteString, ContentStore, FsEntry, RootFs, TreeBuilder};
use super::ExtractError;

fn is_tar(header: &[u8]) -> bool {
    header.len() >= 263 && (&header[257..263] == b"ustar\0" || &header[257..263] == b"ustar ")
}

/// Loads a directory or a POSIX tar archive (optionally gzip-compressed).
pub fn load_tree_from_archive(path: &Path) -> Result<RootFs, ExtractError> {
    let meta = fs::symlink_metadata(path)?;
    if meta.is_dir() {
        return load_directory(path);
    }
    let bytes = fs::read(path)?;
    let label = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    if bytes.starts_with(&[0x1F, 0x8B]) {
        let mut inflated = Vec::new();
        GzDecoder::new(&bytes[..])
            .take(super::squashfs::INFLATE_LIMIT + 1)
            .read_to_end(&mut inflated)
            .map_err(|e| ExtractError::UnsupportedArchive(format!("gzip: {e}")))?;
        if inflated.len() as u64 > super::squashfs::INFLATE_LIMIT {
            return Err(ExtractError::InflateLimit(super::squashfs::INFLATE_LIMIT));
        }
        return load_tar_bytes(&inflated, &label);
    }
    load_tar_bytes(&bytes, &label)
}

pub fn load_tar_bytes(bytes: &[u8], label: &str) -> Result<RootFs, ExtractError> {
    if !is_tar(bytes) {
        return Err(ExtractError::UnsupportedArchive(format!("{label}: not a directory or tar archive")));
    }
    let mut archive = tar::Archive::new(bytes);
    let mut builder = TreeBuilder::new();
    let mut contents = ContentStore::new();
    let bad = |e: io::Error| ExtractError::UnsupportedArchive(format!("{label}: {e}"));
    for entry in archive.entries().map_err(bad)? {
        let mut entry = entry.map_err(bad)?;
        let raw_path = entry.path_bytes().into_owned();
        let mode = (entry.header().mode().unwrap_or(0o644) & 0o7777) as u16;
        let path = ByteString::new(raw_path);
        match entry.header().entry_type() {
            tar::EntryType::Directory => builder.insert(FsEntry::dir(path, mode)),
            tar::EntryType::Symlink => {
                let target = entry.link_name_bytes().map(|t| t.into_owned()).unwrap_or_default();
                builder.insert(FsEntry::symlink(path, mode, ByteString::new(target)));
            }
            tar::EntryType::Regular | tar::EntryType::Continuous => {
                let mut data = Vec::new();
                entry.read_to_end(&mut data).map_err(bad)?;
                let size = data.len() as u64;
                let digest = contents.insert(data);
                builder.insert(FsEntry::file(path, mode, size, digest));
            }
            // hard links, devices and fifos carry no content of their own
            _ => {}
        }
    }
    Ok(RootFs { tree: builder.finish(label), contents })
}

fn load_directory(root: &Path) -> Result<RootFs, ExtractError> {
    let mut builder = TreeBuilder::new();
    let mut contents = ContentStore::new();
    for item in WalkDir::new(root).follow_links(false).min_depth(1).sort_by_file_name() {
        let item = item.map_err(io::Error::from)?;
        let rel = item.path().strip_prefix(root).expect("walkdir yields children of root");
        let path = ByteString::new(rel.as_os_str().as_bytes().to_vec());
        let meta = item.path().symlink_metadata()?;
        let mode = (meta.permissions().mode() & 0o7777) as u16;
        let file_type = meta.file_type();
        if file_type.is_dir() {
            builder.insert(FsEntry::dir(path, mode));
        } else if file_type.is_symlink() {
            let target = fs::read_link(item.path())?;
            builder.insert(FsEntry::symlink(path, mode, ByteString::new(target.as_os_str().as_bytes().to_vec())));
        } else if file_type.is_file() {
            let data = fs::read(item.path())?;
            let size = data.len() as u64;
            let digest = contents.insert(data);
            builder.insert(FsEntry::file(path, mode, size, digest));
        }
    }
    let label = root.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(RootFs { tree: builder.finish(label), contents })
}
