//! Locating and unpacking embedded root filesystems.

pub mod archive;
pub mod cache;
mod extract;
pub mod signature;
pub mod squashfs;
pub mod tree;

use std::io;

pub use archive::load_tree_from_archive;
pub use extract::extract_root_filesystem;
pub use signature::{carve_region, scan_signatures, Endianness, SignatureHit, SignatureKind};
pub use squashfs::extract_squashfs;
pub use tree::{ByteString, ContentReader, ContentStore, EntryKind, FilesystemTree, FsEntry, RootFs};

/// A firmware image held in memory with its SHA-256 digest.
#[derive(Debug, Clone)]
pub struct RawFirmware {
    source_id: String,
    bytes: Vec<u8>,
    digest: String,
}

impl RawFirmware {
    pub fn new(source_id: impl Into<String>, bytes: Vec<u8>) -> Self {
        let digest = tree::sha256_hex(&bytes);
        RawFirmware { source_id: source_id.into(), bytes, digest }
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Lowercase hex SHA-256 of the image bytes.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn size(&self) -> usize {
        self.bytes.len()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("range [{start}, {end}) outside image of {size} bytes")]
    Range { start: usize, end: usize, size: usize },
    #[error("unsupported squashfs compressor: {0}")]
    UnsupportedCompressor(String),
    #[error("corrupt superblock: {0}")]
    CorruptSuperblock(String),
    #[error("truncated image: {0}")]
    TruncatedImage(String),
    #[error("corrupt filesystem metadata: {0}")]
    CorruptMetadata(String),
    #[error("decompressed size exceeds limit of {0} bytes")]
    InflateLimit(u64),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("{0} is a container header, not a filesystem")]
    NotAFilesystem(String),
    #[error("unsupported archive: {0}")]
    UnsupportedArchive(String),
    #[error("no filesystem signature found")]
    NoFilesystemFound,
    #[error("all {} candidate filesystems failed to extract", .0.len())]
    AllExtractionsFailed(Vec<(SignatureHit, ExtractError)>),
    #[error(transparent)]
    Io(#[from] io::Error),
}
