//! Magic-byte scanning over raw firmware images.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ExtractError, RawFirmware};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SignatureKind {
    SquashFS,
    JFFS2,
    CramFS,
    GzipStream,
    UBootLegacy,
    TrxHeader,
}

impl fmt::Display for SignatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SignatureKind::SquashFS => "squashfs",
            SignatureKind::JFFS2 => "jffs2",
            SignatureKind::CramFS => "cramfs",
            SignatureKind::GzipStream => "gzip",
            SignatureKind::UBootLegacy => "uboot",
            SignatureKind::TrxHeader => "trx",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Endianness {
    Little,
    Big,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureHit {
    pub kind: SignatureKind,
    pub offset: usize,
    pub endianness: Endianness,
    pub detail: String,
}

const SQUASHFS_LE: &[u8; 4] = b"hsqs";
const SQUASHFS_BE: &[u8; 4] = b"sqsh";
const CRAMFS_LE: [u8; 4] = [0x45, 0x3D, 0xCD, 0x28];
const UBOOT: [u8; 4] = [0x27, 0x05, 0x19, 0x56];
const TRX: &[u8; 4] = b"HDR0";
const JFFS2_LE: [u8; 2] = [0x85, 0x19];
/// Node types a JFFS2 node header may carry.
const JFFS2_NODE_TYPES: [u16; 7] = [0xE001, 0xE002, 0x2003, 0x2004, 0xE006, 0xE008, 0xE009];

fn u16_le(b: &[u8], at: usize) -> Option<u16> {
    b.get(at..at + 2).map(|s| u16::from_le_bytes([s[0], s[1]]))
}

fn u16_be(b: &[u8], at: usize) -> Option<u16> {
    b.get(at..at + 2).map(|s| u16::from_be_bytes([s[0], s[1]]))
}

fn squashfs_detail(bytes: &[u8], offset: usize, big: bool) -> String {
    let read = if big { u16_be } else { u16_le };
    match (read(bytes, offset + 28), read(bytes, offset + 30), read(bytes, offset + 20)) {
        (Some(major), Some(minor), Some(comp)) => {
            format!("version {major}.{minor}, compressor {}", compressor_name(comp))
        }
        _ => "header truncated".to_owned(),
    }
}

pub(crate) fn compressor_name(id: u16) -> String {
    match id {
        1 => "gzip".into(),
        2 => "lzma".into(),
        3 => "lzo".into(),
        4 => "xz".into(),
        5 => "lz4".into(),
        6 => "zstd".into(),
        other => format!("unknown({other})"),
    }
}

fn match_at(bytes: &[u8], offset: usize) -> Option<SignatureHit> {
    let rest = &bytes[offset..];
    let hit = |kind, endianness, detail: String| {
        Some(SignatureHit { kind, offset, endianness, detail })
    };
    if rest.starts_with(SQUASHFS_LE) {
        return hit(SignatureKind::SquashFS, Endianness::Little, squashfs_detail(bytes, offset, false));
    }
    if rest.starts_with(SQUASHFS_BE) {
        return hit(SignatureKind::SquashFS, Endianness::Big, squashfs_detail(bytes, offset, true));
    }
    if rest.starts_with(&CRAMFS_LE) {
        return hit(SignatureKind::CramFS, Endianness::Little, "cramfs superblock".into());
    }
    if rest.starts_with(&UBOOT) {
        let name_end = rest.len().min(64);
        let name = rest.get(32..name_end).unwrap_or_default();
        let name = name.split(|&b| b == 0).next().unwrap_or_default();
        let size = rest
            .get(12..16)
            .map(|s| u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
            .unwrap_or(0);
        return hit(
            SignatureKind::UBootLegacy,
            Endianness::Big,
            format!("image name {:?}, data size {size}", String::from_utf8_lossy(name)),
        );
    }
    if rest.starts_with(TRX) {
        return hit(SignatureKind::TrxHeader, Endianness::Little, "trx header".into());
    }
    // gzip: magic, deflate method, reserved flag bits clear
    if rest.len() >= 4 && rest[0] == 0x1F && rest[1] == 0x8B && rest[2] == 0x08 && rest[3] & 0xE0 == 0 {
        return hit(SignatureKind::GzipStream, Endianness::Little, "deflate".into());
    }
    // jffs2: only at 4-byte node boundaries, followed by a known node type
    if offset.is_multiple_of(4) && rest.starts_with(&JFFS2_LE) {
        if let Some(node_type) = u16_le(rest, 2) {
            if JFFS2_NODE_TYPES.contains(&node_type) {
                return hit(SignatureKind::JFFS2, Endianness::Little, format!("node type {node_type:#06x}"));
            }
        }
    }
    None
}

/// Every offset at which a known magic matches, in ascending order.
pub fn scan_bytes(bytes: &[u8]) -> Vec<SignatureHit> {
    (0..bytes.len()).filter_map(|offset| match_at(bytes, offset)).collect()
}

pub fn scan_signatures(image: &RawFirmware) -> Vec<SignatureHit> {
    scan_bytes(image.bytes())
}

/// The byte range `[start, end)`; `end == None` means end-of-image.
pub fn carve_region(image: &RawFirmware, start: usize, end: Option<usize>) -> Result<&[u8], ExtractError> {
    let size = image.size();
    let end = end.unwrap_or(size);
    if start > end || end > size {
        return Err(ExtractError::Range { start, end, size });
    }
    Ok(&image.bytes()[start..end])
}
