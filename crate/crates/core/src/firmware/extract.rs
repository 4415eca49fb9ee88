use std::io::Read;

use flate2::read::GzDecoder;

use super::signature::{scan_bytes, Endianness, SignatureHit, SignatureKind};
use super::squashfs::{extract_squashfs, INFLATE_LIMIT};
use super::tree::RootFs;
use super::{ExtractError, RawFirmware};

/// Attempts extraction at a single hit. Gzip streams are inflated and
/// rescanned once; nested gzip hits inside are not followed.
fn extract_hit(bytes: &[u8], hit: &SignatureHit, nested: bool) -> Result<(RootFs, SignatureHit), ExtractError> {
    match (hit.kind, hit.endianness) {
        (SignatureKind::SquashFS, Endianness::Little) => {
            let mut fs = extract_squashfs(&bytes[hit.offset..])?;
            fs.tree.root_label = format!("squashfs@{:#x}", hit.offset);
            Ok((fs, hit.clone()))
        }
        (SignatureKind::SquashFS, Endianness::Big) => {
            Err(ExtractError::Unsupported("big-endian squashfs".into()))
        }
        (SignatureKind::JFFS2 | SignatureKind::CramFS, _) => {
            Err(ExtractError::Unsupported(format!("{} content extraction", hit.kind)))
        }
        (SignatureKind::UBootLegacy | SignatureKind::TrxHeader, _) => {
            Err(ExtractError::NotAFilesystem(hit.kind.to_string()))
        }
        (SignatureKind::GzipStream, _) if nested => {
            Err(ExtractError::Unsupported("nested gzip beyond one level".into()))
        }
        (SignatureKind::GzipStream, _) => {
            let mut inflated = Vec::new();
            GzDecoder::new(&bytes[hit.offset..])
                .take(INFLATE_LIMIT + 1)
                .read_to_end(&mut inflated)
                .map_err(|e| ExtractError::CorruptMetadata(format!("gzip stream: {e}")))?;
            if inflated.len() as u64 > INFLATE_LIMIT {
                return Err(ExtractError::InflateLimit(INFLATE_LIMIT));
            }
            let mut failures = Vec::new();
            for inner in scan_bytes(&inflated) {
                match extract_hit(&inflated, &inner, true) {
                    Ok((mut fs, inner)) => {
                        fs.tree.root_label = format!("gzip@{:#x}/{}", hit.offset, fs.tree.root_label);
                        let mut outer = hit.clone();
                        outer.detail = format!("contains {} at inner offset {:#x}", inner.kind, inner.offset);
                        return Ok((fs, outer));
                    }
                    Err(e) => failures.push(format!("{}@{:#x}: {e}", inner.kind, inner.offset)),
                }
            }
            Err(ExtractError::NotAFilesystem(if failures.is_empty() {
                "gzip stream without filesystem".into()
            } else {
                format!("gzip stream: {}", failures.join("; "))
            }))
        }
    }
}

/// Extracts the first filesystem, in offset order, that can be unpacked.
pub fn extract_root_filesystem(image: &RawFirmware) -> Result<(RootFs, SignatureHit), ExtractError> {
    let hits = scan_bytes(image.bytes());
    if hits.is_empty() {
        return Err(ExtractError::NoFilesystemFound);
    }
    let mut failures = Vec::with_capacity(hits.len());
    for hit in hits {
        match extract_hit(image.bytes(), &hit, false) {
            Ok(found) => return Ok(found),
            Err(e) => failures.push((hit, e)),
        }
    }
    Err(ExtractError::AllExtractionsFailed(failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_has_no_filesystem() {
        let image = RawFirmware::new("noise", firmscan_fixtures::noise(64 * 1024, 7));
        assert!(matches!(extract_root_filesystem(&image), Err(ExtractError::NoFilesystemFound)));
    }

    #[test]
    fn lone_jffs2_hit_fails_as_unsupported() {
        let image = RawFirmware::new("jffs2", firmscan_fixtures::jffs2_only_image());
        match extract_root_filesystem(&image) {
            Err(ExtractError::AllExtractionsFailed(failures)) => {
                assert_eq!(failures.len(), 1);
                assert_eq!(failures[0].0.kind, SignatureKind::JFFS2);
                assert!(matches!(failures[0].1, ExtractError::Unsupported(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
