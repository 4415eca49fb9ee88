use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use firmscan_core::firmware::{
    cache, carve_region, extract_root_filesystem, extract_squashfs, load_tree_from_archive,
    scan_signatures, ContentReader, EntryKind, ExtractError, FilesystemTree, RawFirmware,
    SignatureKind,
};
use firmscan_fixtures::{self as fx, Compression, Node};
use proptest::prelude::*;
use sha2::{Digest, Sha256};

/// (path, kind, digest) triples computed by walking a real directory with std only.
fn oracle_listing(root: &Path) -> BTreeMap<String, (EntryKind, Option<String>)> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, (EntryKind, Option<String>)>) {
        for item in fs::read_dir(dir).unwrap() {
            let item = item.unwrap();
            let path = item.path();
            let rel = path.strip_prefix(base).unwrap().to_string_lossy().into_owned();
            let ft = item.file_type().unwrap();
            if ft.is_symlink() {
                out.insert(rel, (EntryKind::Symlink, None));
            } else if ft.is_dir() {
                out.insert(rel, (EntryKind::Dir, None));
                walk(base, &path, out);
            } else {
                let digest = hex::encode(Sha256::digest(fs::read(&path).unwrap()));
                out.insert(rel, (EntryKind::File, Some(digest)));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn tree_listing(tree: &FilesystemTree) -> BTreeMap<String, (EntryKind, Option<String>)> {
    tree.entries()
        .iter()
        .map(|e| (e.path.to_string(), (e.kind, e.content_digest.clone())))
        .collect()
}

#[test]
fn minimal_squashfs_matches_source_directory() {
    let nodes = fx::minimal_rootfs();
    let image = fx::squashfs_image(&nodes, Compression::Gzip);
    let src = tempfile::tempdir().unwrap();
    fx::materialize(src.path(), &nodes).unwrap();

    let fs = extract_squashfs(&image).unwrap();
    fs.tree.validate().unwrap();
    assert_eq!(fs.tree.len(), 4);
    assert_eq!(fs.tree.entries().iter().filter(|e| e.kind == EntryKind::Dir).count(), 2);
    assert_eq!(tree_listing(&fs.tree), oracle_listing(src.path()));

    let busybox = fs.tree.get(b"bin/busybox").unwrap();
    assert_eq!(busybox.mode, 0o755);
    assert_eq!(busybox.size, fx::busybox_binary().len() as u64);
    let body = fs.contents.read(busybox.content_digest.as_deref().unwrap()).unwrap();
    assert_eq!(body, &fx::busybox_binary()[..]);
}

#[test]
fn symlinks_fragments_and_multi_block_files() {
    let mut nodes = fx::router_rootfs();
    nodes.push(Node::file("usr/big.bin", fx::noise(3 * 4096 + 77, 11)));
    nodes.push(Node::file("usr/zeros.bin", vec![0u8; 9000]));
    nodes.push(Node::file("usr/empty", Vec::new()));
    let image = fx::squashfs_image(&nodes, Compression::Gzip);
    let src = tempfile::tempdir().unwrap();
    fx::materialize(src.path(), &nodes).unwrap();

    let fs = extract_squashfs(&image).unwrap();
    fs.tree.validate().unwrap();
    assert_eq!(tree_listing(&fs.tree), oracle_listing(src.path()));
    let link = fs.tree.get(b"usr/sbin/ls").unwrap();
    assert_eq!(link.kind, EntryKind::Symlink);
    assert_eq!(link.link_target.as_ref().unwrap().to_string(), "/bin/busybox");
    assert_eq!(fs.tree.get(b"usr/big.bin").unwrap().size, 3 * 4096 + 77);
}

#[test]
fn xz_squashfs_is_unsupported_compressor() {
    let image = fx::squashfs_image(&fx::minimal_rootfs(), Compression::Xz);
    match extract_squashfs(&image) {
        Err(ExtractError::UnsupportedCompressor(name)) => assert_eq!(name, "xz"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn truncated_squashfs_is_reported() {
    let image = fx::squashfs_image(&fx::minimal_rootfs(), Compression::Gzip);
    let bytes_used = u64::from_le_bytes(image[40..48].try_into().unwrap()) as usize;
    let cut = &image[..bytes_used - 1];
    assert!(matches!(extract_squashfs(cut), Err(ExtractError::TruncatedImage(_))));
}

#[test]
fn uboot_fixture_has_two_hits_at_known_offsets() {
    let rootfs = fx::squashfs_image(&fx::minimal_rootfs(), Compression::Gzip);
    let image = RawFirmware::new("fw.bin", fx::uboot_firmware(&rootfs));
    // independent hex inspection of the fixture
    assert_eq!(&image.bytes()[0..4], &[0x27, 0x05, 0x19, 0x56]);
    assert_eq!(&image.bytes()[0x40000..0x40004], b"hsqs");

    let hits = scan_signatures(&image);
    let got: Vec<_> = hits.iter().map(|h| (h.kind, h.offset)).collect();
    assert_eq!(got, [(SignatureKind::UBootLegacy, 0), (SignatureKind::SquashFS, 0x40000)]);

    let carved = RawFirmware::new("carved", carve_region(&image, 0x40000, None).unwrap().to_vec());
    let hits = scan_signatures(&carved);
    assert_eq!(hits.len(), 1);
    assert_eq!((hits[0].kind, hits[0].offset), (SignatureKind::SquashFS, 0));

    let (fs, hit) = extract_root_filesystem(&image).unwrap();
    assert_eq!(hit.offset, 0x40000);
    assert_eq!(fs.tree.len(), 4);
    assert_eq!(fs.tree.root_label, "squashfs@0x40000");
}

#[test]
fn gzip_wrapped_squashfs_is_rescanned_once() {
    let rootfs = fx::squashfs_image(&fx::minimal_rootfs(), Compression::Gzip);
    let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    enc.write_all(&rootfs).unwrap();
    let mut image = fx::uboot_header(0, "gz").to_vec();
    image.extend(enc.finish().unwrap());
    let image = RawFirmware::new("gz.bin", image);
    let (fs, hit) = extract_root_filesystem(&image).unwrap();
    assert_eq!(hit.kind, SignatureKind::GzipStream);
    assert_eq!(hit.offset, 64);
    assert_eq!(fs.tree.len(), 4);
}

#[test]
fn extraction_is_deterministic() {
    let rootfs = fx::squashfs_image(&fx::router_rootfs(), Compression::Gzip);
    let image = RawFirmware::new("fw", fx::uboot_firmware(&rootfs));
    let (a, ha) = extract_root_filesystem(&image).unwrap();
    let (b, hb) = extract_root_filesystem(&image).unwrap();
    assert_eq!(a.tree, b.tree);
    assert_eq!(ha, hb);
    assert_eq!(scan_signatures(&image), scan_signatures(&image));
}

#[test]
fn tar_of_source_matches_squashfs_tree() {
    let nodes = fx::router_rootfs();
    let src = tempfile::tempdir().unwrap();
    fx::materialize(src.path(), &nodes).unwrap();
    let tar_bytes = fx::tar_directory(src.path()).unwrap();
    let work = tempfile::tempdir().unwrap();
    let tar_path = work.path().join("rootfs.tar");
    fs::write(&tar_path, tar_bytes).unwrap();

    let from_tar = load_tree_from_archive(&tar_path).unwrap();
    let from_sqfs = extract_squashfs(&fx::squashfs_image(&nodes, Compression::Gzip)).unwrap();
    let from_dir = load_tree_from_archive(src.path()).unwrap();
    assert_eq!(from_tar.tree.entries(), from_sqfs.tree.entries());
    assert_eq!(from_dir.tree.entries(), from_sqfs.tree.entries());
}

#[test]
fn cache_round_trip_reloads_identical_tree() {
    let rootfs = fx::squashfs_image(&fx::router_rootfs(), Compression::Gzip);
    let image = RawFirmware::new("fw", fx::uboot_firmware(&rootfs));
    let (fs, hit) = extract_root_filesystem(&image).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = cache::ExtractionManifest::new(image.digest(), "fw", Some(hit), fs.tree.clone());
    let stored = cache::store(dir.path(), &manifest, &fs.contents).unwrap();
    assert!(stored.ends_with(format!("extracted/{}", image.digest())));
    assert!(stored.join("manifest.json").is_file());
    assert!(stored.join("rootfs/bin/busybox").is_file());
    let (_, reloaded) = cache::load(dir.path(), image.digest()).unwrap();
    assert_eq!(reloaded.tree, fs.tree);
    assert!(cache::load(dir.path(), &"0".repeat(64)).is_none());
}

const MAGICS: [(&[u8], SignatureKind); 6] = [
    (b"hsqs", SignatureKind::SquashFS),
    (&[0x45, 0x3D, 0xCD, 0x28], SignatureKind::CramFS),
    (&[0x1F, 0x8B, 0x08, 0x00], SignatureKind::GzipStream),
    (&[0x27, 0x05, 0x19, 0x56], SignatureKind::UBootLegacy),
    (b"HDR0", SignatureKind::TrxHeader),
    (&[0x85, 0x19, 0x02, 0xE0], SignatureKind::JFFS2),
];

proptest! {
    #[test]
    fn planted_magic_is_always_found(which in 0usize..6, slot in 0usize..1000, seed in 1u64..1000) {
        let (magic, kind) = MAGICS[which];
        let mut bytes = fx::noise(4096, seed);
        let at = slot * 4;
        bytes[at..at + magic.len()].copy_from_slice(magic);
        let hits = scan_signatures(&RawFirmware::new("p", bytes));
        prop_assert!(hits.iter().any(|h| h.offset == at && h.kind == kind));
        prop_assert!(hits.windows(2).all(|w| w[0].offset <= w[1].offset));
    }

    #[test]
    fn carve_length_is_difference(len in 0usize..512, a in 0usize..512, b in 0usize..512) {
        let image = RawFirmware::new("c", vec![7u8; len]);
        let (lo, hi) = (a.min(b), a.max(b));
        match carve_region(&image, lo, Some(hi)) {
            Ok(slice) => prop_assert_eq!(slice.len(), hi - lo),
            Err(_) => prop_assert!(hi > len),
        }
    }
}

fn arb_tree() -> impl Strategy<Value = Vec<Node>> {
    let name = "[a-z]{1,6}";
    let file = (name, proptest::collection::vec(any::<u8>(), 0..9000));
    (proptest::collection::vec(name, 0..4), proptest::collection::vec(file, 1..6)).prop_map(|(dirs, files)| {
        let mut nodes = Vec::new();
        let mut dir_paths = vec![String::new()];
        for d in dirs {
            let path = format!("d_{d}");
            if !dir_paths.contains(&path) {
                nodes.push(Node::dir(&path));
                dir_paths.push(path);
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, (name, data)) in files.into_iter().enumerate() {
            let parent = &dir_paths[i % dir_paths.len()];
            let path = if parent.is_empty() { format!("f_{name}") } else { format!("{parent}/f_{name}") };
            if seen.insert(path.clone()) {
                nodes.push(Node::file(&path, data));
            }
        }
        nodes
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn packed_directories_round_trip(nodes in arb_tree()) {
        let image = fx::squashfs_image(&nodes, Compression::Gzip);
        let src = tempfile::tempdir().unwrap();
        fx::materialize(src.path(), &nodes).unwrap();
        let fs = extract_squashfs(&image).unwrap();
        fs.tree.validate().unwrap();
        prop_assert_eq!(tree_listing(&fs.tree), oracle_listing(src.path()));
    }
}
