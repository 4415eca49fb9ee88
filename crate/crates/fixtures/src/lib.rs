//! Fixture builders shared by the test suites.
//!
//! SquashFS images are produced with `backhand`, an independent packer, so the
//! extractor under test never validates its own output.

use std::fs;
use std::io::{self, Cursor};
use std::os::unix::fs::{symlink, PermissionsExt};
use std::path::{Path, PathBuf};

use backhand::compression::Compressor;
use backhand::{FilesystemCompressor, FilesystemWriter, NodeHeader};

/// Offset at which [`uboot_firmware`] places the filesystem.
pub const ROOTFS_OFFSET: usize = 0x40000;

/// NVD API 2.0 document holding the four BusyBox 1.33.2 CVEs.
pub const NVD_BUSYBOX_FEED: &str = include_str!("../data/nvd_busybox.json");

/// One node in a fixture root filesystem.
#[derive(Debug, Clone)]
pub enum Node {
    Dir { path: String, mode: u16 },
    File { path: String, data: Vec<u8>, mode: u16 },
    Symlink { path: String, target: String },
}

impl Node {
    pub fn dir(path: &str) -> Self {
        Node::Dir { path: path.into(), mode: 0o755 }
    }

    pub fn file(path: &str, data: impl Into<Vec<u8>>) -> Self {
        Node::File { path: path.into(), data: data.into(), mode: 0o644 }
    }

    pub fn exec(path: &str, data: impl Into<Vec<u8>>) -> Self {
        Node::File { path: path.into(), data: data.into(), mode: 0o755 }
    }

    pub fn symlink(path: &str, target: &str) -> Self {
        Node::Symlink { path: path.into(), target: target.into() }
    }

    pub fn path(&self) -> &str {
        match self {
            Node::Dir { path, .. } | Node::File { path, .. } | Node::Symlink { path, .. } => path,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compression {
    Gzip,
    Xz,
}

/// Fake BusyBox executable: ELF-ish preamble, the version banner and some filler.
pub fn busybox_binary() -> Vec<u8> {
    let mut data = b"\x7fELF\x01\x01\x01\0\0\0\0\0\0\0\0\0".to_vec();
    data.extend_from_slice(&[0u8; 48]);
    data.extend_from_slice(b"BusyBox v1.33.2 (2021-06-30 12:00:00 UTC) multi-call binary.\0");
    data.extend_from_slice(&[0xAAu8; 300]);
    data.extend_from_slice(b"\0Usage: busybox [function [arguments]...]\0");
    data
}

/// The minimal tree: `/etc/os-release` and `/bin/busybox`.
pub fn minimal_rootfs() -> Vec<Node> {
    vec![
        Node::dir("bin"),
        Node::dir("etc"),
        Node::exec("bin/busybox", busybox_binary()),
        Node::file(
            "etc/os-release",
            "NAME=\"OpenWrt\"\nVERSION=\"21.02.0\"\nID=\"openwrt\"\n",
        ),
    ]
}

/// Router-like tree with BusyBox and OpenSSL 0.9.3 discoverable by heuristics.
pub fn router_rootfs() -> Vec<Node> {
    let mut nodes = minimal_rootfs();
    nodes.extend([
        Node::dir("lib"),
        Node::dir("usr"),
        Node::dir("usr/sbin"),
        Node::file("lib/libcrypto.so.0.9.3", b"\x7fELF\x01\x01\x01\0libcrypto\0".to_vec()),
        Node::symlink("lib/libcrypto.so", "libcrypto.so.0.9.3"),
        Node::symlink("usr/sbin/ls", "/bin/busybox"),
        Node::file("etc/banner", vec![b'='; 5000]),
    ]);
    nodes
}

/// Packs `nodes` into a little-endian SquashFS v4 image.
pub fn squashfs_image(nodes: &[Node], compression: Compression) -> Vec<u8> {
    let mut writer = FilesystemWriter::default();
    writer.set_time(1_600_000_000);
    writer.set_block_size(4096);
    let compressor = match compression {
        Compression::Gzip => Compressor::Gzip,
        Compression::Xz => Compressor::Xz,
    };
    writer.set_compressor(FilesystemCompressor::new(compressor, None).expect("compressor"));
    writer.set_root_mode(0o755);
    for node in nodes {
        match node {
            Node::Dir { path, mode } => writer
                .push_dir(path, NodeHeader::new(*mode, 0, 0, 0))
                .expect("push dir"),
            Node::File { path, data, mode } => writer
                .push_file(Cursor::new(data.clone()), path, NodeHeader::new(*mode, 0, 0, 0))
                .expect("push file"),
            Node::Symlink { path, target } => writer
                .push_symlink(target.as_str(), path, NodeHeader::new(0o777, 0, 0, 0))
                .expect("push symlink"),
        }
    }
    let mut out = Cursor::new(Vec::new());
    writer.write(&mut out).expect("write squashfs");
    out.into_inner()
}

/// 64-byte legacy U-Boot header (big-endian fields, CRCs left zero).
pub fn uboot_header(payload_len: u32, name: &str) -> [u8; 64] {
    let mut header = [0u8; 64];
    header[0..4].copy_from_slice(&0x2705_1956u32.to_be_bytes());
    header[8..12].copy_from_slice(&1_600_000_000u32.to_be_bytes());
    header[12..16].copy_from_slice(&payload_len.to_be_bytes());
    header[16..20].copy_from_slice(&0x8000_0000u32.to_be_bytes());
    header[20..24].copy_from_slice(&0x8000_0000u32.to_be_bytes());
    header[28] = 5; // linux
    header[29] = 5; // mips
    header[30] = 2; // kernel
    let name = name.as_bytes();
    let len = name.len().min(32);
    header[32..32 + len].copy_from_slice(&name[..len]);
    header
}

/// U-Boot header at offset 0 followed by `rootfs` at [`ROOTFS_OFFSET`].
pub fn uboot_firmware(rootfs: &[u8]) -> Vec<u8> {
    let mut image = vec![0u8; ROOTFS_OFFSET];
    image[..64].copy_from_slice(&uboot_header(rootfs.len() as u32, "fixture kernel"));
    image.extend_from_slice(rootfs);
    image
}

/// Image carrying a single JFFS2 node header and nothing else recognisable.
pub fn jffs2_only_image() -> Vec<u8> {
    let mut image = vec![0u8; 1024];
    // magic 0x1985 LE, nodetype 0xE001 (dirent) LE, totlen
    image[256..258].copy_from_slice(&0x1985u16.to_le_bytes());
    image[258..260].copy_from_slice(&0xE001u16.to_le_bytes());
    image[260..264].copy_from_slice(&64u32.to_le_bytes());
    image
}

/// Deterministic pseudo-random bytes (xorshift64*), free of any embedded magic
/// for the seeds used in tests.
pub fn noise(len: usize, seed: u64) -> Vec<u8> {
    let mut state = seed.max(1);
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        let v = state.wrapping_mul(0x2545_F491_4F6C_DD1D);
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.truncate(len);
    out
}

/// Writes `nodes` below `root` as a real directory tree.
pub fn materialize(root: &Path, nodes: &[Node]) -> io::Result<()> {
    fs::create_dir_all(root)?;
    for node in nodes {
        let dest = root.join(node.path());
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent)?;
        }
        match node {
            Node::Dir { mode, .. } => {
                fs::create_dir_all(&dest)?;
                fs::set_permissions(&dest, fs::Permissions::from_mode(u32::from(*mode)))?;
            }
            Node::File { data, mode, .. } => {
                fs::write(&dest, data)?;
                fs::set_permissions(&dest, fs::Permissions::from_mode(u32::from(*mode)))?;
            }
            Node::Symlink { target, .. } => symlink(target, &dest)?,
        }
    }
    Ok(())
}

/// Packs the directory at `root` into a POSIX tar archive.
pub fn tar_directory(root: &Path) -> io::Result<Vec<u8>> {
    let mut builder = tar::Builder::new(Vec::new());
    builder.follow_symlinks(false);
    builder.append_dir_all(".", root)?;
    builder.into_inner()
}

/// Path of the fixture NVD feed on disk.
pub fn nvd_busybox_feed_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/nvd_busybox.json")
}

/// Tree whose only inventory source is an opkg status file.
pub fn opkg_rootfs() -> Vec<Node> {
    let status = "Package: busybox\nVersion: 1.36.0-1\nStatus: install ok installed\nArchitecture: mipsel_24kc\n\n\
                  Package: dnsmasq\nVersion: 2.80-1\nStatus: install ok installed\nArchitecture: mipsel_24kc\n";
    vec![
        Node::dir("etc"),
        Node::dir("usr"),
        Node::dir("usr/lib"),
        Node::dir("usr/lib/opkg"),
        Node::file("usr/lib/opkg/status", status),
        Node::file("etc/hostname", "gateway\n"),
    ]
}

/// Three distinct firmware images for corpus runs, keyed by file name.
pub fn corpus_images() -> Vec<(&'static str, Vec<u8>)> {
    vec![
        ("gateway-a.bin", uboot_firmware(&squashfs_image(&router_rootfs(), Compression::Gzip))),
        ("gateway-b.bin", squashfs_image(&minimal_rootfs(), Compression::Gzip)),
        ("gateway-c.bin", uboot_firmware(&squashfs_image(&opkg_rootfs(), Compression::Gzip))),
    ]
}

/// Writes the corpus images and the fixture feed below `dir`; returns the feed path.
pub fn write_corpus(dir: &Path) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    for (name, bytes) in corpus_images() {
        fs::write(dir.join(name), bytes)?;
    }
    let feed = dir.with_extension("feed.json");
    fs::write(&feed, NVD_BUSYBOX_FEED)?;
    Ok(feed)
}
