//! Read-only SquashFS 4.0 reader (little-endian, zlib-compressed).
//!
//! Layout reference: superblock, data blocks and fragments, inode table,
//! directory table, fragment table, export table, id table, xattr table.
//! Only the structures needed to rebuild paths, metadata and file contents
//! are decoded.

use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::rc::Rc;

use flate2::read::ZlibDecoder;

use super::signature::compressor_name;
use super::tree::{ByteString, ContentStore, FsEntry, RootFs, TreeBuilder};
use super::ExtractError;

const SUPERBLOCK_LEN: usize = 96;
const METADATA_MAX: usize = 8192;
const NO_FRAGMENT: u32 = 0xFFFF_FFFF;
const DATA_UNCOMPRESSED: u32 = 1 << 24;
const MAX_DEPTH: usize = 256;

/// Upper bound on inflated bytes for one extraction.
pub const INFLATE_LIMIT: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone, Copy)]
struct SuperBlock {
    block_size: u32,
    fragment_count: u32,
    root_inode: u64,
    bytes_used: u64,
    inode_table: u64,
    directory_table: u64,
    fragment_table: u64,
}

fn le16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn le64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn corrupt(msg: impl Into<String>) -> ExtractError {
    ExtractError::CorruptMetadata(msg.into())
}

impl SuperBlock {
    fn parse(blob: &[u8]) -> Result<Self, ExtractError> {
        if blob.len() < 4 || &blob[..4] != b"hsqs" {
            return Err(ExtractError::CorruptSuperblock("bad magic".into()));
        }
        if blob.len() < SUPERBLOCK_LEN {
            return Err(ExtractError::TruncatedImage("superblock".into()));
        }
        let (major, minor) = (le16(blob, 28), le16(blob, 30));
        if (major, minor) != (4, 0) {
            return Err(ExtractError::CorruptSuperblock(format!("unsupported version {major}.{minor}")));
        }
        let compressor = le16(blob, 20);
        if compressor != 1 {
            return Err(ExtractError::UnsupportedCompressor(compressor_name(compressor)));
        }
        let block_size = le32(blob, 12);
        let block_log = le16(blob, 22);
        if !block_size.is_power_of_two()
            || !(4096..=1 << 20).contains(&block_size)
            || u32::from(block_log) != block_size.trailing_zeros()
        {
            return Err(ExtractError::CorruptSuperblock(format!("bad block size {block_size}")));
        }
        let sb = SuperBlock {
            block_size,
            fragment_count: le32(blob, 16),
            root_inode: le64(blob, 32),
            bytes_used: le64(blob, 40),
            inode_table: le64(blob, 64),
            directory_table: le64(blob, 72),
            fragment_table: le64(blob, 80),
        };
        if sb.bytes_used > blob.len() as u64 {
            return Err(ExtractError::TruncatedImage(format!(
                "image declares {} bytes, {} available",
                sb.bytes_used,
                blob.len()
            )));
        }
        if sb.inode_table >= sb.bytes_used || sb.directory_table >= sb.bytes_used {
            return Err(ExtractError::TruncatedImage("table offsets beyond image".into()));
        }
        Ok(sb)
    }
}

struct Block {
    data: Vec<u8>,
    next: u64,
}

/// Position inside a metadata stream: absolute block start plus offset into
/// the decompressed block.
#[derive(Debug, Clone, Copy)]
struct MetaPos {
    block: u64,
    offset: usize,
}

struct Reader<'a> {
    blob: &'a [u8],
    sb: SuperBlock,
    meta_cache: RefCell<HashMap<u64, Rc<Block>>>,
    fragment_cache: RefCell<HashMap<u64, Rc<Vec<u8>>>>,
    inflated: Cell<u64>,
}

impl<'a> Reader<'a> {
    fn slice(&self, start: u64, len: u64, what: &str) -> Result<&'a [u8], ExtractError> {
        let end = start.checked_add(len).ok_or_else(|| ExtractError::TruncatedImage(what.into()))?;
        if end > self.blob.len() as u64 {
            return Err(ExtractError::TruncatedImage(format!("{what} at {start:#x}+{len}")));
        }
        Ok(&self.blob[start as usize..end as usize])
    }

    fn charge(&self, bytes: usize) -> Result<(), ExtractError> {
        let total = self.inflated.get() + bytes as u64;
        if total > INFLATE_LIMIT {
            return Err(ExtractError::InflateLimit(INFLATE_LIMIT));
        }
        self.inflated.set(total);
        Ok(())
    }

    fn inflate(&self, data: &[u8], max: usize) -> Result<Vec<u8>, ExtractError> {
        let mut out = Vec::new();
        ZlibDecoder::new(data)
            .take(max as u64 + 1)
            .read_to_end(&mut out)
            .map_err(|e| corrupt(format!("zlib: {e}")))?;
        if out.len() > max {
            return Err(corrupt("block inflates past its maximum size"));
        }
        self.charge(out.len())?;
        Ok(out)
    }

    fn meta_block(&self, at: u64) -> Result<Rc<Block>, ExtractError> {
        if let Some(block) = self.meta_cache.borrow().get(&at) {
            return Ok(block.clone());
        }
        let header = le16(self.slice(at, 2, "metadata header")?, 0);
        let size = usize::from(header & 0x7FFF);
        let raw = self.slice(at + 2, size as u64, "metadata block")?;
        let data = if header & 0x8000 != 0 {
            self.charge(raw.len())?;
            raw.to_vec()
        } else {
            self.inflate(raw, METADATA_MAX)?
        };
        if data.is_empty() {
            return Err(corrupt(format!("empty metadata block at {at:#x}")));
        }
        let block = Rc::new(Block { data, next: at + 2 + size as u64 });
        self.meta_cache.borrow_mut().insert(at, block.clone());
        Ok(block)
    }

    fn meta_read(&self, pos: &mut MetaPos, len: usize) -> Result<Vec<u8>, ExtractError> {
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            let block = self.meta_block(pos.block)?;
            if pos.offset >= block.data.len() {
                pos.offset -= block.data.len();
                pos.block = block.next;
                continue;
            }
            let take = (len - out.len()).min(block.data.len() - pos.offset);
            out.extend_from_slice(&block.data[pos.offset..pos.offset + take]);
            pos.offset += take;
        }
        Ok(out)
    }

    fn meta_u16(&self, pos: &mut MetaPos) -> Result<u16, ExtractError> {
        Ok(le16(&self.meta_read(pos, 2)?, 0))
    }

    fn meta_u32(&self, pos: &mut MetaPos) -> Result<u32, ExtractError> {
        Ok(le32(&self.meta_read(pos, 4)?, 0))
    }

    fn meta_u64(&self, pos: &mut MetaPos) -> Result<u64, ExtractError> {
        Ok(le64(&self.meta_read(pos, 8)?, 0))
    }

    fn inode_pos(&self, inode_ref: u64) -> MetaPos {
        MetaPos { block: self.sb.inode_table + (inode_ref >> 16), offset: (inode_ref & 0xFFFF) as usize }
    }

    fn read_inode(&self, inode_ref: u64) -> Result<Inode, ExtractError> {
        let mut pos = self.inode_pos(inode_ref);
        let kind = self.meta_u16(&mut pos)?;
        let permissions = self.meta_u16(&mut pos)? & 0o7777;
        // uid index, gid index, mtime, inode number
        self.meta_read(&mut pos, 12)?;
        let body = match kind {
            1 => {
                let block_index = self.meta_u32(&mut pos)?;
                let _links = self.meta_u32(&mut pos)?;
                let file_size = u32::from(self.meta_u16(&mut pos)?);
                let block_offset = self.meta_u16(&mut pos)?;
                InodeBody::Dir { block_index, block_offset, file_size }
            }
            8 => {
                let _links = self.meta_u32(&mut pos)?;
                let file_size = self.meta_u32(&mut pos)?;
                let block_index = self.meta_u32(&mut pos)?;
                let _parent = self.meta_u32(&mut pos)?;
                let _index_count = self.meta_u16(&mut pos)?;
                let block_offset = self.meta_u16(&mut pos)?;
                InodeBody::Dir { block_index, block_offset, file_size }
            }
            2 | 9 => {
                let (blocks_start, fragment, fragment_offset, file_size) = if kind == 2 {
                    let start = u64::from(self.meta_u32(&mut pos)?);
                    let frag = self.meta_u32(&mut pos)?;
                    let frag_off = self.meta_u32(&mut pos)?;
                    let size = u64::from(self.meta_u32(&mut pos)?);
                    (start, frag, frag_off, size)
                } else {
                    let start = self.meta_u64(&mut pos)?;
                    let size = self.meta_u64(&mut pos)?;
                    let _sparse = self.meta_u64(&mut pos)?;
                    let _links = self.meta_u32(&mut pos)?;
                    let frag = self.meta_u32(&mut pos)?;
                    let frag_off = self.meta_u32(&mut pos)?;
                    let _xattr = self.meta_u32(&mut pos)?;
                    (start, frag, frag_off, size)
                };
                if file_size > INFLATE_LIMIT {
                    return Err(ExtractError::InflateLimit(INFLATE_LIMIT));
                }
                let block_size = u64::from(self.sb.block_size);
                let count = if fragment == NO_FRAGMENT {
                    file_size.div_ceil(block_size)
                } else {
                    file_size / block_size
                };
                let raw = self.meta_read(&mut pos, count as usize * 4)?;
                let block_sizes = raw.chunks_exact(4).map(|c| le32(c, 0)).collect();
                InodeBody::File { blocks_start, block_sizes, fragment, fragment_offset, file_size }
            }
            3 | 10 => {
                let _links = self.meta_u32(&mut pos)?;
                let target_len = self.meta_u32(&mut pos)?;
                if target_len > 65_536 {
                    return Err(corrupt("symlink target too long"));
                }
                let target = self.meta_read(&mut pos, target_len as usize)?;
                InodeBody::Symlink { target }
            }
            4..=7 | 11..=14 => InodeBody::Special,
            other => return Err(corrupt(format!("unknown inode type {other}"))),
        };
        Ok(Inode { permissions, body })
    }

    fn read_dir(&self, block_index: u32, block_offset: u16, file_size: u32) -> Result<Vec<DirEntry>, ExtractError> {
        let mut entries = Vec::new();
        // listing size carries three extra bytes for the implicit . and ..
        let total = file_size.saturating_sub(3) as usize;
        let mut pos = MetaPos {
            block: self.sb.directory_table + u64::from(block_index),
            offset: usize::from(block_offset),
        };
        let mut consumed = 0usize;
        while consumed < total {
            let count = self.meta_u32(&mut pos)? as usize + 1;
            let start = self.meta_u32(&mut pos)?;
            let _inode_base = self.meta_u32(&mut pos)?;
            consumed += 12;
            if count > 256 {
                return Err(corrupt("directory header count exceeds 256"));
            }
            for _ in 0..count {
                let offset = self.meta_u16(&mut pos)?;
                let _inode_delta = self.meta_u16(&mut pos)?;
                let _kind = self.meta_u16(&mut pos)?;
                let name_len = usize::from(self.meta_u16(&mut pos)?) + 1;
                let name = self.meta_read(&mut pos, name_len)?;
                consumed += 8 + name_len;
                if name.contains(&b'/') || name == b"." || name == b".." {
                    return Err(corrupt(format!("invalid entry name {:?}", String::from_utf8_lossy(&name))));
                }
                entries.push(DirEntry { name, inode_ref: (u64::from(start) << 16) | u64::from(offset) });
            }
        }
        Ok(entries)
    }

    fn fragment_block(&self, index: u32) -> Result<Rc<Vec<u8>>, ExtractError> {
        if index >= self.sb.fragment_count {
            return Err(corrupt(format!("fragment index {index} out of range")));
        }
        let pointer_at = self.sb.fragment_table + u64::from(index / 512) * 8;
        let table_block = le64(self.slice(pointer_at, 8, "fragment index")?, 0);
        let mut pos = MetaPos { block: table_block, offset: (index % 512) as usize * 16 };
        let start = self.meta_u64(&mut pos)?;
        let size = self.meta_u32(&mut pos)?;
        if let Some(cached) = self.fragment_cache.borrow().get(&start) {
            return Ok(cached.clone());
        }
        let data = self.data_block(start, size)?;
        let data = Rc::new(data);
        self.fragment_cache.borrow_mut().insert(start, data.clone());
        Ok(data)
    }

    fn data_block(&self, start: u64, size_word: u32) -> Result<Vec<u8>, ExtractError> {
        let on_disk = u64::from(size_word & 0x00FF_FFFF);
        let raw = self.slice(start, on_disk, "data block")?;
        if size_word & DATA_UNCOMPRESSED != 0 {
            self.charge(raw.len())?;
            Ok(raw.to_vec())
        } else {
            self.inflate(raw, self.sb.block_size as usize)
        }
    }

    fn read_file(
        &self,
        blocks_start: u64,
        block_sizes: &[u32],
        fragment: u32,
        fragment_offset: u32,
        file_size: u64,
    ) -> Result<Vec<u8>, ExtractError> {
        let block_size = u64::from(self.sb.block_size);
        let mut out = Vec::with_capacity(file_size as usize);
        let mut at = blocks_start;
        for &word in block_sizes {
            let expected = (file_size - out.len() as u64).min(block_size) as usize;
            if word & 0x00FF_FFFF == 0 {
                self.charge(expected)?;
                out.resize(out.len() + expected, 0);
                continue;
            }
            let data = self.data_block(at, word)?;
            at += u64::from(word & 0x00FF_FFFF);
            if data.len() < expected {
                return Err(corrupt("short data block"));
            }
            out.extend_from_slice(&data[..expected]);
        }
        if fragment != NO_FRAGMENT {
            let remaining = (file_size - out.len() as u64) as usize;
            let frag = self.fragment_block(fragment)?;
            let begin = fragment_offset as usize;
            let tail = frag
                .get(begin..begin + remaining)
                .ok_or_else(|| corrupt("fragment tail out of range"))?;
            out.extend_from_slice(tail);
        }
        if out.len() as u64 != file_size {
            return Err(corrupt(format!("file size mismatch: {} != {file_size}", out.len())));
        }
        Ok(out)
    }
}

struct Inode {
    permissions: u16,
    body: InodeBody,
}

enum InodeBody {
    Dir { block_index: u32, block_offset: u16, file_size: u32 },
    File { blocks_start: u64, block_sizes: Vec<u32>, fragment: u32, fragment_offset: u32, file_size: u64 },
    Symlink { target: Vec<u8> },
    Special,
}

struct DirEntry {
    name: Vec<u8>,
    inode_ref: u64,
}

/// Extracts every directory, regular file and symlink reachable from the
/// root inode. Device nodes, FIFOs and sockets are skipped.
pub fn extract_squashfs(blob: &[u8]) -> Result<RootFs, ExtractError> {
    let sb = SuperBlock::parse(blob)?;
    let reader = Reader {
        blob,
        sb,
        meta_cache: RefCell::new(HashMap::new()),
        fragment_cache: RefCell::new(HashMap::new()),
        inflated: Cell::new(0),
    };
    let mut builder = TreeBuilder::new();
    let mut contents = ContentStore::new();
    let mut visited = HashSet::new();

    let root = reader.read_inode(sb.root_inode)?;
    let InodeBody::Dir { block_index, block_offset, file_size } = root.body else {
        return Err(corrupt("root inode is not a directory"));
    };
    visited.insert(sb.root_inode);
    let mut stack = vec![(Vec::<u8>::new(), block_index, block_offset, file_size, 0usize)];

    while let Some((prefix, block_index, block_offset, file_size, depth)) = stack.pop() {
        if depth > MAX_DEPTH {
            return Err(corrupt("directory nesting too deep"));
        }
        for entry in reader.read_dir(block_index, block_offset, file_size)? {
            let mut path = prefix.clone();
            if !path.is_empty() {
                path.push(b'/');
            }
            path.extend_from_slice(&entry.name);
            let inode = reader.read_inode(entry.inode_ref)?;
            match inode.body {
                InodeBody::Dir { block_index, block_offset, file_size } => {
                    if !visited.insert(entry.inode_ref) {
                        return Err(corrupt("directory cycle"));
                    }
                    builder.insert(FsEntry::dir(ByteString::new(path.clone()), inode.permissions));
                    stack.push((path, block_index, block_offset, file_size, depth + 1));
                }
                InodeBody::File { blocks_start, block_sizes, fragment, fragment_offset, file_size } => {
                    let data = reader.read_file(blocks_start, &block_sizes, fragment, fragment_offset, file_size)?;
                    let digest = contents.insert(data);
                    builder.insert(FsEntry::file(ByteString::new(path), inode.permissions, file_size, digest));
                }
                InodeBody::Symlink { target } => {
                    builder.insert(FsEntry::symlink(ByteString::new(path), inode.permissions, ByteString::new(target)));
                }
                InodeBody::Special => {}
            }
        }
    }
    Ok(RootFs { tree: builder.finish("squashfs"), contents })
}
