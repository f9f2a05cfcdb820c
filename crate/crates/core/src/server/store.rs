// Copyright 2026 The BuffetFS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Directory-backed persistence. Every file id is one host file named by
//! its hex id; directories hold their encoded listing. The inode and
//! permission blobs live in extended attributes next to the data.

use std::fs::{self, File, OpenOptions};
use std::io;
use std::os::unix::fs::{FileExt, MetadataExt};
use std::path::{Path, PathBuf};

use crate::types::{
    decode_inode, decode_perm, encode_inode, encode_perm, DirEntryRecord, FileMetadata,
};
use crate::wire::{decode_entries, encode_entries};

pub const XATTR_INODE: &str = "user.buffetfs.inode";
pub const XATTR_PERM: &str = "user.buffetfs.perm";
pub const XATTR_PARENT: &str = "user.buffetfs.parent";

pub(crate) enum StoredBody {
    File(Vec<u8>),
    Dir(Vec<DirEntryRecord>),
}

pub(crate) struct StoredNode {
    pub meta: FileMetadata,
    pub parent: Option<u64>,
    pub body: StoredBody,
}

#[derive(Debug)]
pub struct DiskStore {
    root: PathBuf,
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

impl DiskStore {
    pub fn open(root: impl AsRef<Path>) -> io::Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, file_id: u64) -> PathBuf {
        self.root.join(format!("{file_id:016x}"))
    }

    fn file(&self, file_id: u64) -> io::Result<File> {
        OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(self.path_of(file_id))
    }

    pub fn put_meta(&self, meta: &FileMetadata, parent: Option<u64>) -> io::Result<()> {
        let path = self.path_of(meta.inode.file_id);
        self.file(meta.inode.file_id)?;
        xattr::set(&path, XATTR_INODE, &encode_inode(&meta.inode))?;
        xattr::set(&path, XATTR_PERM, &encode_perm(&meta.perm))?;
        match parent {
            Some(p) => xattr::set(&path, XATTR_PARENT, &p.to_le_bytes())?,
            None => {
                if xattr::get(&path, XATTR_PARENT)?.is_some() {
                    xattr::remove(&path, XATTR_PARENT)?;
                }
            }
        }
        Ok(())
    }

    pub fn put_listing(&self, dir: u64, entries: &[DirEntryRecord]) -> io::Result<()> {
        let raw = encode_entries(entries).map_err(|e| invalid(e.to_string()))?;
        let f = self.file(dir)?;
        f.set_len(0)?;
        f.write_all_at(&raw, 0)
    }

    pub fn write_at(&self, file_id: u64, offset: u64, data: &[u8]) -> io::Result<()> {
        self.file(file_id)?.write_all_at(data, offset)
    }

    pub fn truncate(&self, file_id: u64, len: u64) -> io::Result<()> {
        self.file(file_id)?.set_len(len)
    }

    pub(crate) fn load(&self) -> io::Result<Vec<StoredNode>> {
        let mut out = Vec::new();
        for dent in fs::read_dir(&self.root)? {
            let path = dent?.path();
            let Some(inode_raw) = xattr::get(&path, XATTR_INODE)? else {
                continue;
            };
            let inode = decode_inode(&inode_raw).map_err(|e| invalid(e.to_string()))?;
            let perm_raw = xattr::get(&path, XATTR_PERM)?
                .ok_or_else(|| invalid(format!("{} has no permission record", path.display())))?;
            let perm = decode_perm(&perm_raw).map_err(|e| invalid(e.to_string()))?;
            let parent = match xattr::get(&path, XATTR_PARENT)? {
                Some(raw) => Some(u64::from_le_bytes(
                    raw.as_slice()
                        .try_into()
                        .map_err(|_| invalid("parent attribute is not 8 bytes"))?,
                )),
                None => None,
            };
            let raw = fs::read(&path)?;
            let md = fs::metadata(&path)?;
            let ns = |s: i64, n: i64| (s.max(0) as u64) * 1_000_000_000 + n.max(0) as u64;
            let body = if perm.is_dir() {
                StoredBody::Dir(decode_entries(&raw).map_err(|e| invalid(e.to_string()))?)
            } else {
                StoredBody::File(raw)
            };
            out.push(StoredNode {
                meta: FileMetadata {
                    inode,
                    perm,
                    size: md.len(),
                    atime: ns(md.atime(), md.atime_nsec()),
                    mtime: ns(md.mtime(), md.mtime_nsec()),
                    ctime: ns(md.ctime(), md.ctime_nsec()),
                },
                parent,
                body,
            });
        }
        out.sort_by_key(|n| n.meta.inode.file_id);
        Ok(out)
    }
}
