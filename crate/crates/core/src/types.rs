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

//! Identity, permission and metadata types shared by agents and servers,
//! together with the local permission predicate and the fixed-size codecs
//! used both on the wire and in persisted extended attributes.

use std::collections::BTreeMap;
use std::fmt;

use bitflags::bitflags;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// File type bits carried in the high part of [`PermissionRecord::mode`].
pub const S_IFMT: u16 = 0o170000;
pub const S_IFDIR: u16 = 0o040000;
pub const S_IFREG: u16 = 0o100000;
/// rwxrwxrwx
pub const PERM_BITS: u16 = 0o777;

pub const PERM_BLOB_LEN: usize = 10;
pub const INODE_BLOB_LEN: usize = 16;

/// File id reserved for the root directory of every server.
pub const ROOT_FILE_ID: u64 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },
}

/// Global file identity: which server holds the data, the file's id on that
/// server, and the server incarnation the id was issued under.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct BuffetInode {
    pub host_id: u32,
    pub file_id: u64,
    pub version: u32,
}

impl BuffetInode {
    pub const fn new(host_id: u32, version: u32, file_id: u64) -> Self {
        Self {
            host_id,
            file_id,
            version,
        }
    }

    pub const fn root(host_id: u32, version: u32) -> Self {
        Self::new(host_id, version, ROOT_FILE_ID)
    }

    pub fn is_root(&self) -> bool {
        self.file_id == ROOT_FILE_ID
    }
}

impl fmt::Display for BuffetInode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.host_id, self.version, self.file_id)
    }
}

/// Layout: host_id(4) ‖ version(4) ‖ file_id(8), little-endian.
pub fn encode_inode(inode: &BuffetInode) -> [u8; INODE_BLOB_LEN] {
    let mut out = [0u8; INODE_BLOB_LEN];
    out[0..4].copy_from_slice(&inode.host_id.to_le_bytes());
    out[4..8].copy_from_slice(&inode.version.to_le_bytes());
    out[8..16].copy_from_slice(&inode.file_id.to_le_bytes());
    out
}

pub fn decode_inode(blob: &[u8]) -> Result<BuffetInode, CodecError> {
    if blob.len() != INODE_BLOB_LEN {
        return Err(CodecError::Length {
            expected: INODE_BLOB_LEN,
            actual: blob.len(),
        });
    }
    Ok(BuffetInode {
        host_id: u32::from_le_bytes(blob[0..4].try_into().unwrap()),
        version: u32::from_le_bytes(blob[4..8].try_into().unwrap()),
        file_id: u64::from_le_bytes(blob[8..16].try_into().unwrap()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FileKind {
    Regular,
    Directory,
}

/// Owner, group and mode of one file. This is the unit a client checks
/// locally; every directory entry carries one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PermissionRecord {
    pub uid: u32,
    pub gid: u32,
    pub mode: u16,
}

impl PermissionRecord {
    pub fn file(uid: u32, gid: u32, perm_bits: u16) -> Self {
        Self {
            uid,
            gid,
            mode: S_IFREG | (perm_bits & PERM_BITS),
        }
    }

    pub fn dir(uid: u32, gid: u32, perm_bits: u16) -> Self {
        Self {
            uid,
            gid,
            mode: S_IFDIR | (perm_bits & PERM_BITS),
        }
    }

    pub fn kind(&self) -> Option<FileKind> {
        match self.mode & S_IFMT {
            S_IFREG => Some(FileKind::Regular),
            S_IFDIR => Some(FileKind::Directory),
            _ => None,
        }
    }

    pub fn is_dir(&self) -> bool {
        self.kind() == Some(FileKind::Directory)
    }

    pub fn perm_bits(&self) -> u16 {
        self.mode & PERM_BITS
    }

    /// Same owner and type, new rwx bits.
    pub fn with_perm_bits(&self, perm_bits: u16) -> Self {
        Self {
            mode: (self.mode & !PERM_BITS) | (perm_bits & PERM_BITS),
            ..*self
        }
    }
}

/// Layout: uid(4) ‖ gid(4) ‖ mode(2), little-endian.
pub fn encode_perm(perm: &PermissionRecord) -> [u8; PERM_BLOB_LEN] {
    let mut out = [0u8; PERM_BLOB_LEN];
    out[0..4].copy_from_slice(&perm.uid.to_le_bytes());
    out[4..8].copy_from_slice(&perm.gid.to_le_bytes());
    out[8..10].copy_from_slice(&perm.mode.to_le_bytes());
    out
}

pub fn decode_perm(blob: &[u8]) -> Result<PermissionRecord, CodecError> {
    if blob.len() != PERM_BLOB_LEN {
        return Err(CodecError::Length {
            expected: PERM_BLOB_LEN,
            actual: blob.len(),
        });
    }
    Ok(PermissionRecord {
        uid: u32::from_le_bytes(blob[0..4].try_into().unwrap()),
        gid: u32::from_le_bytes(blob[4..8].try_into().unwrap()),
        mode: u16::from_le_bytes(blob[8..10].try_into().unwrap()),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("empty name")]
    Empty,
    #[error("name {0:?} is reserved")]
    Reserved(String),
    #[error("name {0:?} contains '/'")]
    Slash(String),
    #[error("name is {0} bytes, limit is 65535")]
    TooLong(usize),
    #[error("entry {name:?}: mode type bits do not match the inode kind")]
    KindMismatch { name: String },
}

pub fn validate_name(name: &str) -> Result<(), NameError> {
    if name.is_empty() {
        return Err(NameError::Empty);
    }
    if name == "." || name == ".." {
        return Err(NameError::Reserved(name.to_string()));
    }
    if name.contains('/') {
        return Err(NameError::Slash(name.to_string()));
    }
    if name.len() > u16::MAX as usize {
        return Err(NameError::TooLong(name.len()));
    }
    Ok(())
}

/// One child of a directory as replicated to clients: the name, where the
/// child lives, and its permissions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DirEntryRecord {
    pub name: String,
    pub inode: BuffetInode,
    pub perm: PermissionRecord,
}

impl DirEntryRecord {
    pub fn new(name: impl Into<String>, inode: BuffetInode, perm: PermissionRecord) -> Self {
        Self {
            name: name.into(),
            inode,
            perm,
        }
    }

    pub fn validate(&self) -> Result<(), NameError> {
        validate_name(&self.name)?;
        if self.perm.kind().is_none() {
            return Err(NameError::KindMismatch {
                name: self.name.clone(),
            });
        }
        Ok(())
    }

    pub fn is_dir(&self) -> bool {
        self.perm.is_dir()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Credentials {
    pub uid: u32,
    pub gid: u32,
}

impl Credentials {
    pub const fn new(uid: u32, gid: u32) -> Self {
        Self { uid, gid }
    }
}

bitflags! {
    /// Requested access; bit values line up with one rwx class.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
    pub struct AccessMask: u8 {
        const READ = 0b100;
        const WRITE = 0b010;
        const EXEC = 0b001;
    }
}

/// Owner class if the uid matches, else group class if the gid matches,
/// else other. The first matching class decides alone; uid 0 gets no bypass.
pub fn check_permission(perm: &PermissionRecord, cred: &Credentials, want: AccessMask) -> bool {
    debug_assert!(!want.is_empty(), "permission check with empty mask");
    let bits = perm.mode & PERM_BITS;
    let class = if cred.uid == perm.uid {
        bits >> 6
    } else if cred.gid == perm.gid {
        bits >> 3
    } else {
        bits
    } & 0o7;
    u16::from(want.bits()) & !class == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessMode {
    ReadOnly,
    WriteOnly,
    ReadWrite,
}

impl AccessMode {
    pub fn can_read(self) -> bool {
        matches!(self, AccessMode::ReadOnly | AccessMode::ReadWrite)
    }

    pub fn can_write(self) -> bool {
        matches!(self, AccessMode::WriteOnly | AccessMode::ReadWrite)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("truncate requires write access")]
pub struct InvalidFlags;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpenFlags {
    pub access: AccessMode,
    pub create: bool,
    pub truncate: bool,
}

impl OpenFlags {
    pub fn new(access: AccessMode, create: bool, truncate: bool) -> Result<Self, InvalidFlags> {
        let flags = Self {
            access,
            create,
            truncate,
        };
        flags.validate()?;
        Ok(flags)
    }

    pub const fn read_only() -> Self {
        Self {
            access: AccessMode::ReadOnly,
            create: false,
            truncate: false,
        }
    }

    pub const fn write_only() -> Self {
        Self {
            access: AccessMode::WriteOnly,
            create: false,
            truncate: false,
        }
    }

    pub const fn read_write() -> Self {
        Self {
            access: AccessMode::ReadWrite,
            create: false,
            truncate: false,
        }
    }

    pub const fn with_create(mut self) -> Self {
        self.create = true;
        self
    }

    /// Panics if the access mode is read-only.
    pub fn with_truncate(mut self) -> Self {
        assert!(self.access.can_write(), "truncate requires write access");
        self.truncate = true;
        self
    }

    pub fn validate(&self) -> Result<(), InvalidFlags> {
        if self.truncate && !self.access.can_write() {
            return Err(InvalidFlags);
        }
        Ok(())
    }
}

pub fn access_mask_for(flags: &OpenFlags) -> AccessMask {
    let mut mask = match flags.access {
        AccessMode::ReadOnly => AccessMask::READ,
        AccessMode::WriteOnly => AccessMask::WRITE,
        AccessMode::ReadWrite => AccessMask::READ | AccessMask::WRITE,
    };
    if flags.truncate {
        mask |= AccessMask::WRITE;
    }
    mask
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no server address for host {host_id} version {version} (stale inode)")]
pub struct StaleInode {
    pub host_id: u32,
    pub version: u32,
}

/// Maps `(host_id, version)` to the address of the server incarnation that
/// issued inodes with that pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClusterConfig {
    servers: BTreeMap<(u32, u32), String>,
}

impl ClusterConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, host_id: u32, version: u32, address: impl Into<String>) {
        self.servers.insert((host_id, version), address.into());
    }

    pub fn with(mut self, host_id: u32, version: u32, address: impl Into<String>) -> Self {
        self.insert(host_id, version, address);
        self
    }

    pub fn resolve(&self, inode: &BuffetInode) -> Result<&str, StaleInode> {
        self.servers
            .get(&(inode.host_id, inode.version))
            .map(String::as_str)
            .ok_or(StaleInode {
                host_id: inode.host_id,
                version: inode.version,
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = ((u32, u32), &str)> {
        self.servers.iter().map(|(k, v)| (*k, v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.servers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.servers.is_empty()
    }
}

/// Times are nanoseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FileMetadata {
    pub inode: BuffetInode,
    pub perm: PermissionRecord,
    pub size: u64,
    pub atime: u64,
    pub mtime: u64,
    pub ctime: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(uid: u32, gid: u32, mode: u16) -> PermissionRecord {
        PermissionRecord { uid, gid, mode }
    }

    #[test]
    fn owner_class_grants_rwx() {
        let all = AccessMask::READ | AccessMask::WRITE | AccessMask::EXEC;
        assert!(check_permission(
            &p(1000, 100, 0o750),
            &Credentials::new(1000, 100),
            all
        ));
    }

    #[test]
    fn group_class_is_read_exec() {
        assert!(!check_permission(
            &p(1000, 100, 0o750),
            &Credentials::new(2000, 100),
            AccessMask::WRITE
        ));
        assert!(check_permission(
            &p(1000, 100, 0o750),
            &Credentials::new(2000, 100),
            AccessMask::READ | AccessMask::EXEC
        ));
    }

    #[test]
    fn other_class_denied() {
        assert!(!check_permission(
            &p(1000, 100, 0o750),
            &Credentials::new(2000, 200),
            AccessMask::READ
        ));
    }

    #[test]
    fn owner_match_shadows_more_permissive_classes() {
        let perm = p(1000, 100, 0o077);
        assert!(!check_permission(
            &perm,
            &Credentials::new(1000, 100),
            AccessMask::READ
        ));
        assert!(check_permission(
            &perm,
            &Credentials::new(5, 100),
            AccessMask::READ
        ));
    }

    #[test]
    fn uid_zero_is_not_special() {
        assert!(!check_permission(
            &p(1000, 100, 0o700),
            &Credentials::new(0, 0),
            AccessMask::READ
        ));
    }

    #[test]
    fn type_bits_do_not_leak_into_classes() {
        assert!(!check_permission(
            &PermissionRecord::dir(1, 1, 0o000),
            &Credentials::new(9, 9),
            AccessMask::EXEC
        ));
    }

    #[test]
    fn masks_for_flags() {
        assert_eq!(access_mask_for(&OpenFlags::read_only()), AccessMask::READ);
        assert_eq!(
            access_mask_for(&OpenFlags::read_write()),
            AccessMask::READ | AccessMask::WRITE
        );
        assert_eq!(
            access_mask_for(&OpenFlags::write_only().with_truncate()),
            AccessMask::WRITE
        );
    }

    #[test]
    fn truncate_needs_write() {
        assert_eq!(
            OpenFlags::new(AccessMode::ReadOnly, false, true),
            Err(InvalidFlags)
        );
        assert!(OpenFlags::new(AccessMode::ReadWrite, true, true).is_ok());
    }

    #[test]
    fn zero_perm_encodes_to_zero_bytes() {
        assert_eq!(encode_perm(&p(0, 0, 0)), [0u8; 10]);
    }

    #[test]
    fn short_perm_blob_rejected() {
        assert_eq!(
            decode_perm(&[0u8; 9]),
            Err(CodecError::Length {
                expected: 10,
                actual: 9
            })
        );
    }

    #[test]
    fn inode_layout() {
        assert_eq!(encode_inode(&BuffetInode::default()), [0u8; 16]);
        assert_eq!(
            encode_inode(&BuffetInode::new(1, 2, 3)),
            [1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 0, 0, 0, 0]
        );
        assert!(decode_inode(&[0u8; 17]).is_err());
    }

    #[test]
    fn names() {
        assert!(validate_name("foo").is_ok());
        assert!(validate_name("").is_err());
        assert!(validate_name(".").is_err());
        assert!(validate_name("..").is_err());
        assert!(validate_name("a/b").is_err());
    }

    #[test]
    fn cluster_lookup_failure_is_stale() {
        let cfg = ClusterConfig::new().with(1, 0, "sim://a");
        assert_eq!(cfg.resolve(&BuffetInode::new(1, 0, 9)), Ok("sim://a"));
        assert_eq!(
            cfg.resolve(&BuffetInode::new(1, 1, 9)),
            Err(StaleInode {
                host_id: 1,
                version: 1
            })
        );
    }
}
