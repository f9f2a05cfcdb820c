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

//! Message catalog and the binary framing used for all agent/server traffic.
//!
//! Frame: `"BFS1"` ‖ tag(u8) ‖ body_len(u32 LE) ‖ body. Integers are
//! little-endian, strings are a u16 length plus UTF-8, byte payloads a u32
//! length plus bytes, lists a u32 count plus elements, options and booleans a
//! single 0/1 byte. Decoding is strict: any trailing or missing byte, any
//! non-0/1 flag byte and any malformed entry is an error, so encode and
//! decode are inverse on the set of well-formed messages.

use std::fmt;

use bytes::{BufMut, BytesMut};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{
    decode_inode, decode_perm, encode_inode, encode_perm, AccessMode, BuffetInode, Credentials,
    DirEntryRecord, FileMetadata, OpenFlags, PermissionRecord, INODE_BLOB_LEN, PERM_BLOB_LEN,
};

pub const MAGIC: &[u8; 4] = b"BFS1";
pub const HEADER_LEN: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated frame: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unknown message tag {0}")]
    UnknownTag(u8),
    #[error("body length {declared} does not match {actual} available bytes")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("malformed body: {0}")]
    Malformed(String),
    #[error("message too large to encode: {0}")]
    TooLarge(&'static str),
}

/// Stable numeric error codes; values follow declaration order from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ErrorCode {
    NotFound = 1,
    AccessDenied = 2,
    StaleInode = 3,
    BadHandle = 4,
    NotADirectory = 5,
    Exists = 6,
    Io = 7,
}

impl ErrorCode {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => Self::NotFound,
            2 => Self::AccessDenied,
            3 => Self::StaleInode,
            4 => Self::BadHandle,
            5 => Self::NotADirectory,
            6 => Self::Exists,
            7 => Self::Io,
            _ => return None,
        })
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::NotFound => "NOT_FOUND",
            Self::AccessDenied => "ACCESS_DENIED",
            Self::StaleInode => "STALE_INODE",
            Self::BadHandle => "BAD_HANDLE",
            Self::NotADirectory => "NOT_A_DIRECTORY",
            Self::Exists => "EXISTS",
            Self::Io => "IO",
        };
        f.write_str(s)
    }
}

/// Server-side open bookkeeping carried by the first data RPC of a handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DeferredOpen {
    pub open_token: u64,
    pub flags: OpenFlags,
    pub cred: Credentials,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpenRecord {
    pub open_token: u64,
    pub client_id: u32,
    pub file_id: u64,
    pub flags: OpenFlags,
    pub cred: Credentials,
}

/// Read-only server introspection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ServerDump {
    pub host_id: u32,
    pub version: u32,
    pub epoch: u64,
    pub opened: Vec<OpenRecord>,
    /// (directory file id, clients caching it), sorted.
    pub registry: Vec<(u64, Vec<u32>)>,
    pub files: Vec<FileMetadata>,
    pub invalidations_pushed: u64,
    pub rounds_completed: u64,
    pub pending_rounds: u32,
    pub held_get_dirs: u32,
}

impl ServerDump {
    pub fn file(&self, file_id: u64) -> Option<&FileMetadata> {
        self.files.iter().find(|m| m.inode.file_id == file_id)
    }

    pub fn registered(&self, dir_file_id: u64) -> &[u32] {
        self.registry
            .iter()
            .find(|(d, _)| *d == dir_file_id)
            .map(|(_, c)| c.as_slice())
            .unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RpcMessage {
    GetDirRequest {
        dir_inode: BuffetInode,
        client_id: u32,
    },
    GetDirReply {
        entries: Vec<DirEntryRecord>,
        dir_meta: FileMetadata,
    },
    /// `client_id`/`open_token` name the handle; `deferred_open` is present
    /// only on the handle's first data RPC.
    ReadRequest {
        inode: BuffetInode,
        client_id: u32,
        open_token: u64,
        offset: u64,
        length: u32,
        deferred_open: Option<DeferredOpen>,
    },
    ReadReply {
        data: Vec<u8>,
        file_meta: FileMetadata,
    },
    WriteRequest {
        inode: BuffetInode,
        client_id: u32,
        open_token: u64,
        offset: u64,
        data: Vec<u8>,
        deferred_open: Option<DeferredOpen>,
    },
    WriteReply {
        bytes_written: u32,
        file_meta: FileMetadata,
    },
    CloseNotify {
        inode: BuffetInode,
        open_token: u64,
        client_id: u32,
    },
    InvalidateRequest {
        targets: Vec<BuffetInode>,
        epoch: u64,
    },
    InvalidateAck {
        epoch: u64,
        client_id: u32,
    },
    SetPermissionRequest {
        inode: BuffetInode,
        new_perm: PermissionRecord,
        cred: Credentials,
    },
    SetPermissionReply {
        ok: bool,
    },
    CreateRequest {
        parent: BuffetInode,
        name: String,
        perm: PermissionRecord,
        is_dir: bool,
    },
    CreateReply {
        entry: DirEntryRecord,
    },
    ErrorReply {
        code: ErrorCode,
        detail: String,
    },
    AdminDumpRequest {
        include_files: bool,
    },
    AdminDumpReply(ServerDump),
    /// Classic path-based open performed entirely by the server; used by the
    /// baseline client. `inline_limit > 0` asks for small-file data inline.
    OpenRequest {
        path: String,
        flags: OpenFlags,
        cred: Credentials,
        client_id: u32,
        open_token: u64,
        inline_limit: u32,
    },
    OpenReply {
        file_meta: FileMetadata,
        inline_data: Option<Vec<u8>>,
    },
    /// Turns the sending connection into the server's push channel to this
    /// client.
    RegisterPush {
        client_id: u32,
    },
    Ping {
        seq: u64,
    },
    Pong {
        seq: u64,
    },
}

pub(crate) mod tag {
    pub const GET_DIR_REQUEST: u8 = 1;
    pub const GET_DIR_REPLY: u8 = 2;
    pub const READ_REQUEST: u8 = 3;
    pub const READ_REPLY: u8 = 4;
    pub const WRITE_REQUEST: u8 = 5;
    pub const WRITE_REPLY: u8 = 6;
    pub const CLOSE_NOTIFY: u8 = 7;
    pub const INVALIDATE_REQUEST: u8 = 8;
    pub const INVALIDATE_ACK: u8 = 9;
    pub const SET_PERMISSION_REQUEST: u8 = 10;
    pub const SET_PERMISSION_REPLY: u8 = 11;
    pub const CREATE_REQUEST: u8 = 12;
    pub const CREATE_REPLY: u8 = 13;
    pub const ERROR_REPLY: u8 = 14;
    pub const ADMIN_DUMP_REQUEST: u8 = 15;
    pub const ADMIN_DUMP_REPLY: u8 = 16;
    pub const OPEN_REQUEST: u8 = 17;
    pub const OPEN_REPLY: u8 = 18;
    pub const REGISTER_PUSH: u8 = 19;
    pub const PING: u8 = 20;
    pub const PONG: u8 = 21;
}

impl RpcMessage {
    pub fn tag(&self) -> u8 {
        use RpcMessage::*;
        match self {
            GetDirRequest { .. } => tag::GET_DIR_REQUEST,
            GetDirReply { .. } => tag::GET_DIR_REPLY,
            ReadRequest { .. } => tag::READ_REQUEST,
            ReadReply { .. } => tag::READ_REPLY,
            WriteRequest { .. } => tag::WRITE_REQUEST,
            WriteReply { .. } => tag::WRITE_REPLY,
            CloseNotify { .. } => tag::CLOSE_NOTIFY,
            InvalidateRequest { .. } => tag::INVALIDATE_REQUEST,
            InvalidateAck { .. } => tag::INVALIDATE_ACK,
            SetPermissionRequest { .. } => tag::SET_PERMISSION_REQUEST,
            SetPermissionReply { .. } => tag::SET_PERMISSION_REPLY,
            CreateRequest { .. } => tag::CREATE_REQUEST,
            CreateReply { .. } => tag::CREATE_REPLY,
            ErrorReply { .. } => tag::ERROR_REPLY,
            AdminDumpRequest { .. } => tag::ADMIN_DUMP_REQUEST,
            AdminDumpReply(_) => tag::ADMIN_DUMP_REPLY,
            OpenRequest { .. } => tag::OPEN_REQUEST,
            OpenReply { .. } => tag::OPEN_REPLY,
            RegisterPush { .. } => tag::REGISTER_PUSH,
            Ping { .. } => tag::PING,
            Pong { .. } => tag::PONG,
        }
    }

    pub fn name(&self) -> &'static str {
        tag_name(self.tag())
    }

    /// Request variants that a synchronous call may carry.
    pub fn expects_reply(&self) -> bool {
        matches!(
            self,
            RpcMessage::GetDirRequest { .. }
                | RpcMessage::ReadRequest { .. }
                | RpcMessage::WriteRequest { .. }
                | RpcMessage::SetPermissionRequest { .. }
                | RpcMessage::CreateRequest { .. }
                | RpcMessage::AdminDumpRequest { .. }
                | RpcMessage::OpenRequest { .. }
                | RpcMessage::Ping { .. }
        )
    }

    /// Messages sent without waiting for a reply.
    pub fn is_one_way(&self) -> bool {
        matches!(
            self,
            RpcMessage::CloseNotify { .. }
                | RpcMessage::InvalidateRequest { .. }
                | RpcMessage::InvalidateAck { .. }
        )
    }

    /// Bulk file-data bytes carried by the message. Control fields and
    /// directory listings are not counted.
    pub fn payload_len(&self) -> usize {
        match self {
            RpcMessage::ReadReply { data, .. } | RpcMessage::WriteRequest { data, .. } => {
                data.len()
            }
            RpcMessage::OpenReply {
                inline_data: Some(data),
                ..
            } => data.len(),
            _ => 0,
        }
    }

    pub fn error(code: ErrorCode, detail: impl Into<String>) -> Self {
        RpcMessage::ErrorReply {
            code,
            detail: detail.into(),
        }
    }
}

pub fn tag_name(tag: u8) -> &'static str {
    match tag {
        tag::GET_DIR_REQUEST => "GetDirRequest",
        tag::GET_DIR_REPLY => "GetDirReply",
        tag::READ_REQUEST => "ReadRequest",
        tag::READ_REPLY => "ReadReply",
        tag::WRITE_REQUEST => "WriteRequest",
        tag::WRITE_REPLY => "WriteReply",
        tag::CLOSE_NOTIFY => "CloseNotify",
        tag::INVALIDATE_REQUEST => "InvalidateRequest",
        tag::INVALIDATE_ACK => "InvalidateAck",
        tag::SET_PERMISSION_REQUEST => "SetPermissionRequest",
        tag::SET_PERMISSION_REPLY => "SetPermissionReply",
        tag::CREATE_REQUEST => "CreateRequest",
        tag::CREATE_REPLY => "CreateReply",
        tag::ERROR_REPLY => "ErrorReply",
        tag::ADMIN_DUMP_REQUEST => "AdminDumpRequest",
        tag::ADMIN_DUMP_REPLY => "AdminDumpReply",
        tag::OPEN_REQUEST => "OpenRequest",
        tag::OPEN_REPLY => "OpenReply",
        tag::REGISTER_PUSH => "RegisterPush",
        tag::PING => "Ping",
        tag::PONG => "Pong",
        _ => "Unknown",
    }
}

struct Encoder {
    buf: BytesMut,
}

impl Encoder {
    fn u8(&mut self, v: u8) {
        self.buf.put_u8(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.put_u16_le(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.put_u32_le(v);
    }
    fn u64(&mut self, v: u64) {
        self.buf.put_u64_le(v);
    }
    fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }
    fn count(&mut self, n: usize, what: &'static str) -> Result<(), WireError> {
        self.u32(u32::try_from(n).map_err(|_| WireError::TooLarge(what))?);
        Ok(())
    }
    fn str(&mut self, s: &str) -> Result<(), WireError> {
        let len = u16::try_from(s.len()).map_err(|_| WireError::TooLarge("string"))?;
        self.u16(len);
        self.buf.put_slice(s.as_bytes());
        Ok(())
    }
    fn bytes(&mut self, b: &[u8]) -> Result<(), WireError> {
        self.count(b.len(), "byte payload")?;
        self.buf.put_slice(b);
        Ok(())
    }
    fn inode(&mut self, i: &BuffetInode) {
        self.buf.put_slice(&encode_inode(i));
    }
    fn perm(&mut self, p: &PermissionRecord) {
        self.buf.put_slice(&encode_perm(p));
    }
    fn cred(&mut self, c: &Credentials) {
        self.u32(c.uid);
        self.u32(c.gid);
    }
    fn flags(&mut self, f: &OpenFlags) {
        let access = match f.access {
            AccessMode::ReadOnly => 0u8,
            AccessMode::WriteOnly => 1,
            AccessMode::ReadWrite => 2,
        };
        self.u8(access | (f.create as u8) << 2 | (f.truncate as u8) << 3);
    }
    fn entry(&mut self, e: &DirEntryRecord) -> Result<(), WireError> {
        self.str(&e.name)?;
        self.inode(&e.inode);
        self.perm(&e.perm);
        Ok(())
    }
    fn meta(&mut self, m: &FileMetadata) {
        self.inode(&m.inode);
        self.perm(&m.perm);
        self.u64(m.size);
        self.u64(m.atime);
        self.u64(m.mtime);
        self.u64(m.ctime);
    }
    fn deferred(&mut self, d: &Option<DeferredOpen>) {
        match d {
            None => self.u8(0),
            Some(d) => {
                self.u8(1);
                self.u64(d.open_token);
                self.flags(&d.flags);
                self.cred(&d.cred);
            }
        }
    }
    fn open_record(&mut self, r: &OpenRecord) {
        self.u64(r.open_token);
        self.u32(r.client_id);
        self.u64(r.file_id);
        self.flags(&r.flags);
        self.cred(&r.cred);
    }
}

struct Decoder<'a> {
    buf: &'a [u8],
}

impl<'a> Decoder<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Malformed(format!(
                "body ends early: need {n} bytes, have {}",
                self.buf.len()
            )));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn bool(&mut self) -> Result<bool, WireError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(WireError::Malformed(format!("flag byte {v}"))),
        }
    }
    fn count(&mut self, min_elem: usize) -> Result<usize, WireError> {
        let n = self.u32()? as usize;
        // cheap bound so a hostile count cannot force a huge allocation
        if n.saturating_mul(min_elem) > self.buf.len() {
            return Err(WireError::Malformed(format!("count {n} exceeds body")));
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String, WireError> {
        let len = self.u16()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|e| WireError::Malformed(e.to_string()))
    }
    fn bytes(&mut self) -> Result<Vec<u8>, WireError> {
        let n = self.count(1)?;
        Ok(self.take(n)?.to_vec())
    }
    fn inode(&mut self) -> Result<BuffetInode, WireError> {
        Ok(decode_inode(self.take(INODE_BLOB_LEN)?).unwrap())
    }
    fn perm(&mut self) -> Result<PermissionRecord, WireError> {
        Ok(decode_perm(self.take(PERM_BLOB_LEN)?).unwrap())
    }
    fn cred(&mut self) -> Result<Credentials, WireError> {
        Ok(Credentials {
            uid: self.u32()?,
            gid: self.u32()?,
        })
    }
    fn flags(&mut self) -> Result<OpenFlags, WireError> {
        let b = self.u8()?;
        if b & !0b1111 != 0 {
            return Err(WireError::Malformed(format!("flags byte {b:#x}")));
        }
        let access = match b & 0b11 {
            0 => AccessMode::ReadOnly,
            1 => AccessMode::WriteOnly,
            2 => AccessMode::ReadWrite,
            _ => return Err(WireError::Malformed("access mode 3".into())),
        };
        OpenFlags::new(access, b & 0b100 != 0, b & 0b1000 != 0)
            .map_err(|e| WireError::Malformed(e.to_string()))
    }
    fn entry(&mut self) -> Result<DirEntryRecord, WireError> {
        let e = DirEntryRecord {
            name: self.str()?,
            inode: self.inode()?,
            perm: self.perm()?,
        };
        e.validate()
            .map_err(|err| WireError::Malformed(err.to_string()))?;
        Ok(e)
    }
    fn meta(&mut self) -> Result<FileMetadata, WireError> {
        Ok(FileMetadata {
            inode: self.inode()?,
            perm: self.perm()?,
            size: self.u64()?,
            atime: self.u64()?,
            mtime: self.u64()?,
            ctime: self.u64()?,
        })
    }
    fn deferred(&mut self) -> Result<Option<DeferredOpen>, WireError> {
        if !self.bool()? {
            return Ok(None);
        }
        Ok(Some(DeferredOpen {
            open_token: self.u64()?,
            flags: self.flags()?,
            cred: self.cred()?,
        }))
    }
    fn open_record(&mut self) -> Result<OpenRecord, WireError> {
        Ok(OpenRecord {
            open_token: self.u64()?,
            client_id: self.u32()?,
            file_id: self.u64()?,
            flags: self.flags()?,
            cred: self.cred()?,
        })
    }
    fn list<T>(
        &mut self,
        min_elem: usize,
        mut f: impl FnMut(&mut Self) -> Result<T, WireError>,
    ) -> Result<Vec<T>, WireError> {
        let n = self.count(min_elem)?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(f(self)?);
        }
        Ok(out)
    }
}

fn encode_body(msg: &RpcMessage, e: &mut Encoder) -> Result<(), WireError> {
    use RpcMessage::*;
    match msg {
        GetDirRequest {
            dir_inode,
            client_id,
        } => {
            e.inode(dir_inode);
            e.u32(*client_id);
        }
        GetDirReply { entries, dir_meta } => {
            e.count(entries.len(), "entry list")?;
            for entry in entries {
                e.entry(entry)?;
            }
            e.meta(dir_meta);
        }
        ReadRequest {
            inode,
            client_id,
            open_token,
            offset,
            length,
            deferred_open,
        } => {
            e.inode(inode);
            e.u32(*client_id);
            e.u64(*open_token);
            e.u64(*offset);
            e.u32(*length);
            e.deferred(deferred_open);
        }
        ReadReply { data, file_meta } => {
            e.bytes(data)?;
            e.meta(file_meta);
        }
        WriteRequest {
            inode,
            client_id,
            open_token,
            offset,
            data,
            deferred_open,
        } => {
            e.inode(inode);
            e.u32(*client_id);
            e.u64(*open_token);
            e.u64(*offset);
            e.bytes(data)?;
            e.deferred(deferred_open);
        }
        WriteReply {
            bytes_written,
            file_meta,
        } => {
            e.u32(*bytes_written);
            e.meta(file_meta);
        }
        CloseNotify {
            inode,
            open_token,
            client_id,
        } => {
            e.inode(inode);
            e.u64(*open_token);
            e.u32(*client_id);
        }
        InvalidateRequest { targets, epoch } => {
            e.count(targets.len(), "target list")?;
            for t in targets {
                e.inode(t);
            }
            e.u64(*epoch);
        }
        InvalidateAck { epoch, client_id } => {
            e.u64(*epoch);
            e.u32(*client_id);
        }
        SetPermissionRequest {
            inode,
            new_perm,
            cred,
        } => {
            e.inode(inode);
            e.perm(new_perm);
            e.cred(cred);
        }
        SetPermissionReply { ok } => e.bool(*ok),
        CreateRequest {
            parent,
            name,
            perm,
            is_dir,
        } => {
            e.inode(parent);
            e.str(name)?;
            e.perm(perm);
            e.bool(*is_dir);
        }
        CreateReply { entry } => e.entry(entry)?,
        ErrorReply { code, detail } => {
            e.u8(*code as u8);
            e.str(detail)?;
        }
        AdminDumpRequest { include_files } => e.bool(*include_files),
        AdminDumpReply(d) => {
            e.u32(d.host_id);
            e.u32(d.version);
            e.u64(d.epoch);
            e.count(d.opened.len(), "opened list")?;
            for r in &d.opened {
                e.open_record(r);
            }
            e.count(d.registry.len(), "registry")?;
            for (dir, clients) in &d.registry {
                e.u64(*dir);
                e.count(clients.len(), "client list")?;
                for c in clients {
                    e.u32(*c);
                }
            }
            e.count(d.files.len(), "file list")?;
            for m in &d.files {
                e.meta(m);
            }
            e.u64(d.invalidations_pushed);
            e.u64(d.rounds_completed);
            e.u32(d.pending_rounds);
            e.u32(d.held_get_dirs);
        }
        OpenRequest {
            path,
            flags,
            cred,
            client_id,
            open_token,
            inline_limit,
        } => {
            e.str(path)?;
            e.flags(flags);
            e.cred(cred);
            e.u32(*client_id);
            e.u64(*open_token);
            e.u32(*inline_limit);
        }
        OpenReply {
            file_meta,
            inline_data,
        } => {
            e.meta(file_meta);
            match inline_data {
                None => e.u8(0),
                Some(d) => {
                    e.u8(1);
                    e.bytes(d)?;
                }
            }
        }
        RegisterPush { client_id } => e.u32(*client_id),
        Ping { seq } | Pong { seq } => e.u64(*seq),
    }
    Ok(())
}

fn decode_body(tag: u8, d: &mut Decoder<'_>) -> Result<RpcMessage, WireError> {
    use RpcMessage::*;
    let msg = match tag {
        tag::GET_DIR_REQUEST => GetDirRequest {
            dir_inode: d.inode()?,
            client_id: d.u32()?,
        },
        tag::GET_DIR_REPLY => GetDirReply {
            entries: d.list(2 + INODE_BLOB_LEN + PERM_BLOB_LEN, |d| d.entry())?,
            dir_meta: d.meta()?,
        },
        tag::READ_REQUEST => ReadRequest {
            inode: d.inode()?,
            client_id: d.u32()?,
            open_token: d.u64()?,
            offset: d.u64()?,
            length: d.u32()?,
            deferred_open: d.deferred()?,
        },
        tag::READ_REPLY => ReadReply {
            data: d.bytes()?,
            file_meta: d.meta()?,
        },
        tag::WRITE_REQUEST => WriteRequest {
            inode: d.inode()?,
            client_id: d.u32()?,
            open_token: d.u64()?,
            offset: d.u64()?,
            data: d.bytes()?,
            deferred_open: d.deferred()?,
        },
        tag::WRITE_REPLY => WriteReply {
            bytes_written: d.u32()?,
            file_meta: d.meta()?,
        },
        tag::CLOSE_NOTIFY => CloseNotify {
            inode: d.inode()?,
            open_token: d.u64()?,
            client_id: d.u32()?,
        },
        tag::INVALIDATE_REQUEST => InvalidateRequest {
            targets: d.list(INODE_BLOB_LEN, |d| d.inode())?,
            epoch: d.u64()?,
        },
        tag::INVALIDATE_ACK => InvalidateAck {
            epoch: d.u64()?,
            client_id: d.u32()?,
        },
        tag::SET_PERMISSION_REQUEST => SetPermissionRequest {
            inode: d.inode()?,
            new_perm: d.perm()?,
            cred: d.cred()?,
        },
        tag::SET_PERMISSION_REPLY => SetPermissionReply { ok: d.bool()? },
        tag::CREATE_REQUEST => CreateRequest {
            parent: d.inode()?,
            name: d.str()?,
            perm: d.perm()?,
            is_dir: d.bool()?,
        },
        tag::CREATE_REPLY => CreateReply { entry: d.entry()? },
        tag::ERROR_REPLY => {
            let raw = d.u8()?;
            let code = ErrorCode::from_u8(raw)
                .ok_or_else(|| WireError::Malformed(format!("error code {raw}")))?;
            ErrorReply {
                code,
                detail: d.str()?,
            }
        }
        tag::ADMIN_DUMP_REQUEST => AdminDumpRequest {
            include_files: d.bool()?,
        },
        tag::ADMIN_DUMP_REPLY => AdminDumpReply(ServerDump {
            host_id: d.u32()?,
            version: d.u32()?,
            epoch: d.u64()?,
            opened: d.list(29, |d| d.open_record())?,
            registry: d.list(12, |d| Ok((d.u64()?, d.list(4, |d| d.u32())?)))?,
            files: d.list(58, |d| d.meta())?,
            invalidations_pushed: d.u64()?,
            rounds_completed: d.u64()?,
            pending_rounds: d.u32()?,
            held_get_dirs: d.u32()?,
        }),
        tag::OPEN_REQUEST => OpenRequest {
            path: d.str()?,
            flags: d.flags()?,
            cred: d.cred()?,
            client_id: d.u32()?,
            open_token: d.u64()?,
            inline_limit: d.u32()?,
        },
        tag::OPEN_REPLY => OpenReply {
            file_meta: d.meta()?,
            inline_data: if d.bool()? { Some(d.bytes()?) } else { None },
        },
        tag::REGISTER_PUSH => RegisterPush {
            client_id: d.u32()?,
        },
        tag::PING => Ping { seq: d.u64()? },
        tag::PONG => Pong { seq: d.u64()? },
        other => return Err(WireError::UnknownTag(other)),
    };
    Ok(msg)
}

pub fn encode_message(msg: &RpcMessage) -> Result<Vec<u8>, WireError> {
    let mut e = Encoder {
        buf: BytesMut::with_capacity(64 + msg.payload_len()),
    };
    encode_body(msg, &mut e)?;
    let body_len = u32::try_from(e.buf.len()).map_err(|_| WireError::TooLarge("frame"))?;
    let mut frame = Vec::with_capacity(HEADER_LEN + e.buf.len());
    frame.extend_from_slice(MAGIC);
    frame.push(msg.tag());
    frame.extend_from_slice(&body_len.to_le_bytes());
    frame.extend_from_slice(&e.buf);
    Ok(frame)
}

/// Validates a frame header and returns `(tag, body_len)`.
pub fn parse_header(header: &[u8]) -> Result<(u8, usize), WireError> {
    if header.len() < HEADER_LEN {
        return Err(WireError::Truncated {
            needed: HEADER_LEN,
            have: header.len(),
        });
    }
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    let tag = header[4];
    let body_len = u32::from_le_bytes(header[5..9].try_into().unwrap()) as usize;
    Ok((tag, body_len))
}

pub fn decode_message(frame: &[u8]) -> Result<RpcMessage, WireError> {
    let (tag, body_len) = parse_header(frame)?;
    let body = &frame[HEADER_LEN..];
    if body.len() < body_len {
        return Err(WireError::Truncated {
            needed: HEADER_LEN + body_len,
            have: frame.len(),
        });
    }
    if body.len() != body_len {
        return Err(WireError::LengthMismatch {
            declared: body_len,
            actual: body.len(),
        });
    }
    decode_body_bytes(tag, body)
}

/// Decodes a body whose header was already consumed by [`parse_header`].
pub fn decode_body_bytes(tag: u8, body: &[u8]) -> Result<RpcMessage, WireError> {
    if tag_name(tag) == "Unknown" {
        return Err(WireError::UnknownTag(tag));
    }
    let mut d = Decoder { buf: body };
    let msg = decode_body(tag, &mut d)?;
    if !d.buf.is_empty() {
        return Err(WireError::LengthMismatch {
            declared: body.len(),
            actual: body.len() - d.buf.len(),
        });
    }
    Ok(msg)
}

/// Encodes a directory listing for persistence; same element encoding as
/// the wire.
pub(crate) fn encode_entries(entries: &[DirEntryRecord]) -> Result<Vec<u8>, WireError> {
    let mut e = Encoder {
        buf: BytesMut::new(),
    };
    e.count(entries.len(), "entry list")?;
    for entry in entries {
        e.entry(entry)?;
    }
    Ok(e.buf.to_vec())
}

pub(crate) fn decode_entries(raw: &[u8]) -> Result<Vec<DirEntryRecord>, WireError> {
    let mut d = Decoder { buf: raw };
    let entries = d.list(2 + INODE_BLOB_LEN + PERM_BLOB_LEN, |d| d.entry())?;
    if !d.buf.is_empty() {
        return Err(WireError::Malformed("trailing bytes after listing".into()));
    }
    Ok(entries)
}
