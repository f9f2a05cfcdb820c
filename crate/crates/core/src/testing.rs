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

//! Proptest strategies for the shared records and every wire message.

use proptest::collection::vec;
use proptest::option;
use proptest::prelude::*;

use crate::types::{
    AccessMode, BuffetInode, Credentials, DirEntryRecord, FileMetadata, OpenFlags,
    PermissionRecord,
};
use crate::wire::{DeferredOpen, ErrorCode, OpenRecord, RpcMessage, ServerDump};

pub fn arb_inode() -> impl Strategy<Value = BuffetInode> {
    (any::<u32>(), any::<u32>(), any::<u64>()).prop_map(|(h, v, f)| BuffetInode::new(h, v, f))
}

pub fn arb_perm() -> impl Strategy<Value = PermissionRecord> {
    (any::<u32>(), any::<u32>(), any::<u16>()).prop_map(|(uid, gid, mode)| PermissionRecord {
        uid,
        gid,
        mode,
    })
}

pub fn arb_cred() -> impl Strategy<Value = Credentials> {
    (any::<u32>(), any::<u32>()).prop_map(|(u, g)| Credentials::new(u, g))
}

/// Valid single path components, including non-ASCII ones.
pub fn arb_name() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9_.\\-\u{e9}\u{4e2d}]{1,24}".prop_filter("not a dot name", |s| s != "." && s != "..")
}

/// Permission records carrying a regular-file or directory type.
pub fn arb_typed_perm() -> impl Strategy<Value = PermissionRecord> {
    (any::<u32>(), any::<u32>(), 0u16..0o10000, any::<bool>()).prop_map(|(uid, gid, bits, dir)| {
        let p = if dir {
            PermissionRecord::dir(uid, gid, 0)
        } else {
            PermissionRecord::file(uid, gid, 0)
        };
        PermissionRecord {
            mode: p.mode | bits,
            ..p
        }
    })
}

pub fn arb_entry() -> impl Strategy<Value = DirEntryRecord> {
    (arb_name(), arb_inode(), arb_typed_perm()).prop_map(|(n, i, p)| DirEntryRecord::new(n, i, p))
}

pub fn arb_flags() -> impl Strategy<Value = OpenFlags> {
    (
        prop_oneof![
            Just(AccessMode::ReadOnly),
            Just(AccessMode::WriteOnly),
            Just(AccessMode::ReadWrite)
        ],
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|(access, create, truncate)| OpenFlags {
            access,
            create,
            truncate: truncate && access.can_write(),
        })
}

pub fn arb_meta() -> impl Strategy<Value = FileMetadata> {
    (
        arb_inode(),
        arb_perm(),
        any::<u64>(),
        any::<u64>(),
        any::<u64>(),
        any::<u64>(),
    )
        .prop_map(|(inode, perm, size, atime, mtime, ctime)| FileMetadata {
            inode,
            perm,
            size,
            atime,
            mtime,
            ctime,
        })
}

pub fn arb_deferred() -> impl Strategy<Value = DeferredOpen> {
    (any::<u64>(), arb_flags(), arb_cred()).prop_map(|(open_token, flags, cred)| DeferredOpen {
        open_token,
        flags,
        cred,
    })
}

pub fn arb_error_code() -> impl Strategy<Value = ErrorCode> {
    (1u8..=7).prop_map(|v| ErrorCode::from_u8(v).unwrap())
}

fn arb_open_record() -> impl Strategy<Value = OpenRecord> {
    (any::<u64>(), any::<u32>(), any::<u64>(), arb_flags(), arb_cred()).prop_map(
        |(open_token, client_id, file_id, flags, cred)| OpenRecord {
            open_token,
            client_id,
            file_id,
            flags,
            cred,
        },
    )
}

fn arb_dump() -> impl Strategy<Value = ServerDump> {
    (
        (any::<u32>(), any::<u32>(), any::<u64>()),
        vec(arb_open_record(), 0..4),
        vec((any::<u64>(), vec(any::<u32>(), 0..4)), 0..4),
        vec(arb_meta(), 0..3),
        (any::<u64>(), any::<u64>(), any::<u32>(), any::<u32>()),
    )
        .prop_map(
            |((host_id, version, epoch), opened, registry, files, (pushed, done, pending, held))| {
                ServerDump {
                    host_id,
                    version,
                    epoch,
                    opened,
                    registry,
                    files,
                    invalidations_pushed: pushed,
                    rounds_completed: done,
                    pending_rounds: pending,
                    held_get_dirs: held,
                }
            },
        )
}

fn data() -> impl Strategy<Value = Vec<u8>> {
    vec(any::<u8>(), 0..256)
}

/// Any message of any variant, weighted evenly across variants.
pub fn arb_message() -> impl Strategy<Value = RpcMessage> {
    use RpcMessage::*;
    prop_oneof![
        (arb_inode(), any::<u32>()).prop_map(|(dir_inode, client_id)| GetDirRequest {
            dir_inode,
            client_id
        }),
        (vec(arb_entry(), 0..6), arb_meta())
            .prop_map(|(entries, dir_meta)| GetDirReply { entries, dir_meta }),
        (
            arb_inode(),
            any::<u32>(),
            any::<u64>(),
            any::<u64>(),
            any::<u32>(),
            option::of(arb_deferred())
        )
            .prop_map(|(inode, client_id, open_token, offset, length, deferred_open)| {
                ReadRequest {
                    inode,
                    client_id,
                    open_token,
                    offset,
                    length,
                    deferred_open,
                }
            }),
        (data(), arb_meta()).prop_map(|(data, file_meta)| ReadReply { data, file_meta }),
        (
            arb_inode(),
            any::<u32>(),
            any::<u64>(),
            any::<u64>(),
            data(),
            option::of(arb_deferred())
        )
            .prop_map(|(inode, client_id, open_token, offset, data, deferred_open)| {
                WriteRequest {
                    inode,
                    client_id,
                    open_token,
                    offset,
                    data,
                    deferred_open,
                }
            }),
        (any::<u32>(), arb_meta()).prop_map(|(bytes_written, file_meta)| WriteReply {
            bytes_written,
            file_meta
        }),
        (arb_inode(), any::<u64>(), any::<u32>()).prop_map(|(inode, open_token, client_id)| {
            CloseNotify {
                inode,
                open_token,
                client_id,
            }
        }),
        (vec(arb_inode(), 0..4), any::<u64>())
            .prop_map(|(targets, epoch)| InvalidateRequest { targets, epoch }),
        (any::<u64>(), any::<u32>()).prop_map(|(epoch, client_id)| InvalidateAck { epoch, client_id }),
        (arb_inode(), arb_perm(), arb_cred()).prop_map(|(inode, new_perm, cred)| {
            SetPermissionRequest {
                inode,
                new_perm,
                cred,
            }
        }),
        any::<bool>().prop_map(|ok| SetPermissionReply { ok }),
        (arb_inode(), arb_name(), arb_perm(), any::<bool>()).prop_map(
            |(parent, name, perm, is_dir)| CreateRequest {
                parent,
                name,
                perm,
                is_dir
            }
        ),
        arb_entry().prop_map(|entry| CreateReply { entry }),
        (arb_error_code(), ".{0,40}").prop_map(|(code, detail)| ErrorReply { code, detail }),
        any::<bool>().prop_map(|include_files| AdminDumpRequest { include_files }),
        arb_dump().prop_map(AdminDumpReply),
        (
            ".{0,60}",
            arb_flags(),
            arb_cred(),
            any::<u32>(),
            any::<u64>(),
            any::<u32>()
        )
            .prop_map(|(path, flags, cred, client_id, open_token, inline_limit)| {
                OpenRequest {
                    path,
                    flags,
                    cred,
                    client_id,
                    open_token,
                    inline_limit,
                }
            }),
        (arb_meta(), option::of(data())).prop_map(|(file_meta, inline_data)| OpenReply {
            file_meta,
            inline_data
        }),
        any::<u32>().prop_map(|client_id| RegisterPush { client_id }),
        any::<u64>().prop_map(|seq| Ping { seq }),
        any::<u64>().prop_map(|seq| Pong { seq }),
    ]
}
