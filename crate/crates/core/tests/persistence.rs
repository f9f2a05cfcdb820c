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

use buffetfs::server::store::{XATTR_INODE, XATTR_PERM};
use buffetfs::server::DiskStore;
use buffetfs::types::{decode_perm, encode_perm};
use buffetfs::wire::DeferredOpen;
use buffetfs::{BServer, BuffetInode, Credentials, ErrorCode, OpenFlags, PermissionRecord, RpcMessage, ServerConfig};

const OWNER: Credentials = Credentials::new(5, 5);

fn entry(s: &BServer, dir: BuffetInode, name: &str) -> Option<buffetfs::DirEntryRecord> {
    match s.handle_get_dir(&dir, 0) {
        RpcMessage::GetDirReply { entries, .. } => entries.into_iter().find(|e| e.name == name),
        other => panic!("{other:?}"),
    }
}

fn read_all(s: &BServer, inode: BuffetInode, token: u64) -> RpcMessage {
    let d = DeferredOpen {
        open_token: token,
        flags: OpenFlags::read_only(),
        cred: OWNER,
    };
    let r = s.handle_read(&inode, 1, token, 0, 1 << 20, Some(&d));
    s.handle_close(1, token);
    r
}

#[test]
fn namespace_survives_restart_with_new_version() {
    let dir = tempfile::tempdir().unwrap();
    let (d, f) = {
        let s = BServer::open_persistent(ServerConfig::new(2, 0), dir.path()).unwrap();
        let d = match s.handle_create(&s.root_inode(), "docs", PermissionRecord::dir(5, 5, 0o750), true) {
            RpcMessage::CreateReply { entry } => entry,
            other => panic!("{other:?}"),
        };
        let f = match s.handle_create(&d.inode, "note", PermissionRecord::file(5, 5, 0o640), false) {
            RpcMessage::CreateReply { entry } => entry,
            other => panic!("{other:?}"),
        };
        let w = DeferredOpen {
            open_token: 9,
            flags: OpenFlags::write_only(),
            cred: OWNER,
        };
        s.handle_write(&f.inode, 1, 9, 0, b"persisted bytes", Some(&w));
        s.handle_close(1, 9);
        (d, f)
    };

    let s = BServer::open_persistent(ServerConfig::new(2, 1), dir.path()).unwrap();
    let d2 = entry(&s, s.root_inode(), "docs").expect("dir reloaded");
    assert_eq!(d2.inode.file_id, d.inode.file_id);
    assert_eq!((d2.inode.host_id, d2.inode.version), (2, 1));
    assert_eq!(d2.perm, d.perm);
    let f2 = entry(&s, d2.inode, "note").expect("file reloaded");
    assert_eq!(f2.inode, BuffetInode::new(2, 1, f.inode.file_id));
    assert_eq!(f2.perm, f.perm);
    match read_all(&s, f2.inode, 1) {
        RpcMessage::ReadReply { data, file_meta } => {
            assert_eq!(data, b"persisted bytes");
            assert_eq!(file_meta.size, 15);
        }
        other => panic!("{other:?}"),
    }
    // handles minted before the restart are refused
    match read_all(&s, f.inode, 2) {
        RpcMessage::ErrorReply { code, .. } => assert_eq!(code, ErrorCode::StaleInode),
        other => panic!("{other:?}"),
    }
    // new ids do not collide with reloaded ones
    let g = match s.handle_create(&d2.inode, "g", PermissionRecord::file(5, 5, 0o600), false) {
        RpcMessage::CreateReply { entry } => entry,
        other => panic!("{other:?}"),
    };
    assert!(g.inode.file_id > f.inode.file_id);
}

#[test]
fn permission_change_and_truncate_are_written_through() {
    let dir = tempfile::tempdir().unwrap();
    let f = {
        let s = BServer::open_persistent(ServerConfig::new(2, 0), dir.path()).unwrap();
        let f = match s.handle_create(&s.root_inode(), "f", PermissionRecord::file(5, 5, 0o644), false) {
            RpcMessage::CreateReply { entry } => entry,
            other => panic!("{other:?}"),
        };
        let w = DeferredOpen {
            open_token: 1,
            flags: OpenFlags::write_only(),
            cred: OWNER,
        };
        s.handle_write(&f.inode, 1, 1, 0, &[7u8; 100], Some(&w));
        s.handle_close(1, 1);
        let t = DeferredOpen {
            open_token: 2,
            flags: OpenFlags::write_only().with_truncate(),
            cred: OWNER,
        };
        s.handle_write(&f.inode, 1, 2, 0, b"ab", Some(&t));
        s.handle_close(1, 2);
        let reply = s.handle_set_permission(&f.inode, f.perm.with_perm_bits(0o600), &OWNER);
        assert_eq!(reply, RpcMessage::SetPermissionReply { ok: true });
        f
    };

    let store = DiskStore::open(dir.path()).unwrap();
    let path = store.path_of(f.inode.file_id);
    let raw_perm = xattr::get(&path, XATTR_PERM).unwrap().unwrap();
    assert_eq!(raw_perm.len(), 10);
    assert_eq!(raw_perm, encode_perm(&f.perm.with_perm_bits(0o600)));
    assert_eq!(decode_perm(&raw_perm).unwrap().perm_bits(), 0o600);
    assert_eq!(xattr::get(&path, XATTR_INODE).unwrap().unwrap().len(), 16);
    assert_eq!(std::fs::read(&path).unwrap(), b"ab");

    let s = BServer::open_persistent(ServerConfig::new(2, 1), dir.path()).unwrap();
    let e = entry(&s, s.root_inode(), "f").unwrap();
    assert_eq!(e.perm.perm_bits(), 0o600);
}

#[test]
fn empty_directory_starts_fresh() {
    let dir = tempfile::tempdir().unwrap();
    let s = BServer::open_persistent(ServerConfig::new(4, 0), dir.path()).unwrap();
    match s.handle_get_dir(&s.root_inode(), 0) {
        RpcMessage::GetDirReply { entries, dir_meta } => {
            assert!(entries.is_empty());
            assert!(dir_meta.perm.is_dir());
        }
        other => panic!("{other:?}"),
    }
}
