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

//! Server bookkeeping as a non-blocking state machine.
//!
//! Anything that would wait (a directory read during an invalidation round,
//! a metadata change waiting for acks) is returned to the caller as an
//! outcome instead. [`super::BServer`] turns those outcomes into blocking
//! calls; the consistency harness drives them step by step.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use parking_lot::RwLock;

use super::store::{DiskStore, StoredBody, StoredNode};
use super::{now_ns, ServerConfig, IS_A_DIRECTORY};
use crate::types::{
    access_mask_for, check_permission, validate_name, AccessMask, BuffetInode, Credentials,
    DirEntryRecord, FileMetadata, OpenFlags, PermissionRecord, S_IFMT, ROOT_FILE_ID,
};
use crate::wire::{DeferredOpen, ErrorCode, OpenRecord, RpcMessage, ServerDump};

pub type Failure = (ErrorCode, String);

fn fail(code: ErrorCode, detail: impl Into<String>) -> Failure {
    (code, detail.into())
}

pub(crate) type Content = Arc<RwLock<Vec<u8>>>;

pub(crate) enum Body {
    File(Content),
    Dir(BTreeMap<String, DirEntryRecord>),
}

pub(crate) struct Node {
    pub meta: FileMetadata,
    pub parent: Option<u64>,
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GetDirOutcome {
    Reply(RpcMessage),
    /// The directory is part of an invalidation round in progress.
    Held { dir: u64 },
}

/// An invalidation round that must be acknowledged before its change applies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingRound {
    pub epoch: u64,
    pub clients: Vec<u32>,
    /// The `InvalidateRequest` to push to each client.
    pub request: RpcMessage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChangeOutcome {
    /// Applied without a round (nobody caches the directory) or rejected.
    Done(RpcMessage),
    /// Another round holds one of these directories.
    Busy { dirs: Vec<u64> },
    Pending(PendingRound),
}

#[derive(Debug, Clone)]
enum Change {
    SetPermission {
        target: u64,
        perm: PermissionRecord,
    },
    Create {
        parent: u64,
        name: String,
        perm: PermissionRecord,
        is_dir: bool,
    },
}

struct Round {
    locked: Vec<u64>,
    waiting: BTreeSet<u32>,
    change: Change,
}

pub(crate) struct IoGrant {
    pub content: Content,
    pub file_id: u64,
    pub truncate: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    Read,
    Write,
}

pub struct ServerState {
    host_id: u32,
    version: u32,
    pub(crate) nodes: HashMap<u64, Node>,
    opened: BTreeMap<(u32, u64), OpenRecord>,
    registry: HashMap<u64, BTreeSet<u32>>,
    next_file_id: u64,
    epoch: u64,
    rounds: BTreeMap<u64, Round>,
    locked: HashMap<u64, u64>,
    finished: HashMap<u64, RpcMessage>,
    invalidations_pushed: u64,
    rounds_completed: u64,
    pub(crate) store: Option<Arc<DiskStore>>,
}

impl ServerState {
    pub(crate) fn new(config: &ServerConfig) -> Self {
        let now = now_ns();
        let root = Node {
            meta: FileMetadata {
                inode: BuffetInode::root(config.host_id, config.version),
                perm: config.root_perm,
                size: 0,
                atime: now,
                mtime: now,
                ctime: now,
            },
            parent: None,
            body: Body::Dir(BTreeMap::new()),
        };
        Self {
            host_id: config.host_id,
            version: config.version,
            nodes: HashMap::from([(ROOT_FILE_ID, root)]),
            opened: BTreeMap::new(),
            registry: HashMap::new(),
            next_file_id: ROOT_FILE_ID + 1,
            epoch: 0,
            rounds: BTreeMap::new(),
            locked: HashMap::new(),
            finished: HashMap::new(),
            invalidations_pushed: 0,
            rounds_completed: 0,
            store: None,
        }
    }

    /// Rebuilds from persisted nodes, re-stamping inodes with this
    /// incarnation's host id and version.
    pub(crate) fn from_stored(config: &ServerConfig, stored: Vec<StoredNode>) -> Self {
        let mut st = Self::new(config);
        let stamp = |mut i: BuffetInode| {
            i.host_id = config.host_id;
            i.version = config.version;
            i
        };
        for node in stored {
            let file_id = node.meta.inode.file_id;
            let mut meta = node.meta;
            meta.inode = stamp(meta.inode);
            let body = match node.body {
                StoredBody::File(data) => {
                    meta.size = data.len() as u64;
                    Body::File(Arc::new(RwLock::new(data)))
                }
                StoredBody::Dir(entries) => Body::Dir(
                    entries
                        .into_iter()
                        .map(|mut e| {
                            e.inode = stamp(e.inode);
                            (e.name.clone(), e)
                        })
                        .collect(),
                ),
            };
            st.next_file_id = st.next_file_id.max(file_id + 1);
            st.nodes.insert(
                file_id,
                Node {
                    meta,
                    parent: node.parent,
                    body,
                },
            );
        }
        st
    }

    fn check_inode(&self, inode: &BuffetInode) -> Result<&Node, Failure> {
        if inode.host_id != self.host_id || inode.version != self.version {
            return Err(fail(
                ErrorCode::StaleInode,
                format!(
                    "inode {inode} does not belong to host {} version {}",
                    self.host_id, self.version
                ),
            ));
        }
        self.nodes
            .get(&inode.file_id)
            .ok_or_else(|| fail(ErrorCode::NotFound, format!("no file {}", inode.file_id)))
    }

    fn touch(&mut self, file_id: u64, atime: bool, mtime: bool) {
        if let Some(node) = self.nodes.get_mut(&file_id) {
            let now = now_ns();
            if atime {
                node.meta.atime = now;
            }
            if mtime {
                node.meta.mtime = now;
                node.meta.ctime = now;
            }
        }
    }

    pub fn get_dir(&mut self, dir_inode: &BuffetInode, client_id: u32) -> Result<GetDirOutcome, Failure> {
        let node = self.check_inode(dir_inode)?;
        let Body::Dir(entries) = &node.body else {
            return Err(fail(ErrorCode::NotADirectory, format!("{dir_inode}")));
        };
        let dir = dir_inode.file_id;
        if self.locked.contains_key(&dir) {
            return Ok(GetDirOutcome::Held { dir });
        }
        let entries: Vec<DirEntryRecord> = entries.values().cloned().collect();
        self.registry.entry(dir).or_default().insert(client_id);
        self.touch(dir, true, false);
        Ok(GetDirOutcome::Reply(RpcMessage::GetDirReply {
            entries,
            dir_meta: self.nodes[&dir].meta,
        }))
    }

    pub fn is_locked(&self, dir: u64) -> bool {
        self.locked.contains_key(&dir)
    }

    fn begin_round(&mut self, lock: Vec<u64>, push_to: u64, targets: Vec<BuffetInode>, change: Change) -> ChangeOutcome {
        if lock.iter().any(|d| self.locked.contains_key(d)) {
            return ChangeOutcome::Busy { dirs: lock };
        }
        let clients: Vec<u32> = self
            .registry
            .get(&push_to)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        if clients.is_empty() {
            return ChangeOutcome::Done(self.apply(change));
        }
        self.epoch += 1;
        let epoch = self.epoch;
        // pushed clients drop these listings, so they leave the registries
        // and rejoin when they fetch again
        for dir in &lock {
            if let Some(set) = self.registry.get_mut(dir) {
                for c in &clients {
                    set.remove(c);
                }
            }
        }
        for dir in &lock {
            self.locked.insert(*dir, epoch);
        }
        self.invalidations_pushed += clients.len() as u64;
        self.rounds.insert(
            epoch,
            Round {
                locked: lock,
                waiting: clients.iter().copied().collect(),
                change,
            },
        );
        ChangeOutcome::Pending(PendingRound {
            epoch,
            clients,
            request: RpcMessage::InvalidateRequest { targets, epoch },
        })
    }

    pub fn begin_set_permission(
        &mut self,
        inode: &BuffetInode,
        new_perm: PermissionRecord,
        cred: &Credentials,
    ) -> Result<ChangeOutcome, Failure> {
        let node = self.check_inode(inode)?;
        let current = node.meta.perm;
        if cred.uid != current.uid {
            return Err(fail(ErrorCode::AccessDenied, "only the owner may change permissions"));
        }
        if new_perm.mode & S_IFMT != current.mode & S_IFMT {
            return Err(fail(ErrorCode::Io, "permission change cannot alter the file type"));
        }
        let target = inode.file_id;
        let is_dir = matches!(node.body, Body::Dir(_));
        let (lock, push_to, targets) = match node.parent {
            Some(parent) => {
                let mut lock = vec![parent];
                if is_dir {
                    lock.push(target);
                }
                let parent_inode = self.nodes[&parent].meta.inode;
                (lock, parent, vec![*inode, parent_inode])
            }
            None => (vec![target], target, vec![*inode]),
        };
        Ok(self.begin_round(
            lock,
            push_to,
            targets,
            Change::SetPermission {
                target,
                perm: new_perm,
            },
        ))
    }

    pub fn begin_create(
        &mut self,
        parent: &BuffetInode,
        name: &str,
        perm: PermissionRecord,
        is_dir: bool,
    ) -> Result<ChangeOutcome, Failure> {
        let node = self.check_inode(parent)?;
        let Body::Dir(entries) = &node.body else {
            return Err(fail(ErrorCode::NotADirectory, format!("{parent}")));
        };
        validate_name(name).map_err(|e| fail(ErrorCode::Io, e.to_string()))?;
        if entries.contains_key(name) {
            return Err(fail(ErrorCode::Exists, name.to_string()));
        }
        let perm = if is_dir {
            PermissionRecord::dir(perm.uid, perm.gid, perm.perm_bits())
        } else {
            PermissionRecord::file(perm.uid, perm.gid, perm.perm_bits())
        };
        let dir = parent.file_id;
        Ok(self.begin_round(
            vec![dir],
            dir,
            vec![*parent],
            Change::Create {
                parent: dir,
                name: name.to_string(),
                perm,
                is_dir,
            },
        ))
    }

    /// Records an ack. Returns true if it completed its round.
    pub fn ack(&mut self, epoch: u64, client_id: u32) -> bool {
        let Some(round) = self.rounds.get_mut(&epoch) else {
            return false;
        };
        if !round.waiting.remove(&client_id) || !round.waiting.is_empty() {
            return false;
        }
        let round = self.rounds.remove(&epoch).unwrap();
        for dir in &round.locked {
            self.locked.remove(dir);
        }
        let reply = self.apply(round.change);
        self.rounds_completed += 1;
        self.finished.insert(epoch, reply);
        true
    }

    /// Abandons a round whose acks did not all arrive; its change is not
    /// applied.
    pub fn abort_round(&mut self, epoch: u64) -> Vec<u32> {
        let Some(round) = self.rounds.remove(&epoch) else {
            return Vec::new();
        };
        for dir in &round.locked {
            self.locked.remove(dir);
        }
        round.waiting.into_iter().collect()
    }

    pub fn round_finished(&self, epoch: u64) -> bool {
        self.finished.contains_key(&epoch)
    }

    pub fn take_result(&mut self, epoch: u64) -> Option<RpcMessage> {
        self.finished.remove(&epoch)
    }

    pub fn pending_rounds(&self) -> usize {
        self.rounds.len()
    }

    fn apply(&mut self, change: Change) -> RpcMessage {
        match change {
            Change::SetPermission { target, perm } => {
                let node = self.nodes.get_mut(&target).expect("target vanished");
                node.meta.perm = perm;
                node.meta.ctime = now_ns();
                let parent = node.parent;
                if let Some(parent) = parent {
                    if let Some(Node {
                        body: Body::Dir(entries),
                        ..
                    }) = self.nodes.get_mut(&parent)
                    {
                        if let Some(e) = entries.values_mut().find(|e| e.inode.file_id == target) {
                            e.perm = perm;
                        }
                    }
                }
                if let Err(e) = self.persist_meta(target).and_then(|_| match parent {
                    Some(p) => self.persist_listing(p),
                    None => Ok(()),
                }) {
                    return RpcMessage::error(ErrorCode::Io, e);
                }
                RpcMessage::SetPermissionReply { ok: true }
            }
            Change::Create {
                parent,
                name,
                perm,
                is_dir,
            } => {
                let file_id = self.next_file_id;
                self.next_file_id += 1;
                let now = now_ns();
                let inode = BuffetInode::new(self.host_id, self.version, file_id);
                let entry = DirEntryRecord::new(name.clone(), inode, perm);
                let body = if is_dir {
                    Body::Dir(BTreeMap::new())
                } else {
                    Body::File(Arc::new(RwLock::new(Vec::new())))
                };
                self.nodes.insert(
                    file_id,
                    Node {
                        meta: FileMetadata {
                            inode,
                            perm,
                            size: 0,
                            atime: now,
                            mtime: now,
                            ctime: now,
                        },
                        parent: Some(parent),
                        body,
                    },
                );
                if let Some(Node {
                    body: Body::Dir(entries),
                    ..
                }) = self.nodes.get_mut(&parent)
                {
                    entries.insert(name, entry.clone());
                }
                self.touch(parent, false, true);
                let persisted = self.persist_meta(file_id).and_then(|_| {
                    if is_dir {
                        self.persist_listing(file_id)?;
                    }
                    self.persist_listing(parent)
                });
                if let Err(e) = persisted {
                    return RpcMessage::error(ErrorCode::Io, e);
                }
                RpcMessage::CreateReply { entry }
            }
        }
    }

    fn persist_meta(&self, file_id: u64) -> Result<(), String> {
        let Some(store) = &self.store else {
            return Ok(());
        };
        let node = &self.nodes[&file_id];
        store
            .put_meta(&node.meta, node.parent)
            .map_err(|e| e.to_string())
    }

    fn persist_listing(&self, dir: u64) -> Result<(), String> {
        let Some(store) = &self.store else {
            return Ok(());
        };
        if let Body::Dir(entries) = &self.nodes[&dir].body {
            let list: Vec<DirEntryRecord> = entries.values().cloned().collect();
            store.put_listing(dir, &list).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub(crate) fn persist_all(&self) -> Result<(), String> {
        let mut ids: Vec<u64> = self.nodes.keys().copied().collect();
        ids.sort_unstable();
        for id in ids {
            self.persist_meta(id)?;
            self.persist_listing(id)?;
        }
        Ok(())
    }

    /// Validates a data request and, for a deferred open, re-checks the
    /// permission and records the open.
    pub(crate) fn prepare_io(
        &mut self,
        inode: &BuffetInode,
        client_id: u32,
        open_token: u64,
        deferred: Option<&DeferredOpen>,
        dir: Direction,
    ) -> Result<IoGrant, Failure> {
        let node = self.check_inode(inode)?;
        let Body::File(content) = &node.body else {
            return Err(fail(ErrorCode::Io, IS_A_DIRECTORY));
        };
        let content = Arc::clone(content);
        let perm = node.meta.perm;
        let key = (client_id, open_token);
        let allowed = |flags: &OpenFlags| match dir {
            Direction::Read => flags.access.can_read(),
            Direction::Write => flags.access.can_write(),
        };
        let mut truncate = false;
        match deferred {
            Some(d) => {
                if d.open_token != open_token {
                    return Err(fail(ErrorCode::BadHandle, "deferred open token mismatch"));
                }
                if self.opened.contains_key(&key) {
                    return Err(fail(ErrorCode::BadHandle, "handle already opened"));
                }
                if !check_permission(&perm, &d.cred, access_mask_for(&d.flags)) {
                    return Err(fail(ErrorCode::AccessDenied, "deferred open revalidation failed"));
                }
                if !allowed(&d.flags) {
                    return Err(fail(ErrorCode::AccessDenied, "handle not opened for this access"));
                }
                self.opened.insert(
                    key,
                    OpenRecord {
                        open_token,
                        client_id,
                        file_id: inode.file_id,
                        flags: d.flags,
                        cred: d.cred,
                    },
                );
                truncate = d.flags.truncate;
            }
            None => {
                let rec = self
                    .opened
                    .get(&key)
                    .ok_or_else(|| fail(ErrorCode::BadHandle, "unknown open token"))?;
                if rec.file_id != inode.file_id {
                    return Err(fail(ErrorCode::BadHandle, "token belongs to another file"));
                }
                if !allowed(&rec.flags) {
                    return Err(fail(ErrorCode::AccessDenied, "handle not opened for this access"));
                }
            }
        }
        Ok(IoGrant {
            content,
            file_id: inode.file_id,
            truncate,
        })
    }

    pub(crate) fn finish_io(&mut self, file_id: u64, new_size: Option<u64>, wrote: bool) -> FileMetadata {
        if let Some(size) = new_size {
            if let Some(node) = self.nodes.get_mut(&file_id) {
                node.meta.size = size;
            }
        }
        self.touch(file_id, !wrote, wrote);
        self.nodes[&file_id].meta
    }

    pub fn close(&mut self, client_id: u32, open_token: u64) -> bool {
        self.opened.remove(&(client_id, open_token)).is_some()
    }

    /// Path-based open done entirely on the server, as a classic metadata
    /// server would. Returns `Ok(None)` if the target must be created first.
    pub(crate) fn classic_open(
        &mut self,
        path: &str,
        flags: &OpenFlags,
        cred: &Credentials,
        client_id: u32,
        open_token: u64,
    ) -> Result<ClassicOpen, Failure> {
        let comps = split_path(path).map_err(|p| fail(ErrorCode::Io, format!("invalid path {p:?}")))?;
        let Some((last, dirs)) = comps.split_last() else {
            return Err(fail(ErrorCode::Io, IS_A_DIRECTORY));
        };
        let mut cur = ROOT_FILE_ID;
        let depth = dirs.len();
        for (i, name) in dirs.iter().chain(std::iter::once(last)).enumerate() {
            let node = &self.nodes[&cur];
            let Body::Dir(entries) = &node.body else {
                return Err(fail(ErrorCode::NotADirectory, name.to_string()));
            };
            if !check_permission(&node.meta.perm, cred, AccessMask::EXEC) {
                return Err(fail(ErrorCode::AccessDenied, "search permission denied"));
            }
            match entries.get(*name) {
                Some(e) => cur = e.inode.file_id,
                None if i == depth && flags.create => {
                    if !check_permission(&node.meta.perm, cred, AccessMask::WRITE | AccessMask::EXEC) {
                        return Err(fail(ErrorCode::AccessDenied, "cannot create in directory"));
                    }
                    return Ok(ClassicOpen::Create {
                        parent: node.meta.inode,
                        name: name.to_string(),
                    });
                }
                None => return Err(fail(ErrorCode::NotFound, path.to_string())),
            }
        }
        let node = &self.nodes[&cur];
        let Body::File(content) = &node.body else {
            return Err(fail(ErrorCode::Io, IS_A_DIRECTORY));
        };
        if !check_permission(&node.meta.perm, cred, access_mask_for(flags)) {
            return Err(fail(ErrorCode::AccessDenied, path.to_string()));
        }
        let key = (client_id, open_token);
        if self.opened.contains_key(&key) {
            return Err(fail(ErrorCode::BadHandle, "handle already opened"));
        }
        let content = Arc::clone(content);
        self.opened.insert(
            key,
            OpenRecord {
                open_token,
                client_id,
                file_id: cur,
                flags: *flags,
                cred: *cred,
            },
        );
        Ok(ClassicOpen::Opened(IoGrant {
            content,
            file_id: cur,
            truncate: flags.truncate,
        }))
    }

    pub fn dump(&self, include_files: bool, held_get_dirs: u32) -> ServerDump {
        let mut registry: Vec<(u64, Vec<u32>)> = self
            .registry
            .iter()
            .filter(|(_, c)| !c.is_empty())
            .map(|(d, c)| (*d, c.iter().copied().collect()))
            .collect();
        registry.sort_unstable();
        let files = if include_files {
            let mut files: Vec<FileMetadata> = self.nodes.values().map(|n| n.meta).collect();
            files.sort_unstable_by_key(|m| m.inode.file_id);
            files
        } else {
            Vec::new()
        };
        ServerDump {
            host_id: self.host_id,
            version: self.version,
            epoch: self.epoch,
            opened: self.opened.values().copied().collect(),
            registry,
            files,
            invalidations_pushed: self.invalidations_pushed,
            rounds_completed: self.rounds_completed,
            pending_rounds: self.rounds.len() as u32,
            held_get_dirs,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }
}

pub(crate) enum ClassicOpen {
    Opened(IoGrant),
    Create { parent: BuffetInode, name: String },
}

/// Splits an absolute, normalized path into its components.
pub fn split_path(path: &str) -> Result<Vec<&str>, String> {
    let Some(rest) = path.strip_prefix('/') else {
        return Err(path.to_string());
    };
    if rest.is_empty() {
        return Ok(Vec::new());
    }
    let comps: Vec<&str> = rest.split('/').collect();
    if comps.iter().any(|c| validate_name(c).is_err()) {
        return Err(path.to_string());
    }
    Ok(comps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths() {
        assert_eq!(split_path("/").unwrap(), Vec::<&str>::new());
        assert_eq!(split_path("/a/b").unwrap(), vec!["a", "b"]);
        assert!(split_path("a/b").is_err());
        assert!(split_path("/a//b").is_err());
        assert!(split_path("/a/../b").is_err());
        assert!(split_path("/a/").is_err());
    }
}
