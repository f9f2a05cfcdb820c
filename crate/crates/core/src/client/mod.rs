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

//! The client agent: a cached partial namespace with permissions, local
//! admission for `open`, deferred server-side opens, asynchronous close and
//! invalidation handling.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Weak};

use log::{debug, warn};
use parking_lot::{Mutex, RwLock};

use crate::error::{FsError, FsResult};
use crate::server::split_path;
use crate::transport::{InvalidationTarget, RpcCounters, Transport};
use crate::types::{
    access_mask_for, check_permission, AccessMask, BuffetInode, ClusterConfig, Credentials,
    DirEntryRecord, OpenFlags, PermissionRecord,
};
use crate::wire::{DeferredOpen, ErrorCode, RpcMessage};

pub mod config;
pub mod fd;
pub mod tree;

pub use config::{ClientConfig, ConfigError, ServerAddress, TransportKind};
pub use fd::{Fd, FdTable, HandleState, OpenHandle, SharedHandle};
pub use tree::{CacheNode, CacheTree};

/// Mode bits given to files created through `open` with the create flag.
pub const DEFAULT_FILE_MODE: u16 = 0o644;

/// Operations every client kind offers, so workloads can run unchanged over
/// each of them.
pub trait FileClient: Send + Sync {
    fn open(&self, path: &str, flags: OpenFlags, cred: &Credentials) -> FsResult<Fd>;
    fn read(&self, fd: Fd, len: u32) -> FsResult<Vec<u8>>;
    fn write(&self, fd: Fd, data: &[u8]) -> FsResult<u32>;
    fn close(&self, fd: Fd) -> FsResult<()>;
    fn seek(&self, fd: Fd, offset: u64) -> FsResult<()>;
    fn transport(&self) -> &Arc<dyn Transport>;

    fn counters(&self) -> RpcCounters {
        self.transport().snapshot_counters()
    }

    fn reset_counters(&self) {
        self.transport().reset_counters();
    }

    fn drain(&self) {
        self.transport().drain();
    }
}

impl<T: FileClient + ?Sized> FileClient for Arc<T> {
    fn open(&self, path: &str, flags: OpenFlags, cred: &Credentials) -> FsResult<Fd> {
        (**self).open(path, flags, cred)
    }

    fn read(&self, fd: Fd, len: u32) -> FsResult<Vec<u8>> {
        (**self).read(fd, len)
    }

    fn write(&self, fd: Fd, data: &[u8]) -> FsResult<u32> {
        (**self).write(fd, data)
    }

    fn close(&self, fd: Fd) -> FsResult<()> {
        (**self).close(fd)
    }

    fn seek(&self, fd: Fd, offset: u64) -> FsResult<()> {
        (**self).seek(fd, offset)
    }

    fn transport(&self) -> &Arc<dyn Transport> {
        (**self).transport()
    }
}

pub(crate) fn unexpected(msg: &RpcMessage) -> FsError {
    FsError::Protocol(msg.name().to_string())
}

pub(crate) fn reply_error(msg: RpcMessage) -> FsError {
    match msg {
        RpcMessage::ErrorReply { code, detail } => FsError::from_reply(code, &detail),
        other => unexpected(&other),
    }
}

/// Supplies a fresh cluster map and home root after a stale-inode error.
pub type ConfigLoader = Box<dyn Fn() -> Option<(ClusterConfig, BuffetInode)> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TargetCheck {
    None,
    /// Target must be a file admitting this mask.
    Open(AccessMask),
    /// Target must be a directory readable by the caller; its listing is
    /// fetched if needed.
    Listing,
}

enum Step {
    Fetch(BuffetInode),
    Found {
        node: CacheNode,
        listing: Option<Vec<DirEntryRecord>>,
    },
    Missing {
        parent: CacheNode,
        name: String,
    },
    Fail(FsError),
}

pub struct BAgent {
    client_id: u32,
    transport: Arc<dyn Transport>,
    cluster: RwLock<ClusterConfig>,
    tree: RwLock<CacheTree>,
    // bumped under the tree write lock by every invalidation
    generation: AtomicU64,
    gates: Mutex<HashMap<BuffetInode, Arc<Mutex<()>>>>,
    fds: FdTable,
    next_token: AtomicU64,
    loader: RwLock<Option<ConfigLoader>>,
    invalidations: AtomicU64,
}

impl BAgent {
    /// Creates the agent and opens a push channel to every server in
    /// `cluster`.
    pub fn new(
        client_id: u32,
        cluster: ClusterConfig,
        root: BuffetInode,
        transport: Arc<dyn Transport>,
    ) -> FsResult<Arc<Self>> {
        cluster.resolve(&root)?;
        let agent = Arc::new(Self {
            client_id,
            transport,
            cluster: RwLock::new(cluster),
            tree: RwLock::new(CacheTree::new(root)),
            generation: AtomicU64::new(0),
            gates: Mutex::new(HashMap::new()),
            fds: FdTable::default(),
            next_token: AtomicU64::new(1),
            loader: RwLock::new(None),
            invalidations: AtomicU64::new(0),
        });
        agent.register_all()?;
        Ok(agent)
    }

    pub fn from_config(cfg: &ClientConfig, transport: Arc<dyn Transport>) -> FsResult<Arc<Self>> {
        Self::new(cfg.client_id, cfg.cluster(), cfg.home_root(), transport)
    }

    fn register_all(self: &Arc<Self>) -> FsResult<()> {
        let addrs: Vec<String> = self
            .cluster
            .read()
            .iter()
            .map(|(_, a)| a.to_string())
            .collect();
        let me: Arc<dyn InvalidationTarget> = Arc::clone(self) as Arc<dyn InvalidationTarget>;
        let weak: Weak<dyn InvalidationTarget> = Arc::downgrade(&me);
        for addr in addrs {
            self.transport.register_push(&addr, weak.clone())?;
        }
        Ok(())
    }

    pub fn set_config_loader(&self, loader: ConfigLoader) {
        *self.loader.write() = Some(loader);
    }

    pub fn client_id(&self) -> u32 {
        self.client_id
    }

    pub fn root(&self) -> BuffetInode {
        self.tree.read().root()
    }

    pub fn cluster(&self) -> ClusterConfig {
        self.cluster.read().clone()
    }

    /// Runs `f` against the cache under its read lock.
    pub fn with_tree<R>(&self, f: impl FnOnce(&CacheTree) -> R) -> R {
        f(&self.tree.read())
    }

    pub fn invalidations_received(&self) -> u64 {
        self.invalidations.load(Ordering::SeqCst)
    }

    pub fn open_fds(&self) -> usize {
        self.fds.len()
    }

    pub fn handle(&self, fd: Fd) -> FsResult<OpenHandle> {
        Ok(self.fds.get(fd)?.lock().clone())
    }

    fn addr_for(&self, inode: &BuffetInode) -> FsResult<String> {
        Ok(self.cluster.read().resolve(inode)?.to_string())
    }

    fn reload(&self) {
        let fresh = self.loader.read().as_ref().and_then(|f| f());
        match fresh {
            Some((cluster, root)) => {
                debug!("client {} reloaded cluster config", self.client_id);
                *self.cluster.write() = cluster;
                let mut tree = self.tree.write();
                if tree.root() != root {
                    tree.reset(root);
                }
                self.generation.fetch_add(1, Ordering::SeqCst);
            }
            None => debug!("client {} has no config source to reload", self.client_id),
        }
    }

    fn gate(&self, dir: BuffetInode) -> Arc<Mutex<()>> {
        Arc::clone(self.gates.lock().entry(dir).or_default())
    }

    fn listing_fresh(tree: &CacheTree, dir: &BuffetInode) -> bool {
        let Some(node) = tree.get(dir) else {
            return false;
        };
        match (&node.children, node.valid) {
            (Some(children), true) => children
                .values()
                .all(|c| tree.get(c).is_some_and(|n| n.valid)),
            _ => false,
        }
    }

    /// Fetches one directory listing. Concurrent callers for the same
    /// directory share a single request.
    fn fetch(&self, dir: BuffetInode) -> FsResult<()> {
        let gate = self.gate(dir);
        let _g = gate.lock();
        loop {
            if Self::listing_fresh(&self.tree.read(), &dir) {
                return Ok(());
            }
            let gen = self.generation.load(Ordering::SeqCst);
            let addr = self.addr_for(&dir)?;
            let reply = self.transport.call(
                &addr,
                RpcMessage::GetDirRequest {
                    dir_inode: dir,
                    client_id: self.client_id,
                },
            )?;
            match reply {
                RpcMessage::GetDirReply { entries, dir_meta } => {
                    let mut tree = self.tree.write();
                    if self.generation.load(Ordering::SeqCst) != gen {
                        // an invalidation overtook this reply
                        debug!("client {} discarding raced listing of {dir}", self.client_id);
                        continue;
                    }
                    tree.install(&dir_meta, &entries);
                    return Ok(());
                }
                RpcMessage::ErrorReply {
                    code: ErrorCode::StaleInode,
                    ..
                } => {
                    self.reload();
                    return Err(FsError::StaleInode);
                }
                other => return Err(reply_error(other)),
            }
        }
    }

    fn try_walk(
        tree: &CacheTree,
        comps: &[&str],
        cred: Option<&Credentials>,
        target: TargetCheck,
    ) -> Step {
        let root = tree.root();
        let mut cur = tree.get(&root).expect("root is always cached");
        let needs_root = cred.is_some() || !comps.is_empty() || target != TargetCheck::None;
        if !cur.valid && needs_root {
            return Step::Fetch(root);
        }
        for (i, name) in comps.iter().enumerate() {
            let last = i + 1 == comps.len();
            if let Some(c) = cred {
                if !check_permission(&cur.perm(), c, AccessMask::EXEC) {
                    return Step::Fail(FsError::AccessDenied);
                }
            }
            let (true, Some(children)) = (cur.valid, &cur.children) else {
                return Step::Fetch(cur.inode());
            };
            let Some(ino) = children.get(*name) else {
                if last {
                    return Step::Missing {
                        parent: cur.clone(),
                        name: name.to_string(),
                    };
                }
                return Step::Fail(FsError::NotFound);
            };
            let next = match tree.get(ino) {
                Some(n) if n.valid => n,
                _ => return Step::Fetch(cur.inode()),
            };
            if !last && !next.is_dir() {
                return Step::Fail(FsError::NotADirectory);
            }
            cur = next;
        }
        let listing = match target {
            TargetCheck::None => None,
            TargetCheck::Open(mask) => {
                if cur.is_dir() {
                    return Step::Fail(FsError::IsADirectory);
                }
                if let Some(c) = cred {
                    if !check_permission(&cur.perm(), c, mask) {
                        return Step::Fail(FsError::AccessDenied);
                    }
                }
                None
            }
            TargetCheck::Listing => {
                if !cur.is_dir() {
                    return Step::Fail(FsError::NotADirectory);
                }
                if let Some(c) = cred {
                    if !check_permission(&cur.perm(), c, AccessMask::READ) {
                        return Step::Fail(FsError::AccessDenied);
                    }
                }
                if !Self::listing_fresh(tree, &cur.inode()) {
                    return Step::Fetch(cur.inode());
                }
                let children = cur.children.as_ref().expect("fresh listing");
                Some(
                    children
                        .values()
                        .map(|c| tree.get(c).expect("fresh listing").entry.clone())
                        .collect(),
                )
            }
        };
        Step::Found {
            node: cur.clone(),
            listing,
        }
    }

    /// Walks the cached tree, fetching listings as needed. The returned
    /// step was decided in one pass under a single read lock.
    fn walk(&self, comps: &[&str], cred: Option<&Credentials>, target: TargetCheck) -> FsResult<Step> {
        let mut stale_retry = true;
        loop {
            let step = Self::try_walk(&self.tree.read(), comps, cred, target);
            match step {
                Step::Fetch(dir) => match self.fetch(dir) {
                    Ok(()) => {}
                    Err(FsError::StaleInode) if stale_retry => stale_retry = false,
                    Err(e) => return Err(e),
                },
                Step::Fail(e) => return Err(e),
                other => return Ok(other),
            }
        }
    }

    fn parse(path: &str) -> FsResult<Vec<&str>> {
        split_path(path).map_err(FsError::InvalidPath)
    }

    fn new_handle(&self, inode: BuffetInode, flags: OpenFlags, cred: &Credentials) -> Fd {
        let token = self.next_token.fetch_add(1, Ordering::SeqCst);
        self.fds.insert(OpenHandle::new(inode, flags, *cred, token))
    }

    fn create_entry(
        &self,
        parent: &CacheNode,
        name: &str,
        perm: PermissionRecord,
        is_dir: bool,
    ) -> FsResult<DirEntryRecord> {
        let addr = self.addr_for(&parent.inode())?;
        let reply = self.transport.call(
            &addr,
            RpcMessage::CreateRequest {
                parent: parent.inode(),
                name: name.to_string(),
                perm,
                is_dir,
            },
        )?;
        match reply {
            RpcMessage::CreateReply { entry } => {
                self.tree.write().insert_created(parent.inode(), entry.clone());
                Ok(entry)
            }
            other => Err(reply_error(other)),
        }
    }

    pub fn open(&self, path: &str, flags: OpenFlags, cred: &Credentials) -> FsResult<Fd> {
        flags
            .validate()
            .map_err(|e| FsError::Io(e.to_string()))?;
        let comps = Self::parse(path)?;
        loop {
            match self.walk(&comps, Some(cred), TargetCheck::Open(access_mask_for(&flags)))? {
                Step::Found { node, .. } => return Ok(self.new_handle(node.inode(), flags, cred)),
                Step::Missing { .. } if !flags.create => return Err(FsError::NotFound),
                Step::Missing { parent, name } => {
                    if !check_permission(&parent.perm(), cred, AccessMask::WRITE | AccessMask::EXEC) {
                        return Err(FsError::AccessDenied);
                    }
                    let perm = PermissionRecord::file(cred.uid, cred.gid, DEFAULT_FILE_MODE);
                    match self.create_entry(&parent, &name, perm, false) {
                        Ok(entry) => return Ok(self.new_handle(entry.inode, flags, cred)),
                        Err(FsError::Exists) => {
                            // lost a race with another creator; open what is there
                            self.tree.write().invalidate(&parent.inode());
                        }
                        Err(e) => return Err(e),
                    }
                }
                Step::Fetch(_) | Step::Fail(_) => unreachable!("walk resolves these"),
            }
        }
    }

    fn with_handle<T>(
        &self,
        fd: Fd,
        build: impl Fn(&OpenHandle, Option<DeferredOpen>) -> RpcMessage,
        finish: impl Fn(&mut OpenHandle, RpcMessage) -> Option<FsResult<T>>,
    ) -> FsResult<T> {
        let shared = self.fds.get(fd)?;
        let mut h = shared.lock();
        if h.state == HandleState::Closed {
            return Err(FsError::BadHandle);
        }
        let mut stale_retry = true;
        loop {
            let deferred = (h.state == HandleState::Incomplete).then(|| DeferredOpen {
                open_token: h.open_token,
                flags: h.flags,
                cred: h.cred,
            });
            let addr = match self.addr_for(&h.inode) {
                Ok(a) => a,
                Err(FsError::StaleInode) if stale_retry => {
                    stale_retry = false;
                    self.reload();
                    continue;
                }
                Err(e) => return Err(e),
            };
            let reply = self.transport.call(&addr, build(&h, deferred))?;
            if let RpcMessage::ErrorReply {
                code: ErrorCode::StaleInode,
                ..
            } = reply
            {
                if stale_retry {
                    stale_retry = false;
                    self.reload();
                    continue;
                }
            }
            if let Some(done) = finish(&mut h, reply.clone()) {
                return done;
            }
            return Err(reply_error(reply));
        }
    }

    pub fn read(&self, fd: Fd, len: u32) -> FsResult<Vec<u8>> {
        let shared = self.fds.get(fd)?;
        if !shared.lock().flags.access.can_read() {
            return Err(FsError::AccessDenied);
        }
        let client_id = self.client_id;
        self.with_handle(
            fd,
            |h, deferred_open| RpcMessage::ReadRequest {
                inode: h.inode,
                client_id,
                open_token: h.open_token,
                offset: h.offset,
                length: len,
                deferred_open,
            },
            |h, reply| match reply {
                RpcMessage::ReadReply { data, .. } => {
                    h.state = HandleState::ServerOpened;
                    h.offset += data.len() as u64;
                    Some(Ok(data))
                }
                _ => None,
            },
        )
    }

    pub fn write(&self, fd: Fd, data: &[u8]) -> FsResult<u32> {
        let shared = self.fds.get(fd)?;
        if !shared.lock().flags.access.can_write() {
            return Err(FsError::AccessDenied);
        }
        let client_id = self.client_id;
        self.with_handle(
            fd,
            |h, deferred_open| RpcMessage::WriteRequest {
                inode: h.inode,
                client_id,
                open_token: h.open_token,
                offset: h.offset,
                data: data.to_vec(),
                deferred_open,
            },
            |h, reply| match reply {
                RpcMessage::WriteReply { bytes_written, .. } => {
                    h.state = HandleState::ServerOpened;
                    h.offset += u64::from(bytes_written);
                    Some(Ok(bytes_written))
                }
                _ => None,
            },
        )
    }

    /// Returns at once; the server hears about the close later, and only if
    /// it ever saw the open.
    pub fn close(&self, fd: Fd) -> FsResult<()> {
        let shared = self.fds.remove(fd)?;
        let mut h = shared.lock();
        let was = std::mem::replace(&mut h.state, HandleState::Closed);
        if was == HandleState::ServerOpened {
            let msg = RpcMessage::CloseNotify {
                inode: h.inode,
                open_token: h.open_token,
                client_id: self.client_id,
            };
            match self.addr_for(&h.inode) {
                Ok(addr) => {
                    if let Err(e) = self.transport.notify(&addr, msg) {
                        warn!("close of {fd} not delivered: {e}");
                    }
                }
                Err(e) => warn!("close of {fd} not delivered: {e}"),
            }
        }
        Ok(())
    }

    pub fn seek(&self, fd: Fd, offset: u64) -> FsResult<()> {
        self.fds.get(fd)?.lock().offset = offset;
        Ok(())
    }

    /// Changes the permission bits of `path`, keeping its file type.
    pub fn chmod(&self, path: &str, mode: u16, cred: &Credentials) -> FsResult<()> {
        let comps = Self::parse(path)?;
        let mut stale_retry = true;
        loop {
            let node = match self.walk(&comps, Some(cred), TargetCheck::None)? {
                Step::Found { node, .. } => node,
                _ => return Err(FsError::NotFound),
            };
            let addr = self.addr_for(&node.inode())?;
            let reply = self.transport.call(
                &addr,
                RpcMessage::SetPermissionRequest {
                    inode: node.inode(),
                    new_perm: node.perm().with_perm_bits(mode),
                    cred: *cred,
                },
            )?;
            return match reply {
                RpcMessage::SetPermissionReply { ok: true } => Ok(()),
                RpcMessage::SetPermissionReply { ok: false } => {
                    Err(FsError::Io("permission change refused".into()))
                }
                RpcMessage::ErrorReply {
                    code: ErrorCode::StaleInode,
                    ..
                } if stale_retry => {
                    stale_retry = false;
                    self.reload();
                    continue;
                }
                other => Err(reply_error(other)),
            };
        }
    }

    pub fn mkdir(&self, path: &str, mode: u16, cred: &Credentials) -> FsResult<DirEntryRecord> {
        let comps = Self::parse(path)?;
        if comps.is_empty() {
            return Err(FsError::Exists);
        }
        match self.walk(&comps, Some(cred), TargetCheck::None)? {
            Step::Found { .. } => Err(FsError::Exists),
            Step::Missing { parent, name } => {
                if !check_permission(&parent.perm(), cred, AccessMask::WRITE | AccessMask::EXEC) {
                    return Err(FsError::AccessDenied);
                }
                let perm = PermissionRecord::dir(cred.uid, cred.gid, mode);
                self.create_entry(&parent, &name, perm, true)
            }
            Step::Fetch(_) | Step::Fail(_) => unreachable!("walk resolves these"),
        }
    }

    /// Entries of a directory, sorted by name.
    pub fn readdir(&self, path: &str, cred: &Credentials) -> FsResult<Vec<DirEntryRecord>> {
        let comps = Self::parse(path)?;
        match self.walk(&comps, Some(cred), TargetCheck::Listing)? {
            Step::Found {
                listing: Some(mut entries),
                ..
            } => {
                entries.sort_by(|a, b| a.name.cmp(&b.name));
                Ok(entries)
            }
            _ => Err(FsError::NotFound),
        }
    }

    /// Looks a path up in the cache, fetching listings as `open` would but
    /// checking no permissions.
    pub fn resolve(&self, path: &str) -> FsResult<CacheNode> {
        let comps = Self::parse(path)?;
        match self.walk(&comps, None, TargetCheck::None)? {
            Step::Found { node, .. } => Ok(node),
            _ => Err(FsError::NotFound),
        }
    }
}

impl InvalidationTarget for BAgent {
    fn client_id(&self) -> u32 {
        self.client_id
    }

    fn handle_invalidate(&self, req: &RpcMessage) -> RpcMessage {
        let RpcMessage::InvalidateRequest { targets, epoch } = req else {
            warn!("client {} got {} on the push channel", self.client_id, req.name());
            return RpcMessage::error(ErrorCode::Io, "expected InvalidateRequest");
        };
        {
            let mut tree = self.tree.write();
            for t in targets {
                if !tree.invalidate(t) {
                    debug!("client {} invalidation of uncached {t}", self.client_id);
                }
            }
            self.generation.fetch_add(1, Ordering::SeqCst);
        }
        self.invalidations.fetch_add(1, Ordering::SeqCst);
        RpcMessage::InvalidateAck {
            epoch: *epoch,
            client_id: self.client_id,
        }
    }
}

impl FileClient for BAgent {
    fn open(&self, path: &str, flags: OpenFlags, cred: &Credentials) -> FsResult<Fd> {
        BAgent::open(self, path, flags, cred)
    }

    fn read(&self, fd: Fd, len: u32) -> FsResult<Vec<u8>> {
        BAgent::read(self, fd, len)
    }

    fn write(&self, fd: Fd, data: &[u8]) -> FsResult<u32> {
        BAgent::write(self, fd, data)
    }

    fn close(&self, fd: Fd) -> FsResult<()> {
        BAgent::close(self, fd)
    }

    fn seek(&self, fd: Fd, offset: u64) -> FsResult<()> {
        BAgent::seek(self, fd, offset)
    }

    fn transport(&self) -> &Arc<dyn Transport> {
        &self.transport
    }
}

/// POSIX-flavored facade binding an agent to one process credential.
#[derive(Clone)]
pub struct BLib {
    agent: Arc<BAgent>,
    cred: Credentials,
}

impl BLib {
    pub fn new(agent: Arc<BAgent>, cred: Credentials) -> Self {
        Self { agent, cred }
    }

    pub fn agent(&self) -> &Arc<BAgent> {
        &self.agent
    }

    pub fn cred(&self) -> Credentials {
        self.cred
    }

    pub fn open(&self, path: &str, flags: OpenFlags) -> FsResult<Fd> {
        self.agent.open(path, flags, &self.cred)
    }

    pub fn read(&self, fd: Fd, len: u32) -> FsResult<Vec<u8>> {
        self.agent.read(fd, len)
    }

    pub fn write(&self, fd: Fd, data: &[u8]) -> FsResult<u32> {
        self.agent.write(fd, data)
    }

    pub fn close(&self, fd: Fd) -> FsResult<()> {
        self.agent.close(fd)
    }

    pub fn seek(&self, fd: Fd, offset: u64) -> FsResult<()> {
        self.agent.seek(fd, offset)
    }

    pub fn chmod(&self, path: &str, mode: u16) -> FsResult<()> {
        self.agent.chmod(path, mode, &self.cred)
    }

    pub fn mkdir(&self, path: &str, mode: u16) -> FsResult<DirEntryRecord> {
        self.agent.mkdir(path, mode, &self.cred)
    }

    pub fn readdir(&self, path: &str) -> FsResult<Vec<DirEntryRecord>> {
        self.agent.readdir(path, &self.cred)
    }

    /// Reads from the current offset to end of file.
    pub fn read_to_end(&self, fd: Fd) -> FsResult<Vec<u8>> {
        let mut out = Vec::new();
        loop {
            let chunk = self.agent.read(fd, 1 << 20)?;
            if chunk.is_empty() {
                return Ok(out);
            }
            out.extend_from_slice(&chunk);
        }
    }
}
