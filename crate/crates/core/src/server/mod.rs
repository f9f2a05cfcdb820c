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

//! The storage server: file data, directory listings, the opened-file list,
//! per-directory client registries and ack-gated metadata changes.

use std::io;
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use log::{debug, warn};
use parking_lot::{Condvar, Mutex, MutexGuard, RwLock};

use crate::transport::TransportError;
use crate::types::{
    BuffetInode, Credentials, FileMetadata, OpenFlags, PermissionRecord,
};
use crate::wire::{DeferredOpen, ErrorCode, RpcMessage, ServerDump};

mod state;
pub mod store;

pub use state::{split_path, ChangeOutcome, Failure, GetDirOutcome, PendingRound, ServerState};
use state::{ClassicOpen, Direction, IoGrant};
pub use store::DiskStore;

/// Detail string of the `IO` error returned for data operations on a
/// directory.
pub const IS_A_DIRECTORY: &str = "is a directory";

pub(crate) fn now_ns() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub host_id: u32,
    pub version: u32,
    pub root_perm: PermissionRecord,
    /// How long a metadata change waits for invalidation acks.
    pub ack_deadline: Duration,
}

impl ServerConfig {
    pub fn new(host_id: u32, version: u32) -> Self {
        Self {
            host_id,
            version,
            root_perm: PermissionRecord::dir(0, 0, 0o777),
            ack_deadline: Duration::from_secs(5),
        }
    }

    pub fn root_inode(&self) -> BuffetInode {
        BuffetInode::root(self.host_id, self.version)
    }
}

/// Server side of the push channel: delivers an `InvalidateRequest` to one
/// client. The ack arrives later through [`BServer::accept_ack`].
pub trait PushSink: Send + Sync {
    fn push(&self, client_id: u32, req: &RpcMessage) -> Result<(), TransportError>;
}

pub struct BServer {
    config: ServerConfig,
    state: Mutex<ServerState>,
    changed: Condvar,
    sink: RwLock<Option<Arc<dyn PushSink>>>,
    held: AtomicU32,
}

fn error_reply((code, detail): Failure) -> RpcMessage {
    RpcMessage::ErrorReply { code, detail }
}

impl BServer {
    pub fn new(config: ServerConfig) -> Arc<Self> {
        let state = ServerState::new(&config);
        Self::with_state(config, state)
    }

    /// Opens a server whose namespace is written through to `root`. An
    /// existing namespace there is loaded; an empty directory starts fresh.
    pub fn open_persistent(config: ServerConfig, root: impl AsRef<Path>) -> io::Result<Arc<Self>> {
        let store = Arc::new(DiskStore::open(root)?);
        let stored = store.load()?;
        let mut state = if stored.is_empty() {
            ServerState::new(&config)
        } else {
            ServerState::from_stored(&config, stored)
        };
        state.store = Some(store);
        state
            .persist_all()
            .map_err(io::Error::other)?;
        Ok(Self::with_state(config, state))
    }

    fn with_state(config: ServerConfig, state: ServerState) -> Arc<Self> {
        Arc::new(Self {
            config,
            state: Mutex::new(state),
            changed: Condvar::new(),
            sink: RwLock::new(None),
            held: AtomicU32::new(0),
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn root_inode(&self) -> BuffetInode {
        self.config.root_inode()
    }

    pub fn set_push_sink(&self, sink: Arc<dyn PushSink>) {
        *self.sink.write() = Some(sink);
    }

    /// Direct access to the state machine, for step-by-step drivers.
    pub fn state(&self) -> MutexGuard<'_, ServerState> {
        self.state.lock()
    }

    /// Wakes blocked handlers after a state change made through
    /// [`BServer::state`].
    pub fn notify_changed(&self) {
        self.changed.notify_all();
    }

    /// Serves one incoming message. One-way messages return `None`.
    pub fn dispatch(&self, msg: RpcMessage) -> Option<RpcMessage> {
        use RpcMessage::*;
        let reply = match msg {
            GetDirRequest {
                dir_inode,
                client_id,
            } => self.handle_get_dir(&dir_inode, client_id),
            ReadRequest {
                inode,
                client_id,
                open_token,
                offset,
                length,
                deferred_open,
            } => self.handle_read(&inode, client_id, open_token, offset, length, deferred_open.as_ref()),
            WriteRequest {
                inode,
                client_id,
                open_token,
                offset,
                data,
                deferred_open,
            } => self.handle_write(&inode, client_id, open_token, offset, &data, deferred_open.as_ref()),
            CloseNotify {
                open_token,
                client_id,
                ..
            } => {
                self.handle_close(client_id, open_token);
                return None;
            }
            InvalidateAck { epoch, client_id } => {
                self.accept_ack(epoch, client_id);
                return None;
            }
            SetPermissionRequest {
                inode,
                new_perm,
                cred,
            } => self.handle_set_permission(&inode, new_perm, &cred),
            CreateRequest {
                parent,
                name,
                perm,
                is_dir,
            } => self.handle_create(&parent, &name, perm, is_dir),
            AdminDumpRequest { include_files } => AdminDumpReply(self.admin_dump(include_files)),
            OpenRequest {
                path,
                flags,
                cred,
                client_id,
                open_token,
                inline_limit,
            } => self.handle_open(&path, &flags, &cred, client_id, open_token, inline_limit),
            Ping { seq } => Pong { seq },
            other => RpcMessage::error(
                ErrorCode::Io,
                format!("server cannot handle {}", other.name()),
            ),
        };
        Some(reply)
    }

    /// Blocks while the directory is part of an invalidation round.
    pub fn handle_get_dir(&self, dir: &BuffetInode, client_id: u32) -> RpcMessage {
        let mut st = self.state.lock();
        loop {
            match st.get_dir(dir, client_id) {
                Err(f) => return error_reply(f),
                Ok(GetDirOutcome::Reply(r)) => return r,
                Ok(GetDirOutcome::Held { dir }) => {
                    debug!("holding GetDir of {dir} for client {client_id}");
                    self.held.fetch_add(1, Ordering::SeqCst);
                    self.changed.wait(&mut st);
                    self.held.fetch_sub(1, Ordering::SeqCst);
                }
            }
        }
    }

    pub fn handle_read(
        &self,
        inode: &BuffetInode,
        client_id: u32,
        open_token: u64,
        offset: u64,
        length: u32,
        deferred: Option<&DeferredOpen>,
    ) -> RpcMessage {
        let grant = match self
            .state
            .lock()
            .prepare_io(inode, client_id, open_token, deferred, Direction::Read)
        {
            Ok(g) => g,
            Err(f) => return error_reply(f),
        };
        if grant.truncate {
            if let Err(f) = self.truncate(&grant) {
                return error_reply(f);
            }
        }
        let data = {
            let content = grant.content.read();
            let start = (offset.min(content.len() as u64)) as usize;
            let end = (offset.saturating_add(length as u64).min(content.len() as u64)) as usize;
            content[start..end].to_vec()
        };
        let file_meta = self.state.lock().finish_io(grant.file_id, None, false);
        RpcMessage::ReadReply { data, file_meta }
    }

    pub fn handle_write(
        &self,
        inode: &BuffetInode,
        client_id: u32,
        open_token: u64,
        offset: u64,
        data: &[u8],
        deferred: Option<&DeferredOpen>,
    ) -> RpcMessage {
        let Ok(bytes_written) = u32::try_from(data.len()) else {
            return RpcMessage::error(ErrorCode::Io, "write larger than 4 GiB");
        };
        let (grant, store) = {
            let mut st = self.state.lock();
            match st.prepare_io(inode, client_id, open_token, deferred, Direction::Write) {
                Ok(g) => (g, st.store.clone()),
                Err(f) => return error_reply(f),
            }
        };
        if grant.truncate {
            if let Err(f) = self.truncate(&grant) {
                return error_reply(f);
            }
        }
        let Some(end) = offset.checked_add(data.len() as u64).filter(|e| *e <= usize::MAX as u64)
        else {
            return RpcMessage::error(ErrorCode::Io, "write past maximum file size");
        };
        // the content lock is held until the size is published
        let mut content = grant.content.write();
        let end = end as usize;
        if content.len() < end {
            content.resize(end, 0);
        }
        content[offset as usize..end].copy_from_slice(data);
        if let Some(store) = store {
            if let Err(e) = store.write_at(grant.file_id, offset, data) {
                return RpcMessage::error(ErrorCode::Io, e.to_string());
            }
        }
        let size = content.len() as u64;
        let file_meta = self.state.lock().finish_io(grant.file_id, Some(size), true);
        drop(content);
        RpcMessage::WriteReply {
            bytes_written,
            file_meta,
        }
    }

    fn truncate(&self, grant: &IoGrant) -> Result<FileMetadata, Failure> {
        let mut content = grant.content.write();
        content.clear();
        let mut st = self.state.lock();
        if let Some(store) = &st.store {
            store
                .truncate(grant.file_id, 0)
                .map_err(|e| (ErrorCode::Io, e.to_string()))?;
        }
        Ok(st.finish_io(grant.file_id, Some(0), true))
    }

    /// Idempotent: unknown tokens are ignored.
    pub fn handle_close(&self, client_id: u32, open_token: u64) {
        if !self.state.lock().close(client_id, open_token) {
            debug!("close of unknown handle ({client_id}, {open_token})");
        }
    }

    pub fn accept_ack(&self, epoch: u64, client_id: u32) {
        let mut st = self.state.lock();
        st.ack(epoch, client_id);
        drop(st);
        self.changed.notify_all();
    }

    pub fn handle_set_permission(
        &self,
        inode: &BuffetInode,
        new_perm: PermissionRecord,
        cred: &Credentials,
    ) -> RpcMessage {
        self.run_change(|st| st.begin_set_permission(inode, new_perm, cred))
    }

    pub fn handle_create(
        &self,
        parent: &BuffetInode,
        name: &str,
        perm: PermissionRecord,
        is_dir: bool,
    ) -> RpcMessage {
        self.run_change(|st| st.begin_create(parent, name, perm, is_dir))
    }

    fn run_change(
        &self,
        mut begin: impl FnMut(&mut ServerState) -> Result<ChangeOutcome, Failure>,
    ) -> RpcMessage {
        let round = {
            let mut st = self.state.lock();
            loop {
                match begin(&mut st) {
                    Err(f) => return error_reply(f),
                    Ok(ChangeOutcome::Done(reply)) => return reply,
                    Ok(ChangeOutcome::Busy { .. }) => self.changed.wait(&mut st),
                    Ok(ChangeOutcome::Pending(round)) => break round,
                }
            }
        };
        let sink = self.sink.read().clone();
        for client in &round.clients {
            let pushed = match &sink {
                Some(sink) => sink.push(*client, &round.request),
                None => Err(TransportError::Unreachable(format!("client {client}"))),
            };
            if let Err(e) = pushed {
                // an unreachable client holds nothing we need to wait for;
                // it left the registry when the round began
                warn!("invalidation push to client {client} failed: {e}");
                self.accept_ack(round.epoch, *client);
            }
        }
        let deadline = Instant::now() + self.config.ack_deadline;
        let mut st = self.state.lock();
        loop {
            if let Some(reply) = st.take_result(round.epoch) {
                drop(st);
                self.changed.notify_all();
                return reply;
            }
            if self.changed.wait_until(&mut st, deadline).timed_out() {
                if let Some(reply) = st.take_result(round.epoch) {
                    return reply;
                }
                let missing = st.abort_round(round.epoch);
                drop(st);
                self.changed.notify_all();
                warn!("round {} timed out waiting for clients {missing:?}", round.epoch);
                return RpcMessage::error(
                    ErrorCode::Io,
                    format!("timed out waiting for invalidation acks from {missing:?}"),
                );
            }
        }
    }

    /// Classic open: path walk, permission check and opened-list insertion
    /// in one request. Small files can ride back inline.
    pub fn handle_open(
        &self,
        path: &str,
        flags: &OpenFlags,
        cred: &Credentials,
        client_id: u32,
        open_token: u64,
        inline_limit: u32,
    ) -> RpcMessage {
        let grant = loop {
            let step = self
                .state
                .lock()
                .classic_open(path, flags, cred, client_id, open_token);
            match step {
                Err(f) => return error_reply(f),
                Ok(ClassicOpen::Opened(g)) => break g,
                Ok(ClassicOpen::Create { parent, name }) => {
                    let perm = PermissionRecord::file(cred.uid, cred.gid, 0o644);
                    match self.handle_create(&parent, &name, perm, false) {
                        RpcMessage::CreateReply { .. } => {}
                        RpcMessage::ErrorReply {
                            code: ErrorCode::Exists,
                            ..
                        } => {}
                        other => return other,
                    }
                }
            }
        };
        let mut file_meta = if grant.truncate {
            match self.truncate(&grant) {
                Ok(m) => m,
                Err(f) => return error_reply(f),
            }
        } else {
            self.state.lock().nodes[&grant.file_id].meta
        };
        let inline_data = if inline_limit > 0 && flags.access.can_read() {
            let content = grant.content.read();
            (content.len() <= inline_limit as usize).then(|| content.clone())
        } else {
            None
        };
        if inline_data.is_some() {
            file_meta = self.state.lock().finish_io(grant.file_id, None, false);
        }
        RpcMessage::OpenReply {
            file_meta,
            inline_data,
        }
    }

    pub fn admin_dump(&self, include_files: bool) -> ServerDump {
        self.state
            .lock()
            .dump(include_files, self.held.load(Ordering::SeqCst))
    }

    pub fn is_empty(&self) -> bool {
        self.state.lock().is_empty()
    }

    /// Number of GetDir requests currently waiting on an invalidation round.
    pub fn held_get_dirs(&self) -> u32 {
        self.held.load(Ordering::SeqCst)
    }
}
