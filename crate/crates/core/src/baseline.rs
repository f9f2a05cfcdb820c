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

//! A classic client for comparison: every open is a server round trip that
//! walks the path and records the open. In `Dom` mode small files ride back
//! inline with the open reply, so reads of them need no further request.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use log::warn;

use crate::client::{reply_error, Fd, FdTable, FileClient, HandleState, OpenHandle};
use crate::error::{FsError, FsResult};
use crate::transport::Transport;
use crate::types::{BuffetInode, ClusterConfig, Credentials, OpenFlags};
use crate::wire::RpcMessage;

pub const DEFAULT_DOM_THRESHOLD: u32 = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    Normal,
    Dom,
}

pub struct BaselineClient {
    mode: BaselineMode,
    client_id: u32,
    transport: Arc<dyn Transport>,
    cluster: ClusterConfig,
    home: BuffetInode,
    dom_threshold: u32,
    fds: FdTable,
    next_token: AtomicU64,
}

impl BaselineClient {
    pub fn new(
        mode: BaselineMode,
        client_id: u32,
        cluster: ClusterConfig,
        home: BuffetInode,
        transport: Arc<dyn Transport>,
    ) -> FsResult<Self> {
        cluster.resolve(&home)?;
        Ok(Self {
            mode,
            client_id,
            transport,
            cluster,
            home,
            dom_threshold: DEFAULT_DOM_THRESHOLD,
            fds: FdTable::default(),
            next_token: AtomicU64::new(1),
        })
    }

    pub fn with_dom_threshold(mut self, bytes: u32) -> Self {
        self.dom_threshold = bytes;
        self
    }

    pub fn mode(&self) -> BaselineMode {
        self.mode
    }

    pub fn handle(&self, fd: Fd) -> FsResult<OpenHandle> {
        Ok(self.fds.get(fd)?.lock().clone())
    }

    fn addr_for(&self, inode: &BuffetInode) -> FsResult<String> {
        Ok(self.cluster.resolve(inode)?.to_string())
    }

    pub fn open(&self, path: &str, flags: OpenFlags, cred: &Credentials) -> FsResult<Fd> {
        flags
            .validate()
            .map_err(|e| FsError::Io(e.to_string()))?;
        let open_token = self.next_token.fetch_add(1, Ordering::SeqCst);
        let inline_limit = match self.mode {
            BaselineMode::Normal => 0,
            BaselineMode::Dom => self.dom_threshold,
        };
        let addr = self.addr_for(&self.home)?;
        let reply = self.transport.call(
            &addr,
            RpcMessage::OpenRequest {
                path: path.to_string(),
                flags,
                cred: *cred,
                client_id: self.client_id,
                open_token,
                inline_limit,
            },
        )?;
        match reply {
            RpcMessage::OpenReply {
                file_meta,
                inline_data,
            } => {
                let mut h = OpenHandle::new(file_meta.inode, flags, *cred, open_token);
                h.state = HandleState::ServerOpened;
                h.inline = inline_data;
                Ok(self.fds.insert(h))
            }
            other => Err(reply_error(other)),
        }
    }

    pub fn read(&self, fd: Fd, len: u32) -> FsResult<Vec<u8>> {
        let shared = self.fds.get(fd)?;
        let mut h = shared.lock();
        if !h.flags.access.can_read() {
            return Err(FsError::AccessDenied);
        }
        if let Some(inline) = &h.inline {
            let start = h.offset.min(inline.len() as u64) as usize;
            let end = h.offset.saturating_add(u64::from(len)).min(inline.len() as u64) as usize;
            let data = inline[start..end].to_vec();
            h.offset += data.len() as u64;
            return Ok(data);
        }
        let addr = self.addr_for(&h.inode)?;
        let reply = self.transport.call(
            &addr,
            RpcMessage::ReadRequest {
                inode: h.inode,
                client_id: self.client_id,
                open_token: h.open_token,
                offset: h.offset,
                length: len,
                deferred_open: None,
            },
        )?;
        match reply {
            RpcMessage::ReadReply { data, .. } => {
                h.offset += data.len() as u64;
                Ok(data)
            }
            other => Err(reply_error(other)),
        }
    }

    pub fn write(&self, fd: Fd, data: &[u8]) -> FsResult<u32> {
        let shared = self.fds.get(fd)?;
        let mut h = shared.lock();
        if !h.flags.access.can_write() {
            return Err(FsError::AccessDenied);
        }
        let addr = self.addr_for(&h.inode)?;
        let reply = self.transport.call(
            &addr,
            RpcMessage::WriteRequest {
                inode: h.inode,
                client_id: self.client_id,
                open_token: h.open_token,
                offset: h.offset,
                data: data.to_vec(),
                deferred_open: None,
            },
        )?;
        match reply {
            RpcMessage::WriteReply { bytes_written, .. } => {
                // the inline copy no longer matches the server
                h.inline = None;
                h.offset += u64::from(bytes_written);
                Ok(bytes_written)
            }
            other => Err(reply_error(other)),
        }
    }

    pub fn close(&self, fd: Fd) -> FsResult<()> {
        let shared = self.fds.remove(fd)?;
        let mut h = shared.lock();
        h.state = HandleState::Closed;
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
        Ok(())
    }

    pub fn seek(&self, fd: Fd, offset: u64) -> FsResult<()> {
        self.fds.get(fd)?.lock().offset = offset;
        Ok(())
    }
}

impl FileClient for BaselineClient {
    fn open(&self, path: &str, flags: OpenFlags, cred: &Credentials) -> FsResult<Fd> {
        BaselineClient::open(self, path, flags, cred)
    }

    fn read(&self, fd: Fd, len: u32) -> FsResult<Vec<u8>> {
        BaselineClient::read(self, fd, len)
    }

    fn write(&self, fd: Fd, data: &[u8]) -> FsResult<u32> {
        BaselineClient::write(self, fd, data)
    }

    fn close(&self, fd: Fd) -> FsResult<()> {
        BaselineClient::close(self, fd)
    }

    fn seek(&self, fd: Fd, offset: u64) -> FsResult<()> {
        BaselineClient::seek(self, fd, offset)
    }

    fn transport(&self) -> &Arc<dyn Transport> {
        &self.transport
    }
}
