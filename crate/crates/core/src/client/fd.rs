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

//! Descriptor table shared by the client kinds.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::error::{FsError, FsResult};
use crate::types::{BuffetInode, Credentials, OpenFlags};

pub const FIRST_FD: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fd(pub u32);

impl fmt::Display for Fd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fd{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandleState {
    /// Admitted locally; the server has not seen this open yet.
    Incomplete,
    ServerOpened,
    Closed,
}

#[derive(Debug, Clone)]
pub struct OpenHandle {
    pub inode: BuffetInode,
    pub flags: OpenFlags,
    pub cred: Credentials,
    pub offset: u64,
    pub open_token: u64,
    pub state: HandleState,
    /// File content returned inline by a classic open.
    pub inline: Option<Vec<u8>>,
}

impl OpenHandle {
    pub fn new(inode: BuffetInode, flags: OpenFlags, cred: Credentials, open_token: u64) -> Self {
        Self {
            inode,
            flags,
            cred,
            offset: 0,
            open_token,
            state: HandleState::Incomplete,
            inline: None,
        }
    }
}

pub type SharedHandle = Arc<Mutex<OpenHandle>>;

/// Descriptors start at 3 and are never reused.
#[derive(Debug)]
pub struct FdTable {
    handles: Mutex<HashMap<u32, SharedHandle>>,
    next: AtomicU32,
}

impl Default for FdTable {
    fn default() -> Self {
        Self {
            handles: Mutex::new(HashMap::new()),
            next: AtomicU32::new(FIRST_FD),
        }
    }
}

impl FdTable {
    pub fn insert(&self, handle: OpenHandle) -> Fd {
        let fd = self.next.fetch_add(1, Ordering::SeqCst);
        self.handles
            .lock()
            .insert(fd, Arc::new(Mutex::new(handle)));
        Fd(fd)
    }

    pub fn get(&self, fd: Fd) -> FsResult<SharedHandle> {
        self.handles
            .lock()
            .get(&fd.0)
            .cloned()
            .ok_or(FsError::BadHandle)
    }

    /// Removes the descriptor; later lookups fail with `BadHandle`.
    pub fn remove(&self, fd: Fd) -> FsResult<SharedHandle> {
        self.handles.lock().remove(&fd.0).ok_or(FsError::BadHandle)
    }

    pub fn len(&self) -> usize {
        self.handles.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
