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

//! BuffetFS: a distributed file system protocol that admits `open` on the
//! client from cached, permission-bearing directory entries.
//!
//! * [`types`] and [`wire`]: shared records, the permission check and the
//!   binary message codec.
//! * [`server`]: the storage server with its opened-file list, per-directory
//!   client registries and ack-gated metadata changes.
//! * [`client`]: the agent with its cached tree and descriptor table.
//! * [`baseline`]: a classic open-per-request client for comparison.
//! * [`transport`]: simulated and TCP message delivery with RPC accounting.

pub mod baseline;
pub mod client;
pub mod error;
pub mod server;
#[cfg(feature = "testing")]
pub mod testing;
pub mod transport;
pub mod types;
pub mod wire;

pub use baseline::{BaselineClient, BaselineMode};
pub use client::{BAgent, BLib, CacheNode, Fd, FileClient, HandleState};
pub use error::{FsError, FsResult};
pub use server::{BServer, ServerConfig};
pub use transport::{LatencyModel, RpcCounters, SimNetwork, SimTransport, Transport};
pub use types::{
    access_mask_for, check_permission, AccessMask, AccessMode, BuffetInode, ClusterConfig,
    Credentials, DirEntryRecord, FileMetadata, OpenFlags, PermissionRecord,
};
pub use wire::{ErrorCode, RpcMessage};
