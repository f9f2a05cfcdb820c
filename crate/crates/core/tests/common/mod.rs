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

#![allow(dead_code)]

use std::sync::Arc;

use buffetfs::transport::InvalidationTarget;
use buffetfs::{
    BAgent, BServer, BuffetInode, ClusterConfig, Credentials, DirEntryRecord, LatencyModel,
    OpenFlags, PermissionRecord, RpcCounters, RpcMessage, ServerConfig, SimNetwork, Transport,
};

pub const ADDR: &str = "s1";
pub const OWNER: Credentials = Credentials::new(1000, 100);
pub const OTHER: Credentials = Credentials::new(2000, 200);

pub struct Cluster {
    pub net: Arc<SimNetwork>,
    pub server: Arc<BServer>,
}

impl Cluster {
    pub fn new() -> Self {
        Self::with_latency(LatencyModel::new(200.0, 0.0, 0.0))
    }

    pub fn with_latency(latency: LatencyModel) -> Self {
        let net = SimNetwork::new(latency);
        let server = BServer::new(ServerConfig::new(1, 0));
        net.add_server(ADDR, Arc::clone(&server));
        Self { net, server }
    }

    pub fn cluster_config(&self) -> ClusterConfig {
        ClusterConfig::new().with(1, 0, ADDR)
    }

    pub fn agent(&self, client_id: u32) -> Arc<BAgent> {
        let t: Arc<dyn Transport> = self.net.transport();
        BAgent::new(client_id, self.cluster_config(), self.server.root_inode(), t).unwrap()
    }

    pub fn root(&self) -> BuffetInode {
        self.server.root_inode()
    }

    /// Creates an entry directly on the server, bypassing any client.
    pub fn mk(&self, parent: BuffetInode, name: &str, mode: u16, dir: bool) -> DirEntryRecord {
        let perm = if dir {
            PermissionRecord::dir(OWNER.uid, OWNER.gid, mode)
        } else {
            PermissionRecord::file(OWNER.uid, OWNER.gid, mode)
        };
        match self.server.handle_create(&parent, name, perm, dir) {
            RpcMessage::CreateReply { entry } => entry,
            other => panic!("create {name}: {other:?}"),
        }
    }

    pub fn fill(&self, file: &DirEntryRecord, data: &[u8]) {
        let deferred = buffetfs::wire::DeferredOpen {
            open_token: u64::MAX - file.inode.file_id,
            flags: OpenFlags::write_only(),
            cred: OWNER,
        };
        let reply = self.server.handle_write(
            &file.inode,
            0,
            deferred.open_token,
            0,
            data,
            Some(&deferred),
        );
        assert!(matches!(reply, RpcMessage::WriteReply { .. }), "{reply:?}");
        self.server.handle_close(0, deferred.open_token);
    }

    /// `/a/b/foo` (4 KiB) plus `/a/secret` (0600) and `/a/b/bar`.
    pub fn sample_tree(&self) -> Sample {
        let a = self.mk(self.root(), "a", 0o755, true);
        let b = self.mk(a.inode, "b", 0o755, true);
        let foo = self.mk(b.inode, "foo", 0o644, false);
        let bar = self.mk(b.inode, "bar", 0o644, false);
        let secret = self.mk(a.inode, "secret", 0o600, false);
        self.fill(&foo, &pattern(4096));
        Sample {
            a,
            b,
            foo,
            bar,
            secret,
        }
    }
}

pub struct Sample {
    pub a: DirEntryRecord,
    pub b: DirEntryRecord,
    pub foo: DirEntryRecord,
    pub bar: DirEntryRecord,
    pub secret: DirEntryRecord,
}

pub fn pattern(len: usize) -> Vec<u8> {
    (0..len).map(|i| (i * 31 % 251) as u8).collect()
}

pub fn delta(after: &RpcCounters, before: &RpcCounters) -> (u64, u64) {
    (
        after.sync_rpcs - before.sync_rpcs,
        after.async_msgs - before.async_msgs,
    )
}

pub fn get_dirs(c: &RpcCounters) -> u64 {
    c.count("GetDirRequest")
}

pub fn as_target(agent: &Arc<BAgent>) -> Arc<dyn InvalidationTarget> {
    Arc::clone(agent) as Arc<dyn InvalidationTarget>
}
