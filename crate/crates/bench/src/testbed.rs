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

//! A server plus a factory for clients of each kind on the configured
//! transport.

use std::ops::Deref;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use buffetfs::transport::{SocketServer, SocketTransport};
use buffetfs::{
    BAgent, BServer, BaselineClient, BaselineMode, BuffetInode, ClusterConfig, Credentials,
    FileClient, OpenFlags, ServerConfig, SimNetwork, Transport,
};
use log::info;

use crate::config::{BenchConfig, ClientKind, TransportChoice};
use crate::manifest::Manifest;
use crate::BenchError;

/// Identity every benchmark file is created and read under.
pub const BENCH_CRED: Credentials = Credentials::new(1000, 100);

const SIM_ADDR: &str = "bserver";
const HOST_ID: u32 = 1;

enum Backend {
    Sim(Arc<SimNetwork>),
    /// `None` when the server runs in another process. Held so the
    /// listener lives as long as the testbed.
    Socket { _server: Option<SocketServer> },
}

pub struct Testbed {
    backend: Backend,
    addr: String,
    root: BuffetInode,
    next_client: AtomicU32,
}

#[derive(Clone)]
pub enum Client {
    Agent(Arc<BAgent>),
    Baseline(Arc<BaselineClient>),
}

impl Deref for Client {
    type Target = dyn FileClient;

    fn deref(&self) -> &Self::Target {
        match self {
            Client::Agent(a) => a.as_ref(),
            Client::Baseline(b) => b.as_ref(),
        }
    }
}

impl Client {
    /// Fetches every directory listing so later opens resolve from cache.
    /// Baseline clients keep no cache, so this is a no-op for them.
    pub fn warm(&self, manifest: &Manifest) -> Result<(), BenchError> {
        if let Client::Agent(a) = self {
            for dir in &manifest.dirs {
                a.readdir(dir, &BENCH_CRED)?;
            }
        }
        Ok(())
    }
}

impl Testbed {
    pub fn new(cfg: &BenchConfig) -> Result<Self, BenchError> {
        let root = ServerConfig::new(HOST_ID, 0).root_inode();
        let (backend, addr) = match (cfg.transport, &cfg.server_addr) {
            (TransportChoice::Sim, _) => {
                let net = SimNetwork::new(cfg.latency);
                net.add_server(SIM_ADDR, BServer::new(ServerConfig::new(HOST_ID, 0)));
                (Backend::Sim(net), SIM_ADDR.to_string())
            }
            (TransportChoice::Socket, Some(addr)) => (Backend::Socket { _server: None }, addr.clone()),
            (TransportChoice::Socket, None) => {
                let server = SocketServer::bind("127.0.0.1:0", BServer::new(ServerConfig::new(HOST_ID, 0)))?;
                let addr = server.local_addr().to_string();
                info!("private server listening on {addr}");
                (Backend::Socket { _server: Some(server) }, addr)
            }
        };
        Ok(Self {
            backend,
            addr,
            root,
            next_client: AtomicU32::new(1),
        })
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    pub fn is_simulated(&self) -> bool {
        matches!(self.backend, Backend::Sim(_))
    }

    /// The in-process server, if there is one.
    pub fn server(&self) -> Option<Arc<BServer>> {
        match &self.backend {
            Backend::Sim(net) => net.server(SIM_ADDR),
            Backend::Socket { .. } => None,
        }
    }

    fn cluster(&self) -> ClusterConfig {
        ClusterConfig::new().with(HOST_ID, 0, self.addr.clone())
    }

    fn transport(&self) -> Arc<dyn Transport> {
        match &self.backend {
            Backend::Sim(net) => net.transport(),
            Backend::Socket { .. } => Arc::new(SocketTransport::new()),
        }
    }

    pub fn agent(&self) -> Result<Arc<BAgent>, BenchError> {
        let id = self.next_client.fetch_add(1, Ordering::SeqCst);
        Ok(BAgent::new(id, self.cluster(), self.root, self.transport())?)
    }

    pub fn client(&self, kind: ClientKind) -> Result<Client, BenchError> {
        let mode = match kind {
            ClientKind::BuffetFs => return Ok(Client::Agent(self.agent()?)),
            ClientKind::BaselineNormal => BaselineMode::Normal,
            ClientKind::BaselineDom => BaselineMode::Dom,
        };
        let id = self.next_client.fetch_add(1, Ordering::SeqCst);
        let c = BaselineClient::new(mode, id, self.cluster(), self.root, self.transport())?;
        Ok(Client::Baseline(Arc::new(c)))
    }

    pub fn is_empty(&self) -> Result<bool, BenchError> {
        Ok(self.agent()?.readdir("/", &BENCH_CRED)?.is_empty())
    }

    /// Creates the manifest's directories and files through a client.
    /// Fails with `Exists` unless the server is empty.
    pub fn populate(&self, manifest: &Manifest) -> Result<(), BenchError> {
        let agent = self.agent()?;
        if !agent.readdir("/", &BENCH_CRED)?.is_empty() {
            return Err(BenchError::Exists);
        }
        for dir in &manifest.dirs {
            agent.mkdir(dir, 0o755, &BENCH_CRED)?;
        }
        let create = OpenFlags::write_only().with_create();
        for (i, path) in manifest.files.iter().enumerate() {
            let fd = agent.open(path, create, &BENCH_CRED)?;
            if manifest.file_size > 0 {
                agent.write(fd, &manifest.content(i))?;
            }
            agent.close(fd)?;
        }
        FileClient::drain(&agent);
        info!(
            "populated {} files in {} directories",
            manifest.files.len(),
            manifest.dirs.len()
        );
        Ok(())
    }
}
