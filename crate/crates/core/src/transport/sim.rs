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

//! In-process network. Server handlers run on the caller's thread; every
//! message still crosses the binary codec in both directions so the sim
//! exercises exactly the bytes a socket would carry.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Weak};
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use parking_lot::{Condvar, Mutex, RwLock};

use super::{CounterSet, InvalidationTarget, LatencyModel, RpcCounters, Transport, TransportError};
use crate::server::{BServer, PushSink};
use crate::wire::{decode_message, encode_message, RpcMessage};

struct Queue {
    items: VecDeque<(String, Vec<u8>)>,
    // queued plus being processed
    outstanding: usize,
}

struct Shared {
    latency: LatencyModel,
    servers: RwLock<HashMap<String, Arc<BServer>>>,
    agents: RwLock<HashMap<u32, Weak<dyn InvalidationTarget>>>,
    queue: Mutex<Queue>,
    queued: Condvar,
    idle: Condvar,
    push_counters: CounterSet,
}

impl Shared {
    fn server(&self, addr: &str) -> Result<Arc<BServer>, TransportError> {
        self.servers
            .read()
            .get(addr)
            .cloned()
            .ok_or_else(|| TransportError::Unreachable(addr.to_string()))
    }

    fn deliver(&self, addr: &str, frame: &[u8]) {
        let msg = match decode_message(frame) {
            Ok(m) => m,
            Err(e) => {
                warn!("dropping undecodable async message to {addr}: {e}");
                return;
            }
        };
        match self.server(addr) {
            Ok(server) => {
                server.dispatch(msg);
            }
            Err(e) => warn!("dropping {} : {e}", msg.name()),
        }
    }

    fn drain(&self) {
        let mut q = self.queue.lock();
        while q.outstanding > 0 {
            self.idle.wait(&mut q);
        }
    }
}

fn delivery_loop(shared: Weak<Shared>) {
    loop {
        let Some(sh) = shared.upgrade() else {
            return;
        };
        let next = {
            let mut q = sh.queue.lock();
            if q.items.is_empty() {
                sh.queued.wait_for(&mut q, Duration::from_millis(100));
            }
            q.items.pop_front()
        };
        if let Some((addr, frame)) = next {
            sh.deliver(&addr, &frame);
            let mut q = sh.queue.lock();
            q.outstanding -= 1;
            if q.outstanding == 0 {
                sh.idle.notify_all();
            }
        }
    }
}

/// A simulated cluster: servers by address, agents by client id, and one
/// FIFO for asynchronous traffic.
pub struct SimNetwork {
    shared: Arc<Shared>,
}

impl SimNetwork {
    pub fn new(latency: LatencyModel) -> Arc<Self> {
        assert!(latency.is_valid(), "latency model parameters must be non-negative");
        let shared = Arc::new(Shared {
            latency,
            servers: RwLock::new(HashMap::new()),
            agents: RwLock::new(HashMap::new()),
            queue: Mutex::new(Queue {
                items: VecDeque::new(),
                outstanding: 0,
            }),
            queued: Condvar::new(),
            idle: Condvar::new(),
            push_counters: CounterSet::default(),
        });
        let weak = Arc::downgrade(&shared);
        thread::Builder::new()
            .name("sim-async".into())
            .spawn(move || delivery_loop(weak))
            .expect("spawn sim delivery thread");
        Arc::new(Self { shared })
    }

    pub fn latency(&self) -> LatencyModel {
        self.shared.latency
    }

    /// Attaches a server under `addr` and routes its invalidation pushes
    /// through this network.
    pub fn add_server(&self, addr: impl Into<String>, server: Arc<BServer>) {
        let addr = addr.into();
        server.set_push_sink(Arc::new(SimPushSink {
            shared: Arc::downgrade(&self.shared),
            server: Arc::downgrade(&server),
        }));
        self.shared.servers.write().insert(addr, server);
    }

    pub fn remove_server(&self, addr: &str) -> Option<Arc<BServer>> {
        self.shared.servers.write().remove(addr)
    }

    pub fn server(&self, addr: &str) -> Option<Arc<BServer>> {
        self.shared.servers.read().get(addr).cloned()
    }

    /// A new client endpoint with its own counters.
    pub fn transport(&self) -> Arc<SimTransport> {
        Arc::new(SimTransport {
            shared: Arc::clone(&self.shared),
            counters: CounterSet::default(),
        })
    }

    /// Invalidations and acks carried on the push channels.
    pub fn push_counters(&self) -> RpcCounters {
        self.shared.push_counters.snapshot()
    }

    pub fn drain(&self) {
        self.shared.drain();
    }
}

struct SimPushSink {
    shared: Weak<Shared>,
    server: Weak<BServer>,
}

impl PushSink for SimPushSink {
    fn push(&self, client_id: u32, req: &RpcMessage) -> Result<(), TransportError> {
        let shared = self
            .shared
            .upgrade()
            .ok_or_else(|| TransportError::Unreachable("network".into()))?;
        let target = shared
            .agents
            .read()
            .get(&client_id)
            .and_then(Weak::upgrade)
            .ok_or_else(|| TransportError::Unreachable(format!("client {client_id}")))?;
        let frame = encode_message(req)?;
        shared.push_counters.record_async(req.tag(), frame.len());
        let ack = target.handle_invalidate(&decode_message(&frame)?);
        let frame = encode_message(&ack)?;
        shared.push_counters.record_async(ack.tag(), frame.len());
        match decode_message(&frame)? {
            RpcMessage::InvalidateAck { epoch, client_id } => {
                if let Some(server) = self.server.upgrade() {
                    server.accept_ack(epoch, client_id);
                }
                Ok(())
            }
            other => Err(TransportError::WrongKind(other.name())),
        }
    }
}

/// One client's view of a [`SimNetwork`].
pub struct SimTransport {
    shared: Arc<Shared>,
    counters: CounterSet,
}

impl SimTransport {
    pub fn latency(&self) -> LatencyModel {
        self.shared.latency
    }
}

impl Transport for SimTransport {
    fn call(&self, addr: &str, msg: RpcMessage) -> Result<RpcMessage, TransportError> {
        if !msg.expects_reply() {
            return Err(TransportError::WrongKind(msg.name()));
        }
        let server = self.shared.server(addr)?;
        let req_frame = encode_message(&msg)?;
        let req = decode_message(&req_frame)?;
        let reply = server
            .dispatch(req)
            .ok_or(TransportError::WrongKind(msg.name()))?;
        let reply_frame = encode_message(&reply)?;
        let reply = decode_message(&reply_frame)?;
        let cost = self.shared.latency.exchange_cost_ns(&msg, &reply);
        self.counters
            .record_call(msg.tag(), req_frame.len(), reply_frame.len(), cost);
        Ok(reply)
    }

    fn notify(&self, addr: &str, msg: RpcMessage) -> Result<(), TransportError> {
        if !msg.is_one_way() {
            return Err(TransportError::WrongKind(msg.name()));
        }
        if !self.shared.servers.read().contains_key(addr) {
            warn!("async {} to unknown endpoint {addr} dropped", msg.name());
            return Ok(());
        }
        let frame = encode_message(&msg)?;
        self.counters.record_async(msg.tag(), frame.len());
        let mut q = self.shared.queue.lock();
        q.items.push_back((addr.to_string(), frame));
        q.outstanding += 1;
        self.shared.queued.notify_one();
        Ok(())
    }

    fn drain(&self) {
        self.shared.drain();
    }

    fn register_push(
        &self,
        addr: &str,
        target: Weak<dyn InvalidationTarget>,
    ) -> Result<(), TransportError> {
        self.shared.server(addr)?;
        let Some(t) = target.upgrade() else {
            return Err(TransportError::Unreachable("agent dropped".into()));
        };
        debug!("client {} registered for pushes from {addr}", t.client_id());
        self.shared.agents.write().insert(t.client_id(), target);
        Ok(())
    }

    fn snapshot_counters(&self) -> RpcCounters {
        self.counters.snapshot()
    }

    fn reset_counters(&self) {
        self.counters.reset();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::server::ServerConfig;
    use crate::types::{BuffetInode, PermissionRecord};

    fn net(latency: LatencyModel) -> (Arc<SimNetwork>, Arc<BServer>) {
        let net = SimNetwork::new(latency);
        let server = BServer::new(ServerConfig::new(1, 0));
        net.add_server("s1", Arc::clone(&server));
        (net, server)
    }

    fn get_root() -> RpcMessage {
        RpcMessage::GetDirRequest {
            dir_inode: BuffetInode::root(1, 0),
            client_id: 1,
        }
    }

    #[test]
    fn get_dir_costs_one_round_trip() {
        let (net, _) = net(LatencyModel::new(200.0, 0.0, 0.0));
        let t = net.transport();
        assert!(matches!(t.call("s1", get_root()).unwrap(), RpcMessage::GetDirReply { .. }));
        let c = t.snapshot_counters();
        assert_eq!(c.elapsed_ns, 200_000);
        t.call("s1", get_root()).unwrap();
        assert_eq!(t.snapshot_counters().sync_rpcs, 2);
    }

    #[test]
    fn unknown_endpoint_is_unreachable() {
        let (net, _) = net(LatencyModel::default());
        let t = net.transport();
        assert!(matches!(t.call("nowhere", get_root()), Err(TransportError::Unreachable(_))));
    }

    #[test]
    fn one_way_messages_are_not_calls() {
        let (net, _) = net(LatencyModel::default());
        let t = net.transport();
        let close = RpcMessage::CloseNotify {
            inode: BuffetInode::new(1, 0, 1),
            open_token: 1,
            client_id: 1,
        };
        assert!(matches!(t.call("s1", close.clone()), Err(TransportError::WrongKind(_))));
        assert!(matches!(t.notify("s1", get_root()), Err(TransportError::WrongKind(_))));
        for _ in 0..100 {
            t.notify("s1", close.clone()).unwrap();
        }
        t.drain();
        t.drain();
        let c = t.snapshot_counters();
        assert_eq!((c.sync_rpcs, c.async_msgs, c.elapsed_ns), (0, 100, 0));
    }

    #[test]
    fn error_reply_is_a_value() {
        let (net, _) = net(LatencyModel::default());
        let t = net.transport();
        let reply = t
            .call(
                "s1",
                RpcMessage::GetDirRequest {
                    dir_inode: BuffetInode::root(1, 5),
                    client_id: 1,
                },
            )
            .unwrap();
        assert!(matches!(reply, RpcMessage::ErrorReply { .. }));
    }

    #[test]
    fn create_reply_travels_through_codec() {
        let (net, _) = net(LatencyModel::default());
        let t = net.transport();
        let reply = t
            .call(
                "s1",
                RpcMessage::CreateRequest {
                    parent: BuffetInode::root(1, 0),
                    name: "x".into(),
                    perm: PermissionRecord::file(1, 1, 0o644),
                    is_dir: false,
                },
            )
            .unwrap();
        match reply {
            RpcMessage::CreateReply { entry } => assert_eq!(entry.name, "x"),
            other => panic!("{other:?}"),
        }
        assert_eq!(t.snapshot_counters().count("CreateRequest"), 1);
    }
}
