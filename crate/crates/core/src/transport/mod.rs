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

//! Message delivery between agents and servers.
//!
//! Two implementations share the [`Transport`] contract: [`sim`] runs server
//! handlers in-process and charges a [`LatencyModel`] to a simulated clock,
//! [`socket`] speaks the framed wire protocol over TCP and charges wall time.
//! Both count synchronous RPCs and asynchronous messages identically.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Weak;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wire::{tag, tag_name, RpcMessage, WireError};

pub mod sim;
pub mod socket;

pub use sim::{SimNetwork, SimTransport};
pub use socket::{SocketServer, SocketTransport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("endpoint {0} unreachable")]
    Unreachable(String),
    #[error("decode failure: {0}")]
    Decode(#[from] WireError),
    #[error("{0} is not valid for this operation")]
    WrongKind(&'static str),
    #[error("i/o: {0}")]
    Io(String),
}

/// Client side of a server push channel.
pub trait InvalidationTarget: Send + Sync {
    fn client_id(&self) -> u32;
    /// Must return only after the invalidated entries can no longer be used.
    fn handle_invalidate(&self, req: &RpcMessage) -> RpcMessage;
}

pub trait Transport: Send + Sync {
    /// Synchronous request/reply. An `ErrorReply` is a normal return value.
    fn call(&self, addr: &str, msg: RpcMessage) -> Result<RpcMessage, TransportError>;

    /// Queues a one-way message and returns before delivery. Delivery
    /// failures go to the log, not the caller.
    fn notify(&self, addr: &str, msg: RpcMessage) -> Result<(), TransportError>;

    /// Returns once every queued one-way message has been processed.
    fn drain(&self);

    /// Opens the server→client channel used for invalidations.
    fn register_push(
        &self,
        addr: &str,
        target: Weak<dyn InvalidationTarget>,
    ) -> Result<(), TransportError>;

    fn snapshot_counters(&self) -> RpcCounters;

    fn reset_counters(&self);
}

/// Cost of one synchronous round trip, all in microseconds:
/// `rtt + per_byte * payload_bytes + service_time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub rtt_us: f64,
    pub per_byte_us: f64,
    pub service_us: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            rtt_us: 200.0,
            per_byte_us: 0.01,
            service_us: 50.0,
        }
    }
}

impl LatencyModel {
    pub fn new(rtt_us: f64, per_byte_us: f64, service_us: f64) -> Self {
        let m = Self {
            rtt_us,
            per_byte_us,
            service_us,
        };
        assert!(m.is_valid(), "latency model parameters must be non-negative");
        m
    }

    pub fn is_valid(&self) -> bool {
        [self.rtt_us, self.per_byte_us, self.service_us]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }

    /// Cost in whole nanoseconds. Integer accumulation keeps totals
    /// independent of the order concurrent flows add them in.
    pub fn call_cost_ns(&self, payload_bytes: usize) -> u64 {
        let us = self.rtt_us + self.per_byte_us * payload_bytes as f64 + self.service_us;
        (us * 1000.0).round() as u64
    }

    /// Cost of one request/reply exchange. A classic open whose reply
    /// inlines file data performs the metadata open and a data read on the
    /// server, so it is charged two service times.
    pub fn exchange_cost_ns(&self, req: &RpcMessage, reply: &RpcMessage) -> u64 {
        let base = self.call_cost_ns(req.payload_len() + reply.payload_len());
        match reply {
            RpcMessage::OpenReply {
                inline_data: Some(_),
                ..
            } => base + (self.service_us * 1000.0).round() as u64,
            _ => base,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RpcCounters {
    pub sync_rpcs: u64,
    pub async_msgs: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    /// Simulated nanoseconds on the sim transport, wall nanoseconds on sockets.
    pub elapsed_ns: u64,
    /// Keyed by message name: request names for synchronous calls, message
    /// names for one-way traffic.
    pub per_type: BTreeMap<String, u64>,
}

impl RpcCounters {
    pub fn elapsed_us(&self) -> f64 {
        self.elapsed_ns as f64 / 1000.0
    }

    pub fn count(&self, name: &str) -> u64 {
        self.per_type.get(name).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &RpcCounters) {
        self.sync_rpcs += other.sync_rpcs;
        self.async_msgs += other.async_msgs;
        self.bytes_sent += other.bytes_sent;
        self.bytes_received += other.bytes_received;
        self.elapsed_ns += other.elapsed_ns;
        for (k, v) in &other.per_type {
            *self.per_type.entry(k.clone()).or_default() += v;
        }
    }
}

const TAG_SLOTS: usize = 32;

/// Lock-free counter set shared by the transport implementations.
#[derive(Debug)]
pub struct CounterSet {
    sync_rpcs: AtomicU64,
    async_msgs: AtomicU64,
    bytes_sent: AtomicU64,
    bytes_received: AtomicU64,
    elapsed_ns: AtomicU64,
    per_tag: [AtomicU64; TAG_SLOTS],
    // serializes snapshot against reset
    gate: Mutex<()>,
}

impl Default for CounterSet {
    fn default() -> Self {
        Self {
            sync_rpcs: AtomicU64::new(0),
            async_msgs: AtomicU64::new(0),
            bytes_sent: AtomicU64::new(0),
            bytes_received: AtomicU64::new(0),
            elapsed_ns: AtomicU64::new(0),
            per_tag: std::array::from_fn(|_| AtomicU64::new(0)),
            gate: Mutex::new(()),
        }
    }
}

impl CounterSet {
    pub fn record_call(&self, tag: u8, sent: usize, received: usize, elapsed_ns: u64) {
        self.sync_rpcs.fetch_add(1, Ordering::Relaxed);
        self.bytes_sent.fetch_add(sent as u64, Ordering::Relaxed);
        self.bytes_received
            .fetch_add(received as u64, Ordering::Relaxed);
        self.elapsed_ns.fetch_add(elapsed_ns, Ordering::Relaxed);
        self.per_tag[tag as usize % TAG_SLOTS].fetch_add(1, Ordering::Relaxed);
        let metadata = !matches!(tag, tag::READ_REQUEST | tag::WRITE_REQUEST);
        flow::add(1, 0, u64::from(metadata), elapsed_ns);
    }

    pub fn record_async(&self, tag: u8, sent: usize) {
        self.async_msgs.fetch_add(1, Ordering::Relaxed);
        self.bytes_sent.fetch_add(sent as u64, Ordering::Relaxed);
        self.per_tag[tag as usize % TAG_SLOTS].fetch_add(1, Ordering::Relaxed);
        flow::add(0, 1, 0, 0);
    }

    pub fn snapshot(&self) -> RpcCounters {
        let _g = self.gate.lock();
        let per_type = self
            .per_tag
            .iter()
            .enumerate()
            .filter_map(|(tag, n)| {
                let n = n.load(Ordering::Relaxed);
                (n > 0).then(|| (tag_name(tag as u8).to_string(), n))
            })
            .collect();
        RpcCounters {
            sync_rpcs: self.sync_rpcs.load(Ordering::Relaxed),
            async_msgs: self.async_msgs.load(Ordering::Relaxed),
            bytes_sent: self.bytes_sent.load(Ordering::Relaxed),
            bytes_received: self.bytes_received.load(Ordering::Relaxed),
            elapsed_ns: self.elapsed_ns.load(Ordering::Relaxed),
            per_type,
        }
    }

    pub fn reset(&self) {
        let _g = self.gate.lock();
        for c in [
            &self.sync_rpcs,
            &self.async_msgs,
            &self.bytes_sent,
            &self.bytes_received,
            &self.elapsed_ns,
        ] {
            c.store(0, Ordering::Relaxed);
        }
        for c in &self.per_tag {
            c.store(0, Ordering::Relaxed);
        }
    }
}

/// Per-thread accounting. Every transport also charges the calling thread,
/// so a worker can attribute RPCs and latency to its own operations even
/// when it shares an agent with other workers.
pub mod flow {
    use super::*;

    #[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
    pub struct FlowStats {
        pub sync_rpcs: u64,
        pub async_msgs: u64,
        /// Synchronous calls other than data reads and writes.
        pub metadata_rpcs: u64,
        pub elapsed_ns: u64,
    }

    impl FlowStats {
        pub fn since(&self, earlier: &FlowStats) -> FlowStats {
            FlowStats {
                sync_rpcs: self.sync_rpcs - earlier.sync_rpcs,
                async_msgs: self.async_msgs - earlier.async_msgs,
                metadata_rpcs: self.metadata_rpcs - earlier.metadata_rpcs,
                elapsed_ns: self.elapsed_ns - earlier.elapsed_ns,
            }
        }
    }

    thread_local! {
        static FLOW: Cell<FlowStats> = const { Cell::new(FlowStats { sync_rpcs: 0, async_msgs: 0, metadata_rpcs: 0, elapsed_ns: 0 }) };
    }

    pub(super) fn add(sync: u64, asynchronous: u64, metadata: u64, elapsed_ns: u64) {
        FLOW.with(|f| {
            let mut s = f.get();
            s.sync_rpcs += sync;
            s.async_msgs += asynchronous;
            s.metadata_rpcs += metadata;
            s.elapsed_ns += elapsed_ns;
            f.set(s);
        });
    }

    pub fn current() -> FlowStats {
        FLOW.with(|f| f.get())
    }
}
