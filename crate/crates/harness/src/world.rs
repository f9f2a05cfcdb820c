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

//! Shared state between the executor and its actor threads, plus the
//! transport those actors talk through.
//!
//! Exactly one thread makes progress at a time. The executor hands a step
//! to an actor and waits until that actor is idle or parked; a parked actor
//! resumes only when the executor pokes it.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::{Arc, Weak};

use buffetfs::server::{ChangeOutcome, Failure, GetDirOutcome, PendingRound, ServerState};
use buffetfs::transport::{CounterSet, InvalidationTarget, TransportError};
use buffetfs::wire::encode_message;
use buffetfs::{BServer, RpcCounters, RpcMessage, Transport};
use log::trace;
use parking_lot::{Condvar, Mutex};

use crate::executor::StepResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Status {
    Idle,
    Running,
    Parked(Wait),
}

/// What a parked actor is waiting for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wait {
    /// A directory read held by an invalidation round.
    HeldGetDir { dir: u64 },
    /// Acks for a round this actor started.
    Round { epoch: u64 },
    /// Another round locks a directory this change needs.
    Busy,
}

#[derive(Default)]
pub(crate) struct Sched {
    pub status: BTreeMap<u32, Status>,
    pub finished: Vec<(u32, StepResult)>,
    /// Bumped whenever any actor does something observable.
    pub progress: u64,
    pub stopping: bool,
}

pub(crate) struct World {
    pub server: Arc<BServer>,
    pub sched: Mutex<Sched>,
    pub cv: Condvar,
    /// Pushed invalidations awaiting delivery, per receiving client.
    pub inbox: Mutex<BTreeMap<u32, VecDeque<RpcMessage>>>,
    /// One-way messages awaiting delivery, per sending actor.
    pub outbox: Mutex<BTreeMap<u32, VecDeque<RpcMessage>>>,
    pub targets: Mutex<HashMap<u32, Weak<dyn InvalidationTarget>>>,
}

impl World {
    pub fn new(server: Arc<BServer>) -> Arc<Self> {
        Arc::new(Self {
            server,
            sched: Mutex::new(Sched::default()),
            cv: Condvar::new(),
            inbox: Mutex::new(BTreeMap::new()),
            outbox: Mutex::new(BTreeMap::new()),
            targets: Mutex::new(HashMap::new()),
        })
    }

    pub fn bump(&self) {
        self.sched.lock().progress += 1;
    }

    pub fn status(&self, actor: u32) -> Status {
        self.sched.lock().status.get(&actor).copied().unwrap_or(Status::Idle)
    }

    /// Blocks until no actor is running.
    pub fn wait_quiet(&self) {
        let mut s = self.sched.lock();
        while s.status.values().any(|st| *st == Status::Running) {
            self.cv.wait(&mut s);
        }
    }

    /// Lets one parked actor re-check its condition and waits for it to stop
    /// again. Returns true if anything observable happened.
    pub fn poke(&self, actor: u32) -> bool {
        let before = {
            let mut s = self.sched.lock();
            if !matches!(s.status.get(&actor), Some(Status::Parked(_))) {
                return false;
            }
            s.status.insert(actor, Status::Running);
            s.progress
        };
        self.cv.notify_all();
        self.wait_quiet();
        self.sched.lock().progress != before
    }

    /// Pokes parked actors until none of them can move.
    pub fn settle(&self) {
        self.wait_quiet();
        loop {
            let parked: Vec<u32> = {
                let s = self.sched.lock();
                s.status
                    .iter()
                    .filter(|(_, st)| matches!(st, Status::Parked(_)))
                    .map(|(id, _)| *id)
                    .collect()
            };
            let mut moved = false;
            for id in parked {
                moved |= self.poke(id);
            }
            if !moved {
                return;
            }
        }
    }

    pub fn parked(&self) -> Vec<(u32, Wait)> {
        self.sched
            .lock()
            .status
            .iter()
            .filter_map(|(id, st)| match st {
                Status::Parked(w) => Some((*id, *w)),
                _ => None,
            })
            .collect()
    }

    pub fn queue_push(&self, round: &PendingRound) {
        let mut inbox = self.inbox.lock();
        for c in &round.clients {
            inbox.entry(*c).or_default().push_back(round.request.clone());
        }
    }

    pub fn pending_invalidations(&self, client: u32) -> usize {
        self.inbox.lock().get(&client).map_or(0, VecDeque::len)
    }

    pub fn pending_async(&self, actor: u32) -> usize {
        self.outbox.lock().get(&actor).map_or(0, VecDeque::len)
    }

    /// Delivers the oldest invalidation queued for `client` and feeds its
    /// ack back to the server. Returns the round's epoch.
    pub fn deliver_invalidation(&self, client: u32) -> Option<u64> {
        let req = self.inbox.lock().get_mut(&client)?.pop_front()?;
        let RpcMessage::InvalidateRequest { epoch, .. } = req else {
            unreachable!("only invalidations are queued for clients");
        };
        let target = self.targets.lock().get(&client).and_then(Weak::upgrade);
        match target {
            Some(t) => match t.handle_invalidate(&req) {
                RpcMessage::InvalidateAck { epoch, client_id } => {
                    self.server.state().ack(epoch, client_id);
                }
                other => panic!("client {client} answered an invalidation with {other:?}"),
            },
            // a client that is gone holds no cache
            None => {
                self.server.state().ack(epoch, client);
            }
        }
        self.bump();
        Some(epoch)
    }

    pub fn deliver_async(&self, actor: u32) -> Option<RpcMessage> {
        let msg = self.outbox.lock().get_mut(&actor)?.pop_front()?;
        let reply = self.server.dispatch(msg.clone());
        debug_assert!(reply.is_none());
        self.bump();
        Some(msg)
    }

    /// Parks the calling actor until `poll` yields a value.
    fn park_until<T>(
        &self,
        actor: u32,
        mut poll: impl FnMut(&mut ServerState) -> Result<T, Wait>,
    ) -> Result<T, TransportError> {
        loop {
            let wait = {
                let mut st = self.server.state();
                match poll(&mut st) {
                    Ok(v) => {
                        drop(st);
                        self.bump();
                        return Ok(v);
                    }
                    Err(w) => w,
                }
            };
            let mut s = self.sched.lock();
            s.status.insert(actor, Status::Parked(wait));
            trace!("actor {actor} parked on {wait:?}");
            self.cv.notify_all();
            loop {
                if s.stopping {
                    return Err(TransportError::Io("harness stopped".into()));
                }
                if s.status.get(&actor) == Some(&Status::Running) {
                    break;
                }
                self.cv.wait(&mut s);
            }
        }
    }
}

fn failure(f: Failure) -> RpcMessage {
    RpcMessage::error(f.0, f.1)
}

/// Transport used by one actor. Requests are served directly from the
/// server state; anything that would block parks the actor instead.
pub struct HarnessTransport {
    world: Arc<World>,
    actor: u32,
    counters: CounterSet,
}

impl HarnessTransport {
    pub(crate) fn new(world: Arc<World>, actor: u32) -> Self {
        Self {
            world,
            actor,
            counters: CounterSet::default(),
        }
    }

    fn change(
        &self,
        mut begin: impl FnMut(&mut ServerState) -> Result<ChangeOutcome, Failure>,
    ) -> Result<RpcMessage, TransportError> {
        let started = self.world.park_until(self.actor, |st| match begin(st) {
            Err(f) => Ok(Err(failure(f))),
            Ok(ChangeOutcome::Done(reply)) => Ok(Err(reply)),
            Ok(ChangeOutcome::Busy { .. }) => Err(Wait::Busy),
            Ok(ChangeOutcome::Pending(round)) => Ok(Ok(round)),
        })?;
        let round = match started {
            Ok(round) => round,
            Err(reply) => return Ok(reply),
        };
        self.world.queue_push(&round);
        let epoch = round.epoch;
        self.world.park_until(self.actor, |st| {
            st.take_result(epoch).ok_or(Wait::Round { epoch })
        })
    }
}

impl Transport for HarnessTransport {
    fn call(&self, _addr: &str, msg: RpcMessage) -> Result<RpcMessage, TransportError> {
        if !msg.expects_reply() {
            return Err(TransportError::WrongKind(msg.name()));
        }
        self.world.bump();
        let tag = msg.tag();
        let sent = encode_message(&msg)?.len();
        let reply = match msg {
            RpcMessage::GetDirRequest {
                dir_inode,
                client_id,
            } => self.world.park_until(self.actor, |st| {
                match st.get_dir(&dir_inode, client_id) {
                    Err(f) => Ok(failure(f)),
                    Ok(GetDirOutcome::Reply(r)) => Ok(r),
                    Ok(GetDirOutcome::Held { dir }) => Err(Wait::HeldGetDir { dir }),
                }
            })?,
            RpcMessage::SetPermissionRequest {
                inode,
                new_perm,
                cred,
            } => self.change(|st| st.begin_set_permission(&inode, new_perm, &cred))?,
            RpcMessage::CreateRequest {
                parent,
                name,
                perm,
                is_dir,
            } => self.change(|st| st.begin_create(&parent, &name, perm, is_dir))?,
            other => self
                .world
                .server
                .dispatch(other)
                .expect("request kinds always produce a reply"),
        };
        let received = encode_message(&reply)?.len();
        self.counters.record_call(tag, sent, received, 0);
        Ok(reply)
    }

    fn notify(&self, _addr: &str, msg: RpcMessage) -> Result<(), TransportError> {
        if !msg.is_one_way() {
            return Err(TransportError::WrongKind(msg.name()));
        }
        self.counters
            .record_async(msg.tag(), encode_message(&msg)?.len());
        self.world
            .outbox
            .lock()
            .entry(self.actor)
            .or_default()
            .push_back(msg);
        self.world.bump();
        Ok(())
    }

    /// Delivery is scheduled by the script, so there is nothing to wait for.
    fn drain(&self) {}

    fn register_push(
        &self,
        _addr: &str,
        target: Weak<dyn InvalidationTarget>,
    ) -> Result<(), TransportError> {
        let t = target
            .upgrade()
            .ok_or_else(|| TransportError::Unreachable("push target dropped".into()))?;
        self.world.targets.lock().insert(t.client_id(), target);
        Ok(())
    }

    fn snapshot_counters(&self) -> RpcCounters {
        self.counters.snapshot()
    }

    fn reset_counters(&self) {
        self.counters.reset();
    }
}
