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

//! Runs scripts step by step against one server and a set of client agents.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{channel, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use buffetfs::wire::{DeferredOpen, ServerDump};
use buffetfs::{
    BAgent, BServer, BuffetInode, ClusterConfig, DirEntryRecord, Fd, FsError, OpenFlags,
    PermissionRecord, RpcMessage, ServerConfig, Transport,
};
use log::debug;

use crate::script::{Action, Actor, Script, ScriptError, SetupEntry, Step};
use crate::world::{HarnessTransport, Status, Wait, World};

pub const SERVER_ADDR: &str = "harness";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepResult {
    Opened(u32),
    Data(Vec<u8>),
    Wrote(u32),
    Closed,
    Chmodded,
    Failed(FsError),
    /// An invalidation was handed over and its ack returned to the server.
    Invalidated { epoch: u64 },
    /// A one-way message reached the server.
    Delivered(&'static str),
    Dump {
        dump: ServerDump,
        parked: Vec<(u32, Wait)>,
    },
    Panicked(String),
}

impl StepResult {
    fn from_fs<T>(r: Result<T, FsError>, ok: impl FnOnce(T) -> StepResult) -> Self {
        match r {
            Ok(v) => ok(v),
            Err(e) => StepResult::Failed(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub step: Step,
    /// Index of the step that issued this one, i.e. its own index.
    pub issued: usize,
    /// Index of the step during which it finished; `None` while parked.
    pub completed: Option<usize>,
    pub result: Option<StepResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub records: Vec<Record>,
    /// Cached permissions a client could have used that differ from the
    /// server's current record.
    pub coherence_violations: Vec<String>,
}

impl Trace {
    pub fn results(&self) -> Vec<Option<StepResult>> {
        self.records.iter().map(|r| r.result.clone()).collect()
    }
}

type Job = Box<dyn FnOnce() -> StepResult + Send>;

struct ActorThread {
    tx: Sender<Job>,
    handle: JoinHandle<()>,
}

fn spawn_actor(world: Arc<World>, id: u32) -> ActorThread {
    let (tx, rx) = channel::<Job>();
    let handle = thread::Builder::new()
        .name(format!("actor-{id}"))
        .spawn(move || {
            for job in rx {
                let result = catch_unwind(AssertUnwindSafe(job)).unwrap_or_else(|p| {
                    let msg = p
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_default();
                    StepResult::Panicked(msg)
                });
                let mut s = world.sched.lock();
                s.status.insert(id, Status::Idle);
                s.finished.push((id, result));
                s.progress += 1;
                world.cv.notify_all();
            }
        })
        .expect("spawn actor thread");
    ActorThread { tx, handle }
}

pub struct Executor {
    world: Arc<World>,
    namespace: Vec<SetupEntry>,
    entries: BTreeMap<String, DirEntryRecord>,
    agents: BTreeMap<u32, Arc<BAgent>>,
    actors: BTreeMap<u32, ActorThread>,
    in_flight: BTreeMap<u32, usize>,
    trace: Trace,
}

fn parent_of(path: &str) -> (&str, &str) {
    let (parent, name) = path.rsplit_once('/').unwrap_or(("", path));
    (if parent.is_empty() { "/" } else { parent }, name)
}

impl Executor {
    pub fn new(namespace: &[SetupEntry], clients: &[u32]) -> Result<Self, ScriptError> {
        let server = BServer::new(ServerConfig::new(1, 0));
        let root = server.root_inode();
        let mut entries = BTreeMap::new();
        for (i, e) in namespace.iter().enumerate() {
            let (parent, name) = parent_of(&e.path);
            let parent_inode = if parent == "/" {
                root
            } else {
                entries
                    .get(parent)
                    .map(|p: &DirEntryRecord| p.inode)
                    .ok_or_else(|| ScriptError::Setup(format!("{} has no parent", e.path)))?
            };
            let perm = if e.dir {
                PermissionRecord::dir(e.owner.uid, e.owner.gid, e.mode)
            } else {
                PermissionRecord::file(e.owner.uid, e.owner.gid, e.mode)
            };
            let entry = match server.handle_create(&parent_inode, name, perm, e.dir) {
                RpcMessage::CreateReply { entry } => entry,
                other => return Err(ScriptError::Setup(format!("{}: {other:?}", e.path))),
            };
            if !e.content.is_empty() {
                let token = u64::MAX - i as u64;
                let open = DeferredOpen {
                    open_token: token,
                    flags: OpenFlags::write_only(),
                    cred: e.owner,
                };
                let reply = server.handle_write(&entry.inode, 0, token, 0, &e.content, Some(&open));
                if !matches!(reply, RpcMessage::WriteReply { .. }) {
                    return Err(ScriptError::Setup(format!("{}: {reply:?}", e.path)));
                }
                server.handle_close(0, token);
            }
            entries.insert(e.path.clone(), entry);
        }

        let world = World::new(Arc::clone(&server));
        let cluster = ClusterConfig::new().with(1, 0, SERVER_ADDR);
        let mut agents = BTreeMap::new();
        let mut actors = BTreeMap::new();
        actors.insert(0, spawn_actor(Arc::clone(&world), 0));
        for &id in clients {
            if id == 0 {
                return Err(ScriptError::UnknownActor("c0".into()));
            }
            let t: Arc<dyn Transport> = Arc::new(HarnessTransport::new(Arc::clone(&world), id));
            let agent = BAgent::new(id, cluster.clone(), root, t)
                .map_err(|e| ScriptError::Setup(e.to_string()))?;
            agents.insert(id, agent);
            actors.insert(id, spawn_actor(Arc::clone(&world), id));
        }
        Ok(Self {
            world,
            namespace: namespace.to_vec(),
            entries,
            agents,
            actors,
            in_flight: BTreeMap::new(),
            trace: Trace::default(),
        })
    }

    /// Runs every step, then delivers whatever is still queued.
    pub fn run(script: &Script) -> Result<Trace, ScriptError> {
        let mut ex = Self::new(&script.namespace(), &script.clients())?;
        for step in &script.steps {
            ex.step(step)?;
        }
        ex.finish()?;
        Ok(ex.into_trace())
    }

    pub fn namespace(&self) -> &[SetupEntry] {
        &self.namespace
    }

    pub fn server(&self) -> &Arc<BServer> {
        &self.world.server
    }

    pub fn agent(&self, client: u32) -> Option<&Arc<BAgent>> {
        self.agents.get(&client)
    }

    pub fn clients(&self) -> Vec<u32> {
        self.agents.keys().copied().collect()
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(mut self) -> Trace {
        std::mem::take(&mut self.trace)
    }

    pub fn is_idle(&self, actor: Actor) -> bool {
        self.world.status(actor.id()) == Status::Idle
    }

    pub fn pending_invalidations(&self, client: u32) -> usize {
        self.world.pending_invalidations(client)
    }

    pub fn pending_async(&self, actor: Actor) -> usize {
        self.world.pending_async(actor.id())
    }

    pub fn parked(&self) -> Vec<(u32, Wait)> {
        self.world.parked()
    }

    /// Descriptors a client currently holds open.
    pub fn open_fds(&self, client: u32) -> Vec<u32> {
        let Some(agent) = self.agents.get(&client) else {
            return Vec::new();
        };
        let mut fds: Vec<u32> = self
            .trace
            .records
            .iter()
            .filter(|r| r.step.actor == Actor::Client(client))
            .filter_map(|r| match r.result {
                Some(StepResult::Opened(fd)) => Some(fd),
                _ => None,
            })
            .filter(|fd| agent.handle(Fd(*fd)).is_ok())
            .collect();
        fds.sort_unstable();
        fds
    }

    fn check_actor(&self, actor: Actor) -> Result<(), ScriptError> {
        match actor {
            Actor::Server => Ok(()),
            Actor::Client(id) if self.agents.contains_key(&id) => Ok(()),
            other => Err(ScriptError::UnknownActor(other.to_string())),
        }
    }

    fn job(&self, step: &Step) -> Result<Job, ScriptError> {
        let action = step.action.clone();
        if step.actor == Actor::Server {
            let Action::Chmod { path, mode, .. } = action else {
                unreachable!("the parser only gives the server chmod steps");
            };
            let entry = self
                .entries
                .get(&path)
                .ok_or_else(|| ScriptError::UnknownPath(path.clone()))?;
            let perm = entry.perm.with_perm_bits(mode);
            let owner = buffetfs::Credentials::new(entry.perm.uid, entry.perm.gid);
            let inode: BuffetInode = entry.inode;
            let t = HarnessTransport::new(Arc::clone(&self.world), 0);
            return Ok(Box::new(move || {
                let reply = t.call(
                    SERVER_ADDR,
                    RpcMessage::SetPermissionRequest {
                        inode,
                        new_perm: perm,
                        cred: owner,
                    },
                );
                match reply {
                    Ok(RpcMessage::SetPermissionReply { ok: true }) => StepResult::Chmodded,
                    Ok(RpcMessage::ErrorReply { code, detail }) => {
                        StepResult::Failed(FsError::from_reply(code, &detail))
                    }
                    other => StepResult::Failed(FsError::Protocol(format!("{other:?}"))),
                }
            }));
        }
        let agent = Arc::clone(&self.agents[&step.actor.id()]);
        Ok(Box::new(move || match action {
            Action::Open { path, access, cred } => {
                let flags = OpenFlags {
                    access,
                    create: false,
                    truncate: false,
                };
                StepResult::from_fs(agent.open(&path, flags, &cred), |fd| StepResult::Opened(fd.0))
            }
            Action::Read { fd, len } => StepResult::from_fs(agent.read(Fd(fd), len), StepResult::Data),
            Action::Write { fd, data } => {
                StepResult::from_fs(agent.write(Fd(fd), &data), StepResult::Wrote)
            }
            Action::Close { fd } => StepResult::from_fs(agent.close(Fd(fd)), |_| StepResult::Closed),
            Action::Chmod { path, mode, cred } => {
                let cred = cred.expect("client chmod carries credentials");
                StepResult::from_fs(agent.chmod(&path, mode, &cred), |_| StepResult::Chmodded)
            }
            Action::DeliverInvalidation | Action::DeliverAsync | Action::Dump => {
                unreachable!("handled by the executor")
            }
        }))
    }

    /// Executes one step. Returns its index in the trace.
    pub fn step(&mut self, step: &Step) -> Result<usize, ScriptError> {
        self.check_actor(step.actor)?;
        let index = self.trace.records.len();
        debug!("step {index}: {step}");
        let immediate = match &step.action {
            Action::DeliverInvalidation => {
                let epoch = self
                    .world
                    .deliver_invalidation(step.actor.id())
                    .ok_or_else(|| ScriptError::NothingToDeliver(step.actor.to_string()))?;
                Some(StepResult::Invalidated { epoch })
            }
            Action::DeliverAsync => {
                let msg = self
                    .world
                    .deliver_async(step.actor.id())
                    .ok_or_else(|| ScriptError::NothingToDeliver(step.actor.to_string()))?;
                Some(StepResult::Delivered(msg.name()))
            }
            Action::Dump => Some(StepResult::Dump {
                dump: self.world.server.admin_dump(true),
                parked: self.world.parked(),
            }),
            _ => None,
        };
        match immediate {
            Some(result) => self.trace.records.push(Record {
                step: step.clone(),
                issued: index,
                completed: Some(index),
                result: Some(result),
            }),
            None => {
                let id = step.actor.id();
                if self.world.status(id) != Status::Idle {
                    return Err(ScriptError::ActorBusy(step.actor.to_string()));
                }
                let job = self.job(step)?;
                self.trace.records.push(Record {
                    step: step.clone(),
                    issued: index,
                    completed: None,
                    result: None,
                });
                self.in_flight.insert(id, index);
                self.world.sched.lock().status.insert(id, Status::Running);
                self.actors[&id]
                    .tx
                    .send(job)
                    .expect("actor thread is alive");
            }
        }
        self.world.settle();
        self.collect(index);
        self.check_coherence(index);
        Ok(index)
    }

    fn collect(&mut self, now: usize) {
        let finished = std::mem::take(&mut self.world.sched.lock().finished);
        for (actor, result) in finished {
            let idx = self
                .in_flight
                .remove(&actor)
                .expect("finished actor had a step in flight");
            let rec = &mut self.trace.records[idx];
            rec.completed = Some(now);
            rec.result = Some(result);
        }
    }

    /// Delivers every queued invalidation and one-way message, lowest
    /// client first, until all actors are idle.
    pub fn finish(&mut self) -> Result<(), ScriptError> {
        loop {
            self.world.settle();
            let next_inv = self
                .agents
                .keys()
                .copied()
                .find(|c| self.world.pending_invalidations(*c) > 0);
            if let Some(c) = next_inv {
                self.step(&Step::new(Actor::Client(c), Action::DeliverInvalidation))?;
                continue;
            }
            let next_async = std::iter::once(Actor::Server)
                .chain(self.agents.keys().map(|c| Actor::Client(*c)))
                .find(|a| self.world.pending_async(a.id()) > 0);
            if let Some(a) = next_async {
                if a == Actor::Server {
                    self.world.deliver_async(0);
                } else {
                    self.step(&Step::new(a, Action::DeliverAsync))?;
                }
                continue;
            }
            let parked = self.world.parked();
            if parked.is_empty() {
                return Ok(());
            }
            return Err(ScriptError::Setup(format!("actors stuck with nothing to deliver: {parked:?}")));
        }
    }

    /// Every permission a client could consult without contacting the
    /// server must match the server's record.
    fn check_coherence(&mut self, index: usize) {
        let dump = self.world.server.admin_dump(true);
        let current: BTreeMap<BuffetInode, PermissionRecord> =
            dump.files.iter().map(|m| (m.inode, m.perm)).collect();
        for (id, agent) in &self.agents {
            let stale = agent.with_tree(|tree| {
                let mut stale = Vec::new();
                let mut todo = vec![tree.root()];
                while let Some(inode) = todo.pop() {
                    let Some(node) = tree.get(&inode) else { continue };
                    if !node.valid {
                        continue;
                    }
                    if current.get(&inode) != Some(&node.perm()) {
                        stale.push(inode);
                    }
                    let Some(children) = &node.children else { continue };
                    let usable = children
                        .values()
                        .all(|c| tree.get(c).is_some_and(|n| n.valid));
                    if usable {
                        todo.extend(children.values().copied());
                    }
                }
                stale
            });
            for inode in stale {
                self.trace
                    .coherence_violations
                    .push(format!("after step {index}: client {id} holds a superseded record for {inode}"));
            }
        }
    }
}

impl Drop for Executor {
    fn drop(&mut self) {
        self.world.sched.lock().stopping = true;
        self.world.cv.notify_all();
        for (_, actor) in std::mem::take(&mut self.actors) {
            drop(actor.tx);
            let _ = actor.handle.join();
        }
    }
}
