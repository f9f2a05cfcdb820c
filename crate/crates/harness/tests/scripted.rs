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

use std::sync::Arc;

use buffetfs::wire::DeferredOpen;
use buffetfs::{
    BAgent, BServer, ClusterConfig, Fd, FsError, LatencyModel, OpenFlags, PermissionRecord,
    RpcMessage, ServerConfig, SimNetwork, Transport,
};
use buffetfs_harness::checker::describe;
use buffetfs_harness::{
    check_linearizable, run_random, Action, Actor, Executor, History, RandomConfig, Script,
    ScriptError, Step, StepResult, Verdict, Wait,
};

const REVOKE: &str = "\
c1 open /d/f1 r 2000:200
c1 close 3
server chmod /d/f1 600
deliver-invalidation c1
c1 open /d/f1 r 2000:200
";

#[test]
fn cached_client_observes_revocation() {
    let trace = Executor::run(&Script::parse(REVOKE).unwrap()).unwrap();
    let r = &trace.records;
    assert_eq!(r[0].result, Some(StepResult::Opened(3)));
    // the change waits for c1's ack
    assert_eq!(r[2].completed, Some(3));
    assert_eq!(r[2].result, Some(StepResult::Chmodded));
    assert!(matches!(r[3].result, Some(StepResult::Invalidated { .. })));
    assert_eq!(r[4].result, Some(StepResult::Failed(FsError::AccessDenied)));
    assert!(trace.coherence_violations.is_empty());
}

const WITHHELD: &str = "\
c1 open /d/f1 r 2000:200
server chmod /d/f1 600
c2 open /d/f1 r 2000:200
dump
deliver-invalidation c1
dump
";

#[test]
fn withheld_ack_keeps_change_unapplied_and_holds_get_dir() {
    let script = Script::parse(WITHHELD).unwrap();
    let mut ex = Executor::new(&script.namespace(), &script.clients()).unwrap();
    for s in &script.steps[..4] {
        ex.step(s).unwrap();
    }
    let trace = ex.trace().clone();
    assert_eq!(trace.records[1].completed, None);
    assert_eq!(trace.records[2].completed, None);
    let Some(StepResult::Dump { dump, parked }) = &trace.records[3].result else {
        panic!("{:?}", trace.records[3]);
    };
    let f1 = dump.files.iter().find(|m| m.inode.file_id == 2).unwrap();
    assert_eq!(f1.perm.perm_bits(), 0o644);
    assert_eq!(dump.pending_rounds, 1);
    assert!(parked.contains(&(2, Wait::HeldGetDir { dir: 1 })), "{parked:?}");
    assert!(parked.iter().any(|(id, w)| *id == 0 && matches!(w, Wait::Round { .. })));

    for s in &script.steps[4..] {
        ex.step(s).unwrap();
    }
    let trace = ex.trace();
    assert_eq!(trace.records[1].result, Some(StepResult::Chmodded));
    assert_eq!(trace.records[1].completed, Some(4));
    assert_eq!(trace.records[2].completed, Some(4));
    assert_eq!(trace.records[2].result, Some(StepResult::Failed(FsError::AccessDenied)));
    let Some(StepResult::Dump { dump, parked }) = &trace.records[5].result else {
        panic!();
    };
    assert!(parked.is_empty());
    assert_eq!(dump.pending_rounds, 0);
    let f1 = dump.files.iter().find(|m| m.inode.file_id == 2).unwrap();
    assert_eq!(f1.perm.perm_bits(), 0o600);
}

#[test]
fn self_invalidation_is_required_for_own_chmod() {
    let script = Script::parse(
        "c1 open /d/f1 r 1000:100\n\
         c1 chmod /d/f1 600 1000:100\n",
    )
    .unwrap();
    let mut ex = Executor::new(&script.namespace(), &script.clients()).unwrap();
    for s in &script.steps {
        ex.step(s).unwrap();
    }
    assert!(!ex.is_idle(Actor::Client(1)));
    assert_eq!(ex.pending_invalidations(1), 1);
    ex.step(&Step::new(Actor::Client(1), Action::DeliverInvalidation))
        .unwrap();
    assert!(ex.is_idle(Actor::Client(1)));
    assert_eq!(ex.trace().records[1].result, Some(StepResult::Chmodded));
}

const PLAIN: &str = "\
c1 open /d/f1 rw 1000:100
c1 read 3 4
c1 write 3 XY
c2 open /d/f1 r 2000:200
c2 read 3 64
c1 close 3
c2 open /d/sub/g r 2000:200
c2 open /d/sub/g r 1001:100
c2 read 4 64
c1 open /d/missing r 1000:100
c2 close 3
c2 close 9
";

/// The same operations on an ordinary simulated cluster, one after another.
fn sequential_results(script: &Script) -> Vec<StepResult> {
    let net = SimNetwork::new(LatencyModel::new(0.0, 0.0, 0.0));
    let server = BServer::new(ServerConfig::new(1, 0));
    net.add_server("s", Arc::clone(&server));
    let mut inodes = std::collections::BTreeMap::new();
    inodes.insert("/".to_string(), server.root_inode());
    for e in script.namespace() {
        let (parent, name) = e.path.rsplit_once('/').unwrap();
        let parent = if parent.is_empty() { "/" } else { parent };
        let perm = if e.dir {
            PermissionRecord::dir(e.owner.uid, e.owner.gid, e.mode)
        } else {
            PermissionRecord::file(e.owner.uid, e.owner.gid, e.mode)
        };
        let RpcMessage::CreateReply { entry } = server.handle_create(&inodes[parent], name, perm, e.dir) else {
            panic!()
        };
        if !e.content.is_empty() {
            let d = DeferredOpen {
                open_token: 1,
                flags: OpenFlags::write_only(),
                cred: e.owner,
            };
            server.handle_write(&entry.inode, 0, 1, 0, &e.content, Some(&d));
            server.handle_close(0, 1);
        }
        inodes.insert(e.path.clone(), entry.inode);
    }
    let cluster = ClusterConfig::new().with(1, 0, "s");
    let agents: Vec<Arc<BAgent>> = (1..=2)
        .map(|id| {
            let t: Arc<dyn Transport> = net.transport();
            BAgent::new(id, cluster.clone(), server.root_inode(), t).unwrap()
        })
        .collect();
    script
        .steps
        .iter()
        .map(|s| {
            let a = &agents[s.actor.id() as usize - 1];
            let r: Result<StepResult, FsError> = match &s.action {
                Action::Open { path, access, cred } => a
                    .open(
                        path,
                        OpenFlags {
                            access: *access,
                            create: false,
                            truncate: false,
                        },
                        cred,
                    )
                    .map(|fd| StepResult::Opened(fd.0)),
                Action::Read { fd, len } => a.read(Fd(*fd), *len).map(StepResult::Data),
                Action::Write { fd, data } => a.write(Fd(*fd), data).map(StepResult::Wrote),
                Action::Close { fd } => a.close(Fd(*fd)).map(|_| StepResult::Closed),
                other => panic!("{other:?}"),
            };
            r.unwrap_or_else(StepResult::Failed)
        })
        .collect()
}

#[test]
fn script_without_chmod_matches_sequential_execution() {
    let script = Script::parse(PLAIN).unwrap();
    let trace = Executor::run(&script).unwrap();
    let scripted: Vec<StepResult> = trace.records[..script.steps.len()]
        .iter()
        .map(|r| r.result.clone().unwrap())
        .collect();
    assert_eq!(scripted, sequential_results(&script));
    assert_eq!(scripted[4], StepResult::Data(b"firsXYfile".to_vec()));
    assert_eq!(scripted[6], StepResult::Failed(FsError::AccessDenied));
    // every step finished where it was issued
    for (i, r) in trace.records.iter().enumerate() {
        assert_eq!(r.completed, Some(i));
    }
}

#[test]
fn finish_delivers_close_notifications() {
    let script = Script::parse("c1 open /d/f1 r 1000:100\nc1 read 3 1\nc1 close 3\n").unwrap();
    let mut ex = Executor::new(&script.namespace(), &script.clients()).unwrap();
    for s in &script.steps {
        ex.step(s).unwrap();
    }
    assert_eq!(ex.server().admin_dump(false).opened.len(), 1);
    assert_eq!(ex.pending_async(Actor::Client(1)), 1);
    ex.finish().unwrap();
    assert!(ex.server().admin_dump(false).opened.is_empty());
}

#[test]
fn script_errors() {
    let mut ex = Executor::new(&buffetfs_harness::script::default_namespace(), &[1]).unwrap();
    assert_eq!(
        ex.step(&Step::new(Actor::Client(7), Action::Close { fd: 3 })),
        Err(ScriptError::UnknownActor("c7".into()))
    );
    assert_eq!(
        ex.step(&Step::new(Actor::Client(1), Action::DeliverInvalidation)),
        Err(ScriptError::NothingToDeliver("c1".into()))
    );
    assert_eq!(
        ex.step(&Step::new(
            Actor::Server,
            Action::Chmod {
                path: "/nope".into(),
                mode: 0o600,
                cred: None
            }
        )),
        Err(ScriptError::UnknownPath("/nope".into()))
    );
    let s = Script::parse("c1 open /d/f1 r 1:1\nc1 chmod /d/f1 600 1000:100\nc1 close 3\n").unwrap();
    let mut ex = Executor::new(&s.namespace(), &s.clients()).unwrap();
    ex.step(&s.steps[0]).unwrap();
    ex.step(&s.steps[1]).unwrap();
    assert_eq!(ex.step(&s.steps[2]), Err(ScriptError::ActorBusy("c1".into())));
}

#[test]
fn executor_dropped_mid_round_does_not_hang() {
    let s = Script::parse("c1 open /d/f1 r 1:1\nserver chmod /d/f1 600\n").unwrap();
    let mut ex = Executor::new(&s.namespace(), &s.clients()).unwrap();
    for step in &s.steps {
        ex.step(step).unwrap();
    }
    assert!(!ex.is_idle(Actor::Server));
    drop(ex);
}

#[test]
fn checker_flags_a_fabricated_stale_admission() {
    let trace = Executor::run(&Script::parse(REVOKE).unwrap()).unwrap();
    let mut forged = trace.clone();
    forged.records[4].result = Some(StepResult::Opened(4));
    let ns = buffetfs_harness::script::default_namespace();
    let root = ServerConfig::new(1, 0).root_perm;
    let ok = History::from_trace(root, &ns, &trace);
    assert!(check_linearizable(&ok).is_linearizable());
    let bad = History::from_trace(root, &ns, &forged);
    let verdict = check_linearizable(&bad);
    assert!(matches!(verdict, Verdict::Violation { .. }));
    assert!(describe(&bad, &verdict, &forged).contains("step 4"));
}

#[test]
fn random_runs_are_deterministic() {
    let cfg = RandomConfig {
        seed: 42,
        clients: 3,
        steps: 25,
    };
    let a = run_random(cfg).unwrap();
    let b = run_random(cfg).unwrap();
    assert_eq!(a.script, b.script);
    assert_eq!(a.trace, b.trace);
    assert_eq!(Script::parse(&a.script.to_string()).unwrap(), a.script);
    // replaying the generated script reproduces the trace
    let replay = Executor::run(&a.script).unwrap();
    assert_eq!(replay.records[..25], a.trace.records[..25]);
}

#[test]
fn random_schedules_are_linearizable() {
    for seed in 0..150 {
        let run = run_random(RandomConfig {
            seed,
            clients: 2 + (seed % 2) as u32,
            steps: 20,
        })
        .unwrap();
        assert!(run.is_clean(), "seed {seed}: {}", run.report());
    }
}
