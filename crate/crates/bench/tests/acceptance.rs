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

//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use buffetfs::testing::{arb_inode, arb_message, arb_perm};
use buffetfs::types::{decode_inode, decode_perm, encode_inode, encode_perm};
use buffetfs::wire::{decode_message, encode_message};
use buffetfs::{
    check_permission, AccessMask, Credentials, FileClient, FsError, LatencyModel, OpenFlags,
    PermissionRecord,
};
use buffetfs_bench::{
    run_concurrent, run_single_file, BenchConfig, ClientKind, Manifest, Phase, ReportRow,
    Scenario, Testbed, BENCH_CRED,
};
use buffetfs_harness::{run_random, Executor, RandomConfig, Script, StepResult, Wait};
use proptest::strategy::Strategy;
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn bed(cfg: &BenchConfig) -> (Testbed, Manifest) {
    let bed = Testbed::new(cfg).expect("testbed");
    let m = Manifest::layout(cfg.file_count, cfg.dir_fanout, cfg.file_size_bytes, cfg.seed);
    bed.populate(&m).expect("populate");
    (bed, m)
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    if took < limit {
        Ok(())
    } else {
        Err(format!("took {took:?}, limit {limit:?}"))
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn counts(r: &ReportRow) -> (u64, u64) {
    (r.sync_rpcs, r.async_msgs)
}

fn single_file_config(latency: LatencyModel) -> BenchConfig {
    BenchConfig {
        scenario: Scenario::SingleFile,
        file_count: 10,
        dir_fanout: 10,
        files_per_worker: 1,
        workers: 1,
        latency,
        ..BenchConfig::default()
    }
}

fn rpc_elimination() -> Outcome {
    let start = Instant::now();
    let cfg = single_file_config(LatencyModel::default());
    let (bed, m) = bed(&cfg);
    let r = run_single_file(&bed, &cfg, &m).map_err(|e| e.to_string())?;
    let warm = |k| counts(r.total(Phase::Warm, k).unwrap());
    check(warm(ClientKind::BuffetFs) == (1, 1), || format!("buffetfs {:?}", warm(ClientKind::BuffetFs)))?;
    check(warm(ClientKind::BaselineNormal) == (2, 1), || {
        format!("baseline-normal {:?}", warm(ClientKind::BaselineNormal))
    })?;
    check(warm(ClientKind::BaselineDom) == (1, 1), || format!("dom read {:?}", warm(ClientKind::BaselineDom)))?;

    let dom = bed.client(ClientKind::BaselineDom).map_err(|e| e.to_string())?;
    let before = dom.counters();
    let fd = dom.open(&m.files[1], OpenFlags::write_only(), &BENCH_CRED).map_err(|e| e.to_string())?;
    dom.write(fd, &m.content(1)).map_err(|e| e.to_string())?;
    dom.close(fd).map_err(|e| e.to_string())?;
    dom.drain();
    let after = dom.counters();
    let write_path = (after.sync_rpcs - before.sync_rpcs, after.async_msgs - before.async_msgs);
    check(write_path == (2, 1), || format!("dom write {write_path:?}"))?;
    within(start, Duration::from_secs(1))?;
    Ok(format!(
        "buffetfs 1+1, normal 2+1, dom read 1+1, dom write 2+1 in {:?}",
        start.elapsed()
    ))
}

fn latency_ordering() -> Outcome {
    let cfg = single_file_config(LatencyModel::new(200.0, 0.01, 50.0));
    let (bed, m) = bed(&cfg);
    let r = run_single_file(&bed, &cfg, &m).map_err(|e| e.to_string())?;
    let us = |k| r.total(Phase::Warm, k).unwrap().elapsed_ns;
    let (b, d, n) = (
        us(ClientKind::BuffetFs),
        us(ClientKind::BaselineDom),
        us(ClientKind::BaselineNormal),
    );
    check(b < d && d < n, || format!("ordering broken: buffetfs {b} dom {d} normal {n}"))?;
    let ratio = b as f64 / n as f64;
    check(ratio <= 0.55, || format!("ratio {ratio:.4}"))?;
    Ok(format!("buffetfs {b}ns < dom {d}ns < normal {n}ns, ratio {ratio:.4}"))
}

fn concurrent_shape() -> Outcome {
    let start = Instant::now();
    let base = BenchConfig {
        scenario: Scenario::Concurrent,
        client_kinds: vec![ClientKind::BuffetFs, ClientKind::BaselineNormal],
        file_count: 10_000,
        file_size_bytes: 4096,
        files_per_worker: 100,
        dir_fanout: 100,
        warm_dirs: true,
        seed: 7,
        ..BenchConfig::default()
    };
    let (bed, m) = bed(&base);
    let mut points = Vec::new();
    for workers in [1u32, 2, 4, 8, 16] {
        let cfg = BenchConfig {
            workers,
            ..base.clone()
        };
        let r = run_concurrent(&bed, &cfg, &m).map_err(|e| e.to_string())?;
        let b = r.total(Phase::Run, ClientKind::BuffetFs).unwrap();
        let n = r.total(Phase::Run, ClientKind::BaselineNormal).unwrap();
        let accessed = u64::from(workers) * 100;
        check(b.files_accessed == accessed && n.files_accessed == accessed, || {
            format!("{workers} workers accessed {} / {}", b.files_accessed, n.files_accessed)
        })?;
        check(b.sync_rpcs == accessed, || format!("{workers} workers: buffetfs {} sync", b.sync_rpcs))?;
        check(n.sync_rpcs == 2 * accessed, || format!("{workers} workers: normal {} sync", n.sync_rpcs))?;
        check(b.elapsed_ns < n.elapsed_ns && b.makespan_ns < n.makespan_ns, || {
            format!("{workers} workers: latency {} vs {}", b.elapsed_ns, n.elapsed_ns)
        })?;
        points.push(format!("{workers}:{:.3}", b.elapsed_ns as f64 / n.elapsed_ns as f64));
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!("buffetfs/normal latency by workers {} in {:?}", points.join(" "), start.elapsed()))
}

fn sibling_warmth() -> Outcome {
    let cfg = BenchConfig {
        file_count: 100,
        dir_fanout: 100,
        files_per_worker: 1,
        ..BenchConfig::default()
    };
    let (bed, m) = bed(&cfg);
    let agent = bed.agent().map_err(|e| e.to_string())?;
    let open_close = |path: &str| -> Result<(), String> {
        let fd = agent.open(path, OpenFlags::read_only(), &BENCH_CRED).map_err(|e| e.to_string())?;
        agent.close(fd).map_err(|e| e.to_string())
    };
    open_close(&m.files[0])?;
    let before = agent.counters();
    for path in &m.files[1..] {
        open_close(path)?;
    }
    let after = agent.counters();
    let meta = after.sync_rpcs - before.sync_rpcs;
    let get_dirs = after.count("GetDirRequest") - before.count("GetDirRequest");
    check(meta == 0 && get_dirs == 0, || format!("{meta} RPCs ({get_dirs} GetDir) for 99 sibling opens"))?;
    Ok("99 sibling opens issued 0 metadata RPCs".into())
}

const REVOKE: &str = "\
c1 open /d/f1 r 2000:200
c1 close 3
server chmod /d/f1 600
deliver-invalidation c1
c1 open /d/f1 r 2000:200
";

const WITHHELD: &str = "\
c1 open /d/f1 r 2000:200
server chmod /d/f1 600
c2 open /d/f1 r 2000:200
dump
deliver-invalidation c1
dump
";

fn strong_consistency() -> Outcome {
    let start = Instant::now();
    let mut ops = 0;
    for seed in 0..500u64 {
        let run = run_random(RandomConfig {
            seed,
            clients: 2 + (seed % 2) as u32,
            steps: 24,
        })
        .map_err(|e| format!("seed {seed}: {e}"))?;
        check(run.is_clean(), || format!("seed {seed}: {}", run.report()))?;
        ops += run.history.ops.len();
    }
    let trace = Executor::run(&Script::parse(REVOKE).unwrap()).map_err(|e| e.to_string())?;
    check(
        trace.records[4].result == Some(StepResult::Failed(FsError::AccessDenied)),
        || format!("revocation not observed: {:?}", trace.records[4]),
    )?;
    withheld_ack()?;
    within(start, Duration::from_secs(120))?;
    Ok(format!(
        "500 seeds, {ops} checked operations, no counterexample; scripted cases pass in {:?}",
        start.elapsed()
    ))
}

fn withheld_ack() -> Outcome {
    let script = Script::parse(WITHHELD).unwrap();
    let mut ex = Executor::new(&script.namespace(), &script.clients()).map_err(|e| e.to_string())?;
    for s in &script.steps[..4] {
        ex.step(s).map_err(|e| e.to_string())?;
    }
    let f1_bits = |dump: &buffetfs::wire::ServerDump| {
        dump.files
            .iter()
            .find(|m| m.inode.file_id == 2)
            .map(|m| m.perm.perm_bits())
    };
    let locked = ex.server().state().is_locked(1);
    let r = &ex.trace().records;
    let Some(StepResult::Dump { dump, parked }) = &r[3].result else {
        return Err("no dump".into());
    };
    check(f1_bits(dump) == Some(0o644), || format!("applied early: {:o}", f1_bits(dump).unwrap_or(0)))?;
    check(r[1].completed.is_none() && r[2].completed.is_none(), || "chmod or GetDir completed early".into())?;
    check(locked && parked.contains(&(2, Wait::HeldGetDir { dir: 1 })), || {
        format!("GetDir not held: locked={locked} {parked:?}")
    })?;
    for s in &script.steps[4..] {
        ex.step(s).map_err(|e| e.to_string())?;
    }
    let r = &ex.trace().records;
    let Some(StepResult::Dump { dump, parked }) = &r[5].result else {
        return Err("no dump".into());
    };
    check(f1_bits(dump) == Some(0o600), || "change not applied after ack".into())?;
    check(parked.is_empty() && !ex.server().state().is_locked(1), || format!("still parked: {parked:?}"))?;
    check(r[2].result == Some(StepResult::Failed(FsError::AccessDenied)), || {
        format!("released open saw {:?}", r[2].result)
    })?;
    Ok("change unapplied and GetDir held until the ack, then applied and released".into())
}

fn run_cases<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> bool) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, |v| {
            if test(v) {
                Ok(())
            } else {
                Err(proptest::test_runner::TestCaseError::fail("mismatch"))
            }
        })
        .map_err(|e| e.to_string())
}

// Reference decision written bit by bit from the rwx triplets.
fn mode_oracle(mode: u16, class: usize, m: u8) -> bool {
    let triplet = (mode >> (6 - 3 * class)) & 7;
    (0..3).all(|bit| m & (1 << bit) == 0 || triplet & (1 << bit) != 0)
}

fn oracles() -> Outcome {
    run_cases(10_000, arb_message(), |msg| {
        encode_message(&msg)
            .ok()
            .and_then(|f| decode_message(&f).ok())
            .is_some_and(|d| d == msg)
    })?;
    run_cases(2_000, arb_perm(), |p| {
        let blob = encode_perm(&p);
        blob.len() == 10 && decode_perm(&blob).ok() == Some(p)
    })?;
    run_cases(2_000, arb_inode(), |i| {
        let blob = encode_inode(&i);
        blob.len() == 16 && decode_inode(&blob).ok() == Some(i)
    })?;
    let creds = [
        Credentials::new(1000, 7),
        Credentials::new(5, 100),
        Credentials::new(5, 7),
    ];
    let mut checked = 0;
    for mode in 0u16..512 {
        for (class, cred) in creds.iter().enumerate() {
            for m in 1u8..8 {
                let mask = AccessMask::from_bits_truncate(m);
                let perm = PermissionRecord::file(1000, 100, mode);
                let got = check_permission(&perm, cred, mask);
                check(got == mode_oracle(mode, class, m), || {
                    format!("mode {mode:o} class {class} mask {m}: {got}")
                })?;
                checked += 1;
            }
        }
    }
    check(checked == 512 * 3 * 7, || format!("{checked} cases"))?;
    Ok(format!("10000 messages, 4000 codec blobs, {checked} permission cases"))
}

fn data_integrity() -> Outcome {
    let cfg = BenchConfig {
        scenario: Scenario::Concurrent,
        file_count: 500,
        dir_fanout: 50,
        files_per_worker: 50,
        workers: 4,
        seed: 11,
        ..BenchConfig::default()
    };
    let (bed, m) = bed(&cfg);
    let r = run_concurrent(&bed, &cfg, &m).map_err(|e| e.to_string())?;
    let totals: Vec<&ReportRow> = r.totals().collect();
    check(totals.len() == 3, || "missing kinds".into())?;
    for t in &totals {
        check(
            t.content_digest == totals[0].content_digest && t.bytes_read == totals[0].bytes_read,
            || format!("{} differs from {}", t.kind.name(), totals[0].kind.name()),
        )?;
    }

    for (i, kind) in ClientKind::ALL.into_iter().enumerate() {
        let c = bed.client(kind).map_err(|e| e.to_string())?;
        let path = format!("{}/gap{i}", m.dirs[0]);
        let flags = OpenFlags::read_write().with_create();
        let fd = c.open(&path, flags, &BENCH_CRED).map_err(|e| e.to_string())?;
        c.write(fd, b"head").map_err(|e| e.to_string())?;
        c.seek(fd, 10).map_err(|e| e.to_string())?;
        c.write(fd, b"tail").map_err(|e| e.to_string())?;
        c.close(fd).map_err(|e| e.to_string())?;
        c.drain();
        let expected = b"head\0\0\0\0\0\0tail".to_vec();
        let reader = bed.client(ClientKind::BaselineNormal).map_err(|e| e.to_string())?;
        let fd = reader.open(&path, OpenFlags::read_only(), &BENCH_CRED).map_err(|e| e.to_string())?;
        let got = reader.read(fd, 64).map_err(|e| e.to_string())?;
        reader.close(fd).map_err(|e| e.to_string())?;
        check(got == expected, || format!("{}: read back {got:?}", kind.name()))?;
    }
    Ok(format!(
        "3 kinds agree on {} bytes; gap writes read back zero-filled",
        totals[0].bytes_read
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("RPC elimination", rpc_elimination),
        ("latency ordering", latency_ordering),
        ("concurrent scaling shape", concurrent_shape),
        ("sibling warmth", sibling_warmth),
        ("strong consistency", strong_consistency),
        ("invalidate before modify", withheld_ack),
        ("codec and permission oracles", oracles),
        ("data integrity", data_integrity),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS - {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL - {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
