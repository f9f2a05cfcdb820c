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

//! Workload execution.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Instant;

use buffetfs::transport::flow::{self, FlowStats};
use buffetfs::{FileClient, OpenFlags};
use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{BenchConfig, ClientKind, Scenario};
use crate::manifest::{sha256, ContentSum, Manifest};
use crate::report::{BenchReport, Clock, Phase, ReportRow};
use crate::testbed::{Client, Testbed, BENCH_CRED};
use crate::BenchError;

/// Access sequence of one worker: ChaCha8 seeded with the run seed, stream
/// set to the worker index, indices drawn uniformly with repetition.
pub fn worker_rng(seed: u64, worker: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(worker));
    rng
}

#[derive(Debug, Default, Clone)]
struct Tally {
    files: u64,
    bytes: u64,
    open_ns: u64,
    read_ns: u64,
    close_ns: u64,
    digest: ContentSum,
}

/// open + read(whole file) + close of manifest entry `index`, verified.
fn access(
    client: &dyn FileClient,
    manifest: &Manifest,
    index: usize,
    tally: &mut Tally,
) -> Result<(), BenchError> {
    let path = &manifest.files[index];
    let t0 = flow::current();
    let fd = client.open(path, OpenFlags::read_only(), &BENCH_CRED)?;
    let t1 = flow::current();
    let data = client.read(fd, manifest.file_size as u32)?;
    let t2 = flow::current();
    client.close(fd)?;
    let t3 = flow::current();
    let digest = sha256(&data);
    if digest != sha256(&manifest.content(index)) {
        return Err(BenchError::Verification { path: path.clone() });
    }
    tally.files += 1;
    tally.bytes += data.len() as u64;
    tally.open_ns += t1.since(&t0).elapsed_ns;
    tally.read_ns += t2.since(&t1).elapsed_ns;
    tally.close_ns += t3.since(&t2).elapsed_ns;
    tally.digest.add(&digest);
    Ok(())
}

fn worker_row(
    scenario: Scenario,
    phase: Phase,
    kind: ClientKind,
    worker: u32,
    tally: &Tally,
    flow: FlowStats,
) -> ReportRow {
    ReportRow {
        files_accessed: tally.files,
        bytes_read: tally.bytes,
        sync_rpcs: flow.sync_rpcs,
        async_msgs: flow.async_msgs,
        metadata_rpcs: flow.metadata_rpcs,
        elapsed_ns: flow.elapsed_ns,
        makespan_ns: flow.elapsed_ns,
        open_ns: tally.open_ns,
        read_ns: tally.read_ns,
        close_ns: tally.close_ns,
        content_digest: tally.digest.to_string(),
        ..ReportRow::zero(scenario, phase, kind, Some(worker))
    }
}

/// Worker rows followed by their total.
fn with_total(rows: Vec<(ReportRow, ContentSum)>, scenario: Scenario, phase: Phase, kind: ClientKind) -> Vec<ReportRow> {
    let mut total = ReportRow::zero(scenario, phase, kind, None);
    let mut digest = ContentSum::default();
    for (r, d) in &rows {
        total.files_accessed += r.files_accessed;
        total.bytes_read += r.bytes_read;
        total.sync_rpcs += r.sync_rpcs;
        total.async_msgs += r.async_msgs;
        total.metadata_rpcs += r.metadata_rpcs;
        total.elapsed_ns += r.elapsed_ns;
        total.makespan_ns = total.makespan_ns.max(r.makespan_ns);
        total.open_ns += r.open_ns;
        total.read_ns += r.read_ns;
        total.close_ns += r.close_ns;
        digest.merge(d);
    }
    total.content_digest = digest.to_string();
    let mut out: Vec<ReportRow> = rows.into_iter().map(|(r, _)| r).collect();
    out.push(total);
    out
}

fn clock(bed: &Testbed) -> Clock {
    if bed.is_simulated() {
        Clock::Simulated
    } else {
        Clock::Wall
    }
}

/// Hands out access turns in round-robin worker order. Simulated runs use
/// it so a shared agent's cold fetches land on the same worker every run;
/// socket runs leave workers free-running.
struct Turns {
    enabled: bool,
    workers: u64,
    next: Mutex<u64>,
    cv: Condvar,
}

impl Turns {
    fn new(enabled: bool, workers: u32) -> Self {
        Self {
            enabled,
            workers: u64::from(workers),
            next: Mutex::new(0),
            cv: Condvar::new(),
        }
    }

    /// Waits for access `k` of `worker`. False once the run is aborting.
    fn wait(&self, worker: u32, k: u64, abort: &AtomicBool) -> bool {
        if self.enabled {
            let ticket = k * self.workers + u64::from(worker);
            let mut next = self.next.lock().unwrap();
            while *next != ticket && !abort.load(Ordering::SeqCst) {
                next = self.cv.wait(next).unwrap();
            }
        }
        !abort.load(Ordering::SeqCst)
    }

    fn done(&self) {
        if self.enabled {
            *self.next.lock().unwrap() += 1;
            self.cv.notify_all();
        }
    }

    fn abort(&self, abort: &AtomicBool) {
        abort.store(true, Ordering::SeqCst);
        if self.enabled {
            let _g = self.next.lock().unwrap();
            self.cv.notify_all();
        }
    }
}

/// One open+read+close of the first file on a fresh client (cold), then
/// again on the same client (warm), for every configured client kind.
pub fn run_single_file(bed: &Testbed, cfg: &BenchConfig, manifest: &Manifest) -> Result<BenchReport, BenchError> {
    if manifest.files.is_empty() {
        return Err(BenchError::Config(crate::config::ConfigError::Invalid(
            "single_file needs at least one file".into(),
        )));
    }
    let mut report = BenchReport::new(clock(bed), cfg.seed);
    for &kind in &cfg.client_kinds {
        let client = bed.client(kind)?;
        for phase in [Phase::Cold, Phase::Warm] {
            let mut tally = Tally::default();
            let start = flow::current();
            access(&*client, manifest, 0, &mut tally)?;
            client.drain();
            let row = worker_row(Scenario::SingleFile, phase, kind, 0, &tally, flow::current().since(&start));
            report
                .rows
                .extend(with_total(vec![(row, tally.digest)], Scenario::SingleFile, phase, kind));
        }
    }
    Ok(report)
}

/// `workers` threads each access `files_per_worker` files; see
/// [`worker_rng`] for the choice of files.
pub fn run_concurrent(bed: &Testbed, cfg: &BenchConfig, manifest: &Manifest) -> Result<BenchReport, BenchError> {
    let mut report = BenchReport::new(clock(bed), cfg.seed);
    for &kind in &cfg.client_kinds {
        let clients: Vec<Client> = if cfg.agent_per_worker {
            (0..cfg.workers).map(|_| bed.client(kind)).collect::<Result<_, _>>()?
        } else {
            vec![bed.client(kind)?]
        };
        if cfg.warm_dirs {
            for c in &clients {
                c.warm(manifest)?;
            }
        }
        let abort = AtomicBool::new(false);
        let turns = Turns::new(bed.is_simulated(), cfg.workers);
        let started = Instant::now();
        let results: Vec<Result<(ReportRow, ContentSum), BenchError>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..cfg.workers)
                .map(|w| {
                    let client = &clients[w as usize % clients.len()];
                    let (abort, turns) = (&abort, &turns);
                    s.spawn(move || {
                        let mut rng = worker_rng(cfg.seed, w);
                        let mut tally = Tally::default();
                        let start = flow::current();
                        for k in 0..cfg.files_per_worker {
                            if !turns.wait(w, k, abort) {
                                break;
                            }
                            let index = rng.random_range(0..manifest.files.len());
                            if let Err(e) = access(&**client, manifest, index, &mut tally) {
                                turns.abort(abort);
                                return Err(e);
                            }
                            turns.done();
                        }
                        let flow = flow::current().since(&start);
                        debug!("{} worker {w}: {flow:?}", kind.name());
                        Ok((
                            worker_row(Scenario::Concurrent, Phase::Run, kind, w, &tally, flow),
                            tally.digest,
                        ))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        });
        for c in &clients {
            c.drain();
        }
        let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        info!(
            "{}: {} workers done in {:?} wall",
            kind.name(),
            cfg.workers,
            started.elapsed()
        );
        report
            .rows
            .extend(with_total(rows, Scenario::Concurrent, Phase::Run, kind));
    }
    Ok(report)
}

/// Builds a testbed, populates it and runs the configured scenario. A
/// remote server that already holds files is assumed to carry this
/// configuration's namespace.
pub fn run(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    let bed = Testbed::new(cfg)?;
    let manifest = Manifest::layout(cfg.file_count, cfg.dir_fanout, cfg.file_size_bytes, cfg.seed);
    if cfg.server_addr.is_none() || bed.is_empty()? {
        bed.populate(&manifest)?;
    }
    match cfg.scenario {
        Scenario::SingleFile => run_single_file(&bed, cfg, &manifest),
        Scenario::Concurrent => run_concurrent(&bed, cfg, &manifest),
    }
}
