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

mod common;

use std::sync::Arc;

use buffetfs::baseline::DEFAULT_DOM_THRESHOLD;
use buffetfs::{
    BaselineClient, BaselineMode, FileClient, FsError, HandleState, LatencyModel, OpenFlags,
    Transport,
};
use common::*;
use proptest::prelude::*;

fn baseline(c: &Cluster, mode: BaselineMode, id: u32) -> BaselineClient {
    let t: Arc<dyn Transport> = c.net.transport();
    BaselineClient::new(mode, id, c.cluster_config(), c.root(), t).unwrap()
}

#[test]
fn every_open_is_a_round_trip() {
    let c = Cluster::new();
    c.sample_tree();
    let client = baseline(&c, BaselineMode::Normal, 5);
    for _ in 0..3 {
        let before = client.counters();
        let fd = client.open("/a/b/foo", OpenFlags::read_only(), &OWNER).unwrap();
        assert_eq!(delta(&client.counters(), &before), (1, 0));
        assert_eq!(client.handle(fd).unwrap().state, HandleState::ServerOpened);
        client.close(fd).unwrap();
    }
    client.drain();
    assert_eq!(client.counters().count("OpenRequest"), 3);
    assert_eq!(client.counters().count("CloseNotify"), 3);
    assert!(c.server.admin_dump(false).opened.is_empty());
}

#[test]
fn normal_open_read_close_is_two_plus_one() {
    let c = Cluster::new();
    c.sample_tree();
    let client = baseline(&c, BaselineMode::Normal, 5);
    let fd = client.open("/a/b/foo", OpenFlags::read_only(), &OWNER).unwrap();
    assert_eq!(client.read(fd, 4096).unwrap(), pattern(4096));
    client.close(fd).unwrap();
    client.drain();
    assert_eq!(delta(&client.counters(), &Default::default()), (2, 1));
}

#[test]
fn dom_inlines_small_files() {
    let c = Cluster::new();
    c.sample_tree();
    let client = baseline(&c, BaselineMode::Dom, 5);
    let fd = client.open("/a/b/foo", OpenFlags::read_only(), &OWNER).unwrap();
    assert_eq!(client.handle(fd).unwrap().inline.as_deref(), Some(&pattern(4096)[..]));
    assert_eq!(client.read(fd, 1000).unwrap(), pattern(4096)[..1000]);
    assert_eq!(client.read(fd, 5000).unwrap(), pattern(4096)[1000..]);
    assert!(client.read(fd, 10).unwrap().is_empty());
    client.close(fd).unwrap();
    client.drain();
    assert_eq!(delta(&client.counters(), &Default::default()), (1, 1));
}

#[test]
fn dom_threshold_and_write_access() {
    let c = Cluster::new();
    let s = c.sample_tree();
    let big = c.mk(s.b.inode, "big", 0o644, false);
    c.fill(&big, &pattern(DEFAULT_DOM_THRESHOLD as usize + 1));
    let client = baseline(&c, BaselineMode::Dom, 5);
    let fd = client.open("/a/b/big", OpenFlags::read_only(), &OWNER).unwrap();
    assert!(client.handle(fd).unwrap().inline.is_none());
    client.close(fd).unwrap();

    let small = baseline(&c, BaselineMode::Dom, 6).with_dom_threshold(100);
    let fd = small.open("/a/b/foo", OpenFlags::read_only(), &OWNER).unwrap();
    assert!(small.handle(fd).unwrap().inline.is_none());

    let wo = client.open("/a/b/foo", OpenFlags::write_only(), &OWNER).unwrap();
    assert!(client.handle(wo).unwrap().inline.is_none());
}

#[test]
fn dom_write_drops_inline_copy() {
    let c = Cluster::new();
    c.sample_tree();
    let client = baseline(&c, BaselineMode::Dom, 5);
    let fd = client.open("/a/b/foo", OpenFlags::read_write(), &OWNER).unwrap();
    assert!(client.handle(fd).unwrap().inline.is_some());
    client.write(fd, b"ZZ").unwrap();
    assert!(client.handle(fd).unwrap().inline.is_none());
    client.seek(fd, 0).unwrap();
    let data = client.read(fd, 4).unwrap();
    assert_eq!(&data[..2], b"ZZ");
    assert_eq!(&data[2..], &pattern(4)[2..]);
}

#[test]
fn open_errors_come_from_the_server() {
    let c = Cluster::new();
    c.sample_tree();
    let client = baseline(&c, BaselineMode::Normal, 5);
    let before = client.counters();
    assert_eq!(
        client.open("/a/missing", OpenFlags::read_only(), &OWNER).unwrap_err(),
        FsError::NotFound
    );
    assert_eq!(
        client.open("/a/secret", OpenFlags::read_only(), &OTHER).unwrap_err(),
        FsError::AccessDenied
    );
    assert_eq!(
        client.open("/a/b", OpenFlags::read_only(), &OWNER).unwrap_err(),
        FsError::IsADirectory
    );
    assert_eq!(delta(&client.counters(), &before), (3, 0));
    assert!(c.server.admin_dump(false).opened.is_empty());
}

#[test]
fn baseline_create_flag_makes_file() {
    let c = Cluster::new();
    c.sample_tree();
    let client = baseline(&c, BaselineMode::Normal, 5);
    let fd = client
        .open("/a/b/made", OpenFlags::write_only().with_create(), &OWNER)
        .unwrap();
    client.write(fd, b"abc").unwrap();
    client.close(fd).unwrap();
    let fd = client.open("/a/b/made", OpenFlags::read_only(), &OTHER).unwrap();
    assert_eq!(client.read(fd, 10).unwrap(), b"abc");
}

#[test]
fn dom_ranks_between_buffetfs_and_normal() {
    let lat = LatencyModel::new(200.0, 0.01, 50.0);
    let c = Cluster::with_latency(lat);
    c.sample_tree();
    let agent = c.agent(1);
    agent.resolve("/a/b/foo").unwrap();
    let kinds: Vec<Box<dyn FileClient>> = vec![
        Box::new(baseline(&c, BaselineMode::Dom, 2)),
        Box::new(baseline(&c, BaselineMode::Normal, 3)),
    ];
    let mut times = vec![];
    agent.reset_counters();
    let fd = agent.open("/a/b/foo", OpenFlags::read_only(), &OWNER).unwrap();
    agent.read(fd, 4096).unwrap();
    times.push(agent.counters().elapsed_ns);
    for k in &kinds {
        let fd = k.open("/a/b/foo", OpenFlags::read_only(), &OWNER).unwrap();
        k.read(fd, 4096).unwrap();
        times.push(k.counters().elapsed_ns);
    }
    // 200 + 40.96 + 50, then one more service time, then a whole extra trip
    assert_eq!(times, [290_960, 340_960, 540_960]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normal_chunked_read_costs_chunks_plus_one(len in 1usize..20_000, chunk in 1u32..5000) {
        let c = Cluster::new();
        let s = c.sample_tree();
        let f = c.mk(s.b.inode, "f", 0o644, false);
        c.fill(&f, &pattern(len));
        let client = baseline(&c, BaselineMode::Normal, 5);
        let fd = client.open("/a/b/f", OpenFlags::read_only(), &OWNER).unwrap();
        let mut got = vec![];
        let mut calls = 0u64;
        loop {
            let part = client.read(fd, chunk).unwrap();
            calls += 1;
            if part.len() < chunk as usize {
                got.extend(part);
                break;
            }
            got.extend(part);
        }
        prop_assert_eq!(got, pattern(len));
        prop_assert_eq!(client.counters().sync_rpcs, calls + 1);
        let k = len as u64 / u64::from(chunk) + 1;
        prop_assert_eq!(calls, k);
    }

    #[test]
    fn all_clients_read_identical_bytes(
        sizes in proptest::collection::vec(0usize..70_000, 1..5),
        chunk in 512u32..80_000,
    ) {
        let c = Cluster::new();
        let d = c.mk(c.root(), "d", 0o755, true);
        for (i, n) in sizes.iter().enumerate() {
            let f = c.mk(d.inode, &format!("f{i}"), 0o644, false);
            let data: Vec<u8> = (0..*n).map(|j| (j as u8) ^ (i as u8).wrapping_mul(37)).collect();
            c.fill(&f, &data);
        }
        let agent = c.agent(1);
        let clients: Vec<Box<dyn FileClient>> = vec![
            Box::new(Arc::clone(&agent)),
            Box::new(baseline(&c, BaselineMode::Normal, 2)),
            Box::new(baseline(&c, BaselineMode::Dom, 3)),
        ];
        for (i, &size) in sizes.iter().enumerate() {
            let path = format!("/d/f{i}");
            let mut outputs = vec![];
            for cl in &clients {
                let fd = cl.open(&path, OpenFlags::read_only(), &OWNER).unwrap();
                let mut buf = vec![];
                loop {
                    let part = cl.read(fd, chunk).unwrap();
                    if part.is_empty() {
                        break;
                    }
                    buf.extend(part);
                }
                cl.close(fd).unwrap();
                outputs.push(buf);
            }
            prop_assert_eq!(outputs[0].len(), size);
            prop_assert_eq!(&outputs[0], &outputs[1]);
            prop_assert_eq!(&outputs[0], &outputs[2]);
        }
        for cl in &clients {
            cl.drain();
        }
        prop_assert!(c.server.admin_dump(false).opened.is_empty());
    }
}
