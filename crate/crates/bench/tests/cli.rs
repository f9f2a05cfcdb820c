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

use std::io::{BufRead, BufReader};
use std::process::{Child, Command, Stdio};

use buffetfs_bench::BenchReport;

const BIN: &str = env!("CARGO_BIN_EXE_bench");

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve() -> (Server, String) {
    let mut child = Command::new(BIN)
        .args(["serve", "--addr", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();
    (Server(child), addr)
}

#[test]
fn run_writes_json_and_compare_reads_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.conf");
    std::fs::write(&cfg, "scenario = single_file\nfile_count = 20\ndir_fanout = 10\nfiles_per_worker = 1\n").unwrap();
    let out = dir.path().join("r.json");
    let status = Command::new(BIN)
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report = BenchReport::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.totals().count(), 6);

    let cmp = Command::new(BIN)
        .args(["compare", "--a"])
        .arg(&out)
        .arg("--b")
        .arg(&out)
        .output()
        .unwrap();
    assert!(cmp.status.success());
    let text = String::from_utf8(cmp.stdout).unwrap();
    assert_eq!(text.matches("1.000").count(), 6, "{text}");
}

#[test]
fn help_documents_csv_columns() {
    let out = Command::new(BIN).args(["run", "--help"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains(buffetfs_bench::report::CSV_COLUMNS), "{text}");
}

#[test]
fn bad_config_fails_without_verification_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "workers = lots\n").unwrap();
    let status = Command::new(BIN).args(["run", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn populate_then_mismatched_run_exits_2() {
    let (_server, addr) = serve();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("a.conf");
    let body = format!(
        "transport = socket\nserver_addr = {addr}\nfile_count = 30\ndir_fanout = 10\n\
         workers = 2\nfiles_per_worker = 5\nclient_kind = buffetfs\n"
    );
    std::fs::write(&cfg, format!("{body}seed = 1\n")).unwrap();
    let out = Command::new(BIN).args(["populate", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = String::from_utf8(out.stdout).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.starts_with('/')).count(), 30);

    // same server, same layout: populating again is refused
    let again = Command::new(BIN).args(["populate", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(again.code(), Some(1));

    let ok = Command::new(BIN).args(["run", "--config"]).arg(&cfg).status().unwrap();
    assert!(ok.success());

    // a different seed expects different content
    std::fs::write(&cfg, format!("{body}seed = 2\n")).unwrap();
    let bad = Command::new(BIN).args(["run", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(bad.code(), Some(2));
}
