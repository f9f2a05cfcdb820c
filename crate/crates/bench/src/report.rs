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

//! Benchmark results and their TEXT, CSV and JSON forms.
//!
//! A report is a flat list of rows. Each measured phase of each client kind
//! has one row per worker plus a total row (empty `worker` column) whose
//! additive fields are the sums of the worker rows and whose `makespan_ns`
//! is the slowest worker's elapsed time.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{ClientKind, Scenario};
use crate::BenchError;

/// CSV column order, shown in the CLI help.
pub const CSV_COLUMNS: &str = "scenario,phase,kind,worker,files_accessed,bytes_read,sync_rpcs,\
async_msgs,metadata_rpcs,elapsed_ns,makespan_ns,open_ns,read_ns,close_ns,content_digest";

pub const SAMPLING: &str = "uniform-with-repetition";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Cold,
    Warm,
    Run,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    Simulated,
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: Scenario,
    pub phase: Phase,
    pub kind: ClientKind,
    pub worker: Option<u32>,
    pub files_accessed: u64,
    pub bytes_read: u64,
    pub sync_rpcs: u64,
    pub async_msgs: u64,
    pub metadata_rpcs: u64,
    pub elapsed_ns: u64,
    pub makespan_ns: u64,
    pub open_ns: u64,
    pub read_ns: u64,
    pub close_ns: u64,
    pub content_digest: String,
}

impl ReportRow {
    pub fn zero(scenario: Scenario, phase: Phase, kind: ClientKind, worker: Option<u32>) -> Self {
        Self {
            scenario,
            phase,
            kind,
            worker,
            files_accessed: 0,
            bytes_read: 0,
            sync_rpcs: 0,
            async_msgs: 0,
            metadata_rpcs: 0,
            elapsed_ns: 0,
            makespan_ns: 0,
            open_ns: 0,
            read_ns: 0,
            close_ns: 0,
            content_digest: crate::manifest::ContentSum::default().to_string(),
        }
    }

    pub fn is_total(&self) -> bool {
        self.worker.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchReport {
    pub clock: Clock,
    pub seed: u64,
    /// How workers choose files.
    pub sampling: String,
    pub rows: Vec<ReportRow>,
}

impl BenchReport {
    pub fn new(clock: Clock, seed: u64) -> Self {
        Self {
            clock,
            seed,
            sampling: SAMPLING.to_string(),
            rows: Vec::new(),
        }
    }

    pub fn total(&self, phase: Phase, kind: ClientKind) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.is_total() && r.phase == phase && r.kind == kind)
    }

    pub fn totals(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.is_total())
    }

    pub fn render(&self, format: Format) -> Result<String, BenchError> {
        match format {
            Format::Text => Ok(self.to_text()),
            Format::Csv => self.to_csv(),
            Format::Json => Ok(serde_json::to_string_pretty(self)? + "\n"),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Total rows only, one line each.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "clock={} seed={} sampling={}\n",
            clock_name(self.clock),
            self.seed,
            self.sampling
        );
        let _ = writeln!(
            out,
            "{:<12} {:<5} {:<16} {:>8} {:>10} {:>8} {:>8} {:>8} {:>14} {:>12} {:>12} {:>12} {:>10}",
            "scenario", "phase", "kind", "files", "bytes", "sync", "async", "meta",
            "elapsed_ns", "makespan_ns", "open_ns", "read_ns", "close_ns"
        );
        for r in self.totals() {
            let _ = writeln!(
                out,
                "{:<12} {:<5} {:<16} {:>8} {:>10} {:>8} {:>8} {:>8} {:>14} {:>12} {:>12} {:>12} {:>10}",
                r.scenario.to_string(),
                phase_name(r.phase),
                r.kind.name(),
                r.files_accessed,
                r.bytes_read,
                r.sync_rpcs,
                r.async_msgs,
                r.metadata_rpcs,
                r.elapsed_ns,
                r.makespan_ns,
                r.open_ns,
                r.read_ns,
                r.close_ns
            );
        }
        out
    }

    /// Metadata as `# key=value` lines, then a header and one record per row.
    pub fn to_csv(&self) -> Result<String, BenchError> {
        let mut out = format!(
            "# clock={}\n# seed={}\n# sampling={}\n",
            clock_name(self.clock),
            self.seed,
            self.sampling
        );
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(CSV_COLUMNS.split(','))?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| BenchError::Report(e.to_string()))?;
        out.push_str(&String::from_utf8(bytes).map_err(|e| BenchError::Report(e.to_string()))?);
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Self, BenchError> {
        let mut clock = None;
        let mut seed = None;
        let mut sampling = None;
        for line in text.lines().filter_map(|l| l.strip_prefix("# ")) {
            match line.split_once('=') {
                Some(("clock", v)) => clock = Some(v.to_string()),
                Some(("seed", v)) => seed = v.parse().ok(),
                Some(("sampling", v)) => sampling = Some(v.to_string()),
                _ => {}
            }
        }
        let missing = |what: &str| BenchError::Report(format!("CSV lacks {what}"));
        let clock = match clock.as_deref() {
            Some("simulated") => Clock::Simulated,
            Some("wall") => Clock::Wall,
            _ => return Err(missing("a clock")),
        };
        let mut report = Self {
            clock,
            seed: seed.ok_or_else(|| missing("a seed"))?,
            sampling: sampling.ok_or_else(|| missing("the sampling"))?,
            rows: Vec::new(),
        };
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        for row in r.deserialize() {
            report.rows.push(row?);
        }
        Ok(report)
    }
}

fn clock_name(c: Clock) -> &'static str {
    match c {
        Clock::Simulated => "simulated",
        Clock::Wall => "wall",
    }
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Cold => "cold",
        Phase::Warm => "warm",
        Phase::Run => "run",
    }
}

/// Side-by-side comparison of the total rows two reports share.
pub fn compare(a: &BenchReport, b: &BenchReport) -> String {
    let mut out = format!(
        "{:<12} {:<5} {:<16} {:>10} {:>10} {:>14} {:>14} {:>8}\n",
        "scenario", "phase", "kind", "sync_a", "sync_b", "elapsed_a", "elapsed_b", "b/a"
    );
    for ra in a.totals() {
        let Some(rb) = b
            .totals()
            .find(|rb| (rb.scenario, rb.phase, rb.kind) == (ra.scenario, ra.phase, ra.kind))
        else {
            continue;
        };
        let ratio = if ra.elapsed_ns == 0 {
            "-".to_string()
        } else {
            format!("{:.3}", rb.elapsed_ns as f64 / ra.elapsed_ns as f64)
        };
        let _ = writeln!(
            out,
            "{:<12} {:<5} {:<16} {:>10} {:>10} {:>14} {:>14} {:>8}",
            ra.scenario.to_string(),
            phase_name(ra.phase),
            ra.kind.name(),
            ra.sync_rpcs,
            rb.sync_rpcs,
            ra.elapsed_ns,
            rb.elapsed_ns,
            ratio
        );
    }
    out
}
