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

//! Workloads for comparing BuffetFS against classic clients: a single small
//! file accessed cold and warm, and many workers reading random files. Every
//! read is checked against the deterministic content generator.

pub mod config;
pub mod manifest;
pub mod report;
pub mod run;
pub mod testbed;

use buffetfs::FsError;
use thiserror::Error;

pub use config::{BenchConfig, ClientKind, ConfigError, Scenario, TransportChoice};
pub use manifest::{file_content, ContentSum, Manifest};
pub use report::{compare, BenchReport, Clock, Format, Phase, ReportRow};
pub use run::{run, run_concurrent, run_single_file, worker_rng};
pub use testbed::{Client, Testbed, BENCH_CRED};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("server already holds files")]
    Exists,
    #[error("content of {path} does not match the generator")]
    Verification { path: String },
    #[error(transparent)]
    Fs(#[from] FsError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("report: {0}")]
    Report(String),
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Report(e.to_string())
    }
}

impl From<serde_json::Error> for BenchError {
    fn from(e: serde_json::Error) -> Self {
        BenchError::Report(e.to_string())
    }
}
