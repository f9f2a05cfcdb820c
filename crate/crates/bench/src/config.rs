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

//! Benchmark configuration in a flat `key = value` text format.
//!
//! ```text
//! # comments and blank lines are ignored
//! scenario = concurrent
//! client_kind = buffetfs, baseline-normal
//! file_count = 10000
//! ```
//!
//! `client_kind` takes a comma-separated list or `all`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use buffetfs::LatencyModel;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    SingleFile,
    Concurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClientKind {
    #[serde(rename = "buffetfs")]
    BuffetFs,
    #[serde(rename = "baseline-normal")]
    BaselineNormal,
    #[serde(rename = "baseline-dom")]
    BaselineDom,
}

impl ClientKind {
    pub const ALL: [ClientKind; 3] = [
        ClientKind::BuffetFs,
        ClientKind::BaselineNormal,
        ClientKind::BaselineDom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClientKind::BuffetFs => "buffetfs",
            ClientKind::BaselineNormal => "baseline-normal",
            ClientKind::BaselineDom => "baseline-dom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportChoice {
    Sim,
    Socket,
}

macro_rules! text_enum {
    ($ty:ty { $($name:literal => $v:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($v),)+
                    other => Err(format!("unknown value {other:?}")),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $v {
                    return f.write_str($name);
                })+
                unreachable!()
            }
        }
    };
}

text_enum!(Scenario {
    "single_file" => Scenario::SingleFile,
    "concurrent" => Scenario::Concurrent,
});

text_enum!(ClientKind {
    "buffetfs" => ClientKind::BuffetFs,
    "baseline-normal" => ClientKind::BaselineNormal,
    "baseline-dom" => ClientKind::BaselineDom,
});

text_enum!(TransportChoice {
    "sim" => TransportChoice::Sim,
    "socket" => TransportChoice::Socket,
});

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub scenario: Scenario,
    pub client_kinds: Vec<ClientKind>,
    pub file_count: u64,
    pub file_size_bytes: u64,
    pub files_per_worker: u64,
    pub workers: u32,
    /// Files per directory.
    pub dir_fanout: u32,
    pub latency: LatencyModel,
    pub seed: u64,
    pub transport: TransportChoice,
    /// One agent per worker instead of one shared agent.
    pub agent_per_worker: bool,
    /// List every directory before measuring, so BuffetFS caches start warm.
    pub warm_dirs: bool,
    /// Existing socket server; a private one is started when unset.
    pub server_addr: Option<String>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Concurrent,
            client_kinds: ClientKind::ALL.to_vec(),
            file_count: 10_000,
            file_size_bytes: 4096,
            files_per_worker: 100,
            workers: 8,
            dir_fanout: 100,
            latency: LatencyModel::default(),
            seed: 1,
            transport: TransportChoice::Sim,
            agent_per_worker: false,
            warm_dirs: false,
            server_addr: None,
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| ConfigError::Parse {
        line,
        msg: format!("{key}: {e}"),
    })
}

fn parse_kinds(line: usize, value: &str) -> Result<Vec<ClientKind>, ConfigError> {
    if value == "all" {
        return Ok(ClientKind::ALL.to_vec());
    }
    let mut kinds = Vec::new();
    for part in value.split(',').map(str::trim) {
        let k = parse_value(line, "client_kind", part)?;
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    Ok(kinds)
}

impl BenchConfig {
    /// Parses the text format on top of the defaults, then validates.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let (mut rtt, mut per_byte, mut service) =
            (cfg.latency.rtt_us, cfg.latency.per_byte_us, cfg.latency.service_us);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Parse {
                    line,
                    msg: format!("expected key = value, got {content:?}"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "scenario" => cfg.scenario = parse_value(line, key, value)?,
                "client_kind" => cfg.client_kinds = parse_kinds(line, value)?,
                "file_count" => cfg.file_count = parse_value(line, key, value)?,
                "file_size_bytes" => cfg.file_size_bytes = parse_value(line, key, value)?,
                "files_per_worker" => cfg.files_per_worker = parse_value(line, key, value)?,
                "workers" => cfg.workers = parse_value(line, key, value)?,
                "dir_fanout" => cfg.dir_fanout = parse_value(line, key, value)?,
                "rtt_us" => rtt = parse_value(line, key, value)?,
                "per_byte_us" => per_byte = parse_value(line, key, value)?,
                "service_us" => service = parse_value(line, key, value)?,
                "seed" => cfg.seed = parse_value(line, key, value)?,
                "transport" => cfg.transport = parse_value(line, key, value)?,
                "agent_per_worker" => cfg.agent_per_worker = parse_value(line, key, value)?,
                "warm_dirs" => cfg.warm_dirs = parse_value(line, key, value)?,
                "server_addr" => cfg.server_addr = Some(value.to_string()),
                other => {
                    return Err(ConfigError::Parse {
                        line,
                        msg: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        cfg.latency = LatencyModel {
            rtt_us: rtt,
            per_byte_us: per_byte,
            service_us: service,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if self.client_kinds.is_empty() {
            return bad("client_kind lists no client");
        }
        if self.files_per_worker > self.file_count {
            return bad("files_per_worker exceeds file_count");
        }
        if self.dir_fanout == 0 {
            return bad("dir_fanout must be at least 1");
        }
        if self.file_size_bytes > u64::from(u32::MAX) {
            return bad("file_size_bytes must fit one read request");
        }
        if !self.latency.is_valid() {
            return bad("latency parameters must be finite and non-negative");
        }
        if self.server_addr.is_some() && self.transport != TransportChoice::Socket {
            return bad("server_addr requires transport = socket");
        }
        Ok(())
    }
}

impl fmt::Display for BenchConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kinds: Vec<&str> = self.client_kinds.iter().map(|k| k.name()).collect();
        writeln!(f, "scenario = {}", self.scenario)?;
        writeln!(f, "client_kind = {}", kinds.join(", "))?;
        writeln!(f, "file_count = {}", self.file_count)?;
        writeln!(f, "file_size_bytes = {}", self.file_size_bytes)?;
        writeln!(f, "files_per_worker = {}", self.files_per_worker)?;
        writeln!(f, "workers = {}", self.workers)?;
        writeln!(f, "dir_fanout = {}", self.dir_fanout)?;
        writeln!(f, "rtt_us = {}", self.latency.rtt_us)?;
        writeln!(f, "per_byte_us = {}", self.latency.per_byte_us)?;
        writeln!(f, "service_us = {}", self.latency.service_us)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "transport = {}", self.transport)?;
        writeln!(f, "agent_per_worker = {}", self.agent_per_worker)?;
        writeln!(f, "warm_dirs = {}", self.warm_dirs)?;
        if let Some(addr) = &self.server_addr {
            writeln!(f, "server_addr = {addr}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_desk_scale() {
        let cfg = BenchConfig::parse("").unwrap();
        assert_eq!(cfg, BenchConfig::default());
        assert_eq!((cfg.file_count, cfg.file_size_bytes), (10_000, 4096));
        assert_eq!((cfg.workers, cfg.files_per_worker), (8, 100));
    }

    #[test]
    fn parses_every_key() {
        let cfg = BenchConfig::parse(
            "scenario = single_file\n\
             client_kind = baseline-dom, buffetfs  # two kinds\n\
             file_count = 50\nfile_size_bytes = 10\nfiles_per_worker = 5\n\
             workers = 3\ndir_fanout = 7\nrtt_us = 1.5\nper_byte_us = 0\n\
             service_us = 2\nseed = 9\ntransport = socket\n\
             agent_per_worker = true\nwarm_dirs = true\nserver_addr = 127.0.0.1:9\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario, Scenario::SingleFile);
        assert_eq!(cfg.client_kinds, [ClientKind::BaselineDom, ClientKind::BuffetFs]);
        assert_eq!(cfg.latency, LatencyModel::new(1.5, 0.0, 2.0));
        assert_eq!(cfg.server_addr.as_deref(), Some("127.0.0.1:9"));
        assert!(cfg.agent_per_worker && cfg.warm_dirs);
        assert_eq!(BenchConfig::parse(&cfg.to_string()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        for (text, line) in [
            ("workers = many", 1),
            ("\nbogus = 1", 2),
            ("no equals sign", 1),
            ("client_kind = nfs", 1),
        ] {
            match BenchConfig::parse(text) {
                Err(ConfigError::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        for text in [
            "file_count = 10\nfiles_per_worker = 11",
            "dir_fanout = 0",
            "rtt_us = -1",
            "server_addr = 1.2.3.4:5",
            "file_size_bytes = 5000000000",
        ] {
            assert!(matches!(BenchConfig::parse(text), Err(ConfigError::Invalid(_))), "{text}");
        }
    }
}
