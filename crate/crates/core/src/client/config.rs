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

//! Client configuration file.
//!
//! ```toml
//! client_id = 7
//! home_host_id = 1
//! home_version = 0
//! transport = "sim"
//!
//! [latency]
//! rtt_us = 200.0
//! per_byte_us = 0.01
//! service_us = 50.0
//!
//! [[servers]]
//! host_id = 1
//! version = 0
//! address = "127.0.0.1:7100"
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transport::LatencyModel;
use crate::types::{BuffetInode, ClusterConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("bad config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    #[default]
    Sim,
    Socket,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerAddress {
    pub host_id: u32,
    pub version: u32,
    pub address: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub client_id: u32,
    pub home_host_id: u32,
    #[serde(default)]
    pub home_version: u32,
    #[serde(default)]
    pub transport: TransportKind,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default)]
    pub servers: Vec<ServerAddress>,
}

impl ClientConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ClientConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.latency.is_valid() {
            return Err(ConfigError::Invalid("latency parameters must be non-negative".into()));
        }
        self.cluster()
            .resolve(&self.home_root())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn home_root(&self) -> BuffetInode {
        BuffetInode::root(self.home_host_id, self.home_version)
    }

    pub fn cluster(&self) -> ClusterConfig {
        let mut c = ClusterConfig::new();
        for s in &self.servers {
            c.insert(s.host_id, s.version, s.address.clone());
        }
        c
    }
}
