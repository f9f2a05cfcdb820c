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

//! Scripts: an optional namespace setup followed by ordered steps, one per
//! line.
//!
//! ```text
//! dir  /d 755 1000:100
//! file /d/f 644 1000:100 hello
//! c1 open /d/f r 2000:200
//! c1 read 3 4096
//! c2 chmod /d/f 600 1000:100
//! server chmod /d/f 644
//! deliver-invalidation c1
//! deliver-async c1
//! dump
//! ```
//!
//! File content runs to the end of the line, with whitespace runs collapsed
//! to single spaces.

use std::fmt;
use std::str::FromStr;

use buffetfs::{AccessMode, Credentials};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScriptError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown actor {0}")]
    UnknownActor(String),
    #[error("unknown path {0}")]
    UnknownPath(String),
    #[error("{0} is still running a step")]
    ActorBusy(String),
    #[error("nothing queued to deliver for {0}")]
    NothingToDeliver(String),
    #[error("setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Actor {
    /// The storage server acting on its own behalf.
    Server,
    Client(u32),
}

impl Actor {
    pub fn id(self) -> u32 {
        match self {
            Actor::Server => 0,
            Actor::Client(id) => id,
        }
    }
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Server => f.write_str("server"),
            Actor::Client(id) => write!(f, "c{id}"),
        }
    }
}

impl FromStr for Actor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "server" {
            return Ok(Actor::Server);
        }
        match s.strip_prefix('c').and_then(|n| n.parse::<u32>().ok()) {
            Some(id) if id > 0 => Ok(Actor::Client(id)),
            _ => Err(format!("bad actor {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Open {
        path: String,
        access: AccessMode,
        cred: Credentials,
    },
    Read {
        fd: u32,
        len: u32,
    },
    Write {
        fd: u32,
        data: Vec<u8>,
    },
    Close {
        fd: u32,
    },
    /// Clients send the request with `cred`; the server acts as the owner.
    Chmod {
        path: String,
        mode: u16,
        cred: Option<Credentials>,
    },
    /// Hands the oldest queued invalidation to the actor and returns its ack.
    DeliverInvalidation,
    /// Hands the actor's oldest queued one-way message to the server.
    DeliverAsync,
    Dump,
}

impl Action {
    pub fn is_delivery(&self) -> bool {
        matches!(self, Action::DeliverInvalidation | Action::DeliverAsync)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub actor: Actor,
    pub action: Action,
}

impl Step {
    pub fn new(actor: Actor, action: Action) -> Self {
        Self { actor, action }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetupEntry {
    pub path: String,
    pub dir: bool,
    pub mode: u16,
    pub owner: Credentials,
    pub content: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Script {
    /// Empty means [`default_namespace`].
    pub setup: Vec<SetupEntry>,
    pub steps: Vec<Step>,
}

pub const OWNER: Credentials = Credentials::new(1000, 100);
pub const GROUP_MEMBER: Credentials = Credentials::new(1001, 100);
pub const STRANGER: Credentials = Credentials::new(2000, 200);

/// `/d`, `/d/f1`, `/d/f2`, `/d/sub` and `/d/sub/g`, all owned by [`OWNER`].
pub fn default_namespace() -> Vec<SetupEntry> {
    let e = |path: &str, dir: bool, mode: u16, content: &[u8]| SetupEntry {
        path: path.to_string(),
        dir,
        mode,
        owner: OWNER,
        content: content.to_vec(),
    };
    vec![
        e("/d", true, 0o755, b""),
        e("/d/f1", false, 0o644, b"first file"),
        e("/d/f2", false, 0o644, b"second"),
        e("/d/sub", true, 0o755, b""),
        e("/d/sub/g", false, 0o640, b"nested"),
    ]
}

impl Script {
    pub fn namespace(&self) -> Vec<SetupEntry> {
        if self.setup.is_empty() {
            default_namespace()
        } else {
            self.setup.clone()
        }
    }

    pub fn clients(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .steps
            .iter()
            .filter_map(|s| match s.actor {
                Actor::Client(id) => Some(id),
                Actor::Server => None,
            })
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut script = Script::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ScriptError::Parse { line: i + 1, msg };
            let words: Vec<&str> = line.split_whitespace().collect();
            match words[0] {
                "dir" | "file" => script.setup.push(parse_setup(&words).map_err(err)?),
                _ => script.steps.push(parse_step(&words).map_err(err)?),
            }
        }
        Ok(script)
    }
}

fn parse_mode(s: &str) -> Result<u16, String> {
    u16::from_str_radix(s, 8)
        .ok()
        .filter(|m| *m < 0o10000)
        .ok_or_else(|| format!("bad mode {s:?}"))
}

fn parse_cred(s: &str) -> Result<Credentials, String> {
    let (u, g) = s.split_once(':').ok_or_else(|| format!("bad credentials {s:?}"))?;
    match (u.parse(), g.parse()) {
        (Ok(u), Ok(g)) => Ok(Credentials::new(u, g)),
        _ => Err(format!("bad credentials {s:?}")),
    }
}

fn parse_access(s: &str) -> Result<AccessMode, String> {
    match s {
        "r" => Ok(AccessMode::ReadOnly),
        "w" => Ok(AccessMode::WriteOnly),
        "rw" => Ok(AccessMode::ReadWrite),
        _ => Err(format!("bad access {s:?}")),
    }
}

fn access_str(a: AccessMode) -> &'static str {
    match a {
        AccessMode::ReadOnly => "r",
        AccessMode::WriteOnly => "w",
        AccessMode::ReadWrite => "rw",
    }
}

fn num<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("bad number {s:?}"))
}

fn arity(words: &[&str], n: usize) -> Result<(), String> {
    if words.len() == n {
        Ok(())
    } else {
        Err(format!("expected {} fields, got {}", n, words.len()))
    }
}

fn parse_setup(words: &[&str]) -> Result<SetupEntry, String> {
    let dir = words[0] == "dir";
    if dir {
        arity(words, 4)?;
    } else if words.len() < 4 {
        return Err("file takes a path, mode, owner and optional content".into());
    }
    Ok(SetupEntry {
        path: words[1].to_string(),
        dir,
        mode: parse_mode(words[2])?,
        owner: parse_cred(words[3])?,
        content: words[4..].join(" ").into_bytes(),
    })
}

fn parse_step(words: &[&str]) -> Result<Step, String> {
    match words[0] {
        "dump" => {
            arity(words, 1)?;
            return Ok(Step::new(Actor::Server, Action::Dump));
        }
        "deliver-invalidation" | "deliver-async" => {
            arity(words, 2)?;
            let actor: Actor = words[1].parse()?;
            if actor == Actor::Server {
                return Err("deliveries go to clients".into());
            }
            let action = if words[0] == "deliver-async" {
                Action::DeliverAsync
            } else {
                Action::DeliverInvalidation
            };
            return Ok(Step::new(actor, action));
        }
        _ => {}
    }
    let actor: Actor = words[0].parse()?;
    let verb = words.get(1).ok_or("missing action")?;
    let action = match (actor, *verb) {
        (Actor::Server, "chmod") => {
            arity(words, 4)?;
            Action::Chmod {
                path: words[2].to_string(),
                mode: parse_mode(words[3])?,
                cred: None,
            }
        }
        (Actor::Server, v) => return Err(format!("server cannot {v}")),
        (_, "open") => {
            arity(words, 5)?;
            Action::Open {
                path: words[2].to_string(),
                access: parse_access(words[3])?,
                cred: parse_cred(words[4])?,
            }
        }
        (_, "read") => {
            arity(words, 4)?;
            Action::Read {
                fd: num(words[2])?,
                len: num(words[3])?,
            }
        }
        (_, "write") => {
            arity(words, 4)?;
            Action::Write {
                fd: num(words[2])?,
                data: words[3].as_bytes().to_vec(),
            }
        }
        (_, "close") => {
            arity(words, 3)?;
            Action::Close { fd: num(words[2])? }
        }
        (_, "chmod") => {
            arity(words, 5)?;
            Action::Chmod {
                path: words[2].to_string(),
                mode: parse_mode(words[3])?,
                cred: Some(parse_cred(words[4])?),
            }
        }
        (_, v) => return Err(format!("unknown action {v:?}")),
    };
    Ok(Step::new(actor, action))
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cred = |c: &Credentials| format!("{}:{}", c.uid, c.gid);
        match &self.action {
            Action::Dump => f.write_str("dump"),
            Action::DeliverInvalidation => write!(f, "deliver-invalidation {}", self.actor),
            Action::DeliverAsync => write!(f, "deliver-async {}", self.actor),
            Action::Open { path, access, cred: c } => {
                write!(f, "{} open {path} {} {}", self.actor, access_str(*access), cred(c))
            }
            Action::Read { fd, len } => write!(f, "{} read {fd} {len}", self.actor),
            Action::Write { fd, data } => {
                write!(f, "{} write {fd} {}", self.actor, String::from_utf8_lossy(data))
            }
            Action::Close { fd } => write!(f, "{} close {fd}", self.actor),
            Action::Chmod { path, mode, cred: c } => {
                write!(f, "{} chmod {path} {mode:o}", self.actor)?;
                match c {
                    Some(c) => write!(f, " {}", cred(c)),
                    None => Ok(()),
                }
            }
        }
    }
}

impl fmt::Display for SetupEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.dir { "dir" } else { "file" };
        write!(
            f,
            "{kind} {} {:o} {}:{}",
            self.path, self.mode, self.owner.uid, self.owner.gid
        )?;
        if !self.content.is_empty() {
            write!(f, " {}", String::from_utf8_lossy(&self.content))?;
        }
        Ok(())
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.setup {
            writeln!(f, "{e}")?;
        }
        for s in &self.steps {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}
