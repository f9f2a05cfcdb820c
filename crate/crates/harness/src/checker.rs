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

//! Linearizability of open admission against permission changes.
//!
//! A history holds the successful permission changes and every open that
//! was admitted or refused for lack of permission, each with the step
//! interval it occupied. The checker searches for a total order that
//! respects real time (an operation that finished before another began
//! stays first) in which every admission decision matches a sequential
//! permission model.

use std::collections::HashSet;

use buffetfs::{access_mask_for, check_permission, AccessMask, Credentials, FsError, OpenFlags, PermissionRecord};

use crate::executor::{StepResult, Trace};
use crate::script::{Action, SetupEntry};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpKind {
    Chmod {
        node: usize,
        bits: u16,
    },
    Open {
        /// Directories from the root down, then the file.
        chain: Vec<usize>,
        cred: Credentials,
        want: AccessMask,
        admitted: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Op {
    /// Trace record this operation came from.
    pub record: usize,
    pub invoked: usize,
    /// `usize::MAX` if it never finished.
    pub responded: usize,
    pub kind: OpKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelNode {
    pub path: String,
    pub perm: PermissionRecord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct History {
    /// Index 0 is the root.
    pub nodes: Vec<ModelNode>,
    pub ops: Vec<Op>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// Positions in `History::ops`, in a valid sequential order.
    Linearizable(Vec<usize>),
    /// The longest order found and the operations none of which could come
    /// next.
    Violation { prefix: Vec<usize>, stuck: Vec<usize> },
}

impl Verdict {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, Verdict::Linearizable(_))
    }
}

impl History {
    pub fn new(root_perm: PermissionRecord, namespace: &[SetupEntry]) -> Self {
        let mut nodes = vec![ModelNode {
            path: "/".into(),
            perm: root_perm,
        }];
        for e in namespace {
            let perm = if e.dir {
                PermissionRecord::dir(e.owner.uid, e.owner.gid, e.mode)
            } else {
                PermissionRecord::file(e.owner.uid, e.owner.gid, e.mode)
            };
            nodes.push(ModelNode {
                path: e.path.clone(),
                perm,
            });
        }
        Self {
            nodes,
            ops: Vec::new(),
        }
    }

    fn index(&self, path: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.path == path)
    }

    /// Node indices for every prefix of `path`, root first.
    fn chain(&self, path: &str) -> Option<Vec<usize>> {
        let mut out = vec![0];
        let mut prefix = String::new();
        for part in path.split('/').filter(|p| !p.is_empty()) {
            prefix.push('/');
            prefix.push_str(part);
            out.push(self.index(&prefix)?);
        }
        Some(out)
    }

    /// Extracts the admission history from an executed trace.
    pub fn from_trace(root_perm: PermissionRecord, namespace: &[SetupEntry], trace: &Trace) -> Self {
        let mut h = Self::new(root_perm, namespace);
        for (i, rec) in trace.records.iter().enumerate() {
            let responded = rec.completed.unwrap_or(usize::MAX);
            let kind = match (&rec.step.action, &rec.result) {
                (Action::Chmod { path, mode, .. }, Some(StepResult::Chmodded)) => {
                    match h.index(path) {
                        Some(node) => OpKind::Chmod { node, bits: *mode },
                        None => continue,
                    }
                }
                (Action::Open { path, access, cred }, Some(result)) => {
                    let admitted = match result {
                        StepResult::Opened(_) => true,
                        StepResult::Failed(FsError::AccessDenied) => false,
                        _ => continue,
                    };
                    let Some(chain) = h.chain(path) else { continue };
                    let flags = OpenFlags {
                        access: *access,
                        create: false,
                        truncate: false,
                    };
                    OpKind::Open {
                        chain,
                        cred: *cred,
                        want: access_mask_for(&flags),
                        admitted,
                    }
                }
                _ => continue,
            };
            h.ops.push(Op {
                record: i,
                invoked: rec.issued,
                responded,
                kind,
            });
        }
        h
    }
}

/// Sequential reference: search permission on every directory of the
/// chain, then the wanted access on the last node.
fn admits(perms: &[u16], nodes: &[ModelNode], chain: &[usize], cred: &Credentials, want: AccessMask) -> bool {
    let perm_at = |i: usize| nodes[i].perm.with_perm_bits(perms[i]);
    let (last, dirs) = chain.split_last().expect("chain includes the root");
    dirs.iter()
        .all(|d| check_permission(&perm_at(*d), cred, AccessMask::EXEC))
        && check_permission(&perm_at(*last), cred, want)
}

pub fn check_linearizable(history: &History) -> Verdict {
    let n = history.ops.len();
    assert!(n <= 128, "history too long for the search");
    let start: Vec<u16> = history.nodes.iter().map(|m| m.perm.perm_bits()).collect();
    let mut search = Search {
        h: history,
        failed: HashSet::new(),
        order: Vec::new(),
        best: Vec::new(),
        stuck: Vec::new(),
    };
    if search.dfs(0, &start) {
        Verdict::Linearizable(search.order)
    } else {
        Verdict::Violation {
            prefix: search.best,
            stuck: search.stuck,
        }
    }
}

struct Search<'a> {
    h: &'a History,
    failed: HashSet<(u128, Vec<u16>)>,
    order: Vec<usize>,
    best: Vec<usize>,
    stuck: Vec<usize>,
}

impl Search<'_> {
    fn dfs(&mut self, done: u128, perms: &[u16]) -> bool {
        let ops = &self.h.ops;
        if self.order.len() == ops.len() {
            return true;
        }
        if self.failed.contains(&(done, perms.to_vec())) {
            return false;
        }
        let pending: Vec<usize> = (0..ops.len()).filter(|i| done & (1 << i) == 0).collect();
        // an op may go next only if no pending op finished before it began
        let candidates: Vec<usize> = pending
            .iter()
            .copied()
            .filter(|&i| !pending.iter().any(|&j| ops[j].responded < ops[i].invoked))
            .collect();
        for &i in &candidates {
            let next = match &ops[i].kind {
                OpKind::Chmod { node, bits } => {
                    let mut p = perms.to_vec();
                    p[*node] = *bits;
                    p
                }
                OpKind::Open {
                    chain,
                    cred,
                    want,
                    admitted,
                } => {
                    if admits(perms, &self.h.nodes, chain, cred, *want) != *admitted {
                        continue;
                    }
                    perms.to_vec()
                }
            };
            self.order.push(i);
            if self.dfs(done | (1 << i), &next) {
                return true;
            }
            self.order.pop();
        }
        if self.order.len() >= self.best.len() {
            self.best = self.order.clone();
            self.stuck = candidates;
        }
        self.failed.insert((done, perms.to_vec()));
        false
    }
}

/// Human-readable verdict naming the trace steps involved.
pub fn describe(history: &History, verdict: &Verdict, trace: &Trace) -> String {
    match verdict {
        Verdict::Linearizable(order) => format!("linearizable ({} ops)", order.len()),
        Verdict::Violation { prefix, stuck } => {
            let mut out = format!("no valid order after {} ops; stuck on:", prefix.len());
            for i in stuck {
                let op = &history.ops[*i];
                let rec = &trace.records[op.record];
                out.push_str(&format!("\n  step {} [{}]: {:?}", op.record, rec.step, rec.result));
            }
            out
        }
    }
}
