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

//! Seeded random schedules. Each step is drawn from the actions enabled in
//! the executor's current state, so every generated script is well formed.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use buffetfs::{AccessMode, Credentials};

use crate::checker::{check_linearizable, describe, History, Verdict};
use crate::executor::{Executor, Trace};
use crate::script::{default_namespace, Action, Actor, Script, ScriptError, Step, GROUP_MEMBER, OWNER, STRANGER};

const MODES: [u16; 8] = [0o000, 0o600, 0o640, 0o644, 0o700, 0o711, 0o750, 0o755];
const CREDS: [Credentials; 3] = [OWNER, GROUP_MEMBER, STRANGER];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomConfig {
    pub seed: u64,
    pub clients: u32,
    pub steps: usize,
}

#[derive(Debug)]
pub struct RandomRun {
    pub script: Script,
    pub trace: Trace,
    pub history: History,
    pub verdict: Verdict,
}

impl RandomRun {
    pub fn is_clean(&self) -> bool {
        self.verdict.is_linearizable() && self.trace.coherence_violations.is_empty()
    }

    pub fn report(&self) -> String {
        let mut out = describe(&self.history, &self.verdict, &self.trace);
        for v in &self.trace.coherence_violations {
            out.push('\n');
            out.push_str(v);
        }
        out.push_str("\nscript:\n");
        out.push_str(&self.script.to_string());
        out
    }
}

fn pick_step(ex: &Executor, rng: &mut ChaCha8Rng, paths: &[String]) -> Step {
    let clients = ex.clients();
    let mut options: Vec<Step> = Vec::new();
    for &c in &clients {
        let actor = Actor::Client(c);
        if ex.pending_invalidations(c) > 0 {
            // weighted so rounds usually finish within a few steps
            for _ in 0..3 {
                options.push(Step::new(actor, Action::DeliverInvalidation));
            }
        }
        if ex.pending_async(actor) > 0 {
            options.push(Step::new(actor, Action::DeliverAsync));
        }
        if !ex.is_idle(actor) {
            continue;
        }
        for _ in 0..3 {
            let access = *[AccessMode::ReadOnly, AccessMode::WriteOnly, AccessMode::ReadWrite]
                .choose(rng)
                .unwrap();
            options.push(Step::new(
                actor,
                Action::Open {
                    path: paths.choose(rng).unwrap().clone(),
                    access,
                    cred: *CREDS.choose(rng).unwrap(),
                },
            ));
        }
        if let Some(&fd) = ex.open_fds(c).choose(rng) {
            let action = match rng.random_range(0..3) {
                0 => Action::Read { fd, len: 64 },
                1 => Action::Write {
                    fd,
                    data: format!("c{c}").into_bytes(),
                },
                _ => Action::Close { fd },
            };
            options.push(Step::new(actor, action));
        }
        options.push(Step::new(
            actor,
            Action::Chmod {
                path: paths.choose(rng).unwrap().clone(),
                mode: *MODES.choose(rng).unwrap(),
                cred: Some(if rng.random_bool(0.9) { OWNER } else { STRANGER }),
            },
        ));
    }
    if ex.is_idle(Actor::Server) {
        options.push(Step::new(
            Actor::Server,
            Action::Chmod {
                path: paths.choose(rng).unwrap().clone(),
                mode: *MODES.choose(rng).unwrap(),
                cred: None,
            },
        ));
    }
    options.choose(rng).expect("delivery or an idle actor is always available").clone()
}

/// Generates and executes one random schedule, then checks it.
pub fn run_random(cfg: RandomConfig) -> Result<RandomRun, ScriptError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let namespace = default_namespace();
    let paths: Vec<String> = namespace.iter().map(|e| e.path.clone()).collect();
    let clients: Vec<u32> = (1..=cfg.clients).collect();
    let mut ex = Executor::new(&namespace, &clients)?;
    let mut steps = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let step = pick_step(&ex, &mut rng, &paths);
        ex.step(&step)?;
        steps.push(step);
    }
    ex.finish()?;
    let root_perm = ex.server().config().root_perm;
    let trace = ex.into_trace();
    let history = History::from_trace(root_perm, &namespace, &trace);
    let verdict = check_linearizable(&history);
    Ok(RandomRun {
        script: Script {
            setup: namespace,
            steps,
        },
        trace,
        history,
        verdict,
    })
}
