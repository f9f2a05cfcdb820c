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

//! Deterministic interleaving driver for a BuffetFS server and its clients.
//!
//! Scripts choose when each client acts and when queued invalidations and
//! one-way messages are delivered. The resulting traces are checked for
//! linearizability of open admission against permission changes, and for
//! clients never holding a usable record that the server has superseded.

pub mod checker;
pub mod executor;
pub mod random;
pub mod script;
mod world;

pub use checker::{check_linearizable, History, Verdict};
pub use executor::{Executor, Record, StepResult, Trace};
pub use random::{run_random, RandomConfig, RandomRun};
pub use script::{Action, Actor, Script, ScriptError, SetupEntry, Step};
pub use world::{HarnessTransport, Wait};
