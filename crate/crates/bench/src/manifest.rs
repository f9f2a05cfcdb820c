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

//! Namespace layout and file content, both pure functions of the
//! configuration so any run can verify data without a stored corpus.

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_xorshift::XorShiftRng;
use sha2::{Digest, Sha256};

/// Content of file `index`: xorshift output seeded from the run seed and
/// the file index.
pub fn file_content(seed: u64, index: u64, len: usize) -> Vec<u8> {
    let mut rng = XorShiftRng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut out = vec![0; len];
    rng.fill_bytes(&mut out);
    out
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// Order-independent sum of content digests: 256-bit lane-wise wrapping
/// addition, so repeated accesses still count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ContentSum([u64; 4]);

impl ContentSum {
    pub fn add(&mut self, digest: &[u8; 32]) {
        for (lane, chunk) in self.0.iter_mut().zip(digest.chunks_exact(8)) {
            *lane = lane.wrapping_add(u64::from_le_bytes(chunk.try_into().unwrap()));
        }
    }

    pub fn merge(&mut self, other: &ContentSum) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a = a.wrapping_add(b);
        }
    }
}

impl fmt::Display for ContentSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for lane in self.0 {
            write!(f, "{lane:016x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub seed: u64,
    pub file_size: u64,
    pub dir_fanout: u32,
    pub dirs: Vec<String>,
    pub files: Vec<String>,
}

impl Manifest {
    /// `file_count` files split into directories of `dir_fanout` entries
    /// under the root, the last directory taking the remainder.
    pub fn layout(file_count: u64, dir_fanout: u32, file_size: u64, seed: u64) -> Self {
        assert!(dir_fanout > 0, "dir_fanout must be positive");
        let fanout = u64::from(dir_fanout);
        let dirs: Vec<String> = (0..file_count.div_ceil(fanout))
            .map(|d| format!("/d{d:05}"))
            .collect();
        let files = (0..file_count)
            .map(|i| format!("{}/f{i:06}", dirs[(i / fanout) as usize]))
            .collect();
        Self {
            seed,
            file_size,
            dir_fanout,
            dirs,
            files,
        }
    }

    pub fn content(&self, index: usize) -> Vec<u8> {
        file_content(self.seed, index as u64, self.file_size as usize)
    }

    pub fn dir_of(&self, index: usize) -> usize {
        index / self.dir_fanout as usize
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "# {} files of {} bytes in {} directories, seed {}",
            self.files.len(),
            self.file_size,
            self.dirs.len(),
            self.seed
        )?;
        for p in &self.files {
            writeln!(f, "{p}")?;
        }
        Ok(())
    }
}
