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

use thiserror::Error;

use crate::transport::TransportError;
use crate::types::StaleInode;
use crate::wire::ErrorCode;

/// Errors surfaced by the client-side file APIs.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FsError {
    #[error("no such file or directory")]
    NotFound,
    #[error("permission denied")]
    AccessDenied,
    #[error("stale inode")]
    StaleInode,
    #[error("bad file descriptor")]
    BadHandle,
    #[error("not a directory")]
    NotADirectory,
    #[error("is a directory")]
    IsADirectory,
    #[error("file exists")]
    Exists,
    #[error("invalid path {0:?}")]
    InvalidPath(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("protocol error: unexpected {0}")]
    Protocol(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

impl FsError {
    pub fn from_reply(code: ErrorCode, detail: &str) -> Self {
        match code {
            ErrorCode::NotFound => FsError::NotFound,
            ErrorCode::AccessDenied => FsError::AccessDenied,
            ErrorCode::StaleInode => FsError::StaleInode,
            ErrorCode::BadHandle => FsError::BadHandle,
            ErrorCode::NotADirectory => FsError::NotADirectory,
            ErrorCode::Exists => FsError::Exists,
            ErrorCode::Io if detail == crate::server::IS_A_DIRECTORY => FsError::IsADirectory,
            ErrorCode::Io => FsError::Io(detail.to_string()),
        }
    }
}

impl From<StaleInode> for FsError {
    fn from(_: StaleInode) -> Self {
        FsError::StaleInode
    }
}

pub type FsResult<T> = Result<T, FsError>;
