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

//! The agent's partial copy of the namespace.

use std::collections::{BTreeMap, HashMap};

use crate::types::{BuffetInode, DirEntryRecord, FileMetadata, PermissionRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheNode {
    pub entry: DirEntryRecord,
    pub valid: bool,
    /// Name to child inode; present iff the listing was fetched and has not
    /// been invalidated since.
    pub children: Option<BTreeMap<String, BuffetInode>>,
    pub parent: Option<BuffetInode>,
}

impl CacheNode {
    pub fn inode(&self) -> BuffetInode {
        self.entry.inode
    }

    pub fn perm(&self) -> PermissionRecord {
        self.entry.perm
    }

    pub fn is_dir(&self) -> bool {
        self.entry.is_dir()
    }
}

#[derive(Debug, Clone)]
pub struct CacheTree {
    root: BuffetInode,
    nodes: HashMap<BuffetInode, CacheNode>,
}

impl CacheTree {
    /// A tree holding only an unvalidated root; its permission is learned
    /// from the first listing fetch.
    pub fn new(root: BuffetInode) -> Self {
        let placeholder = CacheNode {
            entry: DirEntryRecord::new("", root, PermissionRecord::dir(0, 0, 0)),
            valid: false,
            children: None,
            parent: None,
        };
        Self {
            root,
            nodes: HashMap::from([(root, placeholder)]),
        }
    }

    pub fn root(&self) -> BuffetInode {
        self.root
    }

    pub fn get(&self, inode: &BuffetInode) -> Option<&CacheNode> {
        self.nodes.get(inode)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CacheNode> {
        self.nodes.values()
    }

    /// Child of a directory whose listing is cached.
    pub fn child(&self, dir: &BuffetInode, name: &str) -> Option<&CacheNode> {
        let ino = self.nodes.get(dir)?.children.as_ref()?.get(name)?;
        self.nodes.get(ino)
    }

    pub fn has_listing(&self, dir: &BuffetInode) -> bool {
        self.nodes
            .get(dir)
            .is_some_and(|n| n.valid && n.children.is_some())
    }

    /// Installs a fetched listing: the directory becomes valid with the
    /// server's permission record and every child entry is replaced.
    pub fn install(&mut self, dir_meta: &FileMetadata, entries: &[DirEntryRecord]) {
        let dir = dir_meta.inode;
        let mut children = BTreeMap::new();
        for e in entries {
            children.insert(e.name.clone(), e.inode);
            let node = self.nodes.entry(e.inode).or_insert_with(|| CacheNode {
                entry: e.clone(),
                valid: true,
                children: None,
                parent: Some(dir),
            });
            node.entry = e.clone();
            node.valid = true;
            node.parent = Some(dir);
            if !e.is_dir() {
                node.children = None;
            }
        }
        let node = self.nodes.entry(dir).or_insert_with(|| CacheNode {
            entry: DirEntryRecord::new("", dir, dir_meta.perm),
            valid: true,
            children: None,
            parent: None,
        });
        node.entry.perm = dir_meta.perm;
        node.valid = true;
        node.children = Some(children);
    }

    /// Marks one inode invalid, dropping its listing if it is a directory.
    /// Returns false if the inode is not cached.
    pub fn invalidate(&mut self, inode: &BuffetInode) -> bool {
        match self.nodes.get_mut(inode) {
            Some(node) => {
                node.valid = false;
                node.children = None;
                true
            }
            None => false,
        }
    }

    /// Adds an entry the agent itself created. Leaves the parent listing
    /// alone; the creation round already invalidated it if it was cached.
    pub fn insert_created(&mut self, parent: BuffetInode, entry: DirEntryRecord) {
        self.nodes.insert(
            entry.inode,
            CacheNode {
                entry,
                valid: true,
                children: None,
                parent: Some(parent),
            },
        );
    }

    /// Forgets everything but an unvalidated root.
    pub fn reset(&mut self, root: BuffetInode) {
        *self = Self::new(root);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(inode: BuffetInode, perm: PermissionRecord) -> FileMetadata {
        FileMetadata {
            inode,
            perm,
            ..Default::default()
        }
    }

    #[test]
    fn install_and_invalidate() {
        let root = BuffetInode::root(1, 0);
        let mut t = CacheTree::new(root);
        assert!(!t.has_listing(&root));
        let a = DirEntryRecord::new("a", BuffetInode::new(1, 0, 1), PermissionRecord::dir(1, 1, 0o755));
        let f = DirEntryRecord::new("f", BuffetInode::new(1, 0, 2), PermissionRecord::file(1, 1, 0o644));
        t.install(&meta(root, PermissionRecord::dir(0, 0, 0o777)), &[a.clone(), f.clone()]);
        assert!(t.has_listing(&root));
        assert_eq!(t.get(&root).unwrap().perm().perm_bits(), 0o777);
        assert_eq!(t.child(&root, "f").unwrap().entry, f);
        assert!(!t.has_listing(&a.inode));

        assert!(t.invalidate(&f.inode));
        assert!(!t.child(&root, "f").unwrap().valid);
        assert!(t.has_listing(&root));
        assert!(t.invalidate(&root));
        assert!(!t.has_listing(&root));
        assert!(t.child(&root, "a").is_none());
        assert!(!t.invalidate(&BuffetInode::new(1, 0, 99)));
    }

    #[test]
    fn refetch_keeps_grandchild_listings() {
        let root = BuffetInode::root(1, 0);
        let mut t = CacheTree::new(root);
        let a = DirEntryRecord::new("a", BuffetInode::new(1, 0, 1), PermissionRecord::dir(1, 1, 0o755));
        t.install(&meta(root, PermissionRecord::dir(0, 0, 0o777)), std::slice::from_ref(&a));
        t.install(&meta(a.inode, a.perm), &[]);
        t.install(&meta(root, PermissionRecord::dir(0, 0, 0o777)), std::slice::from_ref(&a));
        assert!(t.has_listing(&a.inode));
    }
}
