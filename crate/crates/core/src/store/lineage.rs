use std::collections::{BTreeSet, HashSet, VecDeque};

use rusqlite::OptionalExtension;
use serde::{Deserialize, Serialize};

use super::{Result, Store, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    File,
    AppExec,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, schemars::JsonSchema)]
pub struct LineageNode {
    pub kind: NodeKind,
    /// `file_id` for files, `app_exec_id` for executions.
    pub id: String,
    /// Path for files, app name for executions.
    pub label: String,
}

/// A derivation step: a file consumed by an execution, or an execution
/// producing a file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, schemars::JsonSchema)]
pub struct LineageEdge {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct Lineage {
    pub root: i64,
    pub nodes: Vec<LineageNode>,
    pub edges: Vec<LineageEdge>,
}

fn file_key(id: i64) -> String {
    format!("file:{id}")
}

fn exec_key(id: &str) -> String {
    format!("exec:{id}")
}

impl Store {
    /// Everything `file_id` was derived from, walking producers backwards
    /// through staged_out and their inputs through staged_in. Node ids are
    /// `file:<file_id>` and `exec:<app_exec_id>`; nodes and edges are sorted.
    pub fn lineage(&self, file_id: i64) -> Result<Lineage> {
        let root_path: Option<String> =
            self.conn.query_row("SELECT path FROM file WHERE file_id = ?1", [file_id], |r| r.get(0)).optional()?;
        let root_path = root_path.ok_or_else(|| StoreError::Dangling(format!("file {file_id}")))?;

        let mut producers = self.conn.prepare(
            "SELECT a.app_exec_id, a.app_name FROM staged_out o JOIN app_exec a ON a.app_exec_id = o.app_exec_id
             WHERE o.file_id = ?1",
        )?;
        let mut inputs = self.conn.prepare(
            "SELECT f.file_id, f.path FROM staged_in i JOIN file f ON f.file_id = i.file_id WHERE i.app_exec_id = ?1",
        )?;

        let mut nodes = BTreeSet::new();
        let mut edges = BTreeSet::new();
        let mut seen_files = HashSet::from([file_id]);
        let mut seen_execs = HashSet::new();
        let mut queue = VecDeque::from([file_id]);
        nodes.insert(LineageNode { kind: NodeKind::File, id: file_key(file_id), label: root_path });
        while let Some(f) = queue.pop_front() {
            let execs: Vec<(String, String)> =
                producers.query_map([f], |r| Ok((r.get(0)?, r.get(1)?)))?.collect::<std::result::Result<_, _>>()?;
            for (exec, app) in execs {
                edges.insert(LineageEdge { from: exec_key(&exec), to: file_key(f) });
                if !seen_execs.insert(exec.clone()) {
                    continue;
                }
                nodes.insert(LineageNode { kind: NodeKind::AppExec, id: exec_key(&exec), label: app });
                let ins: Vec<(i64, String)> =
                    inputs.query_map([&exec], |r| Ok((r.get(0)?, r.get(1)?)))?.collect::<std::result::Result<_, _>>()?;
                for (fid, path) in ins {
                    edges.insert(LineageEdge { from: file_key(fid), to: exec_key(&exec) });
                    if seen_files.insert(fid) {
                        nodes.insert(LineageNode { kind: NodeKind::File, id: file_key(fid), label: path });
                        queue.push_back(fid);
                    }
                }
            }
        }
        Ok(Lineage { root: file_id, nodes: nodes.into_iter().collect(), edges: edges.into_iter().collect() })
    }
}
