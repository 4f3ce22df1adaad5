use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

/// One concrete task invocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskNode {
    pub id: String,
    pub app: String,
    /// Program and arguments, fully resolved.
    pub argv: Vec<String>,
    pub stdin: Option<String>,
    pub stdout: Option<String>,
    pub stderr: Option<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl TaskNode {
    /// Shell-style rendering of the command line, for logs.
    pub fn command_line(&self) -> String {
        let mut s = self.argv.iter().map(|a| shell_quote(a)).collect::<Vec<_>>().join(" ");
        for (op, p) in [("<", &self.stdin), (">", &self.stdout), ("2>", &self.stderr)] {
            if let Some(p) = p {
                s.push_str(&format!(" {op} {}", shell_quote(p)));
            }
        }
        s
    }
}

fn shell_quote(s: &str) -> String {
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "-_./=:,+@%".contains(c)) {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', "'\\''"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaskGraph {
    pub tasks: Vec<TaskNode>,
    /// Producer → consumer index pairs, sorted and unique.
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("file {path} is produced by both {first} and {second}")]
    DuplicateProducer { path: String, first: String, second: String },
    #[error("duplicate task id {0}")]
    DuplicateId(String),
    #[error("dependency cycle involving task {0}")]
    Cycle(String),
}

impl TaskGraph {
    /// Derive edges from the intersection of output and input path sets, then
    /// verify the result is acyclic.
    pub fn from_tasks(tasks: Vec<TaskNode>) -> Result<TaskGraph, GraphError> {
        let mut ids = BTreeSet::new();
        let mut producer: HashMap<&str, usize> = HashMap::new();
        for (i, t) in tasks.iter().enumerate() {
            if !ids.insert(t.id.as_str()) {
                return Err(GraphError::DuplicateId(t.id.clone()));
            }
            for o in &t.outputs {
                if let Some(&j) = producer.get(o.as_str()) {
                    if j != i {
                        return Err(GraphError::DuplicateProducer {
                            path: o.clone(),
                            first: tasks[j].id.clone(),
                            second: t.id.clone(),
                        });
                    }
                }
                producer.insert(o, i);
            }
        }
        let mut edges = BTreeSet::new();
        for (c, t) in tasks.iter().enumerate() {
            for input in &t.inputs {
                if let Some(&p) = producer.get(input.as_str()) {
                    edges.insert((p, c));
                }
            }
        }
        let graph = TaskGraph { tasks, edges: edges.into_iter().collect() };
        graph.topo_order()?;
        Ok(graph)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut succ = vec![Vec::new(); self.tasks.len()];
        for &(p, c) in &self.edges {
            succ[p].push(c);
        }
        succ
    }

    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut pred = vec![Vec::new(); self.tasks.len()];
        for &(p, c) in &self.edges {
            pred[c].push(p);
        }
        pred
    }

    /// Kahn's algorithm, lowest task index first among ready tasks.
    pub fn topo_order(&self) -> Result<Vec<usize>, GraphError> {
        let n = self.tasks.len();
        let succ = self.successors();
        let mut indeg = vec![0usize; n];
        for &(_, c) in &self.edges {
            indeg[c] += 1;
        }
        let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(i)) = ready.pop() {
            order.push(i);
            for &c in &succ[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n).find(|&i| indeg[i] > 0).unwrap_or(0);
            return Err(GraphError::Cycle(self.tasks[stuck].id.clone()));
        }
        Ok(order)
    }
}
