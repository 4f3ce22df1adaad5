//! Bounded-parallel execution of a task graph with per-task resource capture.

mod logs;
mod resources;

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::lang::{TaskGraph, TaskNode};

pub use logs::{
    parse_run_log, parse_wrapper_log, render_run_log, render_wrapper_log, write_wrapper_log, LogError, RunLog,
    WrapperLog,
};
pub use resources::{capture_resources, Captured, IoCounters, ResourceUsage, MEASURED_FIELDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailPolicy {
    /// Stop launching anything once a task fails.
    FailFast,
    /// Keep running every task that does not depend on a failure.
    ContinueIndependent,
}

#[derive(Debug, Clone)]
pub struct ExecConfig {
    pub max_workers: usize,
    pub working_dir: PathBuf,
    pub run_id: String,
    pub script_name: String,
    pub site: String,
    pub fail_policy: FailPolicy,
    pub sample_interval_ms: u64,
}

impl ExecConfig {
    /// Defaults with a fresh `<name>-<random>` run id.
    pub fn new(script_name: &str, working_dir: impl Into<PathBuf>) -> Self {
        ExecConfig {
            max_workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            working_dir: working_dir.into(),
            run_id: new_run_id(script_name),
            script_name: script_name.to_string(),
            site: "local".to_string(),
            fail_policy: FailPolicy::FailFast,
            sample_interval_ms: 100,
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.working_dir.join(&self.run_id)
    }
}

/// `name-<u32>`, the name being the script file stem.
pub fn new_run_id(script_name: &str) -> String {
    let stem = Path::new(script_name).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let stem: String = stem.chars().map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    let stem = if stem.is_empty() { "run".to_string() } else { stem };
    format!("{stem}-{}", rand::random::<u32>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Success,
    Failure,
    Skipped,
}

impl TaskStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Success => "success",
            TaskStatus::Failure => "failure",
            TaskStatus::Skipped => "skipped",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "success" => TaskStatus::Success,
            "failure" => TaskStatus::Failure,
            "skipped" => TaskStatus::Skipped,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Failure,
    Running,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Success => "success",
            RunStatus::Failure => "failure",
            RunStatus::Running => "running",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "success" => RunStatus::Success,
            "failure" => RunStatus::Failure,
            "running" => RunStatus::Running,
            _ => return None,
        })
    }
}

/// Outcome of one task. Launched tasks carry times, exit code and usage;
/// skipped tasks carry none of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub app_name: String,
    pub status: TaskStatus,
    pub exit_code: Option<i32>,
    pub start_ms: Option<i64>,
    pub end_ms: Option<i64>,
    pub resource: Option<ResourceUsage>,
    pub command: String,
    pub stdin: Option<String>,
    pub stdout: Option<String>,
    pub stderr: Option<String>,
    pub input_files: Vec<String>,
    pub output_files: Vec<String>,
}

impl TaskResult {
    fn skipped(node: &TaskNode) -> Self {
        TaskResult {
            task_id: node.id.clone(),
            app_name: node.app.clone(),
            status: TaskStatus::Skipped,
            exit_code: None,
            start_ms: None,
            end_ms: None,
            resource: None,
            command: node.command_line(),
            stdin: node.stdin.clone(),
            stdout: node.stdout.clone(),
            stderr: node.stderr.clone(),
            input_files: node.inputs.clone(),
            output_files: node.outputs.clone(),
        }
    }

    pub fn launched(&self) -> bool {
        self.status != TaskStatus::Skipped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub script_name: String,
    pub site: String,
    pub start_ms: i64,
    pub end_ms: i64,
    pub status: RunStatus,
    pub max_workers: usize,
    /// One entry per graph task, in graph order.
    pub results: Vec<TaskResult>,
    pub run_log: PathBuf,
    pub wrapper_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] crate::lang::GraphError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io { path: path.to_path_buf(), source }
}

/// Wall-clock milliseconds derived from one anchor plus a monotonic clock, so
/// every timestamp of a run shares one axis and never goes backwards.
#[derive(Clone, Copy)]
struct Clock {
    anchor_ms: i64,
    t0: Instant,
}

impl Clock {
    fn start() -> Self {
        let anchor_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as i64).unwrap_or(0);
        Clock { anchor_ms, t0: Instant::now() }
    }

    fn now_ms(&self) -> i64 {
        self.anchor_ms + self.t0.elapsed().as_millis() as i64
    }
}

/// Run every task of `graph` whose predecessors succeeded, at most
/// `max_workers` at a time, writing a wrapper log per task and a run log.
pub fn execute(graph: &TaskGraph, cfg: &ExecConfig) -> Result<RunRecord, EngineError> {
    if cfg.max_workers == 0 {
        return Err(EngineError::Config("max_workers must be at least 1".into()));
    }
    if cfg.sample_interval_ms < 10 {
        return Err(EngineError::Config("sample_interval_ms must be at least 10".into()));
    }
    if cfg.run_id.is_empty() || cfg.run_id.contains(['/', '\\']) {
        return Err(EngineError::Config(format!("invalid run id `{}`", cfg.run_id)));
    }
    let order = graph.topo_order()?;
    let run_dir = cfg.run_dir();
    let wrapper_dir = run_dir.join("wrappers");
    let task_dir = run_dir.join("tasks");
    fs::create_dir_all(&wrapper_dir).map_err(io_err(&wrapper_dir))?;
    fs::create_dir_all(&task_dir).map_err(io_err(&task_dir))?;

    let n = graph.tasks.len();
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let succ = graph.successors();
    let mut waiting: Vec<usize> = graph.predecessors().iter().map(Vec::len).collect();
    let mut blocked = vec![false; n];
    let mut results: Vec<Option<TaskResult>> = vec![None; n];
    let mut ready: BTreeSet<(usize, usize)> = (0..n).filter(|&i| waiting[i] == 0).map(|i| (rank[i], i)).collect();
    let mut stop = false;
    let mut failed = None;

    let clock = Clock::start();
    let start_ms = clock.now_ms();
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, TaskResult)>();
        let mut running = 0usize;
        loop {
            while running < cfg.max_workers && !stop {
                let Some((_, i)) = ready.pop_first() else { break };
                let tx = tx.clone();
                let node = &graph.tasks[i];
                let task_dir = &task_dir;
                running += 1;
                scope.spawn(move || {
                    let r = run_task(node, cfg, task_dir, &clock);
                    let _ = tx.send((i, r));
                });
            }
            if running == 0 {
                break;
            }
            let (i, r) = rx.recv().expect("worker sender alive");
            running -= 1;
            let path = wrapper_dir.join(format!("{}.log", r.task_id));
            if let Err(e) = write_wrapper_log(&r, &path) {
                failed.get_or_insert(EngineError::Io { path, source: e });
                stop = true;
            }
            if r.status == TaskStatus::Success {
                for &c in &succ[i] {
                    waiting[c] -= 1;
                    if waiting[c] == 0 && !blocked[c] {
                        ready.insert((rank[c], c));
                    }
                }
            } else {
                if cfg.fail_policy == FailPolicy::FailFast {
                    stop = true;
                }
                let mut stack = succ[i].clone();
                while let Some(c) = stack.pop() {
                    if !blocked[c] {
                        blocked[c] = true;
                        ready.remove(&(rank[c], c));
                        stack.extend(&succ[c]);
                    }
                }
            }
            results[i] = Some(r);
        }
    });
    if let Some(e) = failed {
        return Err(e);
    }
    let end_ms = clock.now_ms();

    let results: Vec<TaskResult> =
        results.into_iter().enumerate().map(|(i, r)| r.unwrap_or_else(|| TaskResult::skipped(&graph.tasks[i]))).collect();
    for r in results.iter().filter(|r| !r.launched()) {
        let path = wrapper_dir.join(format!("{}.log", r.task_id));
        write_wrapper_log(r, &path).map_err(io_err(&path))?;
    }
    let status = if results.iter().all(|r| r.status == TaskStatus::Success) {
        RunStatus::Success
    } else {
        RunStatus::Failure
    };
    let log = RunLog {
        run_id: cfg.run_id.clone(),
        script_name: cfg.script_name.clone(),
        site: cfg.site.clone(),
        start_ms,
        end_ms,
        status,
        max_workers: cfg.max_workers,
        tasks: results.iter().map(|r| (r.task_id.clone(), format!("{}.log", r.task_id))).collect(),
    };
    let run_log = run_dir.join("run.log");
    fs::write(&run_log, render_run_log(&log)).map_err(io_err(&run_log))?;
    Ok(RunRecord {
        run_id: cfg.run_id.clone(),
        script_name: cfg.script_name.clone(),
        site: cfg.site.clone(),
        start_ms,
        end_ms,
        status,
        max_workers: cfg.max_workers,
        results,
        run_log,
        wrapper_dir,
    })
}

fn open_redirects(node: &TaskNode, task_dir: &Path) -> std::io::Result<(Stdio, Stdio, Stdio, String, String)> {
    for p in node.outputs.iter().chain(&node.stdout).chain(&node.stderr) {
        if let Some(parent) = Path::new(p).parent() {
            fs::create_dir_all(parent)?;
        }
    }
    let stdin = match &node.stdin {
        Some(p) => Stdio::from(File::open(p)?),
        None => Stdio::null(),
    };
    let out = node.stdout.clone().unwrap_or_else(|| task_dir.join(format!("{}.stdout", node.id)).to_string_lossy().into());
    let err = node.stderr.clone().unwrap_or_else(|| task_dir.join(format!("{}.stderr", node.id)).to_string_lossy().into());
    Ok((stdin, Stdio::from(File::create(&out)?), Stdio::from(File::create(&err)?), out, err))
}

fn run_task(node: &TaskNode, cfg: &ExecConfig, task_dir: &Path, clock: &Clock) -> TaskResult {
    let mut r = TaskResult::skipped(node);
    let start = clock.now_ms();
    let spawned = open_redirects(node, task_dir).and_then(|(i, o, e, out, err)| {
        r.stdout = Some(out);
        r.stderr = Some(err);
        Command::new(&node.argv[0])
            .args(&node.argv[1..])
            .current_dir(&cfg.working_dir)
            .stdin(i)
            .stdout(o)
            .stderr(e)
            .spawn()
    });
    let captured = spawned.and_then(|mut child| capture_resources(&mut child, cfg.sample_interval_ms));
    let end = clock.now_ms();
    let (code, usage) = match captured {
        Ok(c) => (c.exit_code, c.usage(end - start)),
        Err(e) => {
            if let Some(path) = &r.stderr {
                let _ = fs::write(path, format!("failed to launch {}: {e}\n", node.argv[0]));
            }
            (-1, ResourceUsage::unmeasured((end - start) as f64 / 1000.0))
        }
    };
    r.status = if code == 0 { TaskStatus::Success } else { TaskStatus::Failure };
    r.exit_code = Some(code);
    r.start_ms = Some(start);
    r.end_ms = Some(end);
    r.resource = Some(usage);
    r
}
