//! Read-only queries over a provenance store. Every result is a plain value
//! that serializes as-is and can be rendered as delimited text.

use std::collections::BTreeMap;

use rusqlite::types::ValueRef;
use rusqlite::{params, params_from_iter, OptionalExtension};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::engine::{RunStatus, TaskStatus};
use crate::store::{AnnotValue, Store, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("unknown run `{0}`")]
    RunNotFound(String),
    #[error("run `{0}` has not finished")]
    RunIncomplete(String),
    #[error("{0}")]
    Undefined(String),
    #[error("schema error: {0}")]
    Schema(String),
}

impl From<rusqlite::Error> for AnalyticsError {
    fn from(e: rusqlite::Error) -> Self {
        AnalyticsError::Store(StoreError::Sql(e))
    }
}

pub type Result<T> = std::result::Result<T, AnalyticsError>;

pub const DEFAULT_LIMIT: usize = 100;

/// A result that can be printed as a table: a header plus string rows.
pub trait Tabular {
    fn header(&self) -> Vec<String>;
    fn rows(&self) -> Vec<Vec<String>>;
}

fn strings<const N: usize>(xs: [&str; N]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

struct RunRow {
    script_name: String,
    start_ms: i64,
    end_ms: Option<i64>,
    status: RunStatus,
}

fn run_row(store: &Store, run_id: &str) -> Result<RunRow> {
    store
        .conn()
        .query_row("SELECT script_name, start_time, end_time, status FROM script_run WHERE run_id = ?1", [run_id], |r| {
            Ok(RunRow {
                script_name: r.get(0)?,
                start_ms: r.get(1)?,
                end_ms: r.get(2)?,
                status: RunStatus::parse(&r.get::<_, String>(3)?).unwrap_or(RunStatus::Running),
            })
        })
        .optional()?
        .ok_or_else(|| AnalyticsError::RunNotFound(run_id.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RunInfo {
    pub run_id: String,
    pub script_name: String,
    pub site: String,
    pub status: RunStatus,
    pub start_ms: i64,
    pub end_ms: Option<i64>,
    pub duration_s: Option<f64>,
    pub task_count: i64,
    pub max_workers: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RunList {
    pub total: usize,
    pub limit: usize,
    pub offset: usize,
    pub runs: Vec<RunInfo>,
}

/// Runs in the store, most recent first.
pub fn list_runs(store: &Store, limit: usize, offset: usize) -> Result<RunList> {
    let total: i64 = store.conn().query_row("SELECT COUNT(*) FROM script_run", [], |r| r.get(0))?;
    let mut stmt = store.conn().prepare(
        "SELECT run_id, script_name, site, status, start_time, end_time, task_count, max_workers
         FROM script_run ORDER BY start_time DESC, run_id LIMIT ?1 OFFSET ?2",
    )?;
    let runs = stmt
        .query_map(params![limit as i64, offset as i64], |r| {
            let start: i64 = r.get(4)?;
            let end: Option<i64> = r.get(5)?;
            Ok(RunInfo {
                run_id: r.get(0)?,
                script_name: r.get(1)?,
                site: r.get(2)?,
                status: RunStatus::parse(&r.get::<_, String>(3)?).unwrap_or(RunStatus::Running),
                start_ms: start,
                end_ms: end,
                duration_s: end.map(|e| (e - start) as f64 / 1000.0),
                task_count: r.get(6)?,
                max_workers: r.get(7)?,
            })
        })?
        .collect::<std::result::Result<_, _>>()?;
    Ok(RunList { total: total as usize, limit, offset, runs })
}

impl Tabular for RunList {
    fn header(&self) -> Vec<String> {
        strings(["run_id", "script_name", "status", "start_ms", "duration_s", "tasks"])
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.runs
            .iter()
            .map(|r| {
                vec![
                    r.run_id.clone(),
                    r.script_name.clone(),
                    r.status.as_str().into(),
                    r.start_ms.to_string(),
                    opt(&r.duration_s),
                    r.task_count.to_string(),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct StatusCounts {
    pub success: i64,
    pub failure: i64,
    pub skipped: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RunSummary {
    pub run_id: String,
    pub script_name: String,
    pub status: RunStatus,
    pub start_ms: i64,
    pub end_ms: Option<i64>,
    /// End minus start of the run; absent while the run is still going.
    pub duration_s: Option<f64>,
    pub task_count: i64,
    pub status_counts: StatusCounts,
    pub success: bool,
}

pub fn run_summary(store: &Store, run_id: &str) -> Result<RunSummary> {
    let run = run_row(store, run_id)?;
    let mut counts = StatusCounts::default();
    let mut stmt = store.conn().prepare("SELECT status, COUNT(*) FROM app_exec WHERE run_id = ?1 GROUP BY status")?;
    for row in stmt.query_map([run_id], |r| Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)?)))? {
        let (status, n) = row?;
        match TaskStatus::parse(&status) {
            Some(TaskStatus::Success) => counts.success = n,
            Some(TaskStatus::Failure) => counts.failure = n,
            Some(TaskStatus::Skipped) => counts.skipped = n,
            None => {}
        }
    }
    let task_count = counts.success + counts.failure + counts.skipped;
    Ok(RunSummary {
        run_id: run_id.to_string(),
        script_name: run.script_name,
        status: run.status,
        start_ms: run.start_ms,
        end_ms: run.end_ms,
        duration_s: run.end_ms.map(|e| (e - run.start_ms) as f64 / 1000.0),
        task_count,
        success: run.status == RunStatus::Success && counts.failure == 0 && counts.skipped == 0,
        status_counts: counts,
    })
}

impl Tabular for RunSummary {
    fn header(&self) -> Vec<String> {
        strings(["field", "value"])
    }
    fn rows(&self) -> Vec<Vec<String>> {
        [
            ("run_id", self.run_id.clone()),
            ("script_name", self.script_name.clone()),
            ("status", self.status.as_str().to_string()),
            ("duration_s", opt(&self.duration_s)),
            ("activities", self.task_count.to_string()),
            ("success", self.status_counts.success.to_string()),
            ("failure", self.status_counts.failure.to_string()),
            ("skipped", self.status_counts.skipped.to_string()),
            ("succeeded", self.success.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| vec![k.to_string(), v])
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ActivityProfile {
    pub app_name: String,
    pub executions: i64,
    pub mean_duration_s: f64,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub total_bytes_read: i64,
    pub total_bytes_written: i64,
    pub mean_cpu_percent: f64,
}

/// One row per app with measured executions, by mean duration ascending.
pub fn activity_profile(store: &Store, run_id: &str) -> Result<Vec<ActivityProfile>> {
    run_row(store, run_id)?;
    let mut stmt = store.conn().prepare(
        "SELECT a.app_name, u.duration_s, u.bytes_read, u.bytes_written, u.cpu_percent
         FROM app_exec a JOIN resource_usage u ON u.app_exec_id = a.app_exec_id
         WHERE a.run_id = ?1 ORDER BY a.task_id",
    )?;
    let mut by_app: BTreeMap<String, Vec<(f64, i64, i64, f64)>> = BTreeMap::new();
    for row in stmt.query_map([run_id], |r| Ok((r.get::<_, String>(0)?, (r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?))))? {
        let (app, vals) = row?;
        by_app.entry(app).or_default().push(vals);
    }
    let mut out: Vec<ActivityProfile> = by_app
        .into_iter()
        .map(|(app_name, rows)| {
            let n = rows.len() as f64;
            ActivityProfile {
                app_name,
                executions: rows.len() as i64,
                mean_duration_s: rows.iter().map(|r| r.0).sum::<f64>() / n,
                min_duration_s: rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
                max_duration_s: rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max),
                total_bytes_read: rows.iter().map(|r| r.1).sum(),
                total_bytes_written: rows.iter().map(|r| r.2).sum(),
                mean_cpu_percent: rows.iter().map(|r| r.3).sum::<f64>() / n,
            }
        })
        .collect();
    out.sort_by(|a, b| a.mean_duration_s.total_cmp(&b.mean_duration_s).then_with(|| a.app_name.cmp(&b.app_name)));
    Ok(out)
}

impl Tabular for Vec<ActivityProfile> {
    fn header(&self) -> Vec<String> {
        strings([
            "app_name",
            "executions",
            "mean_duration_s",
            "min_duration_s",
            "max_duration_s",
            "bytes_read",
            "bytes_written",
            "mean_cpu_percent",
        ])
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|p| {
                vec![
                    p.app_name.clone(),
                    p.executions.to_string(),
                    p.mean_duration_s.to_string(),
                    p.min_duration_s.to_string(),
                    p.max_duration_s.to_string(),
                    p.total_bytes_read.to_string(),
                    p.total_bytes_written.to_string(),
                    p.mean_cpu_percent.to_string(),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct GanttBar {
    pub task_id: String,
    pub app_name: String,
    pub status: TaskStatus,
    pub start_ms: i64,
    pub end_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct GanttData {
    pub run_id: String,
    pub origin_ms: i64,
    pub end_ms: Option<i64>,
    pub bars: Vec<GanttBar>,
}

/// Launched tasks as intervals, ordered by start time then task id.
pub fn gantt(store: &Store, run_id: &str) -> Result<GanttData> {
    let run = run_row(store, run_id)?;
    let mut stmt = store.conn().prepare(
        "SELECT task_id, app_name, status, start_time, end_time FROM app_exec
         WHERE run_id = ?1 AND start_time IS NOT NULL AND end_time IS NOT NULL
         ORDER BY start_time, task_id",
    )?;
    let bars = stmt
        .query_map([run_id], |r| {
            Ok(GanttBar {
                task_id: r.get(0)?,
                app_name: r.get(1)?,
                status: TaskStatus::parse(&r.get::<_, String>(2)?).unwrap_or(TaskStatus::Failure),
                start_ms: r.get(3)?,
                end_ms: r.get(4)?,
            })
        })?
        .collect::<std::result::Result<_, _>>()?;
    Ok(GanttData { run_id: run_id.to_string(), origin_ms: run.start_ms, end_ms: run.end_ms, bars })
}

impl Tabular for GanttData {
    fn header(&self) -> Vec<String> {
        strings(["task_id", "app_name", "status", "start_ms", "end_ms"])
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.bars
            .iter()
            .map(|b| {
                vec![
                    b.task_id.clone(),
                    b.app_name.clone(),
                    b.status.as_str().into(),
                    (b.start_ms - self.origin_ms).to_string(),
                    (b.end_ms - self.origin_ms).to_string(),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Breakpoint {
    pub t_ms: i64,
    pub active: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ParallelismProfile {
    pub run_id: String,
    pub origin_ms: i64,
    /// Step function: `active` holds from `t_ms` until the next breakpoint.
    pub breakpoints: Vec<Breakpoint>,
    pub peak: i64,
}

/// Sweep over half-open intervals `[start, end)`. A breakpoint is emitted
/// only where the active count changes; empty intervals contribute nothing.
pub fn sweep(intervals: &[(i64, i64)]) -> (Vec<Breakpoint>, i64) {
    let mut delta: BTreeMap<i64, i64> = BTreeMap::new();
    for &(s, e) in intervals {
        if e > s {
            *delta.entry(s).or_default() += 1;
            *delta.entry(e).or_default() -= 1;
        }
    }
    let mut out = Vec::new();
    let (mut active, mut peak) = (0i64, 0i64);
    for (t, d) in delta {
        if d == 0 {
            continue;
        }
        active += d;
        peak = peak.max(active);
        out.push(Breakpoint { t_ms: t, active });
    }
    (out, peak)
}

/// Area under the step function, in task-milliseconds.
pub fn integral(breakpoints: &[Breakpoint]) -> i64 {
    breakpoints.windows(2).map(|w| (w[1].t_ms - w[0].t_ms) * w[0].active).sum()
}

pub fn parallelism_profile(store: &Store, run_id: &str) -> Result<ParallelismProfile> {
    let g = gantt(store, run_id)?;
    let spans: Vec<(i64, i64)> = g.bars.iter().map(|b| (b.start_ms, b.end_ms)).collect();
    let (breakpoints, peak) = sweep(&spans);
    Ok(ParallelismProfile { run_id: g.run_id, origin_ms: g.origin_ms, breakpoints, peak })
}

impl Tabular for ParallelismProfile {
    fn header(&self) -> Vec<String> {
        strings(["t_ms", "active"])
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.breakpoints.iter().map(|b| vec![b.t_ms.to_string(), b.active.to_string()]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Speedup {
    pub base_run: String,
    pub other_run: String,
    pub base_duration_s: f64,
    pub other_duration_s: f64,
    pub speedup: f64,
    pub reduction_percent: f64,
}

/// `(base / other, 100 * (1 - other / base))`.
pub fn speedup_of(base_s: f64, other_s: f64) -> Result<(f64, f64)> {
    if !(other_s > 0.0) || !(base_s > 0.0) {
        return Err(AnalyticsError::Undefined(format!(
            "speedup is undefined for durations {base_s} s and {other_s} s"
        )));
    }
    Ok((base_s / other_s, 100.0 * (1.0 - other_s / base_s)))
}

fn finished_duration_s(store: &Store, run_id: &str) -> Result<f64> {
    let run = run_row(store, run_id)?;
    match (run.status, run.end_ms) {
        (RunStatus::Running, _) | (_, None) => Err(AnalyticsError::RunIncomplete(run_id.to_string())),
        (_, Some(end)) => Ok((end - run.start_ms) as f64 / 1000.0),
    }
}

pub fn speedup(store: &Store, base_run: &str, other_run: &str) -> Result<Speedup> {
    let base = finished_duration_s(store, base_run)?;
    let other = finished_duration_s(store, other_run)?;
    let (speedup, reduction_percent) = speedup_of(base, other)?;
    Ok(Speedup {
        base_run: base_run.to_string(),
        other_run: other_run.to_string(),
        base_duration_s: base,
        other_duration_s: other,
        speedup,
        reduction_percent,
    })
}

impl Tabular for Speedup {
    fn header(&self) -> Vec<String> {
        strings(["base_run", "other_run", "base_duration_s", "other_duration_s", "speedup", "reduction_percent"])
    }
    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.base_run.clone(),
            self.other_run.clone(),
            self.base_duration_s.to_string(),
            self.other_duration_s.to_string(),
            format!("{:.2}", self.speedup),
            format!("{:.2}", self.reduction_percent),
        ]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ScalingPoint {
    pub run_id: String,
    pub cores: f64,
    pub duration_s: f64,
    pub speedup: f64,
}

/// Speedup of every finished run carrying a numeric `cores` annotation,
/// relative to the one with the fewest cores (ties: smallest run id).
pub fn scaling(store: &Store) -> Result<Vec<ScalingPoint>> {
    let mut stmt = store.conn().prepare(
        "SELECT a.run_id, MIN(a.value) FROM run_annot_numeric a JOIN script_run r ON r.run_id = a.run_id
         WHERE a.key = 'cores' AND r.end_time IS NOT NULL AND r.status != 'running'
         GROUP BY a.run_id ORDER BY MIN(a.value), a.run_id",
    )?;
    let tagged: Vec<(String, f64)> =
        stmt.query_map([], |r| Ok((r.get(0)?, r.get(1)?)))?.collect::<std::result::Result<_, _>>()?;
    let Some((base_run, _)) = tagged.first() else { return Ok(Vec::new()) };
    let base = finished_duration_s(store, base_run)?;
    tagged
        .iter()
        .map(|(run_id, cores)| {
            let d = finished_duration_s(store, run_id)?;
            Ok(ScalingPoint { run_id: run_id.clone(), cores: *cores, duration_s: d, speedup: speedup_of(base, d)?.0 })
        })
        .collect()
}

impl Tabular for Vec<ScalingPoint> {
    fn header(&self) -> Vec<String> {
        strings(["run_id", "cores", "duration_s", "speedup"])
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|p| vec![p.run_id.clone(), p.cores.to_string(), p.duration_s.to_string(), format!("{:.2}", p.speedup)])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AnnotationRow {
    pub file_id: i64,
    pub path: String,
    pub value: AnnotValue,
}

/// Annotations named `key` on files produced by the run, by file id.
pub fn annotation_query(store: &Store, run_id: &str, key: &str) -> Result<Vec<AnnotationRow>> {
    run_row(store, run_id)?;
    let mut out = Vec::new();
    for (table, numeric) in [("file_annot_numeric", true), ("file_annot_text", false)] {
        let mut stmt = store.conn().prepare(&format!(
            "SELECT f.file_id, f.path, n.value, n.seq FROM {table} n JOIN file f ON f.file_id = n.file_id
             WHERE n.key = ?1 AND n.file_id IN (
                 SELECT o.file_id FROM staged_out o JOIN app_exec a ON a.app_exec_id = o.app_exec_id WHERE a.run_id = ?2)"
        ))?;
        let rows = stmt.query_map(params![key, run_id], |r| {
            let value = if numeric { AnnotValue::Numeric(r.get(2)?) } else { AnnotValue::Text(r.get(2)?) };
            Ok(((r.get::<_, i64>(0)?, !numeric, r.get::<_, i64>(3)?), AnnotationRow { file_id: r.get(0)?, path: r.get(1)?, value }))
        })?;
        for row in rows {
            out.push(row?);
        }
    }
    out.sort_by_key(|(k, _)| *k);
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

impl Tabular for Vec<AnnotationRow> {
    fn header(&self) -> Vec<String> {
        strings(["file_id", "path", "value"])
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|a| {
                let v = match &a.value {
                    AnnotValue::Numeric(x) => x.to_string(),
                    AnnotValue::Text(s) => s.clone(),
                };
                vec![a.file_id.to_string(), a.path.clone(), v]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DomainJoinRequest {
    pub left: String,
    pub right: String,
    pub left_key: String,
    pub right_key: String,
    /// Right-hand columns to carry; all of them when absent.
    #[serde(default)]
    pub right_columns: Option<Vec<String>>,
    /// Case-insensitive substring matched against every output column.
    #[serde(default)]
    pub search: Option<String>,
    /// Exact matches on output columns (`column` or `right.column`).
    #[serde(default)]
    pub filters: BTreeMap<String, String>,
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default)]
    pub offset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DomainRows {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<serde_json::Value>>,
    /// Matching rows before limit/offset.
    pub total: usize,
}

fn json_value(v: ValueRef<'_>) -> serde_json::Value {
    match v {
        ValueRef::Null => serde_json::Value::Null,
        ValueRef::Integer(i) => i.into(),
        ValueRef::Real(f) => serde_json::Number::from_f64(f).map(serde_json::Value::Number).unwrap_or_default(),
        ValueRef::Text(t) => String::from_utf8_lossy(t).into_owned().into(),
        ValueRef::Blob(b) => String::from_utf8_lossy(b).into_owned().into(),
    }
}

fn quote(ident: &str) -> String {
    format!("\"{}\"", ident.replace('"', "\"\""))
}

/// Left outer join of two domain tables within one run. Left rows must
/// belong to the run; right rows may belong to the run or to no run
/// (reference data imported without provenance).
pub fn domain_join(store: &Store, run_id: &str, req: &DomainJoinRequest) -> Result<DomainRows> {
    run_row(store, run_id)?;
    let schema = |name: &str| -> Result<Vec<String>> {
        let s = store.domain_schema(name)?.ok_or_else(|| AnalyticsError::Schema(format!("unknown domain table `{name}`")))?;
        Ok(s.columns.into_iter().map(|c| c.name).collect())
    };
    let left_cols = schema(&req.left)?;
    let right_all = schema(&req.right)?;
    let missing = |table: &str, col: &str| AnalyticsError::Schema(format!("table `{table}` has no column `{col}`"));
    if !left_cols.contains(&req.left_key) {
        return Err(missing(&req.left, &req.left_key));
    }
    if !right_all.contains(&req.right_key) {
        return Err(missing(&req.right, &req.right_key));
    }
    let right_cols = match &req.right_columns {
        Some(cols) => {
            for c in cols {
                if !right_all.contains(c) {
                    return Err(missing(&req.right, c));
                }
            }
            cols.clone()
        }
        None => right_all,
    };

    let mut columns: Vec<String> = left_cols.clone();
    let mut exprs: Vec<String> = left_cols.iter().map(|c| format!("l.{}", quote(c))).collect();
    for c in &right_cols {
        columns.push(format!("{}.{}", req.right, c));
        exprs.push(format!("r.{}", quote(c)));
    }

    let mut args: Vec<rusqlite::types::Value> = vec![run_id.to_string().into()];
    let mut wheres = vec!["l._run_id = ?1".to_string()];
    for (col, value) in &req.filters {
        let i = columns.iter().position(|c| c == col).ok_or_else(|| AnalyticsError::Schema(format!("unknown column `{col}`")))?;
        args.push(value.clone().into());
        wheres.push(format!("CAST({} AS TEXT) = ?{}", exprs[i], args.len()));
    }
    if let Some(s) = req.search.as_deref().filter(|s| !s.is_empty()) {
        args.push(s.to_lowercase().into());
        let n = args.len();
        let any: Vec<String> = exprs.iter().map(|e| format!("instr(lower(CAST({e} AS TEXT)), ?{n}) > 0")).collect();
        wheres.push(format!("({})", any.join(" OR ")));
    }
    let from = format!(
        "FROM {} l LEFT JOIN {} r ON l.{} = r.{} AND (r._run_id = ?1 OR r._run_id IS NULL) WHERE {}",
        quote(&crate::store::physical_name(&req.left)),
        quote(&crate::store::physical_name(&req.right)),
        quote(&req.left_key),
        quote(&req.right_key),
        wheres.join(" AND ")
    );
    let total: i64 = store.conn().query_row(&format!("SELECT COUNT(*) {from}"), params_from_iter(args.iter()), |r| r.get(0))?;
    let limit = req.limit.unwrap_or(DEFAULT_LIMIT);
    let offset = req.offset.unwrap_or(0);
    let sql = format!("SELECT {} {from} ORDER BY l._row, r._row LIMIT {limit} OFFSET {offset}", exprs.join(", "));
    let mut stmt = store.conn().prepare(&sql)?;
    let mut rows = Vec::new();
    let mut q = stmt.query(params_from_iter(args.iter()))?;
    while let Some(r) = q.next()? {
        rows.push((0..columns.len()).map(|i| r.get_ref(i).map(json_value)).collect::<std::result::Result<_, _>>()?);
    }
    Ok(DomainRows { columns, rows, total: total as usize })
}

impl Tabular for DomainRows {
    fn header(&self) -> Vec<String> {
        self.columns.clone()
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|v| match v {
                        serde_json::Value::Null => String::new(),
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect()
            })
            .collect()
    }
}

impl Tabular for crate::store::Lineage {
    fn header(&self) -> Vec<String> {
        strings(["from", "to"])
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.edges.iter().map(|e| vec![e.from.clone(), e.to.clone()]).collect()
    }
}

/// Tab-separated rendering with a header line. Tabs and newlines inside
/// values become spaces.
pub fn to_tsv(t: &dyn Tabular) -> String {
    let clean = |s: &str| s.replace(['\t', '\n', '\r'], " ");
    let mut out = String::new();
    for row in std::iter::once(t.header()).chain(t.rows()) {
        out.push_str(&row.iter().map(|c| clean(c)).collect::<Vec<_>>().join("\t"));
        out.push('\n');
    }
    out
}

/// Space-aligned columns for terminals.
pub fn to_text_table(t: &dyn Tabular) -> String {
    let header = t.header();
    let rows = t.rows();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(padded.join("  ").trim_end());
        out.push('\n');
    };
    line(&header, &mut out);
    line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>(), &mut out);
    for r in &rows {
        line(r, &mut out);
    }
    out
}
