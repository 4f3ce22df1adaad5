use std::io::Read;
use std::path::Path;

use rusqlite::{params, Transaction};
use sha2::{Digest, Sha256};

use super::{io_err, Result, Store, StoreError};
use crate::engine::{parse_run_log, parse_wrapper_log, RunStatus, TaskResult, TaskStatus};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportOutcome {
    pub run_id: String,
    /// False when the run was already present and nothing was written.
    pub created: bool,
}

fn sha256_file(path: &Path) -> Option<(i64, String)> {
    let mut f = std::fs::File::open(path).ok()?;
    if !f.metadata().ok()?.is_file() {
        return None;
    }
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut size = 0i64;
    loop {
        let n = f.read(&mut buf).ok()?;
        if n == 0 {
            break;
        }
        size += n as i64;
        h.update(&buf[..n]);
    }
    let digest: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Some((size, digest))
}

pub(crate) fn app_exec_id(run_id: &str, task_id: &str) -> String {
    format!("{run_id}:{task_id}")
}

/// Logs written by the engine carry absolute paths; relative ones (hand-made
/// or relocated logs) are taken relative to the run log's directory.
fn resolve(base: &Path, path: &str) -> String {
    let p = Path::new(path);
    if p.is_absolute() {
        return path.to_string();
    }
    crate::lang::normalize(&base.join(p)).to_string_lossy().into_owned()
}

fn file_row(tx: &Transaction, run_id: &str, path: &str) -> Result<i64> {
    if let Some(id) = tx
        .query_row("SELECT file_id FROM file WHERE run_id = ?1 AND path = ?2", [run_id, path], |r| r.get(0))
        .ok()
    {
        return Ok(id);
    }
    let (size, digest) = match sha256_file(Path::new(path)) {
        Some((s, d)) => (Some(s), Some(d)),
        None => (None, None),
    };
    tx.execute(
        "INSERT INTO file (run_id, path, size_bytes, digest) VALUES (?1, ?2, ?3, ?4)",
        params![run_id, path, size, digest],
    )?;
    Ok(tx.last_insert_rowid())
}

impl Store {
    /// Import a run from its run log and wrapper logs. Importing a run id that
    /// is already present changes nothing.
    pub fn import_run(&mut self, run_log: &Path, wrapper_dir: &Path) -> Result<ImportOutcome> {
        let text = std::fs::read_to_string(run_log).map_err(io_err(run_log))?;
        let log = parse_run_log(&text)
            .map_err(|e| StoreError::Log { path: run_log.to_path_buf(), line: e.line, message: e.message })?;
        if self.run_exists(&log.run_id)? {
            return Ok(ImportOutcome { run_id: log.run_id, created: false });
        }
        let mut tasks = Vec::with_capacity(log.tasks.len());
        for (id, file) in &log.tasks {
            let path = wrapper_dir.join(file);
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            let w = parse_wrapper_log(&text)
                .map_err(|e| StoreError::Log { path: path.clone(), line: e.line, message: e.message })?;
            if &w.result.task_id != id {
                return Err(StoreError::Log {
                    path,
                    line: 0,
                    message: format!("wrapper log is for task `{}`, run log lists `{id}`", w.result.task_id),
                });
            }
            tasks.push(w);
        }

        let base = run_log.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = std::path::absolute(&base).map_err(io_err(&base))?;
        for w in &mut tasks {
            for f in w.result.input_files.iter_mut().chain(w.result.output_files.iter_mut()) {
                *f = resolve(&base, f);
            }
        }

        let tx = self.conn.transaction()?;
        let end = (log.status != RunStatus::Running).then_some(log.end_ms);
        tx.execute(
            "INSERT INTO script_run (run_id, script_name, start_time, end_time, status, site, task_count, max_workers)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
            params![
                log.run_id,
                log.script_name,
                log.start_ms,
                end,
                log.status.as_str(),
                log.site,
                tasks.len() as i64,
                log.max_workers as i64
            ],
        )?;
        for w in &tasks {
            insert_task(&tx, &log.run_id, &w.result)?;
            let id = app_exec_id(&log.run_id, &w.result.task_id);
            for (k, v) in &w.extra {
                tx.execute(
                    "INSERT OR IGNORE INTO app_exec_annot_text (app_exec_id, key, value) VALUES (?1, ?2, ?3)",
                    params![id, k, v],
                )?;
            }
        }
        tx.commit()?;
        Ok(ImportOutcome { run_id: log.run_id, created: true })
    }
}

fn insert_task(tx: &Transaction, run_id: &str, r: &TaskResult) -> Result<()> {
    let id = app_exec_id(run_id, &r.task_id);
    tx.execute(
        "INSERT INTO app_exec (app_exec_id, run_id, task_id, app_name, status, start_time, end_time, duration_s,
                               exit_code, command, stdin, stdout, stderr)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13)",
        params![
            id,
            run_id,
            r.task_id,
            r.app_name,
            r.status.as_str(),
            r.start_ms,
            r.end_ms,
            r.resource.as_ref().map(|u| u.duration_s),
            r.exit_code,
            r.command,
            r.stdin,
            r.stdout,
            r.stderr
        ],
    )?;
    if r.status == TaskStatus::Skipped {
        return Ok(());
    }
    if let Some(u) = &r.resource {
        tx.execute(
            "INSERT INTO resource_usage (app_exec_id, duration_s, cpu_user_s, cpu_sys_s, cpu_percent, max_rss_bytes,
                                         bytes_read, bytes_written, read_ops, write_ops, unmeasured)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11)",
            params![
                id,
                u.duration_s,
                u.cpu_user_s,
                u.cpu_sys_s,
                u.cpu_percent,
                u.max_rss_bytes as i64,
                u.bytes_read as i64,
                u.bytes_written as i64,
                u.read_ops as i64,
                u.write_ops as i64,
                u.unmeasured.join(",")
            ],
        )?;
    }
    for (table, files) in [("staged_in", &r.input_files), ("staged_out", &r.output_files)] {
        for path in files {
            let fid = file_row(tx, run_id, path)?;
            tx.execute(&format!("INSERT OR IGNORE INTO {table} (app_exec_id, file_id) VALUES (?1, ?2)"), params![id, fid])?;
        }
    }
    Ok(())
}
