//! Wrapper logs (one per task) and the run log. Both are `key=value` lines;
//! values escape `\` and newlines, list items additionally escape `,`.

use std::fmt::Write as _;
use std::path::Path;

use super::{ResourceUsage, RunStatus, TaskResult, TaskStatus};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct LogError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> LogError {
    LogError { line, message: message.into() }
}

fn escape(s: &str, list_item: bool) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            ',' if list_item => out.push_str("\\,"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(c) => out.push(c),
            None => out.push('\\'),
        }
    }
    out
}

fn join_list(items: &[String]) -> String {
    items.iter().map(|i| escape(i, true)).collect::<Vec<_>>().join(",")
}

fn split_list(raw: &str) -> Vec<String> {
    if raw.is_empty() {
        return Vec::new();
    }
    let mut items = Vec::new();
    let mut cur = String::new();
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                cur.push('\\');
                if let Some(n) = chars.next() {
                    cur.push(n);
                }
            }
            ',' => items.push(unescape(&std::mem::take(&mut cur))),
            c => cur.push(c),
        }
    }
    items.push(unescape(&cur));
    items
}

pub fn render_wrapper_log(r: &TaskResult) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: &str| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("task_id", &escape(&r.task_id, false));
    kv("app_name", &escape(&r.app_name, false));
    kv("status", r.status.as_str());
    if let (Some(code), Some(start), Some(end), Some(u)) = (r.exit_code, r.start_ms, r.end_ms, &r.resource) {
        kv("exit_code", &code.to_string());
        kv("start_ms", &start.to_string());
        kv("end_ms", &end.to_string());
        kv("duration_s", &format!("{:.3}", u.duration_s));
        kv("cpu_user_s", &format!("{:.6}", u.cpu_user_s));
        kv("cpu_sys_s", &format!("{:.6}", u.cpu_sys_s));
        kv("max_rss_bytes", &u.max_rss_bytes.to_string());
        kv("bytes_read", &u.bytes_read.to_string());
        kv("bytes_written", &u.bytes_written.to_string());
        kv("read_ops", &u.read_ops.to_string());
        kv("write_ops", &u.write_ops.to_string());
        kv("unmeasured", &u.unmeasured.join(","));
    }
    kv("command", &escape(&r.command, false));
    kv("stdin", &escape(r.stdin.as_deref().unwrap_or(""), false));
    kv("stdout", &escape(r.stdout.as_deref().unwrap_or(""), false));
    kv("stderr", &escape(r.stderr.as_deref().unwrap_or(""), false));
    kv("input_files", &join_list(&r.input_files));
    kv("output_files", &join_list(&r.output_files));
    s
}

pub fn write_wrapper_log(r: &TaskResult, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, render_wrapper_log(r))
}

/// A parsed wrapper log. Keys outside the format are kept in `extra`.
#[derive(Debug, Clone, PartialEq)]
pub struct WrapperLog {
    pub result: TaskResult,
    pub extra: Vec<(String, String)>,
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, LogError> {
    v.parse().map_err(|_| err(line, format!("invalid value for {key}: `{v}`")))
}

fn non_empty(v: String) -> Option<String> {
    (!v.is_empty()).then_some(v)
}

pub fn parse_wrapper_log(text: &str) -> Result<WrapperLog, LogError> {
    let mut r = TaskResult {
        task_id: String::new(),
        app_name: String::new(),
        status: TaskStatus::Skipped,
        exit_code: None,
        start_ms: None,
        end_ms: None,
        resource: None,
        command: String::new(),
        stdin: None,
        stdout: None,
        stderr: None,
        input_files: Vec::new(),
        output_files: Vec::new(),
    };
    let mut u = ResourceUsage::default();
    let mut extra = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (k, v) = raw.split_once('=').ok_or_else(|| err(n, format!("expected key=value, found `{raw}`")))?;
        if !seen.insert(k.to_string()) {
            return Err(err(n, format!("duplicate key `{k}`")));
        }
        match k {
            "task_id" => r.task_id = unescape(v),
            "app_name" => r.app_name = unescape(v),
            "status" => r.status = TaskStatus::parse(v).ok_or_else(|| err(n, format!("unknown status `{v}`")))?,
            "exit_code" => r.exit_code = Some(parse_num(n, k, v)?),
            "start_ms" => r.start_ms = Some(parse_num(n, k, v)?),
            "end_ms" => r.end_ms = Some(parse_num(n, k, v)?),
            "duration_s" => u.duration_s = parse_num(n, k, v)?,
            "cpu_user_s" => u.cpu_user_s = parse_num(n, k, v)?,
            "cpu_sys_s" => u.cpu_sys_s = parse_num(n, k, v)?,
            "max_rss_bytes" => u.max_rss_bytes = parse_num(n, k, v)?,
            "bytes_read" => u.bytes_read = parse_num(n, k, v)?,
            "bytes_written" => u.bytes_written = parse_num(n, k, v)?,
            "read_ops" => u.read_ops = parse_num(n, k, v)?,
            "write_ops" => u.write_ops = parse_num(n, k, v)?,
            "unmeasured" => u.unmeasured = v.split(',').filter(|s| !s.is_empty()).map(String::from).collect(),
            "command" => r.command = unescape(v),
            "stdin" => r.stdin = non_empty(unescape(v)),
            "stdout" => r.stdout = non_empty(unescape(v)),
            "stderr" => r.stderr = non_empty(unescape(v)),
            "input_files" => r.input_files = split_list(v),
            "output_files" => r.output_files = split_list(v),
            _ => extra.push((k.to_string(), unescape(v))),
        }
    }
    for key in ["task_id", "app_name", "status"] {
        if !seen.contains(key) {
            return Err(err(0, format!("missing key `{key}`")));
        }
    }
    if r.status != TaskStatus::Skipped {
        for key in ["exit_code", "start_ms", "end_ms", "duration_s"] {
            if !seen.contains(key) {
                return Err(err(0, format!("missing key `{key}` for a launched task")));
            }
        }
        if r.end_ms < r.start_ms {
            return Err(err(0, "end_ms precedes start_ms"));
        }
        u.cpu_percent = ResourceUsage::cpu_percent_of(u.cpu_user_s, u.cpu_sys_s, u.duration_s);
        r.resource = Some(u);
    }
    Ok(WrapperLog { result: r, extra })
}

/// Header of a run log plus the wrapper log file names it lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLog {
    pub run_id: String,
    pub script_name: String,
    pub site: String,
    pub start_ms: i64,
    pub end_ms: i64,
    pub status: RunStatus,
    pub max_workers: usize,
    /// (task id, wrapper log file name relative to the wrapper directory)
    pub tasks: Vec<(String, String)>,
}

pub fn render_run_log(log: &RunLog) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "run_id={}", escape(&log.run_id, false));
    let _ = writeln!(s, "script_name={}", escape(&log.script_name, false));
    let _ = writeln!(s, "site={}", escape(&log.site, false));
    let _ = writeln!(s, "start_ms={}", log.start_ms);
    let _ = writeln!(s, "end_ms={}", log.end_ms);
    let _ = writeln!(s, "status={}", log.status.as_str());
    let _ = writeln!(s, "max_workers={}", log.max_workers);
    for (id, file) in &log.tasks {
        let _ = writeln!(s, "task={} log={}", id, file);
    }
    s
}

pub fn parse_run_log(text: &str) -> Result<RunLog, LogError> {
    let mut log = RunLog {
        run_id: String::new(),
        script_name: String::new(),
        site: String::new(),
        start_ms: 0,
        end_ms: 0,
        status: RunStatus::Success,
        max_workers: 1,
        tasks: Vec::new(),
    };
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(rest) = raw.strip_prefix("task=") {
            let (id, file) = rest
                .split_once(" log=")
                .ok_or_else(|| err(n, "task line must read `task=<id> log=<file>`"))?;
            if id.is_empty() || file.is_empty() {
                return Err(err(n, "empty task id or log name"));
            }
            log.tasks.push((id.to_string(), file.to_string()));
            continue;
        }
        let (k, v) = raw.split_once('=').ok_or_else(|| err(n, format!("expected key=value, found `{raw}`")))?;
        seen.insert(k.to_string());
        match k {
            "run_id" => log.run_id = unescape(v),
            "script_name" => log.script_name = unescape(v),
            "site" => log.site = unescape(v),
            "start_ms" => log.start_ms = parse_num(n, k, v)?,
            "end_ms" => log.end_ms = parse_num(n, k, v)?,
            "status" => log.status = RunStatus::parse(v).ok_or_else(|| err(n, format!("unknown run status `{v}`")))?,
            "max_workers" => log.max_workers = parse_num(n, k, v)?,
            _ => return Err(err(n, format!("unknown run log key `{k}`"))),
        }
    }
    for key in ["run_id", "start_ms", "end_ms", "status"] {
        if !seen.contains(key) {
            return Err(err(0, format!("missing key `{key}`")));
        }
    }
    if log.run_id.is_empty() {
        return Err(err(0, "empty run_id"));
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TaskResult {
        TaskResult {
            task_id: "00003-hits".into(),
            app_name: "hits".into(),
            status: TaskStatus::Success,
            exit_code: Some(0),
            start_ms: Some(1_000),
            end_ms: Some(3_500),
            resource: Some(ResourceUsage {
                duration_s: 2.5,
                cpu_user_s: 1.25,
                cpu_sys_s: 0.000_001,
                cpu_percent: ResourceUsage::cpu_percent_of(1.25, 0.000_001, 2.5),
                max_rss_bytes: 4096,
                bytes_read: 10,
                bytes_written: 20,
                read_ops: 1,
                write_ops: 2,
                unmeasured: vec![],
            }),
            command: "sh -c 'printf \"a\\nb\"'".into(),
            stdin: None,
            stdout: Some("/tmp/o".into()),
            stderr: Some("/tmp/e".into()),
            input_files: vec!["/a,b".into(), "/c\\d".into()],
            output_files: vec!["/o".into()],
        }
    }

    #[test]
    fn renders_required_keys() {
        let text = render_wrapper_log(&sample());
        assert!(text.contains("exit_code=0\n"));
        assert!(text.contains("duration_s=2.500\n"));
        assert!(text.contains("input_files=/a\\,b,/c\\\\d\n"));
    }

    #[test]
    fn wrapper_round_trip() {
        let r = sample();
        let parsed = parse_wrapper_log(&render_wrapper_log(&r)).unwrap();
        assert_eq!(parsed.result, r);
        assert!(parsed.extra.is_empty());
    }

    #[test]
    fn skipped_has_no_resource_fields() {
        let mut r = sample();
        r.status = TaskStatus::Skipped;
        r.exit_code = None;
        r.start_ms = None;
        r.end_ms = None;
        r.resource = None;
        let text = render_wrapper_log(&r);
        assert!(text.contains("status=skipped"));
        for k in ["exit_code", "duration_s", "cpu_user_s", "bytes_read", "max_rss_bytes"] {
            assert!(!text.contains(&format!("{k}=")), "{k}");
        }
        assert_eq!(parse_wrapper_log(&text).unwrap().result, r);
    }

    #[test]
    fn unknown_keys_are_kept_and_bad_lines_located() {
        let mut text = render_wrapper_log(&sample());
        text.push_str("queue=short\n");
        assert_eq!(parse_wrapper_log(&text).unwrap().extra, vec![("queue".to_string(), "short".to_string())]);
        text.push_str("garbage\n");
        let e = parse_wrapper_log(&text).unwrap_err();
        assert_eq!(e.line, text.lines().count());
    }

    #[test]
    fn run_log_round_trip() {
        let log = RunLog {
            run_id: "phylo-42".into(),
            script_name: "phylo.flow".into(),
            site: "local".into(),
            start_ms: 5,
            end_ms: 9,
            status: RunStatus::Failure,
            max_workers: 4,
            tasks: vec![("00000-a".into(), "00000-a.log".into())],
        };
        assert_eq!(parse_run_log(&render_run_log(&log)).unwrap(), log);
    }
}
