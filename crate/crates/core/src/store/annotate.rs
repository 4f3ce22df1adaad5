use std::fmt;
use std::path::Path;

use regex::Regex;
use rusqlite::{params, OptionalExtension};
use serde::{Deserialize, Serialize};

use super::{io_err, Result, Store, StoreError};

/// What an annotation is attached to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Run(String),
    AppExec(String),
    File(i64),
}

impl Target {
    fn table_prefix(&self) -> &'static str {
        match self {
            Target::Run(_) => "run",
            Target::AppExec(_) => "app_exec",
            Target::File(_) => "file",
        }
    }

    fn id_column(&self) -> &'static str {
        match self {
            Target::Run(_) => "run_id",
            Target::AppExec(_) => "app_exec_id",
            Target::File(_) => "file_id",
        }
    }

    fn id_value(&self) -> rusqlite::types::Value {
        match self {
            Target::Run(s) | Target::AppExec(s) => s.clone().into(),
            Target::File(i) => (*i).into(),
        }
    }

    fn owner_table(&self) -> &'static str {
        match self {
            Target::Run(_) => "script_run",
            Target::AppExec(_) => "app_exec",
            Target::File(_) => "file",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Run(s) => write!(f, "run {s}"),
            Target::AppExec(s) => write!(f, "app_exec {s}"),
            Target::File(i) => write!(f, "file {i}"),
        }
    }
}

impl std::str::FromStr for Target {
    type Err = String;

    /// `run:<run_id>`, `exec:<app_exec_id>` or `file:<file_id>`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once(':') {
            Some(("run", id)) if !id.is_empty() => Ok(Target::Run(id.to_string())),
            Some(("exec", id)) if !id.is_empty() => Ok(Target::AppExec(id.to_string())),
            Some(("file", id)) => id.parse().map(Target::File).map_err(|_| format!("invalid file id `{id}`")),
            _ => Err(format!("invalid target `{s}`; expected run:<id>, exec:<id> or file:<id>")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(untagged)]
pub enum AnnotValue {
    Numeric(f64),
    Text(String),
}

impl AnnotValue {
    fn table_suffix(&self) -> &'static str {
        match self {
            AnnotValue::Numeric(_) => "numeric",
            AnnotValue::Text(_) => "text",
        }
    }

    fn sql(&self) -> rusqlite::types::Value {
        match self {
            AnnotValue::Numeric(v) => (*v).into(),
            AnnotValue::Text(s) => s.clone().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub key: String,
    pub value: AnnotValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Numeric,
    Text,
}

/// `<numeric|text> "<key>" <regex with one capture group>`
#[derive(Debug, Clone)]
pub struct ExtractorRule {
    pub kind: ValueKind,
    pub key: String,
    pub pattern: Regex,
}

/// Parse an extractor rule file. Blank lines and `#` comments are ignored.
pub fn parse_rules(text: &str) -> Result<Vec<ExtractorRule>> {
    let mut rules = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| StoreError::Rule { line, message };
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let (kind, rest) = s.split_once(char::is_whitespace).ok_or_else(|| err("expected `<type> \"<key>\" <pattern>`".into()))?;
        let kind = match kind {
            "numeric" => ValueKind::Numeric,
            "text" => ValueKind::Text,
            other => return Err(err(format!("unknown value type `{other}`, expected numeric or text"))),
        };
        let rest = rest.trim_start();
        let body = rest.strip_prefix('"').ok_or_else(|| err("key must be a double-quoted string".into()))?;
        let mut key = String::new();
        let mut chars = body.char_indices();
        let mut end = None;
        while let Some((k, c)) = chars.next() {
            match c {
                '\\' => {
                    if let Some((_, n)) = chars.next() {
                        key.push(n);
                    }
                }
                '"' => {
                    end = Some(k + 1);
                    break;
                }
                c => key.push(c),
            }
        }
        let end = end.ok_or_else(|| err("unterminated key".into()))?;
        let pattern = body[end..].trim();
        if pattern.is_empty() {
            return Err(err("missing pattern".into()));
        }
        let pattern = Regex::new(pattern).map_err(|e| err(format!("invalid pattern: {e}")))?;
        if pattern.captures_len() != 2 {
            return Err(err(format!("pattern must have exactly one capture group, found {}", pattern.captures_len() - 1)));
        }
        rules.push(ExtractorRule { kind, key, pattern });
    }
    Ok(rules)
}

/// Apply rules line by line: one annotation per matching line per rule, in
/// document order. Numeric captures that do not parse are not matches.
pub fn extract_annotations(path: &Path, rules: &[ExtractorRule]) -> Result<Vec<Annotation>> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let text = String::from_utf8_lossy(&bytes);
    let mut out = Vec::new();
    for line in text.lines() {
        for rule in rules {
            let Some(cap) = rule.pattern.captures(line).and_then(|c| c.get(1)) else { continue };
            let value = match rule.kind {
                ValueKind::Numeric => match cap.as_str().trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => AnnotValue::Numeric(v),
                    _ => continue,
                },
                ValueKind::Text => AnnotValue::Text(cap.as_str().to_string()),
            };
            out.push(Annotation { key: rule.key.clone(), value });
        }
    }
    Ok(out)
}

impl Store {
    fn target_exists(&self, target: &Target) -> Result<bool> {
        let sql = format!("SELECT 1 FROM {} WHERE {} = ?1", target.owner_table(), target.id_column());
        Ok(self.conn.query_row(&sql, [target.id_value()], |_| Ok(())).optional()?.is_some())
    }

    /// Attach `key = value` to `target`. Without `multiple`, a second value for
    /// the same key is an error; with it, distinct values accumulate and an
    /// identical value is ignored.
    pub fn annotate(&mut self, target: &Target, key: &str, value: AnnotValue, multiple: bool) -> Result<()> {
        if !self.target_exists(target)? {
            return Err(StoreError::Dangling(target.to_string()));
        }
        let col = target.id_column();
        let prefix = target.table_prefix();
        if !multiple {
            for suffix in ["numeric", "text"] {
                let sql = format!("SELECT 1 FROM {prefix}_annot_{suffix} WHERE {col} = ?1 AND key = ?2");
                if self.conn.query_row(&sql, params![target.id_value(), key], |_| Ok(())).optional()?.is_some() {
                    return Err(StoreError::DuplicateAnnotation { target: target.to_string(), key: key.into() });
                }
            }
        }
        let sql = format!("INSERT OR IGNORE INTO {prefix}_annot_{} ({col}, key, value) VALUES (?1, ?2, ?3)", value.table_suffix());
        self.conn.execute(&sql, params![target.id_value(), key, value.sql()])?;
        Ok(())
    }

    /// Values of `key` on `target`, numeric first, each in insertion order.
    pub fn annotations(&self, target: &Target, key: &str) -> Result<Vec<AnnotValue>> {
        let mut out = Vec::new();
        let col = target.id_column();
        let prefix = target.table_prefix();
        for suffix in ["numeric", "text"] {
            let sql = format!("SELECT value FROM {prefix}_annot_{suffix} WHERE {col} = ?1 AND key = ?2 ORDER BY seq");
            let mut stmt = self.conn.prepare(&sql)?;
            let rows = stmt.query_map(params![target.id_value(), key], |r| {
                Ok(match r.get_ref(0)? {
                    rusqlite::types::ValueRef::Real(v) => AnnotValue::Numeric(v),
                    rusqlite::types::ValueRef::Integer(v) => AnnotValue::Numeric(v as f64),
                    v => AnnotValue::Text(String::from_utf8_lossy(v.as_bytes().unwrap_or_default()).into_owned()),
                })
            })?;
            for r in rows {
                out.push(r?);
            }
        }
        Ok(out)
    }

    /// Run the extractor rules over every file produced by the run's tasks
    /// and store the results as file annotations. Missing files are skipped.
    /// Returns the number of annotations extracted.
    pub fn extract_run_annotations(&mut self, run_id: &str, rules: &[ExtractorRule]) -> Result<usize> {
        self.require_run(run_id)?;
        let files: Vec<(i64, String)> = {
            let mut stmt = self.conn.prepare(
                "SELECT DISTINCT f.file_id, f.path FROM file f
                 JOIN staged_out o ON o.file_id = f.file_id
                 JOIN app_exec a ON a.app_exec_id = o.app_exec_id
                 WHERE a.run_id = ?1 ORDER BY f.file_id",
            )?;
            let rows = stmt.query_map([run_id], |r| Ok((r.get(0)?, r.get(1)?)))?;
            rows.collect::<std::result::Result<_, _>>()?
        };
        let mut count = 0;
        let tx = self.conn.transaction()?;
        for (file_id, path) in files {
            if !Path::new(&path).is_file() {
                continue;
            }
            for a in extract_annotations(Path::new(&path), rules)? {
                let sql = format!("INSERT OR IGNORE INTO file_annot_{} (file_id, key, value) VALUES (?1, ?2, ?3)", a.value.table_suffix());
                tx.execute(&sql, params![file_id, a.key, a.value.sql()])?;
                count += 1;
            }
        }
        tx.commit()?;
        Ok(count)
    }
}
