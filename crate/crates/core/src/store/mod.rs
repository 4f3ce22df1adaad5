//! Embedded provenance store (SQLite): schema, log import, annotations,
//! domain tables and lineage.

mod annotate;
mod domain;
mod import;
mod lineage;
mod lock;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rusqlite::{Connection, OpenFlags, OptionalExtension};

pub use annotate::{extract_annotations, parse_rules, AnnotValue, Annotation, ExtractorRule, Target, ValueKind};
pub use domain::{physical_name, Column, ColumnType, DomainSchema};
pub use import::ImportOutcome;
pub use lineage::{Lineage, LineageEdge, LineageNode, NodeKind};
pub use lock::WriterLock;

pub const SCHEMA_VERSION: i64 = 1;
pub const SCHEMA_V1: &str = include_str!("../../schema/v1.sql");

/// Tables whose row counts describe the provenance content of a store.
pub const PROVENANCE_TABLES: [&str; 12] = [
    "script_run",
    "app_exec",
    "resource_usage",
    "file",
    "staged_in",
    "staged_out",
    "run_annot_numeric",
    "run_annot_text",
    "app_exec_annot_numeric",
    "app_exec_annot_text",
    "file_annot_numeric",
    "file_annot_text",
];

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("database error: {0}")]
    Sql(#[from] rusqlite::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: line {line}: {message}")]
    Log { path: PathBuf, line: usize, message: String },
    #[error("unknown run `{0}`")]
    RunNotFound(String),
    #[error("{0} does not exist")]
    Dangling(String),
    #[error("annotation `{key}` already set on {target}")]
    DuplicateAnnotation { target: String, key: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{path}: row {row}: {message}")]
    DomainRow { path: PathBuf, row: usize, message: String },
    #[error("extractor rules line {line}: {message}")]
    Rule { line: usize, message: String },
    #[error("store is locked by another writer ({0})")]
    Locked(PathBuf),
}

pub type Result<T> = std::result::Result<T, StoreError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

pub struct Store {
    conn: Connection,
}

impl Store {
    /// Open (creating and migrating if needed) a store for writing.
    pub fn open(path: impl AsRef<Path>) -> Result<Store> {
        let conn = Connection::open(path.as_ref())?;
        conn.busy_timeout(std::time::Duration::from_secs(10))?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        Self::init(conn)
    }

    /// Open an existing store read-only.
    pub fn open_read_only(path: impl AsRef<Path>) -> Result<Store> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(StoreError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "store does not exist"),
            });
        }
        let conn = Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)?;
        conn.busy_timeout(std::time::Duration::from_secs(10))?;
        let version: i64 = conn.pragma_query_value(None, "user_version", |r| r.get(0))?;
        if version != SCHEMA_VERSION {
            return Err(StoreError::Schema(format!("store has schema version {version}, expected {SCHEMA_VERSION}")));
        }
        Ok(Store { conn })
    }

    pub fn in_memory() -> Result<Store> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Store> {
        conn.pragma_update(None, "foreign_keys", "ON")?;
        let version: i64 = conn.pragma_query_value(None, "user_version", |r| r.get(0))?;
        match version {
            0 => {
                conn.execute_batch(&format!("BEGIN;\n{SCHEMA_V1}\nPRAGMA user_version = {SCHEMA_VERSION};\nCOMMIT;"))?;
            }
            SCHEMA_VERSION => {}
            v => return Err(StoreError::Schema(format!("unsupported schema version {v}"))),
        }
        Ok(Store { conn })
    }

    pub fn conn(&self) -> &Connection {
        &self.conn
    }

    pub fn run_exists(&self, run_id: &str) -> Result<bool> {
        Ok(self
            .conn
            .query_row("SELECT 1 FROM script_run WHERE run_id = ?1", [run_id], |_| Ok(()))
            .optional()?
            .is_some())
    }

    pub fn require_run(&self, run_id: &str) -> Result<()> {
        if self.run_exists(run_id)? {
            Ok(())
        } else {
            Err(StoreError::RunNotFound(run_id.to_string()))
        }
    }

    pub fn file_id(&self, run_id: &str, path: &str) -> Result<Option<i64>> {
        Ok(self
            .conn
            .query_row("SELECT file_id FROM file WHERE run_id = ?1 AND path = ?2", [run_id, path], |r| r.get(0))
            .optional()?)
    }

    /// Row count of every provenance and domain table.
    pub fn table_counts(&self) -> Result<BTreeMap<String, i64>> {
        let mut names: Vec<String> = PROVENANCE_TABLES.iter().map(|s| s.to_string()).collect();
        let mut stmt = self.conn.prepare("SELECT name FROM domain_table ORDER BY name")?;
        for n in stmt.query_map([], |r| r.get::<_, String>(0))? {
            names.push(domain::physical_name(&n?));
        }
        let mut out = BTreeMap::new();
        for n in names {
            let c: i64 = self.conn.query_row(&format!("SELECT COUNT(*) FROM \"{n}\""), [], |r| r.get(0))?;
            out.insert(n, c);
        }
        Ok(out)
    }

    /// Foreign-key violations found by a full scan, as readable strings.
    pub fn integrity_violations(&self) -> Result<Vec<String>> {
        let mut stmt = self.conn.prepare("PRAGMA foreign_key_check")?;
        let rows = stmt.query_map([], |r| {
            Ok(format!("{} row {} -> {}", r.get::<_, String>(0)?, r.get::<_, Option<i64>>(1)?.unwrap_or(-1), r.get::<_, String>(2)?))
        })?;
        Ok(rows.collect::<std::result::Result<_, _>>()?)
    }
}
