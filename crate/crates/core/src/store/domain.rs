use std::path::Path;

use rusqlite::{params, params_from_iter, OptionalExtension};
use serde::{Deserialize, Serialize};

use super::{io_err, Result, Store, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Text,
    Integer,
    Real,
}

impl ColumnType {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Text => "text",
            ColumnType::Integer => "int",
            ColumnType::Real => "real",
        }
    }

    fn sql(self) -> &'static str {
        match self {
            ColumnType::Text => "TEXT",
            ColumnType::Integer => "INTEGER",
            ColumnType::Real => "REAL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct DomainSchema {
    pub name: String,
    pub columns: Vec<Column>,
}

fn col(name: &str, ty: ColumnType) -> Column {
    Column { name: name.into(), ty }
}

impl DomainSchema {
    /// Shipped presets: `variants` (VCF-like) and `features` (GFF-like).
    pub fn preset(preset: &str, table: &str) -> Option<DomainSchema> {
        use ColumnType::*;
        let columns = match preset {
            "variants" => vec![
                col("patient", Text),
                col("gene", Text),
                col("trid", Text),
                col("chrom", Text),
                col("pos", Integer),
                col("ref", Text),
                col("alt", Text),
            ],
            "features" => vec![
                col("id", Text),
                col("name", Text),
                col("biotype", Text),
                col("seqid", Text),
                col("start", Integer),
                col("end", Integer),
            ],
            _ => return None,
        };
        Some(DomainSchema { name: table.to_string(), columns })
    }

    /// Parse `name:type,name:type,...` (type defaults to text).
    pub fn parse(table: &str, spec: &str) -> Result<DomainSchema> {
        let mut columns = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (name, ty) = item.split_once(':').unwrap_or((item, "text"));
            let ty = match ty.trim().to_ascii_lowercase().as_str() {
                "text" => ColumnType::Text,
                "int" | "integer" => ColumnType::Integer,
                "real" | "float" => ColumnType::Real,
                other => return Err(StoreError::Schema(format!("unknown column type `{other}`"))),
            };
            columns.push(Column { name: name.trim().to_string(), ty });
        }
        let s = DomainSchema { name: table.to_string(), columns };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        valid_ident(&self.name)?;
        if self.columns.is_empty() {
            return Err(StoreError::Schema(format!("table `{}` declares no columns", self.name)));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            valid_ident(&c.name)?;
            if c.name.starts_with('_') {
                return Err(StoreError::Schema(format!("column `{}`: leading underscore is reserved", c.name)));
            }
            if !seen.insert(c.name.to_ascii_lowercase()) {
                return Err(StoreError::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        Ok(())
    }
}

fn valid_ident(s: &str) -> Result<()> {
    let mut chars = s.chars();
    let ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ok {
        Ok(())
    } else {
        Err(StoreError::Schema(format!("`{s}` is not a valid identifier")))
    }
}

pub fn physical_name(table: &str) -> String {
    format!("dt_{table}")
}

impl Store {
    pub fn domain_schema(&self, table: &str) -> Result<Option<DomainSchema>> {
        let cols: Option<String> = self
            .conn
            .query_row("SELECT columns FROM domain_table WHERE name = ?1", [table], |r| r.get(0))
            .optional()?;
        match cols {
            None => Ok(None),
            Some(json) => {
                let columns = serde_json::from_str(&json).map_err(|e| StoreError::Schema(e.to_string()))?;
                Ok(Some(DomainSchema { name: table.to_string(), columns }))
            }
        }
    }

    pub fn domain_tables(&self) -> Result<Vec<String>> {
        let mut stmt = self.conn.prepare("SELECT name FROM domain_table ORDER BY name")?;
        let rows = stmt.query_map([], |r| r.get(0))?;
        Ok(rows.collect::<std::result::Result<_, _>>()?)
    }

    /// Append the rows of a delimited text file to a domain table, creating it
    /// on first use. `#` lines are skipped, as is a first line that repeats
    /// the column names. Any malformed row rejects the whole file.
    pub fn import_domain_table(
        &mut self,
        file: &Path,
        schema: &DomainSchema,
        delimiter: char,
        run_id: Option<&str>,
        file_id: Option<i64>,
    ) -> Result<usize> {
        schema.validate()?;
        if let Some(r) = run_id {
            self.require_run(r)?;
        }
        if let Some(f) = file_id {
            let exists = self.conn.query_row("SELECT 1 FROM file WHERE file_id = ?1", [f], |_| Ok(())).optional()?;
            if exists.is_none() {
                return Err(StoreError::Dangling(format!("file {f}")));
            }
        }
        if let Some(existing) = self.domain_schema(&schema.name)? {
            if existing.columns != schema.columns {
                return Err(StoreError::Schema(format!("table `{}` exists with different columns", schema.name)));
            }
        }
        let text = std::fs::read_to_string(file).map_err(io_err(file))?;
        let names: Vec<String> = schema.columns.iter().map(|c| c.name.to_ascii_lowercase()).collect();
        let mut rows: Vec<Vec<rusqlite::types::Value>> = Vec::new();
        let mut first = true;
        for (i, line) in text.lines().enumerate() {
            let row_no = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(delimiter).collect();
            if std::mem::take(&mut first)
                && fields.iter().map(|f| f.trim().to_ascii_lowercase()).collect::<Vec<_>>() == names
            {
                continue;
            }
            let bad = |message: String| StoreError::DomainRow { path: file.to_path_buf(), row: row_no, message };
            if fields.len() != schema.columns.len() {
                return Err(bad(format!("expected {} fields, found {}", schema.columns.len(), fields.len())));
            }
            let mut values = Vec::with_capacity(fields.len());
            for (c, f) in schema.columns.iter().zip(&fields) {
                values.push(match c.ty {
                    ColumnType::Text => rusqlite::types::Value::Text(f.to_string()),
                    ColumnType::Integer => rusqlite::types::Value::Integer(
                        f.trim().parse().map_err(|_| bad(format!("column {}: `{f}` is not an integer", c.name)))?,
                    ),
                    ColumnType::Real => rusqlite::types::Value::Real(
                        f.trim().parse().map_err(|_| bad(format!("column {}: `{f}` is not a number", c.name)))?,
                    ),
                });
            }
            rows.push(values);
        }

        let tx = self.conn.transaction()?;
        let existing: Option<String> = tx
            .query_row("SELECT columns FROM domain_table WHERE name = ?1", [&schema.name], |r| r.get(0))
            .optional()?;
        let json = serde_json::to_string(&schema.columns).expect("columns serialize");
        let phys = physical_name(&schema.name);
        match existing {
            Some(_) => {}
            None => {
                let cols: Vec<String> = schema.columns.iter().map(|c| format!("\"{}\" {}", c.name, c.ty.sql())).collect();
                tx.execute_batch(&format!(
                    "CREATE TABLE \"{phys}\" (_row INTEGER PRIMARY KEY, _run_id TEXT REFERENCES script_run (run_id),
                     _file_id INTEGER REFERENCES file (file_id), {});
                     CREATE INDEX \"{phys}_run\" ON \"{phys}\" (_run_id);",
                    cols.join(", ")
                ))?;
                tx.execute("INSERT INTO domain_table (name, columns) VALUES (?1, ?2)", params![schema.name, json])?;
            }
        }
        {
            let cols: Vec<String> = schema.columns.iter().map(|c| format!("\"{}\"", c.name)).collect();
            let marks: Vec<String> = (0..schema.columns.len() + 2).map(|k| format!("?{}", k + 1)).collect();
            let sql = format!("INSERT INTO \"{phys}\" (_run_id, _file_id, {}) VALUES ({})", cols.join(", "), marks.join(", "));
            let mut stmt = tx.prepare(&sql)?;
            for values in &rows {
                let mut all: Vec<rusqlite::types::Value> = vec![
                    run_id.map(|s| s.to_string().into()).unwrap_or(rusqlite::types::Value::Null),
                    file_id.map(Into::into).unwrap_or(rusqlite::types::Value::Null),
                ];
                all.extend(values.iter().cloned());
                stmt.execute(params_from_iter(all))?;
            }
        }
        tx.commit()?;
        Ok(rows.len())
    }
}
