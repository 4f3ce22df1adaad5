use std::collections::{BTreeMap, BTreeSet};

use rusqlite::OptionalExtension;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{MlError, Result};
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Column {
    Numeric {
        name: String,
        values: Vec<f64>,
    },
    Nominal {
        name: String,
        /// Category set in display order; derived (sorted) when empty.
        #[serde(default)]
        categories: Vec<String>,
        values: Vec<String>,
    },
}

impl Column {
    pub fn name(&self) -> &str {
        match self {
            Column::Numeric { name, .. } | Column::Nominal { name, .. } => name,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Numeric { values, .. } => values.len(),
            Column::Nominal { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Column::Numeric { .. })
    }

    pub fn numeric(name: &str, values: Vec<f64>) -> Column {
        Column::Numeric { name: name.into(), values }
    }

    pub fn nominal<S: Into<String>>(name: &str, values: impl IntoIterator<Item = S>) -> Column {
        Column::Nominal { name: name.into(), categories: Vec::new(), values: values.into_iter().map(Into::into).collect() }
    }

    pub(crate) fn cell(&self, row: usize) -> Cell {
        match self {
            Column::Numeric { values, .. } => Cell::Num(values[row]),
            Column::Nominal { values, .. } => Cell::Text(values[row].clone()),
        }
    }
}

/// One attribute value as it appears in a prediction request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    pub(crate) fn as_num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Text(s) => s.trim().parse().ok(),
        }
    }

    pub(crate) fn as_text(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

pub type Row = BTreeMap<String, Cell>;

/// A rectangular table of attributes plus the name of the target column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(try_from = "RawDataset")]
pub struct Dataset {
    pub target: String,
    pub columns: Vec<Column>,
}

#[derive(Deserialize, JsonSchema)]
struct RawDataset {
    target: String,
    columns: Vec<Column>,
}

impl TryFrom<RawDataset> for Dataset {
    type Error = MlError;
    fn try_from(raw: RawDataset) -> Result<Self> {
        Dataset::new(raw.columns, &raw.target)
    }
}

impl Dataset {
    /// Validate and normalize: equal lengths, unique names, finite numbers,
    /// nominal category sets covering their values.
    pub fn new(mut columns: Vec<Column>, target: &str) -> Result<Dataset> {
        let invalid = |m: String| Err(MlError::InvalidDataset(m));
        if columns.is_empty() {
            return invalid("no columns".into());
        }
        let n = columns[0].len();
        let mut names = BTreeSet::new();
        for c in &mut columns {
            if !names.insert(c.name().to_string()) {
                return invalid(format!("duplicate column `{}`", c.name()));
            }
            if c.len() != n {
                return invalid(format!("column `{}` has {} values, expected {n}", c.name(), c.len()));
            }
            match c {
                Column::Numeric { name, values } => {
                    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                        return invalid(format!("column `{name}` row {}: missing or non-finite value", i + 1));
                    }
                }
                Column::Nominal { name, categories, values } => {
                    if categories.is_empty() {
                        *categories = values.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
                    }
                    let known: BTreeSet<&String> = categories.iter().collect();
                    if known.len() != categories.len() {
                        return invalid(format!("column `{name}` repeats a category"));
                    }
                    if let Some(v) = values.iter().find(|v| !known.contains(v)) {
                        return invalid(format!("column `{name}`: value `{v}` is not a declared category"));
                    }
                }
            }
        }
        if !names.contains(target) {
            return invalid(format!("target column `{target}` not found"));
        }
        Ok(Dataset { target: target.to_string(), columns })
    }

    pub fn len(&self) -> usize {
        self.columns[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns.iter().find(|c| c.name() == name).ok_or_else(|| MlError::UnknownColumn(name.to_string()))
    }

    pub fn target_column(&self) -> &Column {
        self.column(&self.target).expect("target validated at construction")
    }

    /// Non-target columns in schema order.
    pub fn attributes(&self) -> impl Iterator<Item = &Column> {
        self.columns.iter().filter(move |c| c.name() != self.target)
    }

    pub fn with_target(&self, target: &str) -> Result<Dataset> {
        Dataset::new(self.columns.clone(), target)
    }

    /// Class labels and per-row class indices of a nominal target.
    pub(crate) fn classes(&self) -> Result<(Vec<String>, Vec<usize>)> {
        match self.target_column() {
            Column::Nominal { categories, values, .. } => {
                let index: BTreeMap<&String, usize> = categories.iter().enumerate().map(|(i, c)| (c, i)).collect();
                Ok((categories.clone(), values.iter().map(|v| index[v]).collect()))
            }
            Column::Numeric { name, .. } => Err(MlError::TargetKind { target: name.clone(), expected: "nominal" }),
        }
    }

    pub(crate) fn numeric_target(&self) -> Result<&[f64]> {
        match self.target_column() {
            Column::Numeric { values, .. } => Ok(values),
            Column::Nominal { name, .. } => Err(MlError::TargetKind { target: name.clone(), expected: "numeric" }),
        }
    }

    pub fn row(&self, i: usize) -> Row {
        self.columns.iter().map(|c| (c.name().to_string(), c.cell(i))).collect()
    }

    /// The rows at `idx`, in that order. Nominal category sets are kept.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                Column::Numeric { name, values } => Column::Numeric { name: name.clone(), values: idx.iter().map(|&i| values[i]).collect() },
                Column::Nominal { name, categories, values } => Column::Nominal {
                    name: name.clone(),
                    categories: categories.clone(),
                    values: idx.iter().map(|&i| values[i].clone()).collect(),
                },
            })
            .collect();
        Dataset { target: self.target.clone(), columns }
    }

    /// Parse delimited text with a header line. A header field may carry a
    /// `:numeric` or `:nominal` suffix; otherwise a column is numeric when
    /// every value parses as a number.
    pub fn from_delimited(text: &str, delimiter: char, target: &str) -> Result<Dataset> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| MlError::InvalidDataset("missing header line".into()))?;
        let heads: Vec<(String, Option<&str>)> = header
            .split(delimiter)
            .map(|h| match h.trim().rsplit_once(':') {
                Some((n, k @ ("numeric" | "nominal"))) => (n.to_string(), Some(k)),
                _ => (h.trim().to_string(), None),
            })
            .collect();
        let mut cells: Vec<Vec<String>> = vec![Vec::new(); heads.len()];
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(delimiter).collect();
            if fields.len() != heads.len() {
                return Err(MlError::InvalidDataset(format!(
                    "data row {}: expected {} fields, found {}",
                    i + 1,
                    heads.len(),
                    fields.len()
                )));
            }
            for (col, f) in cells.iter_mut().zip(fields) {
                col.push(f.trim().to_string());
            }
        }
        let mut columns = Vec::new();
        for ((name, kind), raw) in heads.into_iter().zip(cells) {
            let parsed: Option<Vec<f64>> = raw.iter().map(|s| s.parse().ok()).collect();
            columns.push(match (kind, parsed) {
                (Some("nominal"), _) => Column::nominal(&name, raw),
                (_, Some(values)) => Column::Numeric { name, values },
                (Some("numeric"), None) => {
                    return Err(MlError::InvalidDataset(format!("column `{name}` is declared numeric but has text values")))
                }
                (_, None) => Column::nominal(&name, raw),
            });
        }
        Dataset::new(columns, target)
    }

    /// Header-bearing delimited text with explicit kind suffixes.
    pub fn to_delimited(&self, delimiter: char) -> String {
        let d = delimiter.to_string();
        let mut out = self
            .columns
            .iter()
            .map(|c| format!("{}:{}", c.name(), if c.is_numeric() { "numeric" } else { "nominal" }))
            .collect::<Vec<_>>()
            .join(&d);
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&self.columns.iter().map(|c| c.cell(i).as_text()).collect::<Vec<_>>().join(&d));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ResourceField {
    DurationS,
    CpuUserS,
    CpuSysS,
    /// User plus system CPU seconds.
    CpuTimeS,
    CpuPercent,
    MaxRssBytes,
    BytesRead,
    BytesWritten,
    ReadOps,
    WriteOps,
}

impl ResourceField {
    fn sql(self) -> &'static str {
        match self {
            ResourceField::DurationS => "u.duration_s",
            ResourceField::CpuUserS => "u.cpu_user_s",
            ResourceField::CpuSysS => "u.cpu_sys_s",
            ResourceField::CpuTimeS => "(u.cpu_user_s + u.cpu_sys_s)",
            ResourceField::CpuPercent => "u.cpu_percent",
            ResourceField::MaxRssBytes => "u.max_rss_bytes",
            ResourceField::BytesRead => "u.bytes_read",
            ResourceField::BytesWritten => "u.bytes_written",
            ResourceField::ReadOps => "u.read_ops",
            ResourceField::WriteOps => "u.write_ops",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    #[default]
    Sum,
    Mean,
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum RunMetric {
    /// Wall-clock duration of the run in seconds.
    DurationS,
    TaskCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum FeatureSource {
    /// Aggregate of a resource field over the run's measured tasks,
    /// optionally restricted to one app.
    Resource {
        field: ResourceField,
        #[serde(default)]
        agg: Aggregate,
        #[serde(default)]
        app: Option<String>,
    },
    /// A numeric or text run annotation.
    RunAnnotation { key: String },
    Computed { metric: RunMetric },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub source: FeatureSource,
    /// Treat the values as categories even when they are numbers.
    #[serde(default)]
    pub nominal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DatasetSpec {
    pub runs: Vec<String>,
    pub features: Vec<FeatureSpec>,
    pub target: String,
}

fn scalar(store: &Store, run: &str, f: &FeatureSpec) -> Result<Option<super::dataset::Cell>> {
    let conn = store.conn();
    let cell = match &f.source {
        FeatureSource::Resource { field, agg, app } => {
            let agg = match agg {
                Aggregate::Sum => "SUM",
                Aggregate::Mean => "AVG",
                Aggregate::Min => "MIN",
                Aggregate::Max => "MAX",
            };
            let sql = format!(
                "SELECT {agg}({}) FROM resource_usage u JOIN app_exec a ON a.app_exec_id = u.app_exec_id
                 WHERE a.run_id = ?1 AND (?2 IS NULL OR a.app_name = ?2)",
                field.sql()
            );
            conn.query_row(&sql, rusqlite::params![run, app], |r| r.get::<_, Option<f64>>(0))?.map(Cell::Num)
        }
        FeatureSource::RunAnnotation { key } => {
            let num: Option<f64> = conn
                .query_row(
                    "SELECT value FROM run_annot_numeric WHERE run_id = ?1 AND key = ?2 ORDER BY seq LIMIT 1",
                    [run, key],
                    |r| r.get(0),
                )
                .optional()?;
            match num {
                Some(v) => Some(Cell::Num(v)),
                None => conn
                    .query_row(
                        "SELECT value FROM run_annot_text WHERE run_id = ?1 AND key = ?2 ORDER BY seq LIMIT 1",
                        [run, key],
                        |r| r.get::<_, String>(0),
                    )
                    .optional()?
                    .map(Cell::Text),
            }
        }
        FeatureSource::Computed { metric: RunMetric::DurationS } => conn
            .query_row("SELECT (end_time - start_time) / 1000.0 FROM script_run WHERE run_id = ?1", [run], |r| {
                r.get::<_, Option<f64>>(0)
            })
            .optional()?
            .flatten()
            .map(Cell::Num),
        FeatureSource::Computed { metric: RunMetric::TaskCount } => conn
            .query_row("SELECT COUNT(*) FROM app_exec WHERE run_id = ?1", [run], |r| r.get::<_, i64>(0))
            .map(|n| Some(Cell::Num(n as f64)))?,
    };
    Ok(cell)
}

/// One row per run, one column per feature, in the order given.
pub fn build_dataset(store: &Store, spec: &DatasetSpec) -> Result<Dataset> {
    for run in &spec.runs {
        if !store.run_exists(run)? {
            return Err(MlError::MissingValue { run: run.clone(), feature: "(run)".into() });
        }
    }
    let mut columns = Vec::new();
    for f in &spec.features {
        let mut cells = Vec::with_capacity(spec.runs.len());
        for run in &spec.runs {
            let cell = scalar(store, run, f)?.ok_or_else(|| MlError::MissingValue { run: run.clone(), feature: f.name.clone() })?;
            cells.push(cell);
        }
        let numeric: Option<Vec<f64>> = if f.nominal { None } else { cells.iter().map(|c| match c { Cell::Num(v) => Some(*v), Cell::Text(_) => None }).collect() };
        columns.push(match numeric {
            Some(values) => Column::Numeric { name: f.name.clone(), values },
            None => Column::nominal(&f.name, cells.iter().map(Cell::as_text)),
        });
    }
    Dataset::new(columns, &spec.target)
}
