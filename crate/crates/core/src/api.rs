//! Wire types shared by the HTTP service, its client and the CLI.
//!
//! Every query goes through [`query`] and every model request through
//! [`ml`]; callers serialize the returned payload with `serde_json::to_string`,
//! so the CLI's JSON output and the service payload are the same bytes.

use std::collections::BTreeMap;

use schemars::{JsonSchema, Schema};
use serde::{Deserialize, Serialize};

use crate::analytics::{self, AnalyticsError, Tabular};
use crate::ml::{self, Column, Dataset, DatasetSpec, EvalReport, MlError, Model, ModelSpec};
use crate::store::{DomainSchema, Lineage, Store, StoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "status", rename_all = "lowercase", deny_unknown_fields)]
pub enum ApiEnvelope<T> {
    Ok { payload: T },
    Error { error: ApiError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    RunNotFound,
    NotFound,
    BadRequest,
    Unauthorized,
    Unprocessable,
    Internal,
}

impl ErrorCode {
    pub fn http_status(self) -> u16 {
        match self {
            ErrorCode::RunNotFound | ErrorCode::NotFound => 404,
            ErrorCode::BadRequest => 400,
            ErrorCode::Unauthorized => 401,
            ErrorCode::Unprocessable => 422,
            ErrorCode::Internal => 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { code, message: message.into() }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::RunNotFound(_) => ErrorCode::RunNotFound,
            StoreError::Dangling(_) => ErrorCode::NotFound,
            StoreError::Schema(_) => ErrorCode::BadRequest,
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::Store(s) => s.into(),
            AnalyticsError::RunNotFound(_) => ApiError::new(ErrorCode::RunNotFound, e.to_string()),
            AnalyticsError::Schema(_) => ApiError::new(ErrorCode::BadRequest, e.to_string()),
            AnalyticsError::RunIncomplete(_) | AnalyticsError::Undefined(_) => ApiError::new(ErrorCode::Unprocessable, e.to_string()),
        }
    }
}

impl From<MlError> for ApiError {
    fn from(e: MlError) -> Self {
        match e {
            MlError::Store(s) => s.into(),
            other => ApiError::new(ErrorCode::Unprocessable, other.to_string()),
        }
    }
}

/// `{"status":"ok","payload":<json>}` around an already serialized payload.
pub fn ok_envelope(payload_json: &str) -> String {
    format!(r#"{{"status":"ok","payload":{payload_json}}}"#)
}

pub fn error_envelope(error: &ApiError) -> String {
    serde_json::to_string(&ApiEnvelope::<()>::Error { error: error.clone() }).expect("serializable")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Runs { limit: usize, offset: usize },
    Summary { run: String },
    Profile { run: String },
    Gantt { run: String },
    Parallelism { run: String },
    Compare { base: String, other: String },
    Annotations { run: String, key: String },
    /// `file` is a file id or a path recorded for the run.
    Lineage { run: String, file: String },
    DomainJoin { run: String, request: analytics::DomainJoinRequest },
    DomainTables,
    Scaling,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum QueryPayload {
    Runs(analytics::RunList),
    Summary(analytics::RunSummary),
    Profile(Vec<analytics::ActivityProfile>),
    Gantt(analytics::GanttData),
    Parallelism(analytics::ParallelismProfile),
    Compare(analytics::Speedup),
    Annotations(Vec<analytics::AnnotationRow>),
    Lineage(Lineage),
    DomainJoin(analytics::DomainRows),
    DomainTables(Vec<DomainSchema>),
    Scaling(Vec<analytics::ScalingPoint>),
}

impl Tabular for Vec<DomainSchema> {
    fn header(&self) -> Vec<String> {
        vec!["table".into(), "columns".into()]
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|s| {
                let cols: Vec<String> = s.columns.iter().map(|c| format!("{}:{}", c.name, c.ty.as_str())).collect();
                vec![s.name.clone(), cols.join(",")]
            })
            .collect()
    }
}

impl QueryPayload {
    pub fn tabular(&self) -> &dyn Tabular {
        match self {
            QueryPayload::Runs(x) => x,
            QueryPayload::Summary(x) => x,
            QueryPayload::Profile(x) => x,
            QueryPayload::Gantt(x) => x,
            QueryPayload::Parallelism(x) => x,
            QueryPayload::Compare(x) => x,
            QueryPayload::Annotations(x) => x,
            QueryPayload::Lineage(x) => x,
            QueryPayload::DomainJoin(x) => x,
            QueryPayload::DomainTables(x) => x,
            QueryPayload::Scaling(x) => x,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("payloads serialize")
    }

    /// Decode a payload received for `q`.
    pub fn decode(q: &Query, json: &str) -> serde_json::Result<QueryPayload> {
        use serde_json::from_str as de;
        Ok(match q {
            Query::Runs { .. } => QueryPayload::Runs(de(json)?),
            Query::Summary { .. } => QueryPayload::Summary(de(json)?),
            Query::Profile { .. } => QueryPayload::Profile(de(json)?),
            Query::Gantt { .. } => QueryPayload::Gantt(de(json)?),
            Query::Parallelism { .. } => QueryPayload::Parallelism(de(json)?),
            Query::Compare { .. } => QueryPayload::Compare(de(json)?),
            Query::Annotations { .. } => QueryPayload::Annotations(de(json)?),
            Query::Lineage { .. } => QueryPayload::Lineage(de(json)?),
            Query::DomainJoin { .. } => QueryPayload::DomainJoin(de(json)?),
            Query::DomainTables => QueryPayload::DomainTables(de(json)?),
            Query::Scaling => QueryPayload::Scaling(de(json)?),
        })
    }

    /// Schema file stem documenting this payload.
    pub fn schema_name(q: &Query) -> &'static str {
        match q {
            Query::Runs { .. } => "runs",
            Query::Summary { .. } => "summary",
            Query::Profile { .. } => "profile",
            Query::Gantt { .. } => "gantt",
            Query::Parallelism { .. } => "parallelism",
            Query::Compare { .. } => "compare",
            Query::Annotations { .. } => "annotations",
            Query::Lineage { .. } => "lineage",
            Query::DomainJoin { .. } => "domain_join",
            Query::DomainTables => "domain_tables",
            Query::Scaling => "scaling",
        }
    }
}

fn lineage(store: &Store, run: &str, file: &str) -> Result<Lineage, ApiError> {
    store.require_run(run)?;
    let id = match file.parse::<i64>() {
        Ok(id) => store
            .conn()
            .query_row("SELECT file_id FROM file WHERE file_id = ?1 AND run_id = ?2", rusqlite::params![id, run], |r| r.get(0))
            .ok(),
        Err(_) => store.file_id(run, file)?,
    };
    let id = id.ok_or_else(|| ApiError::new(ErrorCode::NotFound, format!("run `{run}` has no file `{file}`")))?;
    Ok(store.lineage(id)?)
}

pub fn query(store: &Store, q: &Query) -> Result<QueryPayload, ApiError> {
    Ok(match q {
        Query::Runs { limit, offset } => QueryPayload::Runs(analytics::list_runs(store, *limit, *offset)?),
        Query::Summary { run } => QueryPayload::Summary(analytics::run_summary(store, run)?),
        Query::Profile { run } => QueryPayload::Profile(analytics::activity_profile(store, run)?),
        Query::Gantt { run } => QueryPayload::Gantt(analytics::gantt(store, run)?),
        Query::Parallelism { run } => QueryPayload::Parallelism(analytics::parallelism_profile(store, run)?),
        Query::Compare { base, other } => QueryPayload::Compare(analytics::speedup(store, base, other)?),
        Query::Annotations { run, key } => QueryPayload::Annotations(analytics::annotation_query(store, run, key)?),
        Query::Lineage { run, file } => QueryPayload::Lineage(lineage(store, run, file)?),
        Query::DomainJoin { run, request } => QueryPayload::DomainJoin(analytics::domain_join(store, run, request)?),
        Query::DomainTables => {
            let mut out = Vec::new();
            for name in store.domain_tables()? {
                out.extend(store.domain_schema(&name)?);
            }
            QueryPayload::DomainTables(out)
        }
        Query::Scaling => QueryPayload::Scaling(analytics::scaling(store)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlOp {
    GainRatio,
    Regress,
    Oner,
    Tree,
    Cv,
}

impl MlOp {
    pub const ALL: [MlOp; 5] = [MlOp::GainRatio, MlOp::Regress, MlOp::Oner, MlOp::Tree, MlOp::Cv];

    pub fn as_str(self) -> &'static str {
        match self {
            MlOp::GainRatio => "gain-ratio",
            MlOp::Regress => "regress",
            MlOp::Oner => "oner",
            MlOp::Tree => "tree",
            MlOp::Cv => "cv",
        }
    }

    pub fn parse(s: &str) -> Option<MlOp> {
        MlOp::ALL.into_iter().find(|op| op.as_str() == s)
    }
}

/// Body of `POST /api/ml/{op}`. The dataset is either built from the store
/// (`spec`) or sent inline (`dataset`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MlRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<DatasetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<Dataset>,
    /// Overrides the dataset's target column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    /// Replace a numeric target by this many equal-width classes first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discretize: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_bucket: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_leaf: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_matrix: Option<Vec<Vec<f64>>>,
    /// Model evaluated by `cv`; defaults to regression for a numeric target
    /// and a tree otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AttributeScore {
    pub attribute: String,
    pub gain_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GainRatioReport {
    pub target: String,
    pub rows: usize,
    /// Highest first.
    pub ranking: Vec<AttributeScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ModelReport {
    pub target: String,
    pub rows: usize,
    pub model: Model,
    /// Human-readable rendering of the model.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum MlPayload {
    GainRatio(GainRatioReport),
    Model(ModelReport),
    Eval(EvalReport),
}

impl MlPayload {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("payloads serialize")
    }

    pub fn render(&self) -> String {
        match self {
            MlPayload::GainRatio(r) => {
                let mut s = format!("gain ratio for {} ({} rows)\n", r.target, r.rows);
                for a in &r.ranking {
                    s.push_str(&format!("  {:.4}  {}\n", a.gain_ratio, a.attribute));
                }
                s
            }
            MlPayload::Model(m) => m.text.clone(),
            MlPayload::Eval(e) => serde_json::to_string_pretty(e).expect("serializable") + "\n",
        }
    }
}

/// Resolve the request's dataset: build or take it, retarget, discretize.
pub fn ml_dataset(store: Option<&Store>, req: &MlRequest) -> Result<Dataset, ApiError> {
    let mut ds = match (&req.spec, &req.dataset) {
        (Some(spec), None) => {
            let store = store.ok_or_else(|| ApiError::new(ErrorCode::BadRequest, "a dataset spec needs a store"))?;
            ml::build_dataset(store, spec)?
        }
        (None, Some(ds)) => ds.clone(),
        _ => return Err(ApiError::new(ErrorCode::BadRequest, "give exactly one of `spec` or `dataset`")),
    };
    if let Some(t) = &req.target {
        ds = ds.with_target(t)?;
    }
    if let Some(k) = req.discretize {
        ds = ml::discretize_equal_width(&ds, &ds.target.clone(), k)?;
    }
    Ok(ds)
}

pub fn ml(store: Option<&Store>, op: MlOp, req: &MlRequest) -> Result<MlPayload, ApiError> {
    let ds = ml_dataset(store, req)?;
    let model_report = |model: Model| MlPayload::Model(ModelReport { target: ds.target.clone(), rows: ds.len(), text: model.render(), model });
    Ok(match op {
        MlOp::GainRatio => MlPayload::GainRatio(GainRatioReport {
            target: ds.target.clone(),
            rows: ds.len(),
            ranking: ml::rank_attributes(&ds)?.into_iter().map(|(attribute, gain_ratio)| AttributeScore { attribute, gain_ratio }).collect(),
        }),
        MlOp::Regress => model_report(Model::Linear(ml::train_linear_regression(&ds)?)),
        MlOp::Oner => model_report(Model::Rule(ml::train_oner(&ds, req.min_bucket.unwrap_or(ml::DEFAULT_MIN_BUCKET))?)),
        MlOp::Tree => model_report(Model::Tree(ml::train_tree(
            &ds,
            req.min_leaf.unwrap_or(ml::DEFAULT_MIN_LEAF),
            req.cost_matrix.as_deref(),
        )?)),
        MlOp::Cv => {
            let spec = req.model.clone().unwrap_or_else(|| match ds.target_column() {
                Column::Numeric { .. } => ModelSpec::Linear,
                Column::Nominal { .. } => ModelSpec::Tree {
                    min_leaf: req.min_leaf.unwrap_or(ml::DEFAULT_MIN_LEAF),
                    cost_matrix: req.cost_matrix.clone(),
                },
            });
            MlPayload::Eval(ml::cross_validate(&ds, &spec, req.folds.unwrap_or(DEFAULT_FOLDS), req.seed.unwrap_or(0))?)
        }
    })
}

fn envelope_schema<T: JsonSchema>() -> Schema {
    schemars::schema_for!(ApiEnvelope<T>)
}

/// JSON Schema per documented payload, keyed by file stem (`docs/api/<key>.json`).
pub fn schemas() -> BTreeMap<&'static str, Schema> {
    BTreeMap::from([
        ("runs", envelope_schema::<analytics::RunList>()),
        ("summary", envelope_schema::<analytics::RunSummary>()),
        ("profile", envelope_schema::<Vec<analytics::ActivityProfile>>()),
        ("gantt", envelope_schema::<analytics::GanttData>()),
        ("parallelism", envelope_schema::<analytics::ParallelismProfile>()),
        ("compare", envelope_schema::<analytics::Speedup>()),
        ("annotations", envelope_schema::<Vec<analytics::AnnotationRow>>()),
        ("lineage", envelope_schema::<Lineage>()),
        ("domain_join", envelope_schema::<analytics::DomainRows>()),
        ("domain_tables", envelope_schema::<Vec<DomainSchema>>()),
        ("scaling", envelope_schema::<Vec<analytics::ScalingPoint>>()),
        ("ml_gain_ratio", envelope_schema::<GainRatioReport>()),
        ("ml_model", envelope_schema::<ModelReport>()),
        ("ml_cv", envelope_schema::<EvalReport>()),
        ("error", envelope_schema::<()>()),
        ("ml_request", schemars::schema_for!(MlRequest)),
        ("domain_join_request", schemars::schema_for!(analytics::DomainJoinRequest)),
    ])
}

/// Schema file stem for the payload of each endpoint.
pub fn schema_for_ml(op: MlOp) -> &'static str {
    match op {
        MlOp::GainRatio => "ml_gain_ratio",
        MlOp::Regress | MlOp::Oner | MlOp::Tree => "ml_model",
        MlOp::Cv => "ml_cv",
    }
}
