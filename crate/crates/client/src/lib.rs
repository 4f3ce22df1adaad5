//! Thin async client for the provflow HTTP service. Payloads come back as
//! the exact JSON text the service sent, or decoded into the core types.

use provflow_core::analytics::{DomainJoinRequest, RunList, RunSummary};
use provflow_core::api::{ApiError, MlOp, MlRequest, Query};
use reqwest::Url;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::value::RawValue;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid service address `{0}`")]
    Address(String),
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("service error ({:?}): {}", .0.code, .0.message)]
    Api(ApiError),
    #[error("malformed response: {0}")]
    Decode(String),
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Deserialize)]
struct Envelope<'a> {
    status: String,
    #[serde(borrow)]
    payload: Option<&'a RawValue>,
    error: Option<ApiError>,
}

#[derive(Debug, Clone)]
pub struct Client {
    base: Url,
    http: reqwest::Client,
    token: Option<String>,
}

/// Path segments and query pairs of the endpoint serving `q`.
pub fn endpoint(q: &Query) -> (Vec<String>, Vec<(String, String)>) {
    let s = |x: &str| x.to_string();
    let run_view = |run: &str, view: &str| vec![s("runs"), s(run), s(view)];
    match q {
        Query::Runs { limit, offset } => (vec![s("runs")], vec![(s("limit"), limit.to_string()), (s("offset"), offset.to_string())]),
        Query::Summary { run } => (run_view(run, "summary"), vec![]),
        Query::Profile { run } => (run_view(run, "profile"), vec![]),
        Query::Gantt { run } => (run_view(run, "gantt"), vec![]),
        Query::Parallelism { run } => (run_view(run, "parallelism"), vec![]),
        Query::Compare { base, other } => (vec![s("compare")], vec![(s("base"), base.clone()), (s("other"), other.clone())]),
        Query::Annotations { run, key } => (run_view(run, "annotations"), vec![(s("key"), key.clone())]),
        Query::Lineage { run, file } => (run_view(run, "lineage"), vec![(s("file"), file.clone())]),
        Query::DomainJoin { run, request } => (run_view(run, "domain-join"), domain_join_params(request)),
        Query::DomainTables => (vec![s("domain-tables")], vec![]),
        Query::Scaling => (vec![s("scaling")], vec![]),
    }
}

fn domain_join_params(r: &DomainJoinRequest) -> Vec<(String, String)> {
    let mut p = vec![
        ("left".to_string(), r.left.clone()),
        ("right".to_string(), r.right.clone()),
        ("left_key".to_string(), r.left_key.clone()),
        ("right_key".to_string(), r.right_key.clone()),
    ];
    if let Some(cols) = &r.right_columns {
        p.push(("columns".into(), cols.join(",")));
    }
    if let Some(s) = &r.search {
        p.push(("search".into(), s.clone()));
    }
    for (k, v) in &r.filters {
        p.push((format!("filter.{k}"), v.clone()));
    }
    if let Some(l) = r.limit {
        p.push(("limit".into(), l.to_string()));
    }
    if let Some(o) = r.offset {
        p.push(("offset".into(), o.to_string()));
    }
    p
}

impl Client {
    /// `addr` is `host:port` or a full `http://` base URL.
    pub fn new(addr: &str) -> Result<Client> {
        let base = if addr.contains("://") { addr.to_string() } else { format!("http://{addr}") };
        let mut base = Url::parse(&base).map_err(|_| ClientError::Address(addr.to_string()))?;
        if base.cannot_be_a_base() {
            return Err(ClientError::Address(addr.to_string()));
        }
        base.set_path("/api");
        Ok(Client { base, http: reqwest::Client::new(), token: None })
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    fn url(&self, segments: &[String]) -> Url {
        let mut url = self.base.clone();
        url.path_segments_mut().expect("base url").extend(segments);
        url
    }

    async fn payload_text(&self, req: reqwest::RequestBuilder) -> Result<String> {
        let req = match &self.token {
            Some(t) => req.bearer_auth(t),
            None => req,
        };
        let body = req.send().await?.text().await?;
        let env: Envelope = serde_json::from_str(&body).map_err(|e| ClientError::Decode(e.to_string()))?;
        match (env.status.as_str(), env.payload, env.error) {
            ("ok", Some(p), None) => Ok(p.get().to_string()),
            ("error", None, Some(e)) => Err(ClientError::Api(e)),
            _ => Err(ClientError::Decode("envelope must carry exactly one of payload or error".into())),
        }
    }

    /// The payload of a GET endpoint, byte for byte.
    pub async fn query_raw(&self, q: &Query) -> Result<String> {
        let (segments, params) = endpoint(q);
        self.payload_text(self.http.get(self.url(&segments)).query(&params)).await
    }

    pub async fn query<T: DeserializeOwned>(&self, q: &Query) -> Result<T> {
        let text = self.query_raw(q).await?;
        serde_json::from_str(&text).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub async fn ml_raw(&self, op: MlOp, req: &MlRequest) -> Result<String> {
        let url = self.url(&["ml".to_string(), op.as_str().to_string()]);
        self.payload_text(self.http.post(url).json(req)).await
    }

    pub async fn runs(&self, limit: usize, offset: usize) -> Result<RunList> {
        self.query(&Query::Runs { limit, offset }).await
    }

    pub async fn summary(&self, run: &str) -> Result<RunSummary> {
        self.query(&Query::Summary { run: run.to_string() }).await
    }
}
