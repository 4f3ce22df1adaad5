//! Read-only HTTP service over a provenance store. Every response body is
//! an `ApiEnvelope`; the only files written are ML artifacts in the scratch
//! directory.

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query as QueryParams, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode, Uri};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use provflow_core::analytics::{DomainJoinRequest, DEFAULT_LIMIT};
use provflow_core::api::{self, ApiError, ErrorCode, MlOp, MlRequest, Query};
use provflow_core::store::{Store, StoreError};
use tower_http::services::ServeDir;

pub const ARTIFACT_HEADER: &str = "x-provflow-artifact";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub store: PathBuf,
    pub addr: SocketAddr,
    pub static_dir: Option<PathBuf>,
    /// Bearer token required on every `/api` request when set.
    pub token: Option<String>,
    pub scratch_dir: PathBuf,
}

impl ServiceConfig {
    pub fn new(store: impl Into<PathBuf>, addr: SocketAddr) -> Self {
        ServiceConfig {
            store: store.into(),
            addr,
            static_dir: None,
            token: None,
            scratch_dir: std::env::temp_dir().join("provflow-scratch"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("store {path}: {source}")]
    Store { path: PathBuf, source: StoreError },
    #[error("scratch dir {path}: {source}")]
    Scratch { path: PathBuf, source: std::io::Error },
    #[error("static dir {0} is not a directory")]
    Static(PathBuf),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

struct AppState {
    store: PathBuf,
    token: Option<String>,
    scratch: PathBuf,
}

fn json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], body).into_response()
}

fn error_response(e: &ApiError) -> Response {
    json(StatusCode::from_u16(e.code.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR), api::error_envelope(e))
}

fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError::new(ErrorCode::BadRequest, message)
}

/// Run a store-reading closure off the async workers; panics and errors
/// become error envelopes.
async fn blocking<F>(state: &AppState, f: F) -> Result<String, ApiError>
where
    F: FnOnce(&Store) -> Result<String, ApiError> + Send + 'static,
{
    let path = state.store.clone();
    tokio::task::spawn_blocking(move || {
        let store = Store::open_read_only(&path)?;
        f(&store)
    })
    .await
    .map_err(|e| ApiError::new(ErrorCode::Internal, format!("request handler failed: {e}")))?
}

async fn respond_query(state: &AppState, q: Query) -> Response {
    match blocking(state, move |store| Ok(api::query(store, &q)?.to_json())).await {
        Ok(payload) => json(StatusCode::OK, api::ok_envelope(&payload)),
        Err(e) => error_response(&e),
    }
}

type Params = QueryParams<Vec<(String, String)>>;

fn param<'a>(params: &'a [(String, String)], key: &str) -> Option<&'a str> {
    params.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn required<'a>(params: &'a [(String, String)], key: &str) -> Result<&'a str, ApiError> {
    param(params, key).ok_or_else(|| bad_request(format!("missing query parameter `{key}`")))
}

fn number(params: &[(String, String)], key: &str) -> Result<Option<usize>, ApiError> {
    param(params, key).map(|v| v.parse().map_err(|_| bad_request(format!("`{key}` must be a non-negative integer")))).transpose()
}

async fn runs(State(st): State<Arc<AppState>>, QueryParams(p): Params) -> Response {
    let q = (|| Ok(Query::Runs { limit: number(&p, "limit")?.unwrap_or(DEFAULT_LIMIT), offset: number(&p, "offset")?.unwrap_or(0) }))();
    match q {
        Ok(q) => respond_query(&st, q).await,
        Err(e) => error_response(&e),
    }
}

async fn run_view(State(st): State<Arc<AppState>>, Path((run, view)): Path<(String, String)>, QueryParams(p): Params) -> Response {
    let q = match view.as_str() {
        "summary" => Ok(Query::Summary { run }),
        "gantt" => Ok(Query::Gantt { run }),
        "parallelism" => Ok(Query::Parallelism { run }),
        "profile" => Ok(Query::Profile { run }),
        "annotations" => required(&p, "key").map(|key| Query::Annotations { run, key: key.to_string() }),
        "lineage" => required(&p, "file").map(|file| Query::Lineage { run, file: file.to_string() }),
        "domain-join" => domain_join_request(&p).map(|request| Query::DomainJoin { run, request }),
        _ => return not_found_for(&Method::GET, &format!("/api/runs/{{id}}/{view}")),
    };
    match q {
        Ok(q) => respond_query(&st, q).await,
        Err(e) => error_response(&e),
    }
}

fn domain_join_request(p: &[(String, String)]) -> Result<DomainJoinRequest, ApiError> {
    let mut req = DomainJoinRequest {
        left: required(p, "left")?.to_string(),
        right: required(p, "right")?.to_string(),
        left_key: required(p, "left_key")?.to_string(),
        right_key: required(p, "right_key")?.to_string(),
        right_columns: param(p, "columns").map(|c| c.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect()),
        search: param(p, "search").map(str::to_string),
        limit: number(p, "limit")?,
        offset: number(p, "offset")?,
        ..Default::default()
    };
    for (k, v) in p {
        if let Some(col) = k.strip_prefix("filter.") {
            req.filters.insert(col.to_string(), v.clone());
        }
    }
    Ok(req)
}

async fn compare(State(st): State<Arc<AppState>>, QueryParams(p): Params) -> Response {
    let q = (|| Ok(Query::Compare { base: required(&p, "base")?.to_string(), other: required(&p, "other")?.to_string() }))();
    match q {
        Ok(q) => respond_query(&st, q).await,
        Err(e) => error_response(&e),
    }
}

async fn domain_tables(State(st): State<Arc<AppState>>) -> Response {
    respond_query(&st, Query::DomainTables).await
}

async fn scaling(State(st): State<Arc<AppState>>) -> Response {
    respond_query(&st, Query::Scaling).await
}

async fn ml(State(st): State<Arc<AppState>>, Path(op): Path<String>, body: Bytes) -> Response {
    let Some(op) = MlOp::parse(&op) else { return not_found_for(&Method::POST, &format!("/api/ml/{op}")) };
    let req: MlRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_response(&bad_request(format!("invalid request body: {e}"))),
    };
    let payload = match blocking(&st, move |store| Ok(api::ml(Some(store), op, &req)?.to_json())).await {
        Ok(p) => p,
        Err(e) => return error_response(&e),
    };
    let name = format!("{}-{}.json", op.as_str(), uuid::Uuid::new_v4());
    if let Err(e) = tokio::fs::write(st.scratch.join(&name), &payload).await {
        return error_response(&ApiError::new(ErrorCode::Internal, format!("cannot write artifact: {e}")));
    }
    let mut resp = json(StatusCode::OK, api::ok_envelope(&payload));
    if let Ok(v) = HeaderValue::from_str(&name) {
        resp.headers_mut().insert(ARTIFACT_HEADER, v);
    }
    resp
}

fn not_found_for(method: &Method, path: &str) -> Response {
    error_response(&ApiError::new(ErrorCode::NotFound, format!("no route for {method} {path}")))
}

async fn api_fallback(method: Method, uri: Uri) -> Response {
    not_found_for(&method, uri.path())
}

async fn auth(State(st): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.token {
        let expected = format!("Bearer {token}");
        let given = req.headers().get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
        if given != Some(expected.as_str()) {
            return error_response(&ApiError::new(ErrorCode::Unauthorized, "missing or invalid bearer token"));
        }
    }
    next.run(req).await
}

/// Validate the configuration and build the router. Creates the store if it
/// does not exist yet, and the scratch directory.
pub fn router(cfg: &ServiceConfig) -> Result<Router, ServeError> {
    if !cfg.store.exists() {
        Store::open(&cfg.store).map_err(|source| ServeError::Store { path: cfg.store.clone(), source })?;
    }
    Store::open_read_only(&cfg.store).map_err(|source| ServeError::Store { path: cfg.store.clone(), source })?;
    std::fs::create_dir_all(&cfg.scratch_dir).map_err(|source| ServeError::Scratch { path: cfg.scratch_dir.clone(), source })?;
    let state = Arc::new(AppState { store: cfg.store.clone(), token: cfg.token.clone(), scratch: cfg.scratch_dir.clone() });

    let api = Router::new()
        .route("/runs", get(runs))
        .route("/runs/{id}/{view}", get(run_view))
        .route("/compare", get(compare))
        .route("/domain-tables", get(domain_tables))
        .route("/scaling", get(scaling))
        .route("/ml/{op}", post(ml))
        .fallback(api_fallback)
        .method_not_allowed_fallback(api_fallback)
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state);

    let app = Router::new().nest("/api", api);
    Ok(match &cfg.static_dir {
        Some(dir) if dir.is_dir() => app.fallback_service(ServeDir::new(dir)),
        Some(dir) => return Err(ServeError::Static(dir.clone())),
        None => app.fallback(api_fallback),
    })
}

/// Bind the listener; a busy port is reported as `ServeError::Bind`.
pub async fn bind(cfg: &ServiceConfig) -> Result<(tokio::net::TcpListener, Router), ServeError> {
    let app = router(cfg)?;
    let listener = tokio::net::TcpListener::bind(cfg.addr).await.map_err(|source| ServeError::Bind { addr: cfg.addr, source })?;
    Ok((listener, app))
}

/// Serve `app` on an already bound listener until `shutdown` resolves.
pub async fn run(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

pub async fn serve(cfg: &ServiceConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServeError> {
    let (listener, app) = bind(cfg).await?;
    run(listener, app, shutdown).await
}
