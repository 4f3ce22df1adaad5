//! `provflow`: run workflows into a provenance store, query it, induce
//! models from it and serve it over HTTP.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0  | success |
//! | 2  | usage error |
//! | 3  | workflow parse error |
//! | 4  | semantic check failed |
//! | 5  | expansion failed |
//! | 6  | engine could not start the run |
//! | 7  | the run finished with failed tasks |
//! | 8  | store or import error |
//! | 9  | unknown run id |
//! | 10 | model induction error |
//! | 11 | file or configuration error |
//! | 12 | service failed to start |
//! | 13 | query rejected (bad parameters, missing file or table, undefined result) |
//! | 14 | remote service unreachable |

use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use provflow_client::{Client, ClientError};
use provflow_core::analytics::{to_text_table, to_tsv, DomainJoinRequest, DEFAULT_LIMIT};
use provflow_core::api::{self, ApiError, ErrorCode, MlOp, MlPayload, MlRequest, Query, QueryPayload};
use provflow_core::engine::{self, ExecConfig, FailPolicy, RunStatus};
use provflow_core::lang::{self, Bindings, ExpandError, ExpandOptions};
use provflow_core::ml::{self, Dataset, DatasetSpec, ModelSpec};
use provflow_core::store::{parse_rules, AnnotValue, DomainSchema, Store, StoreError, Target, WriterLock};
use provflow_server::ServiceConfig;

const USAGE: u8 = 2;
const PARSE: u8 = 3;
const SEMANTIC: u8 = 4;
const EXPANSION: u8 = 5;
const ENGINE: u8 = 6;
const RUN_FAILED: u8 = 7;
const STORE: u8 = 8;
const RUN_NOT_FOUND: u8 = 9;
const ML: u8 = 10;
const IO: u8 = 11;
const SERVICE: u8 = 12;
const QUERY: u8 = 13;
const UNREACHABLE: u8 = 14;

/// An error message paired with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl std::fmt::Display) -> Failure {
    Failure { code, message: message.to_string() }
}

type Outcome = Result<(), Failure>;

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let code = if matches!(e, StoreError::RunNotFound(_)) { RUN_NOT_FOUND } else { STORE };
        fail(code, e)
    }
}

fn api_failure(e: ApiError) -> Failure {
    let code = match e.code {
        ErrorCode::RunNotFound => RUN_NOT_FOUND,
        ErrorCode::Internal => STORE,
        ErrorCode::NotFound | ErrorCode::BadRequest | ErrorCode::Unauthorized | ErrorCode::Unprocessable => QUERY,
    };
    fail(code, e.message)
}

fn ml_failure(e: ApiError) -> Failure {
    match e.code {
        ErrorCode::RunNotFound | ErrorCode::Internal => api_failure(e),
        _ => fail(ML, e.message),
    }
}

fn client_failure(e: ClientError, on_api: fn(ApiError) -> Failure) -> Failure {
    match e {
        ClientError::Api(e) => on_api(e),
        ClientError::Http(e) => fail(UNREACHABLE, format!("service unreachable: {e}")),
        ClientError::Address(_) => fail(USAGE, e),
        ClientError::Decode(_) => fail(UNREACHABLE, e),
    }
}

#[derive(Parser)]
#[command(name = "provflow", version, about = "Dataflow workflows with queryable provenance")]
struct Cli {
    /// Provenance store (SQLite file).
    #[arg(long, global = true, env = "PROVFLOW_STORE", default_value = "provflow.db")]
    store: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, check, expand and execute a workflow, then import its provenance.
    Run(RunArgs),
    /// Import runs, domain tables or annotations into the store.
    #[command(subcommand)]
    Import(ImportCmd),
    /// Query the store.
    Query(QueryArgs),
    /// Build datasets from provenance and induce models.
    #[command(subcommand)]
    Ml(MlCmd),
    /// Serve the JSON API (and optionally static dashboard assets).
    Serve(ServeArgs),
    /// Write the JSON schemas of every API payload to a directory.
    #[command(hide = true)]
    Schemas {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    workflow: PathBuf,
    /// TOML file binding the workflow's input variables.
    #[arg(long)]
    bindings: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Directory receiving `<run_id>/` with logs and task scratch space.
    #[arg(long, default_value = "provflow-work")]
    work_dir: PathBuf,
    /// Base for relative input paths and globs (default: current directory).
    #[arg(long, default_value = ".")]
    input_dir: PathBuf,
    /// Base for output files (default: `<work-dir>/<run_id>/outputs`).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Keep running tasks that do not depend on a failed one.
    #[arg(long)]
    continue_independent: bool,
    #[arg(long, default_value = "local")]
    site: String,
    /// Accept input patterns that match no files.
    #[arg(long)]
    allow_empty: bool,
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Subcommand)]
enum ImportCmd {
    /// Import an existing run log and its wrapper logs.
    Run {
        run_log: PathBuf,
        /// Defaults to `wrappers/` next to the run log.
        #[arg(long)]
        wrappers: Option<PathBuf>,
    },
    /// Load delimited rows into a domain table.
    Table {
        path: PathBuf,
        #[arg(long)]
        name: String,
        /// Shipped column layout: `variants` or `features`.
        #[arg(long, conflicts_with = "columns", required_unless_present = "columns")]
        preset: Option<String>,
        /// Column layout as `name:type,...` with types text, int, real.
        #[arg(long)]
        columns: Option<String>,
        #[arg(long, default_value = "\t")]
        delimiter: char,
        /// Run the rows belong to; omit for reference data.
        #[arg(long)]
        run: Option<String>,
        /// Link the rows to this file of the run (path or id).
        #[arg(long = "file", requires = "run")]
        link_file: Option<String>,
    },
    /// Attach one annotation to a run, task execution or file.
    Annotation {
        /// `run:<id>`, `exec:<id>` or `file:<id>`.
        target: Target,
        key: String,
        value: String,
        /// Store the value as text even when it parses as a number.
        #[arg(long)]
        text: bool,
        /// Allow several values for the key.
        #[arg(long)]
        multiple: bool,
    },
    /// Extract annotations from a run's output files with a rule file.
    Extract {
        run: String,
        #[arg(long)]
        rules: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Tsv,
    Json,
}

#[derive(Args)]
struct RemoteArgs {
    /// Ask a running service instead of opening the store.
    #[arg(long, global = true)]
    remote: bool,
    #[arg(long, global = true, env = "PROVFLOW_ADDR", default_value = "127.0.0.1:8080")]
    addr: String,
    #[arg(long, global = true, env = "PROVFLOW_TOKEN", hide_env_values = true)]
    token: Option<String>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, global = true, value_enum, default_value = "table")]
    format: Format,
    #[command(flatten)]
    remote: RemoteArgs,
    #[command(subcommand)]
    query: QueryCmd,
}

#[derive(Subcommand)]
enum QueryCmd {
    /// Runs present in the store, newest first.
    Runs {
        #[arg(long, default_value_t = DEFAULT_LIMIT)]
        limit: usize,
        #[arg(long, default_value_t = 0)]
        offset: usize,
    },
    /// Task counts, status and duration of a run.
    Summary { run: String },
    /// Per-activity duration and resource statistics.
    Profile { run: String },
    /// Task intervals for a Gantt chart.
    Gantt { run: String },
    /// Concurrently running tasks over time.
    Parallelism { run: String },
    /// Speedup of `other` over `base`.
    #[command(alias = "compare")]
    Speedup { base: String, other: String },
    /// Values of an annotation key on the run and everything in it.
    Annotations {
        run: String,
        #[arg(long)]
        key: String,
    },
    /// Upstream and downstream provenance of a file (path or id).
    Lineage {
        run: String,
        #[arg(long)]
        file: String,
    },
    /// Join two domain tables of a run.
    DomainJoin {
        run: String,
        #[arg(long)]
        left: String,
        #[arg(long)]
        right: String,
        #[arg(long)]
        left_key: String,
        #[arg(long)]
        right_key: String,
        /// Comma-separated right-hand columns to keep.
        #[arg(long, value_delimiter = ',')]
        columns: Option<Vec<String>>,
        #[arg(long)]
        search: Option<String>,
        /// Exact-match filter `column=value`; repeatable.
        #[arg(long = "filter", value_parser = parse_filter)]
        filters: Vec<(String, String)>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        offset: Option<usize>,
    },
    /// Domain tables and their columns.
    DomainTables,
    /// Speedup of every run of each script over its slowest run.
    Scaling,
}

fn parse_filter(s: &str) -> Result<(String, String), String> {
    s.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())).ok_or_else(|| format!("expected column=value, got `{s}`"))
}

#[derive(Subcommand)]
enum MlCmd {
    /// Materialize a dataset spec against the store as delimited text.
    BuildDataset {
        /// JSON dataset spec.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "tsv")]
        format: DatasetFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank attributes by gain ratio against the target.
    GainRatio(MlArgs),
    /// Least-squares linear regression.
    Regress(MlArgs),
    /// Single-attribute rule.
    Oner(MlArgs),
    /// Gain-ratio decision tree.
    Tree(MlArgs),
    /// k-fold cross-validation.
    Cv(MlArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetFormat {
    Tsv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    Linear,
    Oner,
    Tree,
}

#[derive(Args)]
struct MlArgs {
    /// Complete JSON request; other dataset flags override its fields.
    #[arg(long)]
    request: Option<PathBuf>,
    /// JSON dataset spec evaluated against the store.
    #[arg(long, conflicts_with = "dataset")]
    spec: Option<PathBuf>,
    /// Delimited dataset file with a header line.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "\t")]
    delimiter: char,
    /// Target column (required with --dataset).
    #[arg(long)]
    target: Option<String>,
    /// Discretize a numeric target into this many equal-width classes.
    #[arg(long)]
    discretize: Option<usize>,
    #[arg(long)]
    min_bucket: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    /// Cost matrix as JSON rows, e.g. `[[0,1],[5,0]]`.
    #[arg(long)]
    cost_matrix: Option<String>,
    /// Model evaluated by `cv`.
    #[arg(long, value_enum)]
    model: Option<Algorithm>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    format: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    remote: RemoteArgs,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "PROVFLOW_ADDR", default_value = "127.0.0.1:8080")]
    addr: std::net::SocketAddr,
    /// Directory of static assets served outside `/api`.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
    #[arg(long, env = "PROVFLOW_TOKEN", hide_env_values = true)]
    token: Option<String>,
    /// Where `/api/ml` writes model and report artifacts.
    #[arg(long)]
    scratch: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| fail(IO, format!("{}: {e}", path.display())))
}

/// Write `text` to `out` or stdout. On a terminal a final newline is added;
/// piped output is exactly `text`.
fn emit(text: &str, out: Option<&Path>) -> Outcome {
    if let Some(path) = out {
        return std::fs::write(path, text).map_err(|e| fail(IO, format!("{}: {e}", path.display())));
    }
    let mut stdout = std::io::stdout().lock();
    let newline = stdout.is_terminal() && !text.ends_with('\n');
    stdout
        .write_all(text.as_bytes())
        .and_then(|_| if newline { stdout.write_all(b"\n") } else { Ok(()) })
        .and_then(|_| stdout.flush())
        .map_err(|e| fail(IO, format!("stdout: {e}")))
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| fail(SERVICE, format!("async runtime: {e}")))
}

fn client(r: &RemoteArgs) -> Result<Client, Failure> {
    let c = Client::new(&r.addr).map_err(|e| fail(USAGE, e))?;
    Ok(match &r.token {
        Some(t) => c.with_token(t),
        None => c,
    })
}

fn run(store_path: &Path, a: RunArgs) -> Outcome {
    let source = read(&a.workflow)?;
    let script = a.workflow.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "workflow".into());
    let stem = Path::new(&script).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let spec = lang::parse_workflow_named(&stem, &source).map_err(|e| fail(PARSE, format!("{}: {e}", a.workflow.display())))?;
    let diags = lang::check_semantics(&spec);
    if !diags.is_empty() {
        let lines: Vec<String> = diags.iter().map(|d| format!("{}: {d}", a.workflow.display())).collect();
        return Err(fail(SEMANTIC, lines.join("\n")));
    }
    let bindings = match &a.bindings {
        Some(p) => lang::parse_bindings(&read(p)?).map_err(|e| fail(IO, format!("{}: {e}", p.display())))?,
        None => Bindings::new(),
    };

    let mut cfg = ExecConfig::new(&script, &a.work_dir);
    if let Some(id) = a.run_id {
        cfg.run_id = id;
    }
    if let Some(w) = a.workers {
        cfg.max_workers = w;
    }
    cfg.site = a.site;
    if a.continue_independent {
        cfg.fail_policy = FailPolicy::ContinueIndependent;
    }
    let opts = ExpandOptions {
        input_dir: a.input_dir,
        output_dir: a.output_dir.unwrap_or_else(|| cfg.run_dir().join("outputs")),
        allow_empty: a.allow_empty,
    };
    let graph = lang::expand(&spec, &bindings, &opts).map_err(|e| match e {
        ExpandError::Semantic(_) => fail(SEMANTIC, e),
        e => fail(EXPANSION, e),
    })?;

    let _lock = WriterLock::acquire(store_path)?;
    let mut store = Store::open(store_path)?;
    if store.run_exists(&cfg.run_id)? {
        return Err(fail(STORE, format!("run `{}` is already in the store", cfg.run_id)));
    }
    let record = engine::execute(&graph, &cfg).map_err(|e| fail(ENGINE, e))?;
    store.import_run(&record.run_log, &record.wrapper_dir)?;
    println!("{}", record.run_id);
    if record.status == RunStatus::Success {
        Ok(())
    } else {
        let failed = record.results.iter().filter(|r| r.launched() && r.exit_code != Some(0)).count();
        Err(fail(RUN_FAILED, format!("run {} finished with status {} ({failed} failed task(s))", record.run_id, record.status.as_str())))
    }
}

fn import(store_path: &Path, cmd: ImportCmd) -> Outcome {
    let _lock = WriterLock::acquire(store_path)?;
    let mut store = Store::open(store_path)?;
    match cmd {
        ImportCmd::Run { run_log, wrappers } => {
            let wrappers = wrappers.unwrap_or_else(|| run_log.parent().unwrap_or(Path::new(".")).join("wrappers"));
            let out = store.import_run(&run_log, &wrappers)?;
            let note = if out.created { "imported" } else { "already present" };
            println!("{}\t{note}", out.run_id);
        }
        ImportCmd::Table { path, name, preset, columns, delimiter, run, link_file } => {
            let schema = match (preset, columns) {
                (Some(p), _) => DomainSchema::preset(&p, &name).ok_or_else(|| fail(USAGE, format!("unknown preset `{p}`")))?,
                (None, Some(c)) => DomainSchema::parse(&name, &c)?,
                (None, None) => return Err(fail(USAGE, "give --preset or --columns")),
            };
            let file_id = match (&run, link_file) {
                (Some(r), Some(f)) => Some(resolve_file(&store, r, &f)?),
                _ => None,
            };
            let n = store.import_domain_table(&path, &schema, delimiter, run.as_deref(), file_id)?;
            println!("{n} row(s) into {name}");
        }
        ImportCmd::Annotation { target, key, value, text, multiple } => {
            let value = match value.parse::<f64>() {
                Ok(v) if !text && v.is_finite() => AnnotValue::Numeric(v),
                _ => AnnotValue::Text(value),
            };
            store.annotate(&target, &key, value, multiple)?;
        }
        ImportCmd::Extract { run, rules } => {
            let rules = parse_rules(&read(&rules)?)?;
            let n = store.extract_run_annotations(&run, &rules)?;
            println!("{n} annotation(s)");
        }
    }
    Ok(())
}

fn resolve_file(store: &Store, run: &str, file: &str) -> Result<i64, Failure> {
    store.require_run(run)?;
    let by_path = store.file_id(run, file)?;
    let by_abs = || -> Result<Option<i64>, Failure> {
        match std::path::absolute(file) {
            Ok(p) => Ok(store.file_id(run, &p.to_string_lossy())?),
            Err(_) => Ok(None),
        }
    };
    match by_path.or(by_abs()?).or_else(|| file.parse().ok()) {
        Some(id) => Ok(id),
        None => Err(fail(QUERY, format!("run `{run}` has no file `{file}`"))),
    }
}

fn to_query(cmd: QueryCmd) -> Query {
    match cmd {
        QueryCmd::Runs { limit, offset } => Query::Runs { limit, offset },
        QueryCmd::Summary { run } => Query::Summary { run },
        QueryCmd::Profile { run } => Query::Profile { run },
        QueryCmd::Gantt { run } => Query::Gantt { run },
        QueryCmd::Parallelism { run } => Query::Parallelism { run },
        QueryCmd::Speedup { base, other } => Query::Compare { base, other },
        QueryCmd::Annotations { run, key } => Query::Annotations { run, key },
        QueryCmd::Lineage { run, file } => Query::Lineage { run, file },
        QueryCmd::DomainJoin { run, left, right, left_key, right_key, columns, search, filters, limit, offset } => Query::DomainJoin {
            run,
            request: DomainJoinRequest {
                left,
                right,
                left_key,
                right_key,
                right_columns: columns,
                search,
                filters: filters.into_iter().collect(),
                limit,
                offset,
            },
        },
        QueryCmd::DomainTables => Query::DomainTables,
        QueryCmd::Scaling => Query::Scaling,
    }
}

fn query(store_path: &Path, a: QueryArgs) -> Outcome {
    let q = to_query(a.query);
    let (json, payload) = if a.remote.remote {
        let c = client(&a.remote)?;
        let json = runtime()?.block_on(c.query_raw(&q)).map_err(|e| client_failure(e, api_failure))?;
        let payload = match a.format {
            Format::Json => None,
            _ => Some(QueryPayload::decode(&q, &json).map_err(|e| fail(UNREACHABLE, format!("malformed payload: {e}")))?),
        };
        (json, payload)
    } else {
        if !store_path.exists() {
            return Err(fail(IO, format!("store {} does not exist", store_path.display())));
        }
        let store = Store::open_read_only(store_path)?;
        let p = api::query(&store, &q).map_err(api_failure)?;
        (p.to_json(), Some(p))
    };
    let text = match (a.format, payload) {
        (Format::Table, Some(p)) => to_text_table(p.tabular()),
        (Format::Tsv, Some(p)) => to_tsv(p.tabular()),
        _ => json,
    };
    emit(&text, None)
}

fn ml_request(op: MlOp, a: &MlArgs) -> Result<MlRequest, Failure> {
    let mut req = match &a.request {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| fail(IO, format!("{}: {e}", p.display())))?,
        None => MlRequest::default(),
    };
    if let Some(p) = &a.spec {
        let spec: DatasetSpec = serde_json::from_str(&read(p)?).map_err(|e| fail(IO, format!("{}: {e}", p.display())))?;
        req.spec = Some(spec);
        req.dataset = None;
    }
    if let Some(p) = &a.dataset {
        let target = a.target.as_deref().ok_or_else(|| fail(USAGE, "--dataset needs --target"))?;
        let ds = Dataset::from_delimited(&read(p)?, a.delimiter, target).map_err(|e| fail(ML, format!("{}: {e}", p.display())))?;
        req.dataset = Some(ds);
        req.spec = None;
    }
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = &a.$field {
                req.$field = Some(v.clone());
            }
        )*};
    }
    set!(target, discretize, min_bucket, min_leaf, folds, seed);
    if let Some(m) = &a.cost_matrix {
        req.cost_matrix = Some(serde_json::from_str(m).map_err(|e| fail(USAGE, format!("--cost-matrix: {e}")))?);
    }
    if let Some(m) = a.model {
        req.model = Some(match m {
            Algorithm::Linear => ModelSpec::Linear,
            Algorithm::Oner => ModelSpec::Oner { min_bucket: req.min_bucket.unwrap_or(ml::DEFAULT_MIN_BUCKET) },
            Algorithm::Tree => ModelSpec::Tree { min_leaf: req.min_leaf.unwrap_or(ml::DEFAULT_MIN_LEAF), cost_matrix: req.cost_matrix.clone() },
        });
    }
    if op != MlOp::Cv && req.model.is_some() {
        return Err(fail(USAGE, "--model only applies to cv"));
    }
    Ok(req)
}

fn ml_cmd(store_path: &Path, cmd: MlCmd) -> Outcome {
    let (op, a) = match cmd {
        MlCmd::BuildDataset { spec, format, out } => {
            let spec: DatasetSpec = serde_json::from_str(&read(&spec)?).map_err(|e| fail(IO, format!("{}: {e}", spec.display())))?;
            let store = Store::open_read_only(store_path)?;
            let ds = ml::build_dataset(&store, &spec).map_err(|e| ml_failure(e.into()))?;
            let text = match format {
                DatasetFormat::Tsv => ds.to_delimited('\t'),
                DatasetFormat::Json => serde_json::to_string(&ds).expect("datasets serialize"),
            };
            return emit(&text, out.as_deref());
        }
        MlCmd::GainRatio(a) => (MlOp::GainRatio, a),
        MlCmd::Regress(a) => (MlOp::Regress, a),
        MlCmd::Oner(a) => (MlOp::Oner, a),
        MlCmd::Tree(a) => (MlOp::Tree, a),
        MlCmd::Cv(a) => (MlOp::Cv, a),
    };
    let req = ml_request(op, &a)?;
    let payload = if a.remote.remote {
        let c = client(&a.remote)?;
        let json = runtime()?.block_on(c.ml_raw(op, &req)).map_err(|e| client_failure(e, ml_failure))?;
        serde_json::from_str::<MlPayload>(&json).map_err(|e| fail(UNREACHABLE, format!("malformed payload: {e}")))?
    } else {
        let store = if req.spec.is_some() { Some(Store::open_read_only(store_path)?) } else { None };
        api::ml(store.as_ref(), op, &req).map_err(ml_failure)?
    };
    let text = match a.format {
        ReportFormat::Json => payload.to_json(),
        ReportFormat::Text => payload.render(),
    };
    emit(&text, a.out.as_deref())
}

fn serve(store_path: &Path, a: ServeArgs) -> Outcome {
    let mut cfg = ServiceConfig::new(store_path, a.addr);
    cfg.static_dir = a.static_dir;
    cfg.token = a.token;
    if let Some(s) = a.scratch {
        cfg.scratch_dir = s;
    }
    runtime()?.block_on(async move {
        let (listener, app) = provflow_server::bind(&cfg).await.map_err(|e| fail(SERVICE, e))?;
        let addr = listener.local_addr().map_err(|e| fail(SERVICE, e))?;
        eprintln!("serving {} on http://{addr}", cfg.store.display());
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        provflow_server::run(listener, app, shutdown).await.map_err(|e| fail(SERVICE, e))
    })
}

fn schemas(out: &Path) -> Outcome {
    std::fs::create_dir_all(out).map_err(|e| fail(IO, format!("{}: {e}", out.display())))?;
    for (name, schema) in api::schemas() {
        let path = out.join(format!("{name}.json"));
        let text = serde_json::to_string_pretty(&schema).expect("schemas serialize") + "\n";
        std::fs::write(&path, text).map_err(|e| fail(IO, format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let store = cli.store;
    let result = match cli.command {
        Command::Run(a) => run(&store, a),
        Command::Import(c) => import(&store, c),
        Command::Query(a) => query(&store, a),
        Command::Ml(c) => ml_cmd(&store, c),
        Command::Serve(a) => serve(&store, a),
        Command::Schemas { out } => schemas(&out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("provflow: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
