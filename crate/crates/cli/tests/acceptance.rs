//! Acceptance suite: one PASS/FAIL line per primary criterion. Exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use provflow_client::endpoint;
use provflow_core::analytics::{self, integral, speedup_of, sweep, Breakpoint, DomainJoinRequest};
use provflow_core::api::{self, MlOp, MlRequest, Query, QueryPayload};
use provflow_core::engine::{execute, parse_wrapper_log, ExecConfig, FailPolicy, RunRecord};
use provflow_core::lang::{expand, parse_workflow, Bindings, ExpandOptions, TaskGraph, TaskNode};
use provflow_core::ml::{
    bin_index, cross_validate, discretize_equal_width, gain_ratio, train_linear_regression, train_oner, train_tree, Cell, Column,
    Dataset, Metrics, ModelSpec, Row, Rule,
};
use provflow_core::store::{parse_rules, AnnotValue, DomainSchema, Store, Target};
use provflow_server::ServiceConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> PathBuf {
    crate_dir().join("../core/fixtures").join(name).canonicalize().expect("fixture exists")
}

const RASFLOW: &str = "rasflow-run006-3737171381";

fn node(id: &str, argv: &[&str], inputs: Vec<String>, outputs: Vec<String>) -> TaskNode {
    TaskNode {
        id: id.into(),
        app: id.split('-').next_back().unwrap_or(id).into(),
        argv: argv.iter().map(|s| s.to_string()).collect(),
        stdin: None,
        stdout: None,
        stderr: None,
        inputs,
        outputs,
    }
}

fn run_graph(dir: &Path, tasks: Vec<TaskNode>, workers: usize, policy: FailPolicy) -> RunRecord {
    let mut cfg = ExecConfig::new("acceptance.flow", dir);
    cfg.max_workers = workers;
    cfg.sample_interval_ms = 50;
    cfg.fail_policy = policy;
    execute(&TaskGraph::from_tasks(tasks).unwrap(), &cfg).unwrap()
}

fn import(store: &mut Store, name: &str) -> String {
    let dir = fixture(name);
    store.import_run(&dir.join("run.log"), &dir.join("wrappers")).unwrap().run_id
}

// ---------------------------------------------------------------------------

fn expansion_count() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..200 {
        std::fs::write(dir.path().join(format!("seq{i:03}.fasta")), ">s\nACGT\n").unwrap();
    }
    let source = std::fs::read_to_string(fixture("phylo.flow")).unwrap();
    let opts = ExpandOptions { input_dir: dir.path().into(), output_dir: dir.path().join("out"), allow_empty: false };
    let t0 = Instant::now();
    let spec = parse_workflow(&source).map_err(|e| e.to_string())?;
    let graph = expand(&spec, &Bindings::new(), &opts).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let apps: BTreeSet<&str> = graph.tasks.iter().map(|t| t.app.as_str()).collect();
    ensure!(graph.tasks.len() == 1200, "expanded to {} tasks", graph.tasks.len());
    ensure!(apps.len() == 6, "{} distinct apps", apps.len());
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("1200 tasks over 6 apps in {:.1} ms", elapsed.as_secs_f64() * 1e3))
}

fn scaling_property() -> Outcome {
    let t0 = Instant::now();
    let sleepers = || (0..64).map(|k| node(&format!("{k:05}-nap"), &["sleep", "0.2"], vec![], vec![])).collect::<Vec<_>>();
    let dir = tempfile::tempdir().unwrap();
    let par = run_graph(dir.path(), sleepers(), 16, FailPolicy::FailFast);
    let seq = run_graph(dir.path(), sleepers(), 1, FailPolicy::FailFast);
    let makespan = |r: &RunRecord| (r.end_ms - r.start_ms) as f64 / 1000.0;
    let (mp, ms) = (makespan(&par), makespan(&seq));
    let mut store = Store::in_memory().unwrap();
    store.import_run(&par.run_log, &par.wrapper_dir).unwrap();
    let peak = analytics::parallelism_profile(&store, &par.run_id).unwrap().peak;
    let total = t0.elapsed();
    ensure!(mp <= 1.5 * 0.8, "16-worker makespan {mp:.3} s exceeds 1.2 s");
    ensure!(ms / mp >= 8.0, "speedup {:.2} < 8", ms / mp);
    ensure!(peak == 16, "peak parallelism {peak}");
    ensure!(total < Duration::from_secs(30), "took {total:?}");
    Ok(format!("makespan {mp:.3} s, speedup {:.2}, peak {peak}, {:.1} s total", ms / mp, total.as_secs_f64()))
}

fn provenance_completeness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let trials = 12;
    let mut tasks_checked = 0;
    for trial in 0..trials {
        let dir = tempfile::tempdir().unwrap();
        let n = rng.random_range(1..=50usize);
        let mut edges = BTreeSet::new();
        for _ in 0..rng.random_range(0..2 * n) {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a < b {
                edges.insert((a, b));
            }
        }
        let failing: BTreeSet<usize> = (0..rng.random_range(0..4)).map(|_| rng.random_range(0..n)).collect();
        let file = |i: usize| dir.path().join(format!("out{i}")).to_string_lossy().into_owned();
        let tasks: Vec<TaskNode> = (0..n)
            .map(|k| {
                let ins = edges.iter().filter(|e| e.1 == k).map(|&(i, _)| file(i)).collect();
                let script = if failing.contains(&k) { "exit 3".to_string() } else { format!("echo {k} > {}", file(k)) };
                node(&format!("{k:05}-t"), &["sh", "-c", &script], ins, vec![file(k)])
            })
            .collect();
        let policy = if trial % 2 == 0 { FailPolicy::ContinueIndependent } else { FailPolicy::FailFast };
        let rec = run_graph(dir.path(), tasks, 4, policy);
        let mut store = Store::in_memory().unwrap();
        store.import_run(&rec.run_log, &rec.wrapper_dir).unwrap();
        let one = |sql: &str, id: &str| -> i64 { store.conn().query_row(sql, [id], |r| r.get(0)).unwrap() };
        let staged = |table: &str, id: &str| -> BTreeSet<String> {
            let mut stmt = store
                .conn()
                .prepare(&format!("SELECT f.path FROM {table} s JOIN file f ON f.file_id = s.file_id WHERE s.app_exec_id = ?1"))
                .unwrap();
            stmt.query_map([id], |r| r.get(0)).unwrap().map(|x| x.unwrap()).collect()
        };
        for r in rec.results.iter().filter(|r| r.launched()) {
            let id = format!("{}:{}", rec.run_id, r.task_id);
            let log = parse_wrapper_log(&std::fs::read_to_string(rec.wrapper_dir.join(format!("{}.log", r.task_id))).unwrap()).unwrap();
            ensure!(one("SELECT COUNT(*) FROM app_exec WHERE app_exec_id = ?1", &id) == 1, "{id}: app_exec rows");
            ensure!(one("SELECT COUNT(*) FROM resource_usage WHERE app_exec_id = ?1", &id) == 1, "{id}: resource rows");
            ensure!(staged("staged_in", &id) == log.result.input_files.iter().cloned().collect(), "{id}: staged_in");
            ensure!(staged("staged_out", &id) == log.result.output_files.iter().cloned().collect(), "{id}: staged_out");
            tasks_checked += 1;
        }
        let before = store.table_counts().unwrap();
        store.import_run(&rec.run_log, &rec.wrapper_dir).unwrap();
        ensure!(store.table_counts().unwrap() == before, "trial {trial}: re-import changed row counts");
        ensure!(store.integrity_violations().unwrap().is_empty(), "trial {trial}: integrity violations");
    }
    Ok(format!("{trials} random DAGs, {tasks_checked} launched tasks, re-import idempotent"))
}

fn parallelism_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let trials = 50;
    for trial in 0..trials {
        let intervals: Vec<(i64, i64)> = (0..100)
            .map(|_| {
                let s = rng.random_range(0..10_000i64);
                (s, s + rng.random_range(0..2_000i64))
            })
            .collect();
        let (bps, peak) = sweep(&intervals);
        let brute = |t: i64| intervals.iter().filter(|&&(s, e)| s <= t && t < e).count() as i64;
        let mut points: BTreeSet<i64> = intervals.iter().flat_map(|&(s, e)| [s, e]).collect();
        points.extend(bps.iter().map(|b| b.t_ms));
        let step = |t: i64| bps.iter().take_while(|b| b.t_ms <= t).last().map_or(0, |b: &Breakpoint| b.active);
        for &t in &points {
            ensure!(step(t) == brute(t), "trial {trial}: t={t} sweep {} brute {}", step(t), brute(t));
        }
        ensure!(peak == points.iter().map(|&t| brute(t)).max().unwrap_or(0), "trial {trial}: peak");
        let durations: i64 = intervals.iter().map(|(s, e)| e - s).sum();
        ensure!(integral(&bps) == durations, "trial {trial}: integral {} vs {durations}", integral(&bps));
    }
    Ok(format!("{trials} x 100 random intervals, exact match and integral"))
}

fn speedup_arithmetic() -> Outcome {
    let (s, r) = speedup_of(7560.0, 378.0).map_err(|e| e.to_string())?;
    ensure!((s - 20.0).abs() <= 1e-9 && (r - 95.0).abs() <= 1e-9, "got {s} / {r}");
    let mut store = Store::in_memory().unwrap();
    let seq = import(&mut store, "phylo-seq");
    let par = import(&mut store, "phylo-par");
    let pair = analytics::speedup(&store, &seq, &par).map_err(|e| e.to_string())?;
    ensure!((90.0..=101.0).contains(&pair.speedup), "fixture pair speedup {}", pair.speedup);
    Ok(format!("20.00x / 95.0%; fixture pair {:.2}x ({:.2}% reduction)", pair.speedup, pair.reduction_percent))
}

fn gecko_profile() -> Outcome {
    let mut store = Store::in_memory().unwrap();
    let run = import(&mut store, "gecko");
    let profile = analytics::activity_profile(&store, &run).map_err(|e| e.to_string())?;
    let hits = profile.iter().find(|p| p.app_name == "hits").ok_or("no hits row")?;
    ensure!(hits.mean_duration_s == 60058.0, "mean duration {}", hits.mean_duration_s);
    ensure!(hits.total_bytes_read == 455_240_000_000, "read {}", hits.total_bytes_read);
    ensure!(hits.total_bytes_written == 111_360_000_000, "written {}", hits.total_bytes_written);
    Ok(format!(
        "hits: {} s mean, {:.2} GB read, {:.2} GB written",
        hits.mean_duration_s,
        hits.total_bytes_read as f64 / 1e9,
        hits.total_bytes_written as f64 / 1e9
    ))
}

fn rasflow_store(store: &mut Store, with_tables: bool) {
    import(store, "rasflow");
    let dir = fixture("rasflow");
    let rules = parse_rules(&std::fs::read_to_string(dir.join("rasflow.rules")).unwrap()).unwrap();
    store.extract_run_annotations(RASFLOW, &rules).unwrap();
    if with_tables {
        for (file, preset, table) in [("variants/final.vcf", "variants", "vcf"), ("ref/genes.gff", "features", "gff")] {
            let path = dir.join(file);
            let fid = store.file_id(RASFLOW, &path.to_string_lossy()).unwrap();
            store.import_domain_table(&path, &DomainSchema::preset(preset, table).unwrap(), '\t', Some(RASFLOW), fid).unwrap();
        }
    }
}

fn annotation_replay() -> Outcome {
    let mut store = Store::in_memory().unwrap();
    rasflow_store(&mut store, false);
    let rows = analytics::annotation_query(&store, RASFLOW, "overall alignment rate").map_err(|e| e.to_string())?;
    let got: Vec<AnnotValue> = rows.iter().map(|r| r.value.clone()).collect();
    let want: Vec<AnnotValue> = [93.95, 94.52, 94.41, 94.48, 94.62, 94.58].map(AnnotValue::Numeric).to_vec();
    ensure!(got == want, "got {got:?}");
    let patients: Vec<String> =
        rows.iter().map(|r| Path::new(&r.path).file_stem().unwrap().to_string_lossy().into_owned()).collect();
    ensure!(patients == ["P1", "P2", "P3", "P4", "P5", "P6"], "patients {patients:?}");
    Ok("P1..P6: 93.95 94.52 94.41 94.48 94.62 94.58".into())
}

fn tree_oracle(row: &Row) -> &'static str {
    let num = |k: &str| match &row[k] {
        Cell::Num(v) => *v,
        Cell::Text(s) => s.parse().unwrap(),
    };
    let text = |k: &str| match &row[k] {
        Cell::Num(v) => v.to_string(),
        Cell::Text(s) => s.clone(),
    };
    if num("total_read") <= 1020229446482.0 {
        "A"
    } else if num("total_fasta_size") <= 113556442.0 {
        if text("length") == "80" && text("similarity") != "65" {
            "B"
        } else {
            "C"
        }
    } else {
        "E"
    }
}

fn load(name: &str, target: &str) -> Dataset {
    Dataset::from_delimited(&std::fs::read_to_string(fixture(name)).unwrap(), '\t', target).unwrap()
}

fn ml_suite() -> Outcome {
    let t0 = Instant::now();
    let h = |ps: &[f64]| -> f64 { ps.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum() };

    // (a) perfect predictor and hand entropy.
    let ds = load("ml/oner_total_read.tsv", "cpu_class");
    let Ok(Column::Nominal { values, .. }) = ds.column("cpu_class").cloned() else { return Err("cpu_class".into()) };
    let mut cols: Vec<Column> = ds.columns.iter().filter(|c| c.name() != "cpu_class").cloned().collect();
    cols.push(Column::nominal("cpu_class", values.iter().map(|v| if v == "A" { "A" } else { "other" })));
    let two = Dataset::new(cols, "cpu_class").unwrap();
    let perfect = gain_ratio(&two, "total_read").map_err(|e| e.to_string())?;
    ensure!(perfect == 1.0, "(a) total_read gain ratio {perfect}");
    let outlook = ["sun", "sun", "sun", "sun", "rain", "rain", "rain", "rain"];
    let play = ["yes", "yes", "yes", "no", "yes", "yes", "no", "no"];
    let ds = Dataset::new(vec![Column::nominal("outlook", outlook), Column::nominal("play", play)], "play").unwrap();
    let hand = (h(&[5.0 / 8.0, 3.0 / 8.0]) - 0.5 * h(&[0.75, 0.25]) - 0.5 * h(&[0.5, 0.5])) / h(&[0.5, 0.5]);
    let gr = gain_ratio(&ds, "outlook").map_err(|e| e.to_string())?;
    ensure!((gr - hand).abs() <= 1e-9, "(a) hand entropy {hand} vs {gr}");

    // (b) OLS, noiseless and noisy.
    let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.37).collect();
    let y = x.iter().map(|v| 1.0 + 2.0 * v).collect();
    let m = train_linear_regression(&Dataset::new(vec![Column::numeric("x", x), Column::numeric("y", y)], "y").unwrap())
        .map_err(|e| e.to_string())?;
    ensure!((m.intercept - 1.0).abs() <= 1e-9 && (m.coefficients[0].weight - 2.0).abs() <= 1e-9, "(b) fit {m:?}");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut a, mut b, mut t) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..200 {
        let (x1, x2): (f64, f64) = (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
        let clean = 4.0 + 3.0 * x1 - 2.0 * x2;
        a.push(x1);
        b.push(x2);
        t.push(clean * (1.0 + 0.01 * rng.random_range(-1.0..1.0)));
    }
    let noisy = Dataset::new(vec![Column::numeric("a", a), Column::numeric("b", b), Column::numeric("t", t)], "t").unwrap();
    let Metrics::Regression { correlation, .. } = cross_validate(&noisy, &ModelSpec::Linear, 10, 7).map_err(|e| e.to_string())?.metrics
    else {
        return Err("(b) regression metrics expected".into());
    };
    let r = correlation.unwrap_or(0.0);
    ensure!(r >= 0.98, "(b) CV correlation {r}");

    // (c) OneR thresholds.
    let rule = train_oner(&load("ml/oner_total_read.tsv", "cpu_class"), 6).map_err(|e| e.to_string())?;
    let Rule::Numeric { thresholds, .. } = &rule.rule else { return Err("(c) nominal rule".into()) };
    ensure!(
        rule.attribute == "total_read" && thresholds == &[1.768799155948e12, 2.5173879304975e12, 3.4581148731605e12],
        "(c) {} {thresholds:?}",
        rule.attribute
    );

    // (d) tree against the hand-coded procedure.
    let shape = load("ml/tree_shape.tsv", "cpu_class");
    let tree = train_tree(&shape, 2, None).map_err(|e| e.to_string())?;
    for i in 0..shape.len() {
        let row = shape.row(i);
        ensure!(tree.predict(&row).map_err(|e| e.to_string())? == tree_oracle(&row), "(d) row {i} disagrees");
    }

    // (e) equal-width discretization.
    for _ in 0..200 {
        let n = rng.random_range(2..60);
        let k = rng.random_range(2..12);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1e6..1e6)).collect();
        let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let ds = Dataset::new(vec![Column::numeric("v", values.clone())], "v").unwrap();
        let Column::Nominal { values: got, categories, .. } = discretize_equal_width(&ds, "v", k).map_err(|e| e.to_string())?.columns[0].clone()
        else {
            return Err("(e) nominal column expected".into());
        };
        for (v, label) in values.iter().zip(&got) {
            let i = ((k as f64 * (v - min) / (max - min)).floor() as usize).min(k - 1);
            ensure!(label == &categories[i] && bin_index(*v, min, max, k) == i, "(e) {v} in [{min}, {max}] k={k}");
        }
    }
    let elapsed = t0.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("(a)-(e) hold, CV r = {r:.4}, tree {} nodes, {:.2} s", tree.root.node_count(), elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------------------
// API contract

struct Contract {
    schemas: BTreeMap<String, jsonschema::Validator>,
    validated: usize,
    identical: usize,
}

impl Contract {
    fn load() -> Contract {
        let docs = crate_dir().join("../../docs/api");
        let mut schemas = BTreeMap::new();
        for entry in std::fs::read_dir(&docs).unwrap() {
            let path = entry.unwrap().path();
            let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
            let name = path.file_stem().unwrap().to_string_lossy().into_owned();
            schemas.insert(name, jsonschema::validator_for(&schema).unwrap());
        }
        Contract { schemas, validated: 0, identical: 0 }
    }

    fn validate(&mut self, schema: &str, body: &str) -> Result<(), String> {
        let v: serde_json::Value = serde_json::from_str(body).map_err(|e| format!("{schema}: invalid JSON: {e}"))?;
        let validator = self.schemas.get(schema).ok_or_else(|| format!("no shipped schema {schema}.json"))?;
        validator.validate(&v).map_err(|e| format!("{schema}: {e} in {body:.200}"))?;
        self.validated += 1;
        Ok(())
    }
}

fn cli_args(q: &Query) -> Vec<String> {
    let s = |x: &str| x.to_string();
    let mut args = vec![s("query")];
    args.extend(match q {
        Query::Runs { limit, offset } => vec![s("runs"), s("--limit"), limit.to_string(), s("--offset"), offset.to_string()],
        Query::Summary { run } => vec![s("summary"), run.clone()],
        Query::Profile { run } => vec![s("profile"), run.clone()],
        Query::Gantt { run } => vec![s("gantt"), run.clone()],
        Query::Parallelism { run } => vec![s("parallelism"), run.clone()],
        Query::Compare { base, other } => vec![s("speedup"), base.clone(), other.clone()],
        Query::Annotations { run, key } => vec![s("annotations"), run.clone(), s("--key"), key.clone()],
        Query::Lineage { run, file } => vec![s("lineage"), run.clone(), s("--file"), file.clone()],
        Query::DomainJoin { run, request: r } => {
            let mut a = vec![
                s("domain-join"),
                run.clone(),
                s("--left"),
                r.left.clone(),
                s("--right"),
                r.right.clone(),
                s("--left-key"),
                r.left_key.clone(),
                s("--right-key"),
                r.right_key.clone(),
            ];
            if let Some(c) = &r.right_columns {
                a.extend([s("--columns"), c.join(",")]);
            }
            if let Some(x) = &r.search {
                a.extend([s("--search"), x.clone()]);
            }
            for (k, v) in &r.filters {
                a.extend([s("--filter"), format!("{k}={v}")]);
            }
            if let Some(l) = r.limit {
                a.extend([s("--limit"), l.to_string()]);
            }
            a
        }
        Query::DomainTables => vec![s("domain-tables")],
        Query::Scaling => vec![s("scaling")],
    });
    args.extend([s("--format"), s("json")]);
    args
}

fn cli(store: &Path, args: &[String]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_provflow"))
        .env("PROVFLOW_STORE", store)
        .env_remove("PROVFLOW_ADDR")
        .env_remove("PROVFLOW_TOKEN")
        .args(args)
        .output()
        .unwrap();
    (out.status.success(), String::from_utf8(out.stdout).unwrap())
}

fn queries_for(store: &Store) -> Vec<Query> {
    let mut qs = vec![Query::Runs { limit: 100, offset: 0 }, Query::Runs { limit: 1, offset: 1 }, Query::DomainTables, Query::Scaling];
    let runs = analytics::list_runs(store, 100, 0).unwrap().runs;
    for r in &runs {
        let run = r.run_id.clone();
        qs.extend([
            Query::Summary { run: run.clone() },
            Query::Profile { run: run.clone() },
            Query::Gantt { run: run.clone() },
            Query::Parallelism { run: run.clone() },
            Query::Compare { base: run.clone(), other: runs[0].run_id.clone() },
            Query::Annotations { run: run.clone(), key: "overall alignment rate".into() },
        ]);
        let file: Option<String> = store
            .conn()
            .query_row(
                "SELECT f.path FROM file f JOIN staged_out o ON o.file_id = f.file_id JOIN app_exec a ON a.app_exec_id = o.app_exec_id
                 WHERE a.run_id = ?1 ORDER BY f.file_id LIMIT 1",
                [&run],
                |x| x.get(0),
            )
            .ok();
        if let Some(file) = file {
            qs.push(Query::Lineage { run: run.clone(), file });
        }
    }
    if store.domain_schema("gff").unwrap().is_some() {
        let base = DomainJoinRequest {
            left: "vcf".into(),
            right: "gff".into(),
            left_key: "trid".into(),
            right_key: "id".into(),
            right_columns: Some(vec!["name".into(), "biotype".into()]),
            ..Default::default()
        };
        let filtered = DomainJoinRequest {
            filters: BTreeMap::from([("gff.biotype".to_string(), "protein_coding".to_string())]),
            search: Some("samd11".into()),
            limit: Some(3),
            ..base.clone()
        };
        qs.push(Query::DomainJoin { run: RASFLOW.into(), request: base });
        qs.push(Query::DomainJoin { run: RASFLOW.into(), request: filtered });
    }
    qs.push(Query::Summary { run: "no-such-run".into() });
    qs.push(Query::Lineage { run: runs.first().map_or("x".into(), |r| r.run_id.clone()), file: "/no/such/file".into() });
    qs
}

const COPY_FLOW: &str = r#"
file src[];
file dst[] <"dst/{0}.txt">;
app (file o) copy (file i) { cat filename(i) stdout=filename(o); }
foreach s, k in src { dst[k] = copy(s); }
"#;

fn build_stores(root: &Path) -> Vec<(&'static str, PathBuf)> {
    let mut out = Vec::new();
    let db = |name: &str| root.join(format!("{name}.db"));

    Store::open(db("empty")).unwrap();
    out.push(("empty", db("empty")));

    let mut s = Store::open(db("phylo")).unwrap();
    for (name, cores) in [("phylo-seq", 1.0), ("phylo-par", 160.0)] {
        let run = import(&mut s, name);
        s.annotate(&Target::Run(run), "cores", AnnotValue::Numeric(cores), false).unwrap();
    }
    out.push(("phylo", db("phylo")));

    let mut s = Store::open(db("gecko")).unwrap();
    import(&mut s, "gecko");
    out.push(("gecko", db("gecko")));

    let mut s = Store::open(db("rasflow")).unwrap();
    rasflow_store(&mut s, true);
    out.push(("rasflow", db("rasflow")));

    let work = root.join("live");
    std::fs::create_dir_all(&work).unwrap();
    for n in ["a", "b", "c"] {
        std::fs::write(work.join(format!("{n}.in")), format!("{n}\n")).unwrap();
    }
    std::fs::write(work.join("copy.flow"), COPY_FLOW).unwrap();
    std::fs::write(work.join("b.toml"), "src = \"*.in\"\n").unwrap();
    let live = db("live");
    for id in ["copy-1", "copy-2"] {
        let status = Command::new(env!("CARGO_BIN_EXE_provflow"))
            .current_dir(&work)
            .env("PROVFLOW_STORE", &live)
            .args(["run", "copy.flow", "--bindings", "b.toml", "--run-id", id, "--work-dir", "w"])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    }
    out.push(("live", live));
    out
}

async fn http(base: &reqwest::Url, q: &Query) -> (u16, String) {
    let (segments, params) = endpoint(q);
    let mut url = base.clone();
    url.path_segments_mut().unwrap().extend(["api"]).extend(&segments);
    let resp = reqwest::Client::new().get(url).query(&params).send().await.unwrap();
    (resp.status().as_u16(), resp.text().await.unwrap())
}

async fn http_ml(base: &reqwest::Url, op: MlOp, req: &MlRequest) -> (u16, String) {
    let url = base.join(&format!("api/ml/{}", op.as_str())).unwrap();
    let resp = reqwest::Client::new().post(url).json(req).send().await.unwrap();
    (resp.status().as_u16(), resp.text().await.unwrap())
}

fn api_contract() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let stores = build_stores(root.path());
    let mut c = Contract::load();
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let mut endpoints = BTreeSet::new();

    for (label, db) in &stores {
        let mut cfg = ServiceConfig::new(db, "127.0.0.1:0".parse().unwrap());
        cfg.scratch_dir = root.path().join("scratch");
        let (listener, app) = rt.block_on(provflow_server::bind(&cfg)).map_err(|e| e.to_string())?;
        let base: reqwest::Url = format!("http://{}/", listener.local_addr().unwrap()).parse().unwrap();
        let server = rt.spawn(provflow_server::run(listener, app, std::future::pending()));

        let store = Store::open_read_only(db).unwrap();
        for q in queries_for(&store) {
            let schema = QueryPayload::schema_name(&q);
            endpoints.insert(schema);
            let (status, body) = rt.block_on(http(&base, &q));
            c.validate(schema, &body).map_err(|e| format!("{label}: {e}"))?;
            let (ok, stdout) = cli(db, &cli_args(&q));
            if status == 200 {
                ensure!(ok, "{label}: CLI failed on {q:?}");
                ensure!(body == api::ok_envelope(&stdout), "{label}: bytes differ for {q:?}");
                c.identical += 1;
            } else {
                ensure!(!ok, "{label}: CLI succeeded where HTTP {status} for {q:?}");
                c.validate("error", &body).map_err(|e| format!("{label}: {e}"))?;
            }
        }
        let (status, body) = rt.block_on(async {
            let resp = reqwest::get(base.join("api/no/such/route").unwrap()).await.unwrap();
            (resp.status().as_u16(), resp.text().await.unwrap())
        });
        ensure!(status == 404, "{label}: unknown route gave {status}");
        c.validate("error", &body)?;
        let before = store.table_counts().unwrap();
        drop(store);

        if *label == "rasflow" {
            let ds = load("ml/tree_shape.tsv", "cpu_class");
            let req_path = root.path().join("ml.json");
            for op in MlOp::ALL {
                let req = MlRequest {
                    dataset: Some(ds.clone()),
                    target: (op == MlOp::Regress).then(|| "total_read".to_string()),
                    folds: Some(5),
                    seed: Some(7),
                    ..Default::default()
                };
                std::fs::write(&req_path, serde_json::to_string(&req).unwrap()).unwrap();
                let schema = api::schema_for_ml(op);
                endpoints.insert(schema);
                let (status, body) = rt.block_on(http_ml(&base, op, &req));
                ensure!(status == 200, "ml {}: HTTP {status}: {body}", op.as_str());
                c.validate(schema, &body)?;
                let args: Vec<String> =
                    ["ml", op.as_str(), "--request", req_path.to_str().unwrap(), "--format", "json"].map(String::from).to_vec();
                let (ok, stdout) = cli(db, &args);
                ensure!(ok && body == api::ok_envelope(&stdout), "ml {}: CLI bytes differ", op.as_str());
                c.identical += 1;
            }
            let after = Store::open_read_only(db).unwrap().table_counts().unwrap();
            ensure!(before == after, "ml requests changed provenance tables");
        }
        server.abort();
    }
    let documented = ["runs", "summary", "profile", "gantt", "parallelism", "compare", "annotations", "lineage", "domain_join", "domain_tables", "scaling", "ml_gain_ratio", "ml_model", "ml_cv"];
    let missing: Vec<&str> = documented.iter().copied().filter(|e| !endpoints.contains(e)).collect();
    ensure!(missing.is_empty(), "endpoints never exercised: {missing:?}");
    Ok(format!(
        "{} envelopes valid, {} payloads byte-identical CLI vs HTTP, {} endpoints, {} stores",
        c.validated,
        c.identical,
        endpoints.len(),
        stores.len()
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("expansion count", expansion_count),
        ("scaling property", scaling_property),
        ("provenance completeness", provenance_completeness),
        ("parallelism correctness", parallelism_correctness),
        ("speedup arithmetic", speedup_arithmetic),
        ("gecko activity profile", gecko_profile),
        ("annotation query replay", annotation_replay),
        ("ml suite", ml_suite),
        ("api contract", api_contract),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f) in criteria {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<26} {detail} [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<26} {why} [{secs:.2}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
