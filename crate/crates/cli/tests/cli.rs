use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use provflow_core::analytics::{parallelism_profile, to_tsv};
use provflow_core::store::Store;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name).canonicalize().unwrap()
}

fn provflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_provflow"))
        .current_dir(dir)
        .env("PROVFLOW_STORE", dir.join("prov.db"))
        .env_remove("PROVFLOW_ADDR")
        .env_remove("PROVFLOW_TOKEN")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const COPY: &str = r#"
file src[];
file dst[] <"dst/{0}.txt">;
app (file o) copy (file i) { cat filename(i) stdout=filename(o); }
foreach s, k in src { dst[k] = copy(s); }
"#;

const FAILING: &str = r#"
file src[];
file mid[] <"mid/{0}.txt">;
file dst[] <"dst/{0}.txt">;
app (file o) boom (file i) { sh "-c" "exit 3" stdout=filename(o); }
app (file o) after (file i) { cat filename(i) stdout=filename(o); }
foreach s, k in src {
    mid[k] = boom(s);
    dst[k] = after(mid[k]);
}
"#;

fn workspace(flow: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for n in ["a", "b", "c"] {
        std::fs::write(dir.path().join(format!("{n}.in")), format!("{n}\n")).unwrap();
    }
    std::fs::write(dir.path().join("w.flow"), flow).unwrap();
    std::fs::write(dir.path().join("b.toml"), "src = \"*.in\"\n").unwrap();
    dir
}

fn count(db: &Path, sql: &str) -> i64 {
    Store::open_read_only(db).unwrap().conn().query_row(sql, [], |r| r.get(0)).unwrap()
}

#[test]
fn run_imports_three_tasks() {
    let dir = workspace(COPY);
    let out = provflow(dir.path(), &["run", "w.flow", "--bindings", "b.toml", "--workers", "2", "--run-id", "copy-1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out), "copy-1\n");
    let db = dir.path().join("prov.db");
    assert_eq!(count(&db, "SELECT COUNT(*) FROM app_exec WHERE run_id = 'copy-1'"), 3);
    let copied = std::fs::read_to_string(dir.path().join("provflow-work/copy-1/outputs/dst/1.txt")).unwrap();
    assert_eq!(copied, "b\n");

    let again = provflow(dir.path(), &["run", "w.flow", "--bindings", "b.toml", "--run-id", "copy-1"]);
    assert_eq!(code(&again), 8);
}

#[test]
fn pipeline_stages_have_distinct_exit_codes() {
    let dir = workspace("file x; app (file o) k (file i) { cat i");
    let out = provflow(dir.path(), &["run", "w.flow"]);
    assert_eq!(code(&out), 3);
    assert!(!dir.path().join("prov.db").exists());

    let dir = workspace("file src[]; file dst[];\nforeach s, k in src { dst[k] = nope(s); }");
    assert_eq!(code(&provflow(dir.path(), &["run", "w.flow", "--bindings", "b.toml"])), 4);

    let dir = workspace(COPY);
    assert_eq!(code(&provflow(dir.path(), &["run", "w.flow"])), 5);
    std::fs::write(dir.path().join("bad.toml"), "src = {a = 1}").unwrap();
    assert_eq!(code(&provflow(dir.path(), &["run", "w.flow", "--bindings", "bad.toml"])), 11);
    assert_eq!(code(&provflow(dir.path(), &["run", "missing.flow"])), 11);
    assert_eq!(code(&provflow(dir.path(), &["run", "w.flow", "--bindings", "b.toml", "--workers", "0"])), 6);
    assert_eq!(code(&provflow(dir.path(), &["frobnicate"])), 2);
}

#[test]
fn failed_run_keeps_partial_provenance() {
    let dir = workspace(FAILING);
    let out = provflow(dir.path(), &["run", "w.flow", "--bindings", "b.toml", "--run-id", "f-1", "--workers", "1"]);
    assert_eq!(code(&out), 7, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out), "f-1\n");
    let db = dir.path().join("prov.db");
    assert_eq!(count(&db, "SELECT COUNT(*) FROM script_run WHERE run_id = 'f-1' AND status = 'failure'"), 1);
    assert_eq!(count(&db, "SELECT COUNT(*) FROM app_exec WHERE run_id = 'f-1'"), 6);
    assert_eq!(count(&db, "SELECT COUNT(*) FROM app_exec WHERE status = 'failure' AND exit_code = 3"), 1);
    assert_eq!(count(&db, "SELECT COUNT(*) FROM app_exec WHERE app_name = 'after' AND status != 'skipped'"), 0);
    let launched = count(&db, "SELECT COUNT(*) FROM app_exec WHERE status != 'skipped'");
    assert_eq!(count(&db, "SELECT COUNT(*) FROM resource_usage"), launched);
}

fn fixture_store(dir: &Path) {
    for name in ["phylo-seq", "phylo-par"] {
        let out = provflow(dir, &["import", "run", fixture(name).join("run.log").to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn query_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    fixture_store(dir.path());
    let seq = "phylo-seq-2203154718";

    for i in 0..200 {
        std::fs::write(dir.path().join(format!("s{i:03}.fasta")), format!(">s{i}\nACGT\n")).unwrap();
    }
    let flow = fixture("phylo.flow");
    let out = provflow(dir.path(), &["run", flow.to_str().unwrap(), "--workers", "16", "--run-id", "phylo-200"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = provflow(dir.path(), &["query", "summary", "phylo-200"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).lines().any(|l| l.split_whitespace().eq(["activities", "1200"])), "{}", stdout(&out));

    let out = provflow(dir.path(), &["query", "speedup", seq, seq, "--format", "tsv"]);
    assert_eq!(stdout(&out).lines().nth(1).unwrap().split('\t').nth(4), Some("1.00"));

    let out = provflow(dir.path(), &["query", "parallelism", "phylo-par-3127390551", "--format", "tsv"]);
    let store = Store::open_read_only(dir.path().join("prov.db")).unwrap();
    assert_eq!(stdout(&out), to_tsv(&parallelism_profile(&store, "phylo-par-3127390551").unwrap()));

    let out = provflow(dir.path(), &["query", "summary", "nope"]);
    assert_eq!(code(&out), 9);
    let out = provflow(dir.path(), &["query", "lineage", seq, "--file", "/not/there"]);
    assert_eq!(code(&out), 13);
    let out = provflow(dir.path(), &["--store", "absent.db", "query", "runs"]);
    assert_eq!(code(&out), 11);
}

#[test]
fn annotations_and_domain_tables() {
    let dir = tempfile::tempdir().unwrap();
    let ras = fixture("rasflow");
    let run = "rasflow-run006-3737171381";
    let steps: Vec<Vec<String>> = vec![
        vec!["import".into(), "run".into(), ras.join("run.log").display().to_string()],
        vec!["import".into(), "extract".into(), run.into(), "--rules".into(), ras.join("rasflow.rules").display().to_string()],
        vec!["import".into(), "annotation".into(), format!("run:{run}"), "cohort".into(), "RASopathy".into()],
        vec![
            "import".into(),
            "table".into(),
            ras.join("variants/final.vcf").display().to_string(),
            "--name".into(),
            "vcf".into(),
            "--preset".into(),
            "variants".into(),
            "--run".into(),
            run.into(),
            "--file".into(),
            ras.join("variants/final.vcf").display().to_string(),
        ],
    ];
    for s in &steps {
        let args: Vec<&str> = s.iter().map(String::as_str).collect();
        let out = provflow(dir.path(), &args);
        assert_eq!(code(&out), 0, "{s:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = provflow(dir.path(), &["query", "annotations", run, "--key", "overall alignment rate", "--format", "tsv"]);
    let text = stdout(&out);
    let values: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit('\t').next().unwrap()).collect();
    assert_eq!(values, ["93.95", "94.52", "94.41", "94.48", "94.62", "94.58"]);
    let out = provflow(dir.path(), &["query", "domain-tables", "--format", "tsv"]);
    assert!(stdout(&out).contains("vcf\tpatient:text,gene:text"), "{}", stdout(&out));
    let dup = provflow(dir.path(), &["import", "annotation", &format!("run:{run}"), "cohort", "other"]);
    assert_eq!(code(&dup), 8);
    assert_eq!(code(&provflow(dir.path(), &["import", "annotation", "nonsense", "k", "v"])), 2);
}

#[test]
fn ml_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let d = fixture("ml/oner_total_read.tsv");
    let d = d.to_str().unwrap();
    let out = provflow(dir.path(), &["ml", "oner", "--dataset", d, "--target", "cpu_class", "--format", "text"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("< 1768799155948 : A"), "{text}");
    assert_eq!(text.lines().filter(|l| l.contains('<')).count(), 3);

    let out = provflow(dir.path(), &["ml", "gain-ratio", "--dataset", d, "--target", "cpu_class"]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["ranking"][0]["attribute"], "total_read");

    let cv = |file: &str| {
        let out = provflow(
            dir.path(),
            &["ml", "cv", "--dataset", d, "--target", "cpu_class", "--folds", "10", "--seed", "7", "--out", file],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.path().join(file)).unwrap()
    };
    assert_eq!(cv("a.json"), cv("b.json"));

    let out = provflow(dir.path(), &["ml", "regress", "--dataset", d, "--target", "cpu_class"]);
    assert_eq!(code(&out), 10);
    let out = provflow(dir.path(), &["ml", "tree", "--dataset", d]);
    assert_eq!(code(&out), 2);
}

#[test]
fn shipped_schemas_are_current() {
    let docs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/api");
    let schemas = provflow_core::api::schemas();
    let shipped = std::fs::read_dir(&docs).unwrap().count();
    assert_eq!(shipped, schemas.len());
    for (name, schema) in schemas {
        let text = std::fs::read_to_string(docs.join(format!("{name}.json"))).unwrap();
        assert_eq!(text, serde_json::to_string_pretty(&schema).unwrap() + "\n", "docs/api/{name}.json is stale");
    }
}
