use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use proptest::prelude::*;
use provflow_core::lang::*;

const LISTING_1: &str = r#"
app (file o) mafft (file i) {
	mafft filename(i) stdout=filename(o);
}

foreach f, i in fastaFile {
	mafftFile[i] = mafft(fastaFile[i]);
}
"#;

const LISTING_2: &str = r#"
foreach f,i in fasta {
     wordsUnsort[i] = words(fasta[i]);
}
foreach f,i in fasta {
     foreach g,j in fasta {
       hits[i][j] = hits(d2hW[i], d2hW[j], wl);
     }
}
"#;

fn rules(diags: &[Diagnostic]) -> Vec<Rule> {
    diags.iter().map(|d| d.rule).collect()
}

#[test]
fn listing_one_shape() {
    let spec = parse_workflow(LISTING_1).unwrap();
    assert_eq!(spec.app_decls.len(), 1);
    assert_eq!(spec.statements.len(), 1);
    let Stmt::Foreach(f) = &spec.statements[0] else { panic!("expected foreach") };
    assert_eq!((f.item.as_str(), f.index.as_deref()), ("f", Some("i")));
    assert_eq!(f.body.len(), 1);
    let Stmt::Assign(a) = &f.body[0] else { panic!("expected assignment") };
    assert!(matches!(&a.value.kind, ExprKind::Call(name, args) if name == "mafft" && args.len() == 1));

    let app = &spec.app_decls[0];
    assert_eq!(app.command.len(), 3);
    assert_eq!(app.command[1].parts, vec![WordPart::Param("i".into())]);
    assert_eq!(app.command[2].redirect, Some(Redirect::Stdout));
    assert_eq!(f.pos, Pos::new(6, 1));
}

#[test]
fn empty_source() {
    let spec = parse_workflow("").unwrap();
    assert!(spec.var_decls.is_empty() && spec.app_decls.is_empty() && spec.statements.is_empty());
    assert!(check_semantics(&spec).is_empty());
}

#[test]
fn listing_two_nesting() {
    let spec = parse_workflow(LISTING_2).unwrap();
    assert_eq!(spec.statements.len(), 2);
    let Stmt::Foreach(second) = &spec.statements[1] else { panic!() };
    let Stmt::Foreach(inner) = &second.body[0] else { panic!("expected nested foreach") };
    assert_eq!(inner.index.as_deref(), Some("j"));
    let Stmt::Assign(a) = &inner.body[0] else { panic!() };
    assert_eq!(a.targets[0].indices.len(), 2);
}

#[test]
fn parse_errors_carry_kind_and_position() {
    let e = parse_workflow("file a;\nfile a;").unwrap_err();
    assert_eq!((e.kind, e.pos), (ParseErrorKind::DuplicateDeclaration, Pos::new(2, 6)));
    let e = parse_workflow("blob x;").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::UnknownType);
    let e = parse_workflow("x = ;").unwrap_err();
    assert_eq!((e.kind, e.pos), (ParseErrorKind::Syntax, Pos::new(1, 5)));
    let e = parse_workflow("app (file o) a (file o) { cat o; }").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::DuplicateDeclaration);
}

#[test]
fn listing_one_with_inputs_is_clean() {
    let src = format!("file fastaFile[];\nfile mafftFile[];\n{LISTING_1}");
    let spec = parse_workflow(&src).unwrap();
    assert_eq!(check_semantics(&spec), vec![]);
}

#[test]
fn scalar_assigned_twice() {
    let spec = parse_workflow("int x;\nx = 1;\nx = 2;\n").unwrap();
    let d = check_semantics(&spec);
    assert_eq!(rules(&d), vec![Rule::WriteOnce]);
    assert_eq!(d[0].pos, Pos::new(3, 1));
}

#[test]
fn missing_argument() {
    let src = "file a; file b; file c;\napp (file o) cat2 (file x, file y) { cat x y stdout=o; }\nc = cat2(a);\n";
    let d = check_semantics(&parse_workflow(src).unwrap());
    assert_eq!(rules(&d), vec![Rule::Arity]);
}

#[test]
fn other_rules() {
    let cases: &[(&str, Rule)] = &[
        ("file o; o = nope(o);", Rule::UnknownApp),
        ("int x; x = y;", Rule::UndeclaredVariable),
        ("app (file o) a (file i) { cp i @q; }\nfile x; file y; y = a(x);", Rule::UndeclaredPlaceholder),
        ("app () a (file i) { cat i; }\nfile x; a(x);", Rule::NoOutput),
        ("int n; foreach v in n { }", Rule::NotArray),
        ("app (file o) a (int i) { echo i stdout=o; }\nfile x; file y; y = a(x);", Rule::TypeMismatch),
        ("file i[]; file o[]; int n;\napp (file o) a (file i) { cp i o; }\nforeach f in i { n = 1; }", Rule::WriteOnce),
        ("file i[]; file o[];\napp (file o) a (file i) { cp i o; }\nforeach f, k in i { o[0] = a(f); }", Rule::WriteOnce),
        ("file a; file b; b = a;", Rule::FileAssign),
        ("file a; boolean t; if (a == a) { }", Rule::DynamicCondition),
    ];
    for (src, rule) in cases {
        let d = check_semantics(&parse_workflow(src).unwrap());
        assert!(rules(&d).contains(rule), "{src}: expected {rule:?}, got {d:?}");
    }
}

#[test]
fn exclusive_branches_may_both_assign() {
    let src = "file i; file o; boolean fast;\napp (file o) a (file i) { cp i o; }\napp (file o) b (file i) { cp i o; }\n\
               if (fast) { o = a(i); } else { o = b(i); }";
    assert_eq!(check_semantics(&parse_workflow(src).unwrap()), vec![]);
}

fn phylo_inputs(dir: &Path, n: usize) {
    for k in 0..n {
        std::fs::write(dir.join(format!("seq{k:03}.fasta")), format!(">s{k}\nACGT\n")).unwrap();
    }
}

#[test]
fn phylo_expands_to_1200_tasks() {
    let dir = tempfile::tempdir().unwrap();
    phylo_inputs(dir.path(), 200);
    let src = include_str!("../fixtures/phylo.flow");
    let t0 = Instant::now();
    let spec = parse_workflow(src).unwrap();
    let opts = ExpandOptions { input_dir: dir.path().into(), output_dir: dir.path().join("out"), allow_empty: false };
    let g = expand(&spec, &Bindings::new(), &opts).unwrap();
    let elapsed = t0.elapsed();
    assert_eq!(g.tasks.len(), 1200);
    assert_eq!(g.edges.len(), 1200);
    assert!(elapsed.as_secs_f64() < 1.0, "{elapsed:?}");
    let last = &g.tasks[5];
    assert_eq!(last.app, "raxml");
    assert!(last.outputs[0].ends_with("/out/tree/0.nwk"));
    assert_eq!(last.inputs.len(), 2);
}

#[test]
fn single_call_single_task() {
    let src = "file i <\"a.txt\">; file o;\napp (file o) c (file i) { cp i o; }\no = c(i);";
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.txt"), "x").unwrap();
    let opts = ExpandOptions { input_dir: dir.path().into(), output_dir: dir.path().into(), allow_empty: false };
    let g = expand(&parse_workflow(src).unwrap(), &Bindings::new(), &opts).unwrap();
    assert_eq!((g.tasks.len(), g.edges.len()), (1, 0));
    let t = &g.tasks[0];
    assert_eq!(t.argv, vec!["cp".to_string(), t.inputs[0].clone(), t.outputs[0].clone()]);
}

const CHAIN: &str = r#"
file src[];
file mid[] <"mid/{0}.txt">;
file dst[];
app (file o) first (file i) { sort filename(i) stdout=filename(o); }
app (file o) second (file i) { uniq filename(i) stdout=filename(o); }
foreach s, k in src {
    mid[k] = first(s);
    dst[k] = second(mid[k]);
}
"#;

fn chain_graph() -> TaskGraph {
    let b = Bindings::new().files("src", ["/data/a", "/data/b", "/data/c"]);
    let opts = ExpandOptions { input_dir: "/".into(), output_dir: "/work".into(), allow_empty: false };
    expand(&parse_workflow(CHAIN).unwrap(), &b, &opts).unwrap()
}

#[test]
fn chain_edges_match_path_intersection() {
    let g = chain_graph();
    assert_eq!(g.tasks.len(), 6);
    let mut oracle = BTreeSet::new();
    for (p, prod) in g.tasks.iter().enumerate() {
        for (c, cons) in g.tasks.iter().enumerate() {
            if prod.outputs.iter().any(|o| cons.inputs.contains(o)) {
                oracle.insert((p, c));
            }
        }
    }
    assert_eq!(oracle.len(), 3);
    assert_eq!(g.edges.iter().copied().collect::<BTreeSet<_>>(), oracle);
    assert_eq!(g.tasks[1].stdout.as_deref(), Some("/work/dst_0"));
    assert_eq!(g.tasks[0].stdout.as_deref(), Some("/work/mid/0.txt"));
}

#[test]
fn expansion_is_deterministic() {
    assert_eq!(chain_graph(), chain_graph());
}

#[test]
fn expansion_errors() {
    let opts = ExpandOptions { input_dir: "/nonexistent-dir".into(), output_dir: "/w".into(), allow_empty: false };
    let spec = parse_workflow(CHAIN).unwrap();
    assert!(matches!(expand(&spec, &Bindings::new(), &opts), Err(ExpandError::Unbound(v)) if v == "src"));

    let mut b = Bindings::new();
    b.set("src", BindValue::Str("*.fa".into()));
    assert!(matches!(expand(&spec, &b, &opts), Err(ExpandError::EmptyMatch { .. })));
    let lenient = ExpandOptions { allow_empty: true, ..opts.clone() };
    assert_eq!(expand(&spec, &b, &lenient).unwrap().tasks.len(), 0);

    let consumed_only = "file a; file b; file c;\napp (file o) k (file i) { cp i o; }\nc = k(b);";
    let b = Bindings::new().files("a", ["/x"]);
    let err = expand(&parse_workflow(consumed_only).unwrap(), &b, &opts).unwrap_err();
    assert!(matches!(err, ExpandError::Unbound(_)), "{err}");

    let dup = "file i[]; file o[];\napp (file o) a (file i) { cp i o; }\nforeach f, k in i { o[k % 2] = a(f); }";
    let b = Bindings::new().files("i", ["/x", "/y", "/z"]);
    let err = expand(&parse_workflow(dup).unwrap(), &b, &opts).unwrap_err();
    assert!(matches!(err, ExpandError::WriteOnce { .. }), "{err}");
}

#[test]
fn static_conditions_and_nested_loops() {
    let src = r#"
file g[]; file pair[][]; boolean all; int wl;
app (file o) cmp (file a, file b, int w) { compare a b -w w stdout=o; }
foreach x, i in g {
    foreach y, j in g {
        if (all || i < j) {
            pair[i][j] = cmp(x, y, wl);
        }
    }
}
"#;
    let spec = parse_workflow(src).unwrap();
    assert_eq!(check_semantics(&spec), vec![]);
    let opts = ExpandOptions { input_dir: "/".into(), output_dir: "/o".into(), allow_empty: false };
    let mut b = Bindings::new().files("g", ["/1", "/2", "/3", "/4"]);
    b.set("wl", BindValue::Int(12)).set("all", BindValue::Bool(false));
    let g = expand(&spec, &b, &opts).unwrap();
    assert_eq!(g.tasks.len(), 6);
    assert_eq!(g.tasks[0].argv, ["compare", "/1", "/2", "-w", "12"]);
    b.set("all", BindValue::Bool(true));
    assert_eq!(expand(&spec, &b, &opts).unwrap().tasks.len(), 16);
}

// Generators for the print/parse round trip.

const NAMES: &[&str] = &["a", "b", "fasta", "x1", "out_2", "k", "mafft", "hits"];

fn name() -> impl Strategy<Value = String> {
    prop::sample::select(NAMES).prop_map(str::to_string)
}

fn type_ref() -> impl Strategy<Value = TypeRef> {
    let base = prop::sample::select(vec![BaseType::File, BaseType::String, BaseType::Int, BaseType::Float, BaseType::Boolean]);
    (base, 0usize..3).prop_map(|(base, dims)| TypeRef { base, dims })
}

fn expr() -> impl Strategy<Value = Expr> {
    let p = Pos::default();
    let leaf = prop_oneof![
        (0i64..100_000).prop_map(ExprKind::Int),
        prop::sample::select(vec![0.5, 1.0, 2.25, 1e-7, 3.5e20]).prop_map(ExprKind::Float),
        "[a-z \"\\\\]{0,6}".prop_map(ExprKind::Str),
        any::<bool>().prop_map(ExprKind::Bool),
        name().prop_map(ExprKind::Var),
    ]
    .prop_map(move |k| Expr::new(k, p));
    leaf.prop_recursive(4, 24, 3, move |inner| {
        let ops = prop::sample::select(vec![
            BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Rem, BinOp::Eq, BinOp::Ne,
            BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge, BinOp::And, BinOp::Or,
        ]);
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ExprKind::Index(Box::new(a), Box::new(b))),
            (prop::sample::select(vec![UnOp::Neg, UnOp::Not]), inner.clone()).prop_map(|(o, a)| ExprKind::Unary(o, Box::new(a))),
            (ops, inner.clone(), inner.clone()).prop_map(|(o, a, b)| ExprKind::Binary(o, Box::new(a), Box::new(b))),
            (name(), prop::collection::vec(inner, 0..3)).prop_map(|(n, args)| ExprKind::Call(n, args)),
        ]
        .prop_map(move |k| Expr::new(k, p))
    })
}

fn call() -> impl Strategy<Value = Expr> {
    (name(), prop::collection::vec(expr(), 0..3)).prop_map(|(n, a)| Expr::new(ExprKind::Call(n, a), Pos::default()))
}

fn lvalue() -> impl Strategy<Value = LValue> {
    (name(), prop::collection::vec(expr(), 0..3)).prop_map(|(name, indices)| LValue { name, indices, pos: Pos::default() })
}

fn stmt() -> impl Strategy<Value = Stmt> {
    let p = Pos::default();
    let simple = prop_oneof![
        (prop::collection::vec(lvalue(), 1..3), expr()).prop_map(move |(targets, value)| Stmt::Assign(Assign { targets, value, pos: p })),
        call().prop_map(move |call| Stmt::Call(CallStmt { call, pos: p })),
    ];
    simple.prop_recursive(3, 16, 3, move |inner| {
        prop_oneof![
            (name(), prop::option::of(name()), expr(), prop::collection::vec(inner.clone(), 0..3))
                .prop_map(move |(item, index, iter, body)| Stmt::Foreach(Foreach { item, index, iter, body, pos: p })),
            (expr(), prop::collection::vec(inner.clone(), 0..3), prop::collection::vec(inner, 0..2))
                .prop_map(move |(cond, then_body, else_body)| Stmt::If(IfElse { cond, then_body, else_body, pos: p })),
        ]
    })
}

fn word(params: Vec<String>) -> impl Strategy<Value = Word> {
    let part = prop_oneof![
        "[a-z0-9 ./=@;{}#\"-]{1,8}".prop_map(WordPart::Lit),
        prop::sample::select(params).prop_map(WordPart::Param),
    ];
    let redirect = prop::option::of(prop::sample::select(vec![Redirect::Stdin, Redirect::Stdout, Redirect::Stderr]));
    (redirect, prop::collection::vec(part, 0..4)).prop_filter_map("canonical word", |(redirect, parts)| {
        let mut merged: Vec<WordPart> = Vec::new();
        for p in parts {
            match (merged.last_mut(), p) {
                (Some(WordPart::Lit(prev)), WordPart::Lit(l)) => prev.push_str(&l),
                (_, p) => merged.push(p),
            }
        }
        if redirect.is_some() && merged.is_empty() {
            return None;
        }
        Some(Word { redirect, parts: merged, pos: Pos::default() })
    })
}

fn app(name: String) -> impl Strategy<Value = AppDecl> {
    (1usize..3, 0usize..3, type_ref(), type_ref()).prop_flat_map(move |(no, ni, to, ti)| {
        let params: Vec<String> = (0..no + ni).map(|k| format!("p{k}")).collect();
        let name = name.clone();
        prop::collection::vec(word(params), 1..5).prop_map(move |command| {
            let mk = |k: usize, ty| Param { ty, name: format!("p{k}"), pos: Pos::default() };
            AppDecl {
                name: name.clone(),
                outputs: (0..no).map(|k| mk(k, to)).collect(),
                inputs: (no..no + ni).map(|k| mk(k, ti)).collect(),
                command,
                pos: Pos::default(),
            }
        })
    })
}

fn workflow() -> impl Strategy<Value = WorkflowSpec> {
    let decls = prop::collection::btree_map(name(), (type_ref(), prop::option::of("[a-z*/{}0-9.]{1,10}")), 0..4);
    let apps = prop::collection::btree_set(name(), 0..3)
        .prop_flat_map(|names| names.into_iter().map(app).collect::<Vec<_>>());
    (decls, apps, prop::collection::vec(stmt(), 0..5)).prop_map(|(decls, app_decls, statements)| WorkflowSpec {
        name: "workflow".into(),
        var_decls: decls
            .into_iter()
            .map(|(name, (ty, mapping))| VarDecl { ty, name, mapping, pos: Pos::default() })
            .collect(),
        app_decls,
        statements,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn print_then_parse_round_trips(spec in workflow()) {
        let text = print_workflow(&spec);
        let parsed = parse_workflow(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(parsed.without_positions(), spec, "{}", text);
    }

    #[test]
    fn without_foreach_one_task_per_call(n in 0usize..12) {
        let mut src = String::from("file src;\napp (file o) step (file i) { cp i o; }\n");
        for k in 0..n {
            src.push_str(&format!("step(src);\nfile r{k};\nr{k} = step(src);\n"));
        }
        let spec = parse_workflow(&src).unwrap();
        let b = Bindings::new().files("src", ["/in"]);
        let opts = ExpandOptions { input_dir: "/".into(), output_dir: "/o".into(), allow_empty: false };
        let g = expand(&spec, &b, &opts).unwrap();
        prop_assert_eq!(g.tasks.len(), 2 * n);
        prop_assert!(g.edges.is_empty());
    }
}
