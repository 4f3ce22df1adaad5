use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Component, Path, PathBuf};

use super::ast::*;
use super::bindings::{BindValue, Bindings};
use super::check::{check_semantics, Diagnostic};
use super::graph::{GraphError, TaskGraph, TaskNode};

#[derive(Debug, Clone)]
pub struct ExpandOptions {
    /// Base for relative input paths and globs.
    pub input_dir: PathBuf,
    /// Base for output mappings and default output names.
    pub output_dir: PathBuf,
    /// Accept mapping patterns that match no files.
    pub allow_empty: bool,
}

impl Default for ExpandOptions {
    fn default() -> Self {
        ExpandOptions { input_dir: PathBuf::from("."), output_dir: PathBuf::from("."), allow_empty: false }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExpandError {
    #[error("workflow has {} semantic error(s), first: {}", .0.len(), .0[0])]
    Semantic(Vec<Diagnostic>),
    #[error("input variable `{0}` is not bound")]
    Unbound(String),
    #[error("pattern `{pattern}` for `{var}` matches no files")]
    EmptyMatch { var: String, pattern: String },
    #[error("binding for `{var}`: {message}")]
    Binding { var: String, message: String },
    #[error("{pos}: {message}")]
    Eval { pos: Pos, message: String },
    #[error("{pos}: `{target}` is assigned more than once")]
    WriteOnce { pos: Pos, target: String },
    #[error("{pos}: condition depends on a task output")]
    DynamicCondition { pos: Pos },
    #[error("{path} is consumed but no task produces it")]
    MissingProducer { path: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
enum Val {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    File(String),
    Arr(Vec<Val>),
}

impl Val {
    fn render(&self) -> String {
        match self {
            Val::Int(i) => i.to_string(),
            Val::Float(f) => f.to_string(),
            Val::Str(s) | Val::File(s) => s.clone(),
            Val::Bool(b) => b.to_string(),
            Val::Arr(a) => a.iter().map(Val::render).collect::<Vec<_>>().join(" "),
        }
    }

    fn flatten_into(&self, out: &mut Vec<String>) {
        match self {
            Val::Arr(a) => a.iter().for_each(|v| v.flatten_into(out)),
            v => out.push(v.render()),
        }
    }

    fn files_into(&self, out: &mut Vec<String>) {
        match self {
            Val::File(p) => out.push(p.clone()),
            Val::Arr(a) => a.iter().for_each(|v| v.files_into(out)),
            _ => {}
        }
    }

    fn type_name(&self) -> &'static str {
        match self {
            Val::Int(_) => "int",
            Val::Float(_) => "float",
            Val::Str(_) => "string",
            Val::Bool(_) => "boolean",
            Val::File(_) => "file",
            Val::Arr(_) => "array",
        }
    }
}

/// Expand a checked program and its input bindings into a concrete task graph.
///
/// Statements are evaluated in program order. Output file variables resolve to
/// paths derived from their mapping and indices, so a value may be referenced
/// before the statement producing it; every such reference must be produced by
/// some task once expansion finishes.
pub fn expand(spec: &WorkflowSpec, bindings: &Bindings, opts: &ExpandOptions) -> Result<TaskGraph, ExpandError> {
    let diags = check_semantics(spec);
    if !diags.is_empty() {
        return Err(ExpandError::Semantic(diags));
    }
    let mut assigned = HashSet::new();
    collect_assigned(&spec.statements, &mut assigned);
    for name in bindings.values.keys() {
        match spec.var(name) {
            None => {
                return Err(ExpandError::Binding { var: name.clone(), message: "no such variable is declared".into() })
            }
            Some(_) if assigned.contains(name.as_str()) => {
                return Err(ExpandError::Binding {
                    var: name.clone(),
                    message: "the variable is assigned by the workflow".into(),
                })
            }
            Some(_) => {}
        }
    }
    let cwd = std::env::current_dir().unwrap_or_else(|_| PathBuf::from("/"));
    let mut ex = Expander {
        spec,
        bindings,
        allow_empty: opts.allow_empty,
        input_dir: normalize(&cwd.join(&opts.input_dir)),
        output_dir: normalize(&cwd.join(&opts.output_dir)),
        assigned,
        scopes: Vec::new(),
        globals: HashMap::new(),
        written: HashMap::new(),
        reads: Vec::new(),
        tasks: Vec::new(),
    };
    for s in &spec.statements {
        ex.stmt(s)?;
    }
    let produced: HashSet<&str> = ex.tasks.iter().flat_map(|t| t.outputs.iter().map(String::as_str)).collect();
    for path in &ex.reads {
        if !produced.contains(path.as_str()) {
            return Err(ExpandError::MissingProducer { path: path.clone() });
        }
    }
    Ok(TaskGraph::from_tasks(ex.tasks)?)
}

fn collect_assigned<'a>(stmts: &'a [Stmt], out: &mut HashSet<&'a str>) {
    for s in stmts {
        match s {
            Stmt::Assign(a) => a.targets.iter().for_each(|t| {
                out.insert(t.name.as_str());
            }),
            Stmt::Call(_) => {}
            Stmt::Foreach(f) => collect_assigned(&f.body, out),
            Stmt::If(i) => {
                collect_assigned(&i.then_body, out);
                collect_assigned(&i.else_body, out);
            }
        }
    }
}

/// Lexical normalisation: drops `.` and folds `..` without touching the filesystem.
pub(crate) fn normalize(p: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in p.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            c => out.push(c.as_os_str()),
        }
    }
    out
}

struct Expander<'a> {
    spec: &'a WorkflowSpec,
    bindings: &'a Bindings,
    allow_empty: bool,
    input_dir: PathBuf,
    output_dir: PathBuf,
    assigned: HashSet<&'a str>,
    scopes: Vec<HashMap<String, Val>>,
    /// Resolved inputs and assigned scalars.
    globals: HashMap<String, Val>,
    /// Index tuples written so far, per assigned variable.
    written: HashMap<String, BTreeSet<Vec<i64>>>,
    /// Output paths referenced as values.
    reads: Vec<String>,
    tasks: Vec<TaskNode>,
}

fn eval_err(pos: Pos, message: impl Into<String>) -> ExpandError {
    ExpandError::Eval { pos, message: message.into() }
}

impl<'a> Expander<'a> {
    fn stmt(&mut self, s: &Stmt) -> Result<(), ExpandError> {
        match s {
            Stmt::Assign(a) => self.assign(a),
            Stmt::Call(c) => {
                let ExprKind::Call(name, args) = &c.call.kind else {
                    return Err(eval_err(c.pos, "expected an app call"));
                };
                let app = self.spec.app(name).expect("checked");
                let idx = self.tasks.len();
                let outs = app
                    .outputs
                    .iter()
                    .map(|p| self.out_path(&format!("{idx:05}-{}.{}", app.name, p.name)))
                    .collect();
                self.emit(app, args, outs)
            }
            Stmt::Foreach(f) => {
                let items = match self.eval(&f.iter)? {
                    Val::Arr(items) => items,
                    v => return Err(eval_err(f.iter.pos, format!("foreach over a {}", v.type_name()))),
                };
                for (i, item) in items.into_iter().enumerate() {
                    let mut scope = HashMap::new();
                    scope.insert(f.item.clone(), item);
                    if let Some(idx) = &f.index {
                        scope.insert(idx.clone(), Val::Int(i as i64));
                    }
                    self.scopes.push(scope);
                    let r = f.body.iter().try_for_each(|s| self.stmt(s));
                    self.scopes.pop();
                    r?;
                }
                Ok(())
            }
            Stmt::If(i) => {
                let mut dynamic = None;
                i.cond.visit_vars(&mut |v, p| {
                    if dynamic.is_none() && self.is_file_name(v) {
                        dynamic = Some(p);
                    }
                });
                if let Some(pos) = dynamic {
                    return Err(ExpandError::DynamicCondition { pos });
                }
                match self.eval(&i.cond)? {
                    Val::Bool(true) => i.then_body.iter().try_for_each(|s| self.stmt(s)),
                    Val::Bool(false) => i.else_body.iter().try_for_each(|s| self.stmt(s)),
                    v => Err(eval_err(i.cond.pos, format!("condition evaluated to a {}", v.type_name()))),
                }
            }
        }
    }

    fn is_file_name(&self, v: &str) -> bool {
        for scope in self.scopes.iter().rev() {
            if let Some(val) = scope.get(v) {
                let mut files = Vec::new();
                val.files_into(&mut files);
                return !files.is_empty();
            }
        }
        self.spec.var(v).is_some_and(|d| d.ty.is_file())
    }

    fn assign(&mut self, a: &Assign) -> Result<(), ExpandError> {
        let mut targets = Vec::new();
        for t in &a.targets {
            let mut idx = Vec::new();
            for e in &t.indices {
                idx.push(self.index_value(e)?);
            }
            let decl = self.spec.var(&t.name).expect("checked");
            if !self.written.entry(t.name.clone()).or_default().insert(idx.clone()) {
                let shown: String = idx.iter().map(|i| format!("[{i}]")).collect();
                return Err(ExpandError::WriteOnce { pos: t.pos, target: format!("{}{shown}", t.name) });
            }
            targets.push((decl, idx, t.pos));
        }
        if let ExprKind::Call(name, args) = &a.value.kind {
            let app = self.spec.app(name).expect("checked");
            let mut outs = Vec::new();
            for (decl, idx, pos) in targets {
                if !decl.ty.is_file() || idx.len() != decl.ty.dims {
                    return Err(eval_err(pos, "app outputs must be bound to single file elements"));
                }
                outs.push(self.var_path(decl, &idx));
            }
            return self.emit(app, args, outs);
        }
        let (decl, idx, pos) = targets.pop().expect("one target");
        if !idx.is_empty() {
            return Err(eval_err(pos, "element assignment is only supported for app outputs"));
        }
        let mut v = self.eval(&a.value)?;
        if decl.ty == TypeRef::scalar(BaseType::Float) {
            if let Val::Int(i) = v {
                v = Val::Float(i as f64);
            }
        }
        self.globals.insert(decl.name.clone(), v);
        Ok(())
    }

    fn emit(&mut self, app: &AppDecl, args: &[Expr], outs: Vec<String>) -> Result<(), ExpandError> {
        let mut values: HashMap<&str, Val> = HashMap::new();
        let mut inputs = Vec::new();
        for (p, e) in app.inputs.iter().zip(args) {
            let mut v = self.eval(e)?;
            if p.ty == TypeRef::scalar(BaseType::Float) {
                if let Val::Int(i) = v {
                    v = Val::Float(i as f64);
                }
            }
            v.files_into(&mut inputs);
            values.insert(&p.name, v);
        }
        for (p, path) in app.outputs.iter().zip(&outs) {
            values.insert(&p.name, Val::File(path.clone()));
        }
        let mut seen = HashSet::new();
        inputs.retain(|p| seen.insert(p.clone()));

        let mut node = TaskNode {
            id: format!("{:05}-{}", self.tasks.len(), app.name),
            app: app.name.clone(),
            argv: Vec::new(),
            stdin: None,
            stdout: None,
            stderr: None,
            inputs,
            outputs: outs,
        };
        for w in &app.command {
            if let (None, [WordPart::Param(p)]) = (w.redirect, w.parts.as_slice()) {
                values[p.as_str()].flatten_into(&mut node.argv);
                continue;
            }
            let mut s = String::new();
            for part in &w.parts {
                match part {
                    WordPart::Lit(l) => s.push_str(l),
                    WordPart::Param(p) => s.push_str(&values[p.as_str()].render()),
                }
            }
            match w.redirect {
                None => node.argv.push(s),
                Some(Redirect::Stdin) => node.stdin = Some(s),
                Some(Redirect::Stdout) => node.stdout = Some(s),
                Some(Redirect::Stderr) => node.stderr = Some(s),
            }
        }
        if node.argv.is_empty() {
            return Err(eval_err(app.pos, format!("app `{}` resolved to an empty command", app.name)));
        }
        self.tasks.push(node);
        Ok(())
    }

    fn out_path(&self, rel: &str) -> String {
        normalize(&self.output_dir.join(rel)).to_string_lossy().into_owned()
    }

    /// Path of element `idx` of an assigned file variable.
    fn var_path(&self, decl: &VarDecl, idx: &[i64]) -> String {
        let suffix: String = idx.iter().map(|i| format!("_{i}")).collect();
        let rel = match &decl.mapping {
            Some(m) if m.contains('{') => {
                let mut s = m.clone();
                for (k, i) in idx.iter().enumerate() {
                    s = s.replace(&format!("{{{k}}}"), &i.to_string());
                }
                s
            }
            Some(m) => {
                let p = Path::new(m);
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let name = match p.extension() {
                    Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
                    None => format!("{stem}{suffix}"),
                };
                p.with_file_name(name).to_string_lossy().into_owned()
            }
            None => format!("{}{suffix}", decl.name),
        };
        self.out_path(&rel)
    }

    fn index_value(&mut self, e: &Expr) -> Result<i64, ExpandError> {
        match self.eval(e)? {
            Val::Int(i) if i >= 0 => Ok(i),
            Val::Int(i) => Err(eval_err(e.pos, format!("negative index {i}"))),
            v => Err(eval_err(e.pos, format!("index is a {}", v.type_name()))),
        }
    }

    fn lookup_scope(&self, name: &str) -> Option<&Val> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    /// Value of `name[idx..]` when `name` is an assigned file variable.
    fn output_ref(&mut self, decl: &VarDecl, idx: Vec<i64>, pos: Pos) -> Result<Val, ExpandError> {
        if idx.len() > decl.ty.dims {
            return Err(eval_err(pos, format!("`{}` indexed too deeply", decl.name)));
        }
        if idx.len() == decl.ty.dims {
            let p = self.var_path(decl, &idx);
            self.reads.push(p.clone());
            return Ok(Val::File(p));
        }
        // Partial reference: the array as written so far, which must be dense.
        let written: Vec<Vec<i64>> = self
            .written
            .get(&decl.name)
            .map(|s| s.iter().filter(|w| w.starts_with(&idx)).cloned().collect())
            .unwrap_or_default();
        if written.is_empty() {
            return Err(eval_err(pos, format!("`{}` is used as an array before any element is assigned", decl.name)));
        }
        self.build_array(decl, idx, &written, pos)
    }

    fn build_array(&mut self, decl: &VarDecl, prefix: Vec<i64>, written: &[Vec<i64>], pos: Pos) -> Result<Val, ExpandError> {
        if prefix.len() == decl.ty.dims {
            return self.output_ref(decl, prefix, pos);
        }
        let d = prefix.len();
        let len = written.iter().filter(|w| w.starts_with(&prefix)).map(|w| w[d] + 1).max().unwrap_or(0);
        let mut items = Vec::new();
        for i in 0..len {
            let mut p = prefix.clone();
            p.push(i);
            if !written.iter().any(|w| w.starts_with(&p)) {
                return Err(eval_err(pos, format!("`{}` has no element at index {i}", decl.name)));
            }
            items.push(self.build_array(decl, p, written, pos)?);
        }
        Ok(Val::Arr(items))
    }

    fn eval(&mut self, e: &Expr) -> Result<Val, ExpandError> {
        match &e.kind {
            ExprKind::Int(i) => Ok(Val::Int(*i)),
            ExprKind::Float(f) => Ok(Val::Float(*f)),
            ExprKind::Str(s) => Ok(Val::Str(s.clone())),
            ExprKind::Bool(b) => Ok(Val::Bool(*b)),
            ExprKind::Var(v) => self.var(v, e.pos),
            ExprKind::Index(..) => {
                let mut chain = Vec::new();
                let mut base = e;
                while let ExprKind::Index(b, i) = &base.kind {
                    chain.push(i.as_ref());
                    base = b;
                }
                chain.reverse();
                if let ExprKind::Var(name) = &base.kind {
                    if self.lookup_scope(name).is_none() && self.assigned.contains(name.as_str()) {
                        let decl = self.spec.var(name).expect("checked");
                        if decl.ty.is_file() {
                            let mut idx = Vec::new();
                            for i in chain {
                                idx.push(self.index_value(i)?);
                            }
                            return self.output_ref(decl, idx, e.pos);
                        }
                    }
                }
                let mut v = self.eval(base)?;
                for i in chain {
                    let k = self.index_value(i)?;
                    v = match v {
                        Val::Arr(mut items) if (k as usize) < items.len() => items.swap_remove(k as usize),
                        Val::Arr(items) => {
                            return Err(eval_err(i.pos, format!("index {k} out of bounds for length {}", items.len())))
                        }
                        other => return Err(eval_err(e.pos, format!("cannot index a {}", other.type_name()))),
                    };
                }
                Ok(v)
            }
            ExprKind::Call(name, _) => Err(eval_err(e.pos, format!("app `{name}` called inside an expression"))),
            ExprKind::Unary(op, a) => match (op, self.eval(a)?) {
                (UnOp::Neg, Val::Int(i)) => Ok(Val::Int(-i)),
                (UnOp::Neg, Val::Float(f)) => Ok(Val::Float(-f)),
                (UnOp::Not, Val::Bool(b)) => Ok(Val::Bool(!b)),
                (_, v) => Err(eval_err(e.pos, format!("operator not applicable to a {}", v.type_name()))),
            },
            ExprKind::Binary(op, a, b) => {
                let (x, y) = (self.eval(a)?, self.eval(b)?);
                binary(*op, x, y).map_err(|m| eval_err(e.pos, m))
            }
        }
    }

    fn var(&mut self, name: &str, pos: Pos) -> Result<Val, ExpandError> {
        if let Some(v) = self.lookup_scope(name) {
            return Ok(v.clone());
        }
        if let Some(v) = self.globals.get(name) {
            return Ok(v.clone());
        }
        let decl = self.spec.var(name).expect("checked");
        if self.assigned.contains(name) {
            if decl.ty.is_file() {
                return self.output_ref(decl, Vec::new(), pos);
            }
            return Err(eval_err(pos, format!("`{name}` is read before its assignment")));
        }
        let v = self.resolve_input(decl)?;
        self.globals.insert(name.to_string(), v.clone());
        Ok(v)
    }

    fn resolve_input(&self, decl: &VarDecl) -> Result<Val, ExpandError> {
        let name = &decl.name;
        let bad = |message: String| ExpandError::Binding { var: name.clone(), message };
        if decl.ty.is_file() {
            let paths = match (self.bindings.get(name), &decl.mapping) {
                (Some(BindValue::Str(pattern)), _) | (None, Some(pattern)) => self.glob(name, pattern)?,
                (Some(BindValue::List(items)), _) if decl.ty.dims <= 1 => items
                    .iter()
                    .map(|i| match i {
                        BindValue::Str(p) => Ok(self.in_path(p)),
                        _ => Err(bad("file lists must hold strings".into())),
                    })
                    .collect::<Result<Vec<_>, _>>()?,
                (Some(_), _) => return Err(bad(format!("cannot bind a value to `{}`", decl.ty))),
                (None, None) => return Err(ExpandError::Unbound(name.clone())),
            };
            return match decl.ty.dims {
                0 if paths.len() == 1 => Ok(Val::File(paths.into_iter().next().unwrap())),
                0 => Err(bad(format!("a single file is required, {} given", paths.len()))),
                1 => Ok(Val::Arr(paths.into_iter().map(Val::File).collect())),
                _ => Err(bad("file inputs of rank above 1 are not supported".into())),
            };
        }
        let b = self.bindings.get(name).ok_or_else(|| ExpandError::Unbound(name.clone()))?;
        convert(b, decl.ty).ok_or_else(|| bad(format!("value does not fit type `{}`", decl.ty)))
    }

    fn in_path(&self, p: &str) -> String {
        normalize(&self.input_dir.join(p)).to_string_lossy().into_owned()
    }

    fn glob(&self, var: &str, pattern: &str) -> Result<Vec<String>, ExpandError> {
        let full = self.in_path(pattern);
        let entries = glob::glob(&full)
            .map_err(|e| ExpandError::Binding { var: var.into(), message: format!("invalid pattern `{pattern}`: {e}") })?;
        let mut paths: Vec<String> = entries
            .filter_map(Result::ok)
            .filter(|p| p.is_file())
            .map(|p| normalize(&p).to_string_lossy().into_owned())
            .collect();
        paths.sort();
        if paths.is_empty() && !self.allow_empty {
            return Err(ExpandError::EmptyMatch { var: var.into(), pattern: pattern.into() });
        }
        Ok(paths)
    }
}

fn convert(b: &BindValue, ty: TypeRef) -> Option<Val> {
    if ty.dims > 0 {
        let BindValue::List(items) = b else { return None };
        let inner = TypeRef { base: ty.base, dims: ty.dims - 1 };
        return items.iter().map(|i| convert(i, inner)).collect::<Option<Vec<_>>>().map(Val::Arr);
    }
    Some(match (ty.base, b) {
        (BaseType::Int, BindValue::Int(i)) => Val::Int(*i),
        (BaseType::Float, BindValue::Int(i)) => Val::Float(*i as f64),
        (BaseType::Float, BindValue::Float(f)) => Val::Float(*f),
        (BaseType::String, BindValue::Str(s)) => Val::Str(s.clone()),
        (BaseType::Boolean, BindValue::Bool(v)) => Val::Bool(*v),
        _ => return None,
    })
}

fn binary(op: BinOp, x: Val, y: Val) -> Result<Val, String> {
    use Val::*;
    let cmp = |o: std::cmp::Ordering| -> Val {
        use std::cmp::Ordering::*;
        Bool(match op {
            BinOp::Eq => o == Equal,
            BinOp::Ne => o != Equal,
            BinOp::Lt => o == Less,
            BinOp::Le => o != Greater,
            BinOp::Gt => o == Greater,
            BinOp::Ge => o != Less,
            _ => unreachable!(),
        })
    };
    match (op, x, y) {
        (BinOp::And, Bool(a), Bool(b)) => Ok(Bool(a && b)),
        (BinOp::Or, Bool(a), Bool(b)) => Ok(Bool(a || b)),
        (op, Int(a), Int(b)) if op.is_comparison() => Ok(cmp(a.cmp(&b))),
        (op, Str(a), Str(b)) if op.is_comparison() => Ok(cmp(a.cmp(&b))),
        (op, Bool(a), Bool(b)) if op.is_comparison() => Ok(cmp(a.cmp(&b))),
        (op, a @ (Int(_) | Float(_)), b @ (Int(_) | Float(_))) if op.is_comparison() => {
            let (a, b) = (as_f64(&a), as_f64(&b));
            a.partial_cmp(&b).map(cmp).ok_or_else(|| "comparison with NaN".to_string())
        }
        (BinOp::Add, Str(a), Str(b)) => Ok(Str(a + &b)),
        (op, Int(a), Int(b)) => match op {
            BinOp::Add => a.checked_add(b).map(Int).ok_or_else(|| "integer overflow".into()),
            BinOp::Sub => a.checked_sub(b).map(Int).ok_or_else(|| "integer overflow".into()),
            BinOp::Mul => a.checked_mul(b).map(Int).ok_or_else(|| "integer overflow".into()),
            BinOp::Div if b == 0 => Err("division by zero".into()),
            BinOp::Rem if b == 0 => Err("division by zero".into()),
            BinOp::Div => Ok(Int(a.wrapping_div(b))),
            BinOp::Rem => Ok(Int(a.wrapping_rem(b))),
            _ => Err(format!("operator `{}` not applicable to int", op.symbol())),
        },
        (op, a @ (Int(_) | Float(_)), b @ (Int(_) | Float(_))) => {
            let (a, b) = (as_f64(&a), as_f64(&b));
            Ok(Float(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Rem => a % b,
                _ => return Err(format!("operator `{}` not applicable to float", op.symbol())),
            }))
        }
        (op, a, b) => Err(format!("operator `{}` not applicable to {} and {}", op.symbol(), a.type_name(), b.type_name())),
    }
}

fn as_f64(v: &Val) -> f64 {
    match v {
        Val::Int(i) => *i as f64,
        Val::Float(f) => *f,
        _ => f64::NAN,
    }
}
