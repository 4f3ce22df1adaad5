use std::collections::HashMap;
use std::fmt;

use super::ast::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    UndeclaredVariable,
    UnknownApp,
    DuplicateDeclaration,
    WriteOnce,
    Arity,
    TypeMismatch,
    UndeclaredPlaceholder,
    NoOutput,
    NotArray,
    CallContext,
    DynamicCondition,
    FileAssign,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::UndeclaredVariable => "undeclared-variable",
            Rule::UnknownApp => "unknown-app",
            Rule::DuplicateDeclaration => "duplicate-declaration",
            Rule::WriteOnce => "write-once",
            Rule::Arity => "arity",
            Rule::TypeMismatch => "type-mismatch",
            Rule::UndeclaredPlaceholder => "undeclared-placeholder",
            Rule::NoOutput => "no-output",
            Rule::NotArray => "not-array",
            Rule::CallContext => "call-context",
            Rule::DynamicCondition => "dynamic-condition",
            Rule::FileAssign => "file-assign",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub rule: Rule,
    pub pos: Pos,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: [{}] {}", self.pos, self.rule.id(), self.message)
    }
}

/// Run the static checks. An empty result means the program is well formed.
pub fn check_semantics(spec: &WorkflowSpec) -> Vec<Diagnostic> {
    let mut c = Checker { spec, diags: Vec::new(), scopes: Vec::new(), sites: Vec::new(), next_if: 0 };
    for app in &spec.app_decls {
        c.check_app(app);
    }
    let ctx = Ctx { loops: Vec::new(), branches: Vec::new() };
    for s in &spec.statements {
        c.stmt(s, &ctx);
    }
    c.write_once_pairs();
    c.diags.sort_by(|a, b| (a.pos, a.rule).cmp(&(b.pos, b.rule)));
    c.diags
}

#[derive(Clone)]
struct Ctx {
    /// Loop variables (item and index) of each enclosing foreach.
    loops: Vec<Vec<String>>,
    /// Enclosing if statements and the branch taken (true = then).
    branches: Vec<(usize, bool)>,
}

struct Site {
    var: String,
    indices: Vec<Expr>,
    branches: Vec<(usize, bool)>,
    pos: Pos,
}

struct Checker<'a> {
    spec: &'a WorkflowSpec,
    diags: Vec<Diagnostic>,
    scopes: Vec<HashMap<String, TypeRef>>,
    sites: Vec<Site>,
    next_if: usize,
}

impl<'a> Checker<'a> {
    fn diag(&mut self, rule: Rule, pos: Pos, message: impl Into<String>) {
        self.diags.push(Diagnostic { rule, pos, message: message.into() });
    }

    fn check_app(&mut self, app: &AppDecl) {
        if app.outputs.is_empty() {
            self.diag(Rule::NoOutput, app.pos, format!("app `{}` declares no output parameter", app.name));
        }
        for w in &app.command {
            for part in &w.parts {
                if let WordPart::Param(p) = part {
                    match app.param(p) {
                        None => self.diag(
                            Rule::UndeclaredPlaceholder,
                            w.pos,
                            format!("placeholder `{p}` in app `{}` names no parameter", app.name),
                        ),
                        Some(param) if w.redirect.is_some() && (!param.ty.is_file() || param.ty.dims > 0) => self.diag(
                            Rule::TypeMismatch,
                            w.pos,
                            format!("redirect target `{p}` must be a scalar file parameter"),
                        ),
                        _ => {}
                    }
                }
            }
        }
    }

    fn lookup(&self, name: &str) -> Option<TypeRef> {
        for scope in self.scopes.iter().rev() {
            if let Some(t) = scope.get(name) {
                return Some(*t);
            }
        }
        self.spec.var(name).map(|v| v.ty)
    }

    fn declared(&self, name: &str) -> bool {
        self.lookup(name).is_some()
    }

    fn stmt(&mut self, s: &Stmt, ctx: &Ctx) {
        match s {
            Stmt::Assign(a) => self.assign(a, ctx),
            Stmt::Call(c) => {
                if let ExprKind::Call(name, args) = &c.call.kind {
                    self.call(name, args, c.call.pos);
                }
            }
            Stmt::Foreach(f) => {
                let iter_ty = self.expr(&f.iter, false);
                let item_ty = match iter_ty {
                    Some(t) if t.dims > 0 => Some(TypeRef { base: t.base, dims: t.dims - 1 }),
                    Some(t) => {
                        self.diag(Rule::NotArray, f.iter.pos, format!("foreach iterates over a non-array of type `{t}`"));
                        None
                    }
                    None => None,
                };
                let mut scope = HashMap::new();
                let mut names = vec![f.item.clone()];
                scope.insert(f.item.clone(), item_ty.unwrap_or(TypeRef::scalar(BaseType::Int)));
                if let Some(idx) = &f.index {
                    if idx == &f.item {
                        self.diag(Rule::DuplicateDeclaration, f.pos, format!("loop variables share the name `{idx}`"));
                    }
                    scope.insert(idx.clone(), TypeRef::scalar(BaseType::Int));
                    names.push(idx.clone());
                }
                for n in &names {
                    if self.declared(n) {
                        self.diag(Rule::DuplicateDeclaration, f.pos, format!("loop variable `{n}` shadows an existing declaration"));
                    }
                }
                self.scopes.push(scope);
                let mut inner = ctx.clone();
                inner.loops.push(names);
                for s in &f.body {
                    self.stmt(s, &inner);
                }
                self.scopes.pop();
            }
            Stmt::If(i) => {
                let ty = self.expr(&i.cond, false);
                if let Some(t) = ty {
                    if t != TypeRef::scalar(BaseType::Boolean) {
                        self.diag(Rule::TypeMismatch, i.cond.pos, format!("condition has type `{t}`, expected `boolean`"));
                    }
                }
                let mut file_refs = Vec::new();
                i.cond.visit_vars(&mut |v, p| file_refs.push((v.to_string(), p)));
                for (v, p) in file_refs {
                    if self.lookup(&v).is_some_and(|t| t.is_file()) {
                        self.diag(
                            Rule::DynamicCondition,
                            p,
                            format!("condition depends on file `{v}`; only bound scalar inputs may be tested"),
                        );
                    }
                }
                let id = self.next_if;
                self.next_if += 1;
                for (body, branch) in [(&i.then_body, true), (&i.else_body, false)] {
                    let mut inner = ctx.clone();
                    inner.branches.push((id, branch));
                    for s in body {
                        self.stmt(s, &inner);
                    }
                }
            }
        }
    }

    fn assign(&mut self, a: &Assign, ctx: &Ctx) {
        let mut target_tys = Vec::new();
        for t in &a.targets {
            target_tys.push(self.lvalue(t, ctx));
        }
        match &a.value.kind {
            ExprKind::Call(name, args) => {
                let Some(outputs) = self.call(name, args, a.value.pos) else { return };
                if outputs.len() != a.targets.len() {
                    self.diag(
                        Rule::Arity,
                        a.pos,
                        format!("app `{name}` produces {} output(s) but {} target(s) are assigned", outputs.len(), a.targets.len()),
                    );
                    return;
                }
                for ((t, ty), out) in a.targets.iter().zip(&target_tys).zip(&outputs) {
                    if let Some(ty) = ty {
                        if *ty != out.ty {
                            self.diag(
                                Rule::TypeMismatch,
                                t.pos,
                                format!("`{}` has type `{ty}` but output `{}` of `{name}` is `{}`", t.name, out.name, out.ty),
                            );
                        }
                    }
                }
            }
            _ => {
                let vty = self.expr(&a.value, false);
                if a.targets.len() != 1 {
                    self.diag(Rule::Arity, a.pos, "multiple targets require an app call on the right-hand side");
                    return;
                }
                if let Some(ty) = target_tys[0] {
                    if ty.is_file() {
                        self.diag(Rule::FileAssign, a.pos, format!("file `{}` can only be assigned from an app call", a.targets[0].name));
                    } else if let Some(v) = vty {
                        if !assignable(ty, v) {
                            self.diag(Rule::TypeMismatch, a.value.pos, format!("cannot assign `{v}` to `{}` of type `{ty}`", a.targets[0].name, ));
                        }
                    }
                }
            }
        }
    }

    fn lvalue(&mut self, t: &LValue, ctx: &Ctx) -> Option<TypeRef> {
        for idx in &t.indices {
            self.index_expr(idx);
        }
        if self.scopes.iter().any(|s| s.contains_key(&t.name)) {
            self.diag(Rule::WriteOnce, t.pos, format!("loop variable `{}` cannot be assigned", t.name));
            return None;
        }
        let Some(decl) = self.spec.var(&t.name) else {
            self.diag(Rule::UndeclaredVariable, t.pos, format!("assignment to undeclared variable `{}`", t.name));
            return None;
        };
        let ty = decl.ty;
        if t.indices.len() > ty.dims {
            self.diag(Rule::NotArray, t.pos, format!("`{}` of type `{ty}` indexed {} time(s)", t.name, t.indices.len()));
            return None;
        }
        // Every enclosing loop must be reflected in the indices, otherwise each
        // iteration writes the same element.
        for names in &ctx.loops {
            let mut mentioned = false;
            for idx in &t.indices {
                idx.visit_vars(&mut |v, _| mentioned |= names.iter().any(|n| n == v));
            }
            if !mentioned {
                self.diag(
                    Rule::WriteOnce,
                    t.pos,
                    format!("`{}` is assigned on every iteration of an enclosing foreach (indices do not use `{}`)", t.name, names.join("`/`")),
                );
                break;
            }
        }
        self.sites.push(Site {
            var: t.name.clone(),
            indices: t.indices.iter().map(strip).collect(),
            branches: ctx.branches.clone(),
            pos: t.pos,
        });
        Some(TypeRef { base: ty.base, dims: ty.dims - t.indices.len() })
    }

    fn write_once_pairs(&mut self) {
        let mut found = Vec::new();
        for (j, b) in self.sites.iter().enumerate() {
            for a in &self.sites[..j] {
                if a.var != b.var {
                    continue;
                }
                let exclusive = a
                    .branches
                    .iter()
                    .any(|(id, br)| b.branches.iter().any(|(id2, br2)| id == id2 && br != br2));
                if exclusive {
                    continue;
                }
                let overlapping = a.indices.is_empty() || b.indices.is_empty() || a.indices == b.indices;
                if overlapping {
                    found.push((b.pos, b.var.clone(), a.pos));
                    break;
                }
            }
        }
        for (pos, var, first) in found {
            self.diag(Rule::WriteOnce, pos, format!("`{var}` is assigned more than once (first assignment at {first})"));
        }
    }

    /// Type-checks an app call and returns the app's output parameters.
    fn call(&mut self, name: &str, args: &[Expr], pos: Pos) -> Option<Vec<Param>> {
        let arg_tys: Vec<Option<TypeRef>> = args.iter().map(|a| self.expr(a, false)).collect();
        let Some(app) = self.spec.app(name) else {
            self.diag(Rule::UnknownApp, pos, format!("call to undeclared app `{name}`"));
            return None;
        };
        if app.inputs.len() != args.len() {
            self.diag(
                Rule::Arity,
                pos,
                format!("app `{name}` takes {} argument(s) but {} were given", app.inputs.len(), args.len()),
            );
        } else {
            for ((arg, ty), param) in args.iter().zip(&arg_tys).zip(&app.inputs) {
                if let Some(ty) = ty {
                    if !assignable(param.ty, *ty) {
                        self.diag(
                            Rule::TypeMismatch,
                            arg.pos,
                            format!("argument `{}` of `{name}` expects `{}`, found `{ty}`", param.name, param.ty),
                        );
                    }
                }
            }
        }
        Some(app.outputs.clone())
    }

    fn index_expr(&mut self, idx: &Expr) {
        if let Some(t) = self.expr(idx, false) {
            if t != TypeRef::scalar(BaseType::Int) {
                self.diag(Rule::TypeMismatch, idx.pos, format!("array index has type `{t}`, expected `int`"));
            }
        }
    }

    fn expr(&mut self, e: &Expr, _nested: bool) -> Option<TypeRef> {
        use BaseType::*;
        match &e.kind {
            ExprKind::Int(_) => Some(TypeRef::scalar(Int)),
            ExprKind::Float(_) => Some(TypeRef::scalar(Float)),
            ExprKind::Str(_) => Some(TypeRef::scalar(String)),
            ExprKind::Bool(_) => Some(TypeRef::scalar(Boolean)),
            ExprKind::Var(v) => {
                let t = self.lookup(v);
                if t.is_none() {
                    self.diag(Rule::UndeclaredVariable, e.pos, format!("use of undeclared variable `{v}`"));
                }
                t
            }
            ExprKind::Index(base, idx) => {
                let bt = self.expr(base, true);
                self.index_expr(idx);
                match bt {
                    Some(t) if t.dims > 0 => Some(TypeRef { base: t.base, dims: t.dims - 1 }),
                    Some(t) => {
                        self.diag(Rule::NotArray, e.pos, format!("cannot index a value of type `{t}`"));
                        None
                    }
                    None => None,
                }
            }
            ExprKind::Call(name, args) => {
                self.diag(Rule::CallContext, e.pos, format!("app `{name}` may only be called as a statement or assignment"));
                for a in args {
                    self.expr(a, true);
                }
                None
            }
            ExprKind::Unary(op, inner) => {
                let t = self.expr(inner, true)?;
                let ok = match op {
                    UnOp::Neg => t == TypeRef::scalar(Int) || t == TypeRef::scalar(Float),
                    UnOp::Not => t == TypeRef::scalar(Boolean),
                };
                if !ok {
                    self.diag(Rule::TypeMismatch, e.pos, format!("operator not applicable to `{t}`"));
                    return None;
                }
                Some(t)
            }
            ExprKind::Binary(op, a, b) => {
                let ta = self.expr(a, true);
                let tb = self.expr(b, true);
                let (ta, tb) = (ta?, tb?);
                let numeric = |t: TypeRef| t == TypeRef::scalar(Int) || t == TypeRef::scalar(Float);
                let result = if op.is_logical() {
                    (ta == TypeRef::scalar(Boolean) && tb == TypeRef::scalar(Boolean)).then_some(TypeRef::scalar(Boolean))
                } else if op.is_comparison() {
                    let comparable = (numeric(ta) && numeric(tb))
                        || (ta == tb && ta.dims == 0 && !ta.is_file());
                    comparable.then_some(TypeRef::scalar(Boolean))
                } else if numeric(ta) && numeric(tb) {
                    if ta.base == Float || tb.base == Float {
                        Some(TypeRef::scalar(Float))
                    } else {
                        Some(TypeRef::scalar(Int))
                    }
                } else if *op == BinOp::Add && ta == TypeRef::scalar(String) && tb == TypeRef::scalar(String) {
                    Some(TypeRef::scalar(String))
                } else {
                    None
                };
                if result.is_none() {
                    self.diag(Rule::TypeMismatch, e.pos, format!("operator `{}` not applicable to `{ta}` and `{tb}`", op.symbol()));
                }
                result
            }
        }
    }
}

fn assignable(target: TypeRef, value: TypeRef) -> bool {
    target == value || (target == TypeRef::scalar(BaseType::Float) && value == TypeRef::scalar(BaseType::Int))
}

fn strip(e: &Expr) -> Expr {
    let spec = WorkflowSpec {
        name: String::new(),
        var_decls: vec![],
        app_decls: vec![],
        statements: vec![Stmt::Call(CallStmt { call: e.clone(), pos: Pos::default() })],
    };
    match spec.without_positions().statements.pop() {
        Some(Stmt::Call(c)) => c.call,
        _ => unreachable!(),
    }
}
