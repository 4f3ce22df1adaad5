use std::fmt;

/// Source location, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Self {
        Pos { line, col }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseType {
    File,
    String,
    Int,
    Float,
    Boolean,
}

impl BaseType {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "file" => BaseType::File,
            "string" => BaseType::String,
            "int" => BaseType::Int,
            "float" => BaseType::Float,
            "boolean" => BaseType::Boolean,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            BaseType::File => "file",
            BaseType::String => "string",
            BaseType::Int => "int",
            BaseType::Float => "float",
            BaseType::Boolean => "boolean",
        }
    }
}

/// A base type plus array rank (`file[][]` has `dims == 2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TypeRef {
    pub base: BaseType,
    pub dims: usize,
}

impl TypeRef {
    pub fn scalar(base: BaseType) -> Self {
        TypeRef { base, dims: 0 }
    }

    pub fn is_file(&self) -> bool {
        self.base == BaseType::File
    }
}

impl fmt::Display for TypeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.base.name())?;
        for _ in 0..self.dims {
            f.write_str("[]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowSpec {
    pub name: String,
    pub var_decls: Vec<VarDecl>,
    pub app_decls: Vec<AppDecl>,
    pub statements: Vec<Stmt>,
}

impl WorkflowSpec {
    pub fn app(&self, name: &str) -> Option<&AppDecl> {
        self.app_decls.iter().find(|a| a.name == name)
    }

    pub fn var(&self, name: &str) -> Option<&VarDecl> {
        self.var_decls.iter().find(|v| v.name == name)
    }

    /// Copy of the AST with every position zeroed, for structural comparison.
    pub fn without_positions(&self) -> WorkflowSpec {
        let mut spec = self.clone();
        spec.clear_positions();
        spec
    }

    fn clear_positions(&mut self) {
        for v in &mut self.var_decls {
            v.pos = Pos::default();
        }
        for a in &mut self.app_decls {
            a.pos = Pos::default();
            for p in a.inputs.iter_mut().chain(a.outputs.iter_mut()) {
                p.pos = Pos::default();
            }
            for w in &mut a.command {
                w.pos = Pos::default();
            }
        }
        clear_stmts(&mut self.statements);
    }
}

fn clear_stmts(stmts: &mut [Stmt]) {
    for s in stmts {
        match s {
            Stmt::Assign(a) => {
                a.pos = Pos::default();
                for t in &mut a.targets {
                    t.pos = Pos::default();
                    t.indices.iter_mut().for_each(clear_expr);
                }
                clear_expr(&mut a.value);
            }
            Stmt::Call(c) => {
                c.pos = Pos::default();
                clear_expr(&mut c.call);
            }
            Stmt::Foreach(f) => {
                f.pos = Pos::default();
                clear_expr(&mut f.iter);
                clear_stmts(&mut f.body);
            }
            Stmt::If(i) => {
                i.pos = Pos::default();
                clear_expr(&mut i.cond);
                clear_stmts(&mut i.then_body);
                clear_stmts(&mut i.else_body);
            }
        }
    }
}

fn clear_expr(e: &mut Expr) {
    e.pos = Pos::default();
    match &mut e.kind {
        ExprKind::Index(a, b) | ExprKind::Binary(_, a, b) => {
            clear_expr(a);
            clear_expr(b);
        }
        ExprKind::Unary(_, a) => clear_expr(a),
        ExprKind::Call(_, args) => args.iter_mut().for_each(clear_expr),
        _ => {}
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub ty: TypeRef,
    pub name: String,
    /// Glob (inputs) or path template (outputs) binding the variable to files.
    pub mapping: Option<String>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub ty: TypeRef,
    pub name: String,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppDecl {
    pub name: String,
    pub outputs: Vec<Param>,
    pub inputs: Vec<Param>,
    pub command: Vec<Word>,
    pub pos: Pos,
}

impl AppDecl {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.outputs.iter().chain(self.inputs.iter()).find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Redirect {
    Stdin,
    Stdout,
    Stderr,
}

impl Redirect {
    pub fn keyword(self) -> &'static str {
        match self {
            Redirect::Stdin => "stdin",
            Redirect::Stdout => "stdout",
            Redirect::Stderr => "stderr",
        }
    }
}

/// One word of an app command template.
#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    pub redirect: Option<Redirect>,
    pub parts: Vec<WordPart>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WordPart {
    Lit(String),
    /// Interpolation of a parameter (`filename(p)`, `@p` or a bare parameter name).
    Param(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Assign(Assign),
    Call(CallStmt),
    Foreach(Foreach),
    If(IfElse),
}

impl Stmt {
    pub fn pos(&self) -> Pos {
        match self {
            Stmt::Assign(a) => a.pos,
            Stmt::Call(c) => c.pos,
            Stmt::Foreach(f) => f.pos,
            Stmt::If(i) => i.pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LValue {
    pub name: String,
    pub indices: Vec<Expr>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assign {
    pub targets: Vec<LValue>,
    pub value: Expr,
    pub pos: Pos,
}

/// An app call whose outputs are not bound to variables.
#[derive(Debug, Clone, PartialEq)]
pub struct CallStmt {
    pub call: Expr,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Foreach {
    pub item: String,
    pub index: Option<String>,
    pub iter: Expr,
    pub body: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IfElse {
    pub cond: Expr,
    pub then_body: Vec<Stmt>,
    pub else_body: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    Var(String),
    Index(Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Self {
        Expr { kind, pos }
    }

    /// Name of the root variable of a `Var`/`Index` chain.
    pub fn root_var(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Var(v) => Some(v),
            ExprKind::Index(base, _) => base.root_var(),
            _ => None,
        }
    }

    /// Visit every variable name referenced by this expression.
    pub fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a str, Pos)) {
        match &self.kind {
            ExprKind::Var(v) => f(v, self.pos),
            ExprKind::Index(a, b) | ExprKind::Binary(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            ExprKind::Unary(_, a) => a.visit_vars(f),
            ExprKind::Call(_, args) => args.iter().for_each(|a| a.visit_vars(f)),
            _ => {}
        }
    }
}
