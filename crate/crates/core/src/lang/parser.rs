use std::collections::{HashMap, VecDeque};

use super::ast::*;
use super::lexer::{Lexer, Tok, Token};
use super::{ParseError, ParseErrorKind};

const TYPE_NAMES: &[&str] = &["file", "string", "int", "float", "boolean"];

pub(crate) struct Parser {
    lexer: Lexer,
    buf: VecDeque<Token>,
    var_names: HashMap<String, Pos>,
    app_names: HashMap<String, Pos>,
}

impl Parser {
    pub(crate) fn new(src: &str) -> Self {
        Parser { lexer: Lexer::new(src), buf: VecDeque::new(), var_names: HashMap::new(), app_names: HashMap::new() }
    }

    fn fill(&mut self, n: usize) -> Result<(), ParseError> {
        while self.buf.len() <= n {
            let t = self.lexer.next_token()?;
            self.buf.push_back(t);
        }
        Ok(())
    }

    fn peek(&mut self) -> Result<&Token, ParseError> {
        self.fill(0)?;
        Ok(&self.buf[0])
    }

    fn peek_nth(&mut self, n: usize) -> Result<&Token, ParseError> {
        self.fill(n)?;
        Ok(&self.buf[n])
    }

    fn next(&mut self) -> Result<Token, ParseError> {
        self.fill(0)?;
        Ok(self.buf.pop_front().expect("filled"))
    }

    fn at_sym(&mut self, s: &str) -> Result<bool, ParseError> {
        Ok(matches!(&self.peek()?.tok, Tok::Sym(x) if *x == s))
    }

    fn at_kw(&mut self, kw: &str) -> Result<bool, ParseError> {
        Ok(matches!(&self.peek()?.tok, Tok::Ident(x) if x == kw))
    }

    fn eat_sym(&mut self, s: &str) -> Result<bool, ParseError> {
        if self.at_sym(s)? {
            self.next()?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<Pos, ParseError> {
        let t = self.next()?;
        match &t.tok {
            Tok::Sym(x) if *x == s => Ok(t.pos),
            other => Err(ParseError::syntax(t.pos, format!("expected `{s}`, found {}", other.describe()))),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, Pos), ParseError> {
        let t = self.next()?;
        match t.tok {
            Tok::Ident(s) => Ok((s, t.pos)),
            other => Err(ParseError::syntax(t.pos, format!("expected {what}, found {}", other.describe()))),
        }
    }

    pub(crate) fn program(mut self, name: &str) -> Result<WorkflowSpec, ParseError> {
        let mut spec = WorkflowSpec {
            name: name.to_string(),
            var_decls: Vec::new(),
            app_decls: Vec::new(),
            statements: Vec::new(),
        };
        loop {
            let t = self.peek()?.clone();
            match &t.tok {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "app" => {
                    let app = self.app_decl()?;
                    spec.app_decls.push(app);
                }
                Tok::Ident(kw) if TYPE_NAMES.contains(&kw.as_str()) => {
                    let (decl, init) = self.type_decl()?;
                    spec.var_decls.push(decl);
                    if let Some(init) = init {
                        spec.statements.push(init);
                    }
                }
                Tok::Ident(kw) if !is_keyword(kw) && matches!(self.peek_nth(1)?.tok, Tok::Ident(_)) => {
                    return Err(ParseError::new(
                        ParseErrorKind::UnknownType,
                        t.pos,
                        format!("unknown type name `{kw}`"),
                    ));
                }
                _ => {
                    let s = self.stmt()?;
                    spec.statements.push(s);
                }
            }
        }
        Ok(spec)
    }

    fn type_ref(&mut self) -> Result<(TypeRef, Pos), ParseError> {
        let (name, pos) = self.expect_ident("type name")?;
        let base = BaseType::from_name(&name)
            .ok_or_else(|| ParseError::new(ParseErrorKind::UnknownType, pos, format!("unknown type name `{name}`")))?;
        let mut dims = 0;
        while self.at_sym("[")? && matches!(self.peek_nth(1)?.tok, Tok::Sym("]")) {
            self.next()?;
            self.next()?;
            dims += 1;
        }
        Ok((TypeRef { base, dims }, pos))
    }

    fn array_suffix(&mut self, ty: &mut TypeRef) -> Result<(), ParseError> {
        while self.at_sym("[")? && matches!(self.peek_nth(1)?.tok, Tok::Sym("]")) {
            self.next()?;
            self.next()?;
            ty.dims += 1;
        }
        Ok(())
    }

    fn type_decl(&mut self) -> Result<(VarDecl, Option<Stmt>), ParseError> {
        let (mut ty, pos) = self.type_ref()?;
        let (name, name_pos) = self.expect_ident("variable name")?;
        self.array_suffix(&mut ty)?;
        if let Some(prev) = self.var_names.get(&name) {
            return Err(ParseError::new(
                ParseErrorKind::DuplicateDeclaration,
                name_pos,
                format!("duplicate declaration of `{name}` (first declared at {prev})"),
            ));
        }
        self.var_names.insert(name.clone(), name_pos);
        let mut mapping = None;
        if self.eat_sym("<")? {
            let t = self.next()?;
            match t.tok {
                Tok::Str(s) => mapping = Some(s),
                other => {
                    return Err(ParseError::syntax(t.pos, format!("expected mapping pattern string, found {}", other.describe())))
                }
            }
            self.expect_sym(">")?;
        }
        let mut init = None;
        if self.at_sym("=")? {
            let eq = self.expect_sym("=")?;
            let value = self.expr()?;
            init = Some(Stmt::Assign(Assign {
                targets: vec![LValue { name: name.clone(), indices: Vec::new(), pos: name_pos }],
                value,
                pos: eq,
            }));
        }
        self.expect_sym(";")?;
        Ok((VarDecl { ty, name, mapping, pos }, init))
    }

    fn params(&mut self) -> Result<Vec<Param>, ParseError> {
        self.expect_sym("(")?;
        let mut out = Vec::new();
        if self.eat_sym(")")? {
            return Ok(out);
        }
        loop {
            let (mut ty, _) = self.type_ref()?;
            let (name, pos) = self.expect_ident("parameter name")?;
            self.array_suffix(&mut ty)?;
            out.push(Param { ty, name, pos });
            if self.eat_sym(")")? {
                return Ok(out);
            }
            self.expect_sym(",")?;
        }
    }

    fn app_decl(&mut self) -> Result<AppDecl, ParseError> {
        let (_, pos) = self.expect_ident("`app`")?;
        let outputs = self.params()?;
        let (name, name_pos) = self.expect_ident("app name")?;
        if let Some(prev) = self.app_names.get(&name) {
            return Err(ParseError::new(
                ParseErrorKind::DuplicateDeclaration,
                name_pos,
                format!("duplicate declaration of app `{name}` (first declared at {prev})"),
            ));
        }
        self.app_names.insert(name.clone(), name_pos);
        let inputs = self.params()?;
        let mut seen: HashMap<&str, Pos> = HashMap::new();
        for p in outputs.iter().chain(inputs.iter()) {
            if let Some(prev) = seen.insert(&p.name, p.pos) {
                return Err(ParseError::new(
                    ParseErrorKind::DuplicateDeclaration,
                    p.pos,
                    format!("duplicate parameter `{}` (first declared at {prev})", p.name),
                ));
            }
        }
        // The body is scanned raw; drop lookahead so the lexer sits right after `{`.
        self.expect_sym("{")?;
        if let Some(t) = self.buf.front() {
            let off = t.offset;
            self.buf.clear();
            self.lexer.rewind(off);
        }
        let names: Vec<&str> = outputs.iter().chain(inputs.iter()).map(|p| p.name.as_str()).collect();
        let command = self.lexer.app_body(&names)?;
        if command.is_empty() {
            return Err(ParseError::syntax(pos, format!("app `{name}` has an empty command")));
        }
        Ok(AppDecl { name, outputs, inputs, command, pos })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect_sym("{")?;
        let mut body = Vec::new();
        while !self.eat_sym("}")? {
            if matches!(self.peek()?.tok, Tok::Eof) {
                let p = self.peek()?.pos;
                return Err(ParseError::syntax(p, "expected `}`"));
            }
            body.push(self.stmt()?);
        }
        Ok(body)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let t = self.peek()?.clone();
        match &t.tok {
            Tok::Ident(kw) if kw == "foreach" => {
                self.next()?;
                let (item, _) = self.expect_ident("loop variable")?;
                let index = if self.eat_sym(",")? { Some(self.expect_ident("index variable")?.0) } else { None };
                if !self.at_kw("in")? {
                    let p = self.peek()?.pos;
                    return Err(ParseError::syntax(p, "expected `in`"));
                }
                self.next()?;
                let iter = self.expr()?;
                let body = self.block()?;
                Ok(Stmt::Foreach(Foreach { item, index, iter, body, pos: t.pos }))
            }
            Tok::Ident(kw) if kw == "if" => self.if_stmt(),
            Tok::Sym("(") => {
                self.next()?;
                let mut targets = vec![self.lvalue()?];
                while self.eat_sym(",")? {
                    targets.push(self.lvalue()?);
                }
                self.expect_sym(")")?;
                let eq = self.expect_sym("=")?;
                let value = self.expr()?;
                self.expect_sym(";")?;
                Ok(Stmt::Assign(Assign { targets, value, pos: eq }))
            }
            Tok::Ident(kw) if !is_keyword(kw) => {
                if matches!(self.peek_nth(1)?.tok, Tok::Sym("(")) {
                    let call = self.expr()?;
                    if !matches!(call.kind, ExprKind::Call(..)) {
                        return Err(ParseError::syntax(t.pos, "expected an app call statement"));
                    }
                    self.expect_sym(";")?;
                    return Ok(Stmt::Call(CallStmt { call, pos: t.pos }));
                }
                let target = self.lvalue()?;
                let eq = self.expect_sym("=")?;
                let value = self.expr()?;
                self.expect_sym(";")?;
                Ok(Stmt::Assign(Assign { targets: vec![target], value, pos: eq }))
            }
            other => Err(ParseError::syntax(t.pos, format!("expected a statement, found {}", other.describe()))),
        }
    }

    fn if_stmt(&mut self) -> Result<Stmt, ParseError> {
        let (_, pos) = self.expect_ident("`if`")?;
        self.expect_sym("(")?;
        let cond = self.expr()?;
        self.expect_sym(")")?;
        let then_body = self.block()?;
        let else_body = if self.at_kw("else")? {
            self.next()?;
            if self.at_kw("if")? {
                vec![self.if_stmt()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(Stmt::If(IfElse { cond, then_body, else_body, pos }))
    }

    fn lvalue(&mut self) -> Result<LValue, ParseError> {
        let (name, pos) = self.expect_ident("variable name")?;
        let mut indices = Vec::new();
        while self.eat_sym("[")? {
            indices.push(self.expr()?);
            self.expect_sym("]")?;
        }
        Ok(LValue { name, indices, pos })
    }

    pub(crate) fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(0)
    }

    fn binary(&mut self, level: usize) -> Result<Expr, ParseError> {
        const LEVELS: &[&[(&str, BinOp)]] = &[
            &[("||", BinOp::Or)],
            &[("&&", BinOp::And)],
            &[
                ("==", BinOp::Eq),
                ("!=", BinOp::Ne),
                ("<=", BinOp::Le),
                (">=", BinOp::Ge),
                ("<", BinOp::Lt),
                (">", BinOp::Gt),
            ],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
            &[("*", BinOp::Mul), ("/", BinOp::Div), ("%", BinOp::Rem)],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let t = self.peek()?.clone();
            let op = match &t.tok {
                Tok::Sym(s) => LEVELS[level].iter().find(|(sym, _)| sym == s).map(|(_, op)| *op),
                _ => None,
            };
            let Some(op) = op else { return Ok(lhs) };
            self.next()?;
            let rhs = self.binary(level + 1)?;
            let pos = lhs.pos;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        let t = self.peek()?.clone();
        let op = match t.tok {
            Tok::Sym("-") => Some(UnOp::Neg),
            Tok::Sym("!") => Some(UnOp::Not),
            _ => None,
        };
        if let Some(op) = op {
            self.next()?;
            let inner = self.unary()?;
            return Ok(Expr::new(ExprKind::Unary(op, Box::new(inner)), t.pos));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        while self.at_sym("[")? {
            self.next()?;
            let idx = self.expr()?;
            self.expect_sym("]")?;
            let pos = e.pos;
            e = Expr::new(ExprKind::Index(Box::new(e), Box::new(idx)), pos);
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let t = self.next()?;
        let kind = match t.tok {
            Tok::Int(i) => ExprKind::Int(i),
            Tok::Float(f) => ExprKind::Float(f),
            Tok::Str(s) => ExprKind::Str(s),
            Tok::Ident(s) if s == "true" => ExprKind::Bool(true),
            Tok::Ident(s) if s == "false" => ExprKind::Bool(false),
            Tok::Ident(s) if !is_keyword(&s) => {
                if self.eat_sym("(")? {
                    let mut args = Vec::new();
                    if !self.eat_sym(")")? {
                        loop {
                            args.push(self.expr()?);
                            if self.eat_sym(")")? {
                                break;
                            }
                            self.expect_sym(",")?;
                        }
                    }
                    ExprKind::Call(s, args)
                } else {
                    ExprKind::Var(s)
                }
            }
            Tok::Sym("(") => {
                let inner = self.expr()?;
                self.expect_sym(")")?;
                return Ok(Expr::new(inner.kind, t.pos));
            }
            other => return Err(ParseError::syntax(t.pos, format!("expected an expression, found {}", other.describe()))),
        };
        Ok(Expr::new(kind, t.pos))
    }
}

pub(crate) fn is_keyword(s: &str) -> bool {
    matches!(s, "app" | "foreach" | "in" | "if" | "else" | "true" | "false") || TYPE_NAMES.contains(&s)
}
