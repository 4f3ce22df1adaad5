use std::fmt::Write;

use super::ast::*;

/// Render a workflow back to source. Parsing the output yields the same AST
/// modulo positions: binary expressions are fully parenthesised and literal
/// command words are quoted whenever the word lexer would read them differently.
pub fn print_workflow(spec: &WorkflowSpec) -> String {
    let mut out = String::new();
    for v in &spec.var_decls {
        let mut ty = v.ty;
        let dims = ty.dims;
        ty.dims = 0;
        write!(out, "{} {}", ty, v.name).unwrap();
        for _ in 0..dims {
            out.push_str("[]");
        }
        if let Some(m) = &v.mapping {
            write!(out, " <{}>", quote(m)).unwrap();
        }
        out.push_str(";\n");
    }
    if !spec.var_decls.is_empty() {
        out.push('\n');
    }
    for a in &spec.app_decls {
        print_app(&mut out, a);
        out.push('\n');
    }
    for s in &spec.statements {
        print_stmt(&mut out, s, 0);
    }
    out
}

fn print_app(out: &mut String, app: &AppDecl) {
    let params = |ps: &[Param]| ps.iter().map(|p| format!("{} {}", p.ty, p.name)).collect::<Vec<_>>().join(", ");
    let names: Vec<&str> = app.outputs.iter().chain(app.inputs.iter()).map(|p| p.name.as_str()).collect();
    writeln!(out, "app ({}) {} ({}) {{", params(&app.outputs), app.name, params(&app.inputs)).unwrap();
    let words: Vec<String> = app.command.iter().map(|w| print_word(w, &names)).collect();
    writeln!(out, "    {};", words.join(" ")).unwrap();
    out.push_str("}\n");
}

fn print_word(w: &Word, params: &[&str]) -> String {
    let mut s = String::new();
    if let Some(r) = w.redirect {
        write!(s, "{}=", r.keyword()).unwrap();
    }
    if w.parts.is_empty() {
        s.push_str("\"\"");
        return s;
    }
    for (i, part) in w.parts.iter().enumerate() {
        match part {
            WordPart::Param(p) => write!(s, "filename({p})").unwrap(),
            WordPart::Lit(l) => {
                let first = i == 0 && w.redirect.is_none();
                let sole = w.parts.len() == 1 && w.redirect.is_none();
                if needs_quoting(l) || (sole && params.contains(&l.as_str())) || (first && starts_with_redirect(l)) {
                    s.push_str(&quote(l));
                } else {
                    s.push_str(l);
                }
            }
        }
    }
    s
}

fn starts_with_redirect(l: &str) -> bool {
    ["stdin=", "stdout=", "stderr="].iter().any(|p| l.starts_with(p))
}

fn needs_quoting(l: &str) -> bool {
    l.is_empty()
        || l.contains("filename(")
        || l.chars().any(|c| c.is_whitespace() || matches!(c, '"' | '\'' | ';' | '}' | '@' | '\\'))
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            '\t' => q.push_str("\\t"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

fn print_body(out: &mut String, body: &[Stmt], depth: usize) {
    out.push_str("{\n");
    for s in body {
        print_stmt(out, s, depth + 1);
    }
    indent(out, depth);
    out.push('}');
}

fn print_stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    match s {
        Stmt::Assign(a) => {
            let targets: Vec<String> = a.targets.iter().map(print_lvalue).collect();
            if targets.len() == 1 {
                write!(out, "{} = {};", targets[0], print_expr(&a.value)).unwrap();
            } else {
                write!(out, "({}) = {};", targets.join(", "), print_expr(&a.value)).unwrap();
            }
        }
        Stmt::Call(c) => write!(out, "{};", print_expr(&c.call)).unwrap(),
        Stmt::Foreach(f) => {
            write!(out, "foreach {}", f.item).unwrap();
            if let Some(i) = &f.index {
                write!(out, ", {i}").unwrap();
            }
            write!(out, " in {} ", print_expr(&f.iter)).unwrap();
            print_body(out, &f.body, depth);
        }
        Stmt::If(i) => {
            write!(out, "if ({}) ", print_expr(&i.cond)).unwrap();
            print_body(out, &i.then_body, depth);
            if !i.else_body.is_empty() {
                out.push_str(" else ");
                print_body(out, &i.else_body, depth);
            }
        }
    }
    out.push('\n');
}

fn print_lvalue(l: &LValue) -> String {
    let mut s = l.name.clone();
    for i in &l.indices {
        write!(s, "[{}]", print_expr(i)).unwrap();
    }
    s
}

pub fn print_expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Int(i) => i.to_string(),
        ExprKind::Float(f) => {
            let s = format!("{f:?}");
            if s.contains(['.', 'e', 'E']) {
                s
            } else {
                format!("{s}.0")
            }
        }
        ExprKind::Str(s) => quote(s),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Var(v) => v.clone(),
        ExprKind::Index(a, b) => format!("{}[{}]", print_atom(a), print_expr(b)),
        ExprKind::Call(name, args) => {
            let args: Vec<String> = args.iter().map(print_expr).collect();
            format!("{}({})", name, args.join(", "))
        }
        ExprKind::Unary(UnOp::Neg, a) => format!("-{}", print_atom(a)),
        ExprKind::Unary(UnOp::Not, a) => format!("!{}", print_atom(a)),
        ExprKind::Binary(op, a, b) => format!("({} {} {})", print_expr(a), op.symbol(), print_expr(b)),
    }
}

fn print_atom(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Unary(..) => format!("({})", print_expr(e)),
        _ => print_expr(e),
    }
}
