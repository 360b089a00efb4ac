//! Canonical pretty-printer. Output reparses to an AST with identical node ids.

use std::fmt::Write;

use super::ast::*;
use super::value::Datum;

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for (name, init) in &p.globals {
        let _ = writeln!(out, "global {name} = {};", print_datum(init));
    }
    for f in p.functions.values() {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&print_function(f));
    }
    out
}

pub fn print_function(f: &FunctionDef) -> String {
    let mut out = format!("fn {}({}) ", f.name, f.params.join(", "));
    print_block(&f.body, 0, &mut out);
    out.push('\n');
    out
}

pub fn print_datum(d: &Datum) -> String {
    match d {
        Datum::Int(i) => i.to_string(),
        Datum::Bool(b) => b.to_string(),
        Datum::Str(s) => quote(s),
        Datum::Arr(items) => {
            let parts: Vec<String> = items.iter().map(print_datum).collect();
            format!("[{}]", parts.join(", "))
        }
        Datum::FnRef(f) => format!("&{f}"),
        Datum::Unit => "()".into(),
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn print_block(stmts: &[Stmt], level: usize, out: &mut String) {
    out.push_str("{\n");
    for s in stmts {
        indent(level + 1, out);
        print_stmt_into(s, level + 1, out);
        out.push('\n');
    }
    indent(level, out);
    out.push('}');
}

/// Single statement; nested blocks are indented relative to column zero.
pub fn print_stmt(s: &Stmt) -> String {
    let mut out = String::new();
    print_stmt_into(s, 0, &mut out);
    out
}

fn print_stmt_into(s: &Stmt, level: usize, out: &mut String) {
    match &s.kind {
        StmtKind::Let { name, init, .. } => {
            let _ = write!(out, "let {name} = {};", print_expr(init));
        }
        StmtKind::Assign(target, value) => {
            let lhs = match target {
                Target::Local { name, .. } | Target::Global { name, .. } => name.clone(),
                Target::Index(base, idx) => {
                    format!("{}[{}]", print_postfix_operand(base), print_expr(idx))
                }
            };
            let _ = write!(out, "{lhs} = {};", print_expr(value));
        }
        StmtKind::If(cond, then, els) => {
            let _ = write!(out, "if ({}) ", print_expr(cond));
            print_block(then, level, out);
            match els.as_deref() {
                None => {}
                Some([nested @ Stmt { kind: StmtKind::If(..), .. }]) => {
                    out.push_str(" else ");
                    print_stmt_into(nested, level, out);
                }
                Some(els) => {
                    out.push_str(" else ");
                    print_block(els, level, out);
                }
            }
        }
        StmtKind::While(cond, body) => {
            let _ = write!(out, "while ({}) ", print_expr(cond));
            print_block(body, level, out);
        }
        StmtKind::Return(None) => out.push_str("return;"),
        StmtKind::Return(Some(e)) => {
            let _ = write!(out, "return {};", print_expr(e));
        }
        StmtKind::Expr(e) => {
            let _ = write!(out, "{};", print_expr(e));
        }
        StmtKind::Assert(e) => {
            let _ = write!(out, "assert({});", print_expr(e));
        }
    }
}

pub fn print_expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Int(i) => i.to_string(),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Str(s) => quote(s),
        ExprKind::Array(items) => {
            let parts: Vec<String> = items.iter().map(print_expr).collect();
            format!("[{}]", parts.join(", "))
        }
        ExprKind::Local { name, .. } | ExprKind::Global { name, .. } => name.clone(),
        ExprKind::FnRef(name) => format!("&{name}"),
        ExprKind::Binary(op, l, r) => {
            let p = op.precedence();
            let left = match &l.kind {
                ExprKind::Binary(lop, ..) if lop.precedence() < p => format!("({})", print_expr(l)),
                _ => print_expr(l),
            };
            let right = match &r.kind {
                ExprKind::Binary(rop, ..) if rop.precedence() <= p => {
                    format!("({})", print_expr(r))
                }
                _ => print_expr(r),
            };
            format!("{left} {} {right}", op.symbol())
        }
        ExprKind::Unary(op, inner) => {
            let sym = match op {
                UnOp::Neg => "-",
                UnOp::Not => "!",
            };
            match &inner.kind {
                ExprKind::Binary(..) | ExprKind::Unary(..) => format!("{sym}({})", print_expr(inner)),
                _ => format!("{sym}{}", print_expr(inner)),
            }
        }
        ExprKind::Index(base, idx) => {
            format!("{}[{}]", print_postfix_operand(base), print_expr(idx))
        }
        ExprKind::Call(callee, args) => {
            let name = match callee {
                Callee::Direct(n) => n.as_str(),
                Callee::Builtin(b) => b.name(),
                Callee::Local { name, .. } | Callee::Global { name, .. } => name.as_str(),
            };
            let parts: Vec<String> = args.iter().map(print_expr).collect();
            format!("{name}({})", parts.join(", "))
        }
    }
}

fn print_postfix_operand(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Binary(..) | ExprKind::Unary(..) => format!("({})", print_expr(e)),
        _ => print_expr(e),
    }
}
