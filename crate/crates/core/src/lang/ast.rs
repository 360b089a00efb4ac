use std::collections::BTreeMap;
use std::sync::Arc;

use super::value::Datum;

/// Preorder label of a statement or expression inside one function body.
pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
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

    /// Binding strength; higher binds tighter. All binary operators are left-associative.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem)
    }

    pub fn is_relational(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Builtin {
    Len,
    Push,
    Print,
    TimeNow,
    Rand,
    OutputLen,
}

impl Builtin {
    pub const ALL: [Builtin; 6] = [
        Builtin::Len,
        Builtin::Push,
        Builtin::Print,
        Builtin::TimeNow,
        Builtin::Rand,
        Builtin::OutputLen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Len => "len",
            Builtin::Push => "push",
            Builtin::Print => "print",
            Builtin::TimeNow => "time_now",
            Builtin::Rand => "rand",
            Builtin::OutputLen => "output_len",
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        Builtin::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::Len | Builtin::Print | Builtin::Rand => 1,
            Builtin::Push => 2,
            Builtin::TimeNow | Builtin::OutputLen => 0,
        }
    }
}

/// Who a call site names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Callee {
    Direct(String),
    Builtin(Builtin),
    /// Indirect call through a local slot holding a function reference.
    Local { slot: u32, name: String },
    /// Indirect call through a global holding a function reference.
    Global { slot: u32, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub id: NodeId,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Int(i64),
    Bool(bool),
    Str(String),
    Array(Vec<Expr>),
    Local { slot: u32, name: String },
    Global { slot: u32, name: String },
    FnRef(String),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Call(Callee, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Local { slot: u32, name: String },
    Global { slot: u32, name: String },
    Index(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub id: NodeId,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Let { slot: u32, name: String, init: Expr },
    Assign(Target, Expr),
    If(Expr, Vec<Stmt>, Option<Vec<Stmt>>),
    While(Expr, Vec<Stmt>),
    Return(Option<Expr>),
    Expr(Expr),
    Assert(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    /// Names of every local slot; the first `params.len()` slots are the parameters.
    pub slots: Vec<String>,
    pub node_count: u32,
}

impl FunctionDef {
    pub fn is_test(&self) -> bool {
        is_test_name(&self.name)
    }
}

pub fn is_test_name(name: &str) -> bool {
    name.starts_with("test_")
}

/// A parsed Mini program. Immutable after parsing; mutants are separate views
/// that share every untouched function through `Arc`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub globals: Vec<(String, Datum)>,
    pub functions: BTreeMap<String, Arc<FunctionDef>>,
    pub tests: Vec<String>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.get(name).map(|f| f.as_ref())
    }

    pub fn global_slot(&self, name: &str) -> Option<usize> {
        self.globals.iter().position(|(g, _)| g == name)
    }

    pub fn global_names(&self) -> impl Iterator<Item = &str> {
        self.globals.iter().map(|(g, _)| g.as_str())
    }

    /// FNV-1a-64 of the canonical pretty-printed source.
    pub fn fingerprint(&self) -> u64 {
        crate::hash::fnv1a64(super::printer::print_program(self).as_bytes())
    }
}

/// Assigns contiguous preorder ids to every statement and expression.
pub(crate) fn number_function(body: &mut [Stmt]) -> u32 {
    let mut next = 0;
    for s in body.iter_mut() {
        number_stmt(s, &mut next);
    }
    next
}

fn number_stmt(s: &mut Stmt, next: &mut u32) {
    s.id = *next;
    *next += 1;
    match &mut s.kind {
        StmtKind::Let { init, .. } => number_expr(init, next),
        StmtKind::Assign(target, value) => {
            if let Target::Index(base, idx) = target {
                number_expr(base, next);
                number_expr(idx, next);
            }
            number_expr(value, next);
        }
        StmtKind::If(cond, then, els) => {
            number_expr(cond, next);
            for s in then.iter_mut() {
                number_stmt(s, next);
            }
            if let Some(els) = els {
                for s in els.iter_mut() {
                    number_stmt(s, next);
                }
            }
        }
        StmtKind::While(cond, body) => {
            number_expr(cond, next);
            for s in body.iter_mut() {
                number_stmt(s, next);
            }
        }
        StmtKind::Return(e) => {
            if let Some(e) = e {
                number_expr(e, next);
            }
        }
        StmtKind::Expr(e) | StmtKind::Assert(e) => number_expr(e, next),
    }
}

fn number_expr(e: &mut Expr, next: &mut u32) {
    e.id = *next;
    *next += 1;
    match &mut e.kind {
        ExprKind::Array(items) => items.iter_mut().for_each(|i| number_expr(i, next)),
        ExprKind::Binary(_, l, r) | ExprKind::Index(l, r) => {
            number_expr(l, next);
            number_expr(r, next);
        }
        ExprKind::Unary(_, inner) => number_expr(inner, next),
        ExprKind::Call(_, args) => args.iter_mut().for_each(|a| number_expr(a, next)),
        _ => {}
    }
}

/// Preorder visit of every expression reachable from a statement list,
/// including assignment targets.
pub fn visit_exprs<'a>(body: &'a [Stmt], f: &mut dyn FnMut(&'a Expr)) {
    for s in body {
        visit_stmt_exprs(s, f);
    }
}

fn visit_stmt_exprs<'a>(s: &'a Stmt, f: &mut dyn FnMut(&'a Expr)) {
    match &s.kind {
        StmtKind::Let { init, .. } => visit_expr(init, f),
        StmtKind::Assign(target, value) => {
            if let Target::Index(base, idx) = target {
                visit_expr(base, f);
                visit_expr(idx, f);
            }
            visit_expr(value, f);
        }
        StmtKind::If(cond, then, els) => {
            visit_expr(cond, f);
            visit_exprs(then, f);
            if let Some(els) = els {
                visit_exprs(els, f);
            }
        }
        StmtKind::While(cond, body) => {
            visit_expr(cond, f);
            visit_exprs(body, f);
        }
        StmtKind::Return(e) => {
            if let Some(e) = e {
                visit_expr(e, f);
            }
        }
        StmtKind::Expr(e) | StmtKind::Assert(e) => visit_expr(e, f),
    }
}

pub fn visit_expr<'a>(e: &'a Expr, f: &mut dyn FnMut(&'a Expr)) {
    f(e);
    match &e.kind {
        ExprKind::Array(items) => items.iter().for_each(|i| visit_expr(i, f)),
        ExprKind::Binary(_, l, r) | ExprKind::Index(l, r) => {
            visit_expr(l, f);
            visit_expr(r, f);
        }
        ExprKind::Unary(_, inner) => visit_expr(inner, f),
        ExprKind::Call(_, args) => args.iter().for_each(|a| visit_expr(a, f)),
        _ => {}
    }
}

/// Preorder visit of every statement, descending into nested blocks.
pub fn visit_stmts<'a>(body: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for s in body {
        f(s);
        match &s.kind {
            StmtKind::If(_, then, els) => {
                visit_stmts(then, f);
                if let Some(els) = els {
                    visit_stmts(els, f);
                }
            }
            StmtKind::While(_, body) => visit_stmts(body, f),
            _ => {}
        }
    }
}
