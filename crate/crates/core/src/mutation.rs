//! Mutant generation and application over Mini ASTs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{
    print_expr, print_stmt, BinOp, Builtin, Callee, Expr, ExprKind, FunctionDef, NodeId, Program, Stmt, StmtKind,
    Target, UnOp,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MutationError {
    #[error("mutant {id} ({op} at {function}#{node}) does not match the program")]
    StaleMutant { id: u32, op: Operator, function: String, node: NodeId },
    #[error("unknown mutation operator `{0}`")]
    UnknownOperator(String),
}

/// The operator set, in pool order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operator {
    Aor,
    Ror,
    Lcr,
    UoiNeg,
    Rvm,
    Crp,
    Aod,
    Svr,
}

impl Operator {
    pub const ALL: [Operator; 8] = [
        Operator::Aor,
        Operator::Ror,
        Operator::Lcr,
        Operator::UoiNeg,
        Operator::Rvm,
        Operator::Crp,
        Operator::Aod,
        Operator::Svr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operator::Aor => "AOR",
            Operator::Ror => "ROR",
            Operator::Lcr => "LCR",
            Operator::UoiNeg => "UOI-NEG",
            Operator::Rvm => "RVM",
            Operator::Crp => "CRP",
            Operator::Aod => "AOD",
            Operator::Svr => "SVR",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Operator {
    type Err = MutationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Operator::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| MutationError::UnknownOperator(s.to_string()))
    }
}

/// What replaces the targeted node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Replacement {
    /// Swap the operator of a binary expression.
    Op(BinOp),
    /// Wrap a condition in `!( )`.
    Negate,
    /// Replace a returned expression by a literal.
    Literal(ExprKind),
    /// Replace an integer literal.
    Int(i64),
    /// `-e` becomes `e`.
    Unwrap,
    /// Remove the statement.
    Delete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mutant {
    pub id: u32,
    pub op: Operator,
    pub function: String,
    pub node: NodeId,
    pub replacement: Replacement,
    pub before: String,
    pub after: String,
}

impl Mutant {
    pub fn record(&self) -> MutantRecord {
        MutantRecord {
            id: self.id,
            op: self.op.name().to_string(),
            function: self.function.clone(),
            node: self.node,
            before: self.before.clone(),
            after: self.after.clone(),
        }
    }
}

/// Wire form used by `mutants.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantRecord {
    pub id: u32,
    pub op: String,
    #[serde(rename = "fn")]
    pub function: String,
    pub node: NodeId,
    pub before: String,
    pub after: String,
}

pub fn mutated_function(m: &Mutant) -> &str {
    &m.function
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MutantPool {
    pub mutants: Vec<Mutant>,
    pub by_function: BTreeMap<String, Vec<u32>>,
}

impl MutantPool {
    fn new(mutants: Vec<Mutant>) -> MutantPool {
        let mut by_function: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for m in &mutants {
            by_function.entry(m.function.clone()).or_default().push(m.id);
        }
        MutantPool { mutants, by_function }
    }

    pub fn len(&self) -> usize {
        self.mutants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mutants.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Mutant> {
        self.mutants.get(id as usize).filter(|m| m.id == id)
    }

    pub fn records(&self) -> Vec<MutantRecord> {
        self.mutants.iter().map(Mutant::record).collect()
    }

    /// Rebuilds a pool from its wire form, checking every record against a
    /// fresh generation over `program`.
    pub fn from_records(program: &Program, records: &[MutantRecord]) -> Result<MutantPool, MutationError> {
        let fresh = generate_mutants(program);
        let mut out = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let op: Operator = r.op.parse()?;
            let stale = || MutationError::StaleMutant { id: r.id, op, function: r.function.clone(), node: r.node };
            let m = fresh
                .mutants
                .iter()
                .find(|m| m.op == op && m.function == r.function && m.node == r.node && m.after == r.after)
                .filter(|m| m.before == r.before)
                .ok_or_else(stale)?;
            out.push(Mutant { id: i as u32, ..m.clone() });
        }
        Ok(MutantPool::new(out))
    }
}

fn aor(op: BinOp) -> Option<BinOp> {
    Some(match op {
        BinOp::Add => BinOp::Sub,
        BinOp::Sub => BinOp::Add,
        BinOp::Mul => BinOp::Div,
        BinOp::Div => BinOp::Mul,
        BinOp::Rem => BinOp::Mul,
        _ => return None,
    })
}

/// Boundary neighbour first, then negation.
fn ror(op: BinOp) -> Vec<BinOp> {
    match op {
        BinOp::Eq => vec![BinOp::Ne],
        BinOp::Ne => vec![BinOp::Eq],
        BinOp::Lt => vec![BinOp::Le, BinOp::Ge],
        BinOp::Le => vec![BinOp::Lt, BinOp::Gt],
        BinOp::Gt => vec![BinOp::Ge, BinOp::Le],
        BinOp::Ge => vec![BinOp::Gt, BinOp::Lt],
        _ => Vec::new(),
    }
}

fn lcr(op: BinOp) -> Option<BinOp> {
    match op {
        BinOp::And => Some(BinOp::Or),
        BinOp::Or => Some(BinOp::And),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StaticType {
    Int,
    Bool,
    Str,
    Arr,
    Other,
}

fn static_type(e: &Expr) -> StaticType {
    match &e.kind {
        ExprKind::Int(_) => StaticType::Int,
        ExprKind::Bool(_) => StaticType::Bool,
        ExprKind::Str(_) => StaticType::Str,
        ExprKind::Array(_) => StaticType::Arr,
        ExprKind::FnRef(_) => StaticType::Other,
        ExprKind::Unary(UnOp::Neg, _) => StaticType::Int,
        ExprKind::Unary(UnOp::Not, _) => StaticType::Bool,
        ExprKind::Binary(op, _, _) if op.is_relational() || op.is_logical() => StaticType::Bool,
        ExprKind::Binary(BinOp::Add, l, r) => {
            if static_type(l) == StaticType::Str || static_type(r) == StaticType::Str {
                StaticType::Str
            } else {
                StaticType::Int
            }
        }
        ExprKind::Binary(..) => StaticType::Int,
        ExprKind::Call(Callee::Builtin(b), _) => match b {
            Builtin::Push | Builtin::Print => StaticType::Other,
            _ => StaticType::Int,
        },
        // Unknown statically: treated as Int.
        ExprKind::Local { .. } | ExprKind::Global { .. } | ExprKind::Index(..) | ExprKind::Call(..) => StaticType::Int,
    }
}

/// The literal a returned expression is replaced by, or None when RVM does not apply.
fn rvm_literal(e: &Expr) -> Option<ExprKind> {
    match (static_type(e), &e.kind) {
        (StaticType::Int, ExprKind::Int(0)) => Some(ExprKind::Int(1)),
        (StaticType::Int, _) => Some(ExprKind::Int(0)),
        (StaticType::Bool, ExprKind::Bool(false)) => Some(ExprKind::Bool(true)),
        (StaticType::Bool, _) => Some(ExprKind::Bool(false)),
        (StaticType::Str, ExprKind::Str(s)) if s.is_empty() => None,
        (StaticType::Str, _) => Some(ExprKind::Str(String::new())),
        (StaticType::Arr, ExprKind::Array(items)) if items.is_empty() => None,
        (StaticType::Arr, _) => Some(ExprKind::Array(Vec::new())),
        (StaticType::Other, _) => None,
    }
}

struct Site {
    op: Operator,
    node: NodeId,
    replacement: Replacement,
}

fn collect_block(stmts: &[Stmt], out: &mut Vec<Site>) {
    for s in stmts {
        collect_stmt(s, out);
    }
}

fn collect_stmt(s: &Stmt, out: &mut Vec<Site>) {
    match &s.kind {
        StmtKind::Let { init, .. } => collect_expr(init, out),
        StmtKind::Assign(target, value) => {
            out.push(Site { op: Operator::Svr, node: s.id, replacement: Replacement::Delete });
            if let Target::Index(base, idx) = target {
                collect_expr(base, out);
                collect_expr(idx, out);
            }
            collect_expr(value, out);
        }
        StmtKind::If(cond, then, els) => {
            out.push(Site { op: Operator::UoiNeg, node: cond.id, replacement: Replacement::Negate });
            collect_expr(cond, out);
            collect_block(then, out);
            if let Some(els) = els {
                collect_block(els, out);
            }
        }
        StmtKind::While(cond, body) => {
            out.push(Site { op: Operator::UoiNeg, node: cond.id, replacement: Replacement::Negate });
            collect_expr(cond, out);
            collect_block(body, out);
        }
        StmtKind::Return(Some(e)) => {
            if let Some(lit) = rvm_literal(e) {
                out.push(Site { op: Operator::Rvm, node: e.id, replacement: Replacement::Literal(lit) });
            }
            collect_expr(e, out);
        }
        StmtKind::Return(None) => {}
        StmtKind::Expr(e) | StmtKind::Assert(e) => collect_expr(e, out),
    }
}

fn collect_expr(e: &Expr, out: &mut Vec<Site>) {
    match &e.kind {
        ExprKind::Int(k) => {
            if let Some(next) = k.checked_add(1) {
                out.push(Site { op: Operator::Crp, node: e.id, replacement: Replacement::Int(next) });
            }
        }
        ExprKind::Binary(op, l, r) => {
            if let Some(to) = aor(*op) {
                out.push(Site { op: Operator::Aor, node: e.id, replacement: Replacement::Op(to) });
            }
            for to in ror(*op) {
                out.push(Site { op: Operator::Ror, node: e.id, replacement: Replacement::Op(to) });
            }
            if let Some(to) = lcr(*op) {
                out.push(Site { op: Operator::Lcr, node: e.id, replacement: Replacement::Op(to) });
            }
            collect_expr(l, out);
            collect_expr(r, out);
        }
        ExprKind::Unary(op, inner) => {
            if *op == UnOp::Neg {
                out.push(Site { op: Operator::Aod, node: e.id, replacement: Replacement::Unwrap });
            }
            collect_expr(inner, out);
        }
        ExprKind::Array(items) => items.iter().for_each(|i| collect_expr(i, out)),
        ExprKind::Index(b, i) => {
            collect_expr(b, out);
            collect_expr(i, out);
        }
        ExprKind::Call(_, args) => args.iter().for_each(|a| collect_expr(a, out)),
        ExprKind::Bool(_) | ExprKind::Str(_) | ExprKind::Local { .. } | ExprKind::Global { .. } | ExprKind::FnRef(_) => {}
    }
}

/// Every applicable (operator, node) mutant of every non-test function,
/// ordered by function name, node id, then operator.
pub fn generate_mutants(program: &Program) -> MutantPool {
    let mut mutants = Vec::new();
    for f in program.functions.values().filter(|f| !f.is_test()) {
        let mut sites = Vec::new();
        collect_block(&f.body, &mut sites);
        // Stable: keeps the per-operator replacement order.
        sites.sort_by_key(|s| (s.node, s.op));
        for s in sites {
            let (before, after) = describe(f, s.node, &s.replacement).expect("collected site exists");
            mutants.push(Mutant {
                id: mutants.len() as u32,
                op: s.op,
                function: f.name.clone(),
                node: s.node,
                replacement: s.replacement,
                before,
                after,
            });
        }
    }
    MutantPool::new(mutants)
}

fn describe(f: &FunctionDef, node: NodeId, r: &Replacement) -> Option<(String, String)> {
    if *r == Replacement::Delete {
        let s = find_stmt(&f.body, node)?;
        return Some((print_stmt(s), String::new()));
    }
    let e = find_expr(&f.body, node)?;
    let mut m = e.clone();
    rewrite(&mut m, r, f.node_count).ok()?;
    Some((print_expr(e), print_expr(&m)))
}

fn find_stmt(stmts: &[Stmt], id: NodeId) -> Option<&Stmt> {
    let mut found = None;
    crate::lang::visit_stmts(stmts, &mut |s| {
        if s.id == id && found.is_none() {
            found = Some(s);
        }
    });
    found
}

fn find_expr(stmts: &[Stmt], id: NodeId) -> Option<&Expr> {
    let mut found = None;
    crate::lang::visit_exprs(stmts, &mut |e| {
        if e.id == id && found.is_none() {
            found = Some(e);
        }
    });
    found
}

fn find_expr_mut(stmts: &mut [Stmt], id: NodeId) -> Option<&mut Expr> {
    stmts.iter_mut().find_map(|s| stmt_expr_mut(s, id))
}

fn stmt_expr_mut(s: &mut Stmt, id: NodeId) -> Option<&mut Expr> {
    match &mut s.kind {
        StmtKind::Let { init, .. } => expr_mut(init, id),
        StmtKind::Assign(target, value) => {
            if let Target::Index(base, idx) = target {
                if let Some(e) = expr_mut(base, id).or_else(|| expr_mut(idx, id)) {
                    return Some(e);
                }
            }
            expr_mut(value, id)
        }
        StmtKind::If(cond, then, els) => expr_mut(cond, id)
            .or_else(|| find_expr_mut(then, id))
            .or_else(|| els.as_mut().and_then(|b| find_expr_mut(b, id))),
        StmtKind::While(cond, body) => expr_mut(cond, id).or_else(|| find_expr_mut(body, id)),
        StmtKind::Return(e) => e.as_mut().and_then(|e| expr_mut(e, id)),
        StmtKind::Expr(e) | StmtKind::Assert(e) => expr_mut(e, id),
    }
}

fn expr_mut(e: &mut Expr, id: NodeId) -> Option<&mut Expr> {
    if e.id == id {
        return Some(e);
    }
    match &mut e.kind {
        ExprKind::Array(items) | ExprKind::Call(_, items) => items.iter_mut().find_map(|i| expr_mut(i, id)),
        ExprKind::Binary(_, l, r) | ExprKind::Index(l, r) => {
            if l.id <= id && id < r.id {
                expr_mut(l, id)
            } else {
                expr_mut(r, id)
            }
        }
        ExprKind::Unary(_, inner) => expr_mut(inner, id),
        _ => None,
    }
}

/// Removes the statement with the given id from whichever block holds it.
fn delete_stmt(stmts: &mut Vec<Stmt>, id: NodeId) -> bool {
    if let Some(i) = stmts.iter().position(|s| s.id == id) {
        stmts.remove(i);
        return true;
    }
    stmts.iter_mut().any(|s| match &mut s.kind {
        StmtKind::If(_, then, els) => delete_stmt(then, id) || els.as_mut().is_some_and(|b| delete_stmt(b, id)),
        StmtKind::While(_, body) => delete_stmt(body, id),
        _ => false,
    })
}

/// Rewrites one expression node in place. `fresh` is an unused node id.
fn rewrite(e: &mut Expr, r: &Replacement, fresh: NodeId) -> Result<(), ()> {
    match (r, &mut e.kind) {
        (Replacement::Op(to), ExprKind::Binary(op, _, _)) => {
            let compatible = (op.is_arithmetic() && to.is_arithmetic())
                || (op.is_relational() && to.is_relational())
                || (op.is_logical() && to.is_logical());
            if !compatible || op == to {
                return Err(());
            }
            *op = *to;
        }
        (Replacement::Negate, _) => {
            let inner = std::mem::replace(e, Expr { id: fresh, kind: ExprKind::Bool(false) });
            *e = Expr { id: inner.id, kind: ExprKind::Unary(UnOp::Not, Box::new(Expr { id: fresh, ..inner })) };
        }
        (Replacement::Literal(lit), _) => e.kind = lit.clone(),
        (Replacement::Int(k), ExprKind::Int(v)) => *v = *k,
        (Replacement::Unwrap, ExprKind::Unary(UnOp::Neg, inner)) => {
            let inner = std::mem::replace(inner.as_mut(), Expr { id: fresh, kind: ExprKind::Bool(false) });
            *e = inner;
        }
        _ => return Err(()),
    }
    Ok(())
}

/// A view of `program` with the mutant applied to its function; every other
/// function is shared with the original.
pub fn apply_mutant(program: &Program, m: &Mutant) -> Result<Program, MutationError> {
    let stale = || MutationError::StaleMutant { id: m.id, op: m.op, function: m.function.clone(), node: m.node };
    let original = program.function(&m.function).ok_or_else(stale)?;
    if original.is_test() || describe(original, m.node, &m.replacement) != Some((m.before.clone(), m.after.clone())) {
        return Err(stale());
    }
    let mut f = original.clone();
    let fresh = f.node_count;
    match &m.replacement {
        Replacement::Delete => {
            if !delete_stmt(&mut f.body, m.node) {
                return Err(stale());
            }
        }
        r => {
            let e = find_expr_mut(&mut f.body, m.node).ok_or_else(stale)?;
            rewrite(e, r, fresh).map_err(|_| stale())?;
            if matches!(r, Replacement::Negate) {
                f.node_count += 1;
            }
        }
    }
    let mut view = program.clone();
    view.functions.insert(m.function.clone(), Arc::new(f));
    Ok(view)
}
