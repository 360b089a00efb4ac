//! Interprocedural may-read / may-write analysis over globals, plus which
//! array parameters a function may mutate.
//!
//! Arrays are references, so mutation through an alias counts: every local
//! slot carries the set of origins (parameters, globals) its array value may
//! share structure with, and a mutation through the slot is charged to each
//! origin. Origins propagate flow-insensitively through lets, assignments,
//! element reads, array literals, stores into arrays and call returns.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::CallGraph;
use crate::lang::{Builtin, Callee, Expr, ExprKind, FunctionDef, Program, Stmt, StmtKind, Target};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FunctionEffects {
    pub reads: BTreeSet<String>,
    pub writes: BTreeSet<String>,
    pub mutargs: BTreeSet<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SideEffectSummary {
    pub functions: BTreeMap<String, FunctionEffects>,
}

impl SideEffectSummary {
    pub fn get(&self, f: &str) -> Option<&FunctionEffects> {
        self.functions.get(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Origin {
    Param(usize),
    Global(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Summary {
    effects: FunctionEffects,
    /// What the returned value may alias.
    returns: BTreeSet<Origin>,
}

pub fn analyze_side_effects(program: &Program, cg: &CallGraph) -> SideEffectSummary {
    let mut summaries: BTreeMap<String, Summary> =
        program.functions.keys().map(|f| (f.clone(), Summary::default())).collect();
    loop {
        let mut changed = false;
        for f in program.functions.values() {
            let next = summarize(f, cg, &summaries);
            let slot = summaries.get_mut(&f.name).expect("declared function");
            if *slot != next {
                *slot = next;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    SideEffectSummary {
        functions: summaries.into_iter().map(|(f, s)| (f, s.effects)).collect(),
    }
}

fn summarize(f: &FunctionDef, cg: &CallGraph, summaries: &BTreeMap<String, Summary>) -> Summary {
    let mut origins: Vec<BTreeSet<Origin>> = vec![BTreeSet::new(); f.slots.len()];
    for (i, o) in origins.iter_mut().enumerate().take(f.params.len()) {
        o.insert(Origin::Param(i));
    }
    // Local origin sets first, to a fixpoint; effects are collected on the final pass.
    loop {
        let mut cx = Cx { f, cg, summaries, origins: origins.clone(), out: Summary::default() };
        cx.block(&f.body);
        if cx.origins == origins {
            return cx.out;
        }
        origins = cx.origins;
    }
}

struct Cx<'a> {
    f: &'a FunctionDef,
    cg: &'a CallGraph,
    summaries: &'a BTreeMap<String, Summary>,
    origins: Vec<BTreeSet<Origin>>,
    out: Summary,
}

impl Cx<'_> {
    fn block(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn mutate(&mut self, origins: &BTreeSet<Origin>) {
        for o in origins {
            match o {
                Origin::Param(i) => {
                    self.out.effects.mutargs.insert(*i);
                }
                Origin::Global(g) => {
                    self.out.effects.reads.insert(g.clone());
                    self.out.effects.writes.insert(g.clone());
                }
            }
        }
    }

    /// The local slot an lvalue-ish expression is rooted at, if any.
    fn root_slot(e: &Expr) -> Option<u32> {
        match &e.kind {
            ExprKind::Local { slot, .. } => Some(*slot),
            ExprKind::Index(base, _) => Self::root_slot(base),
            _ => None,
        }
    }

    fn store_into(&mut self, container: &Expr, stored: &BTreeSet<Origin>) {
        if let Some(slot) = Self::root_slot(container) {
            self.origins[slot as usize].extend(stored.iter().cloned());
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Let { slot, init, .. } | StmtKind::Assign(Target::Local { slot, .. }, init) => {
                let o = self.expr(init);
                self.origins[*slot as usize].extend(o);
            }
            StmtKind::Assign(Target::Global { name, .. }, value) => {
                self.expr(value);
                self.out.effects.writes.insert(name.clone());
            }
            StmtKind::Assign(Target::Index(base, idx), value) => {
                let b = self.expr(base);
                self.expr(idx);
                let v = self.expr(value);
                self.mutate(&b);
                self.store_into(base, &v);
            }
            StmtKind::If(cond, then, els) => {
                self.expr(cond);
                self.block(then);
                if let Some(els) = els {
                    self.block(els);
                }
            }
            StmtKind::While(cond, body) => {
                self.expr(cond);
                self.block(body);
            }
            StmtKind::Return(e) => {
                if let Some(e) = e {
                    let o = self.expr(e);
                    self.out.returns.extend(o);
                }
            }
            StmtKind::Expr(e) | StmtKind::Assert(e) => {
                self.expr(e);
            }
        }
    }

    fn expr(&mut self, e: &Expr) -> BTreeSet<Origin> {
        match &e.kind {
            ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Str(_) | ExprKind::FnRef(_) => BTreeSet::new(),
            ExprKind::Local { slot, .. } => self.origins[*slot as usize].clone(),
            ExprKind::Global { name, .. } => {
                self.out.effects.reads.insert(name.clone());
                BTreeSet::from([Origin::Global(name.clone())])
            }
            ExprKind::Index(base, idx) => {
                let o = self.expr(base);
                self.expr(idx);
                o
            }
            ExprKind::Array(items) => items.iter().flat_map(|i| self.expr(i)).collect(),
            ExprKind::Binary(_, l, r) => {
                self.expr(l);
                self.expr(r);
                BTreeSet::new()
            }
            ExprKind::Unary(_, inner) => {
                self.expr(inner);
                BTreeSet::new()
            }
            ExprKind::Call(callee, args) => {
                if let Callee::Global { name, .. } = callee {
                    self.out.effects.reads.insert(name.clone());
                }
                let arg_origins: Vec<BTreeSet<Origin>> = args.iter().map(|a| self.expr(a)).collect();
                let targets = self.cg.resolve(&self.f.name, e.id).cloned().unwrap_or_default();
                let mut result = BTreeSet::new();
                for t in &targets {
                    if let Some(s) = self.summaries.get(t) {
                        self.out.effects.reads.extend(s.effects.reads.iter().cloned());
                        self.out.effects.writes.extend(s.effects.writes.iter().cloned());
                        for &j in &s.effects.mutargs {
                            if let Some(o) = arg_origins.get(j) {
                                self.mutate(&o.clone());
                            }
                        }
                        for r in &s.returns {
                            match r {
                                Origin::Param(j) => {
                                    if let Some(o) = arg_origins.get(*j) {
                                        result.extend(o.iter().cloned());
                                    }
                                }
                                Origin::Global(g) => {
                                    result.insert(Origin::Global(g.clone()));
                                }
                            }
                        }
                    } else if t == Builtin::Push.name() && args.len() == 2 {
                        self.mutate(&arg_origins[0].clone());
                        self.store_into(&args[0], &arg_origins[1].clone());
                    }
                }
                result
            }
        }
    }
}
