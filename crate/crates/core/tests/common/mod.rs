//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

use memomut_core::analysis::{analyze, Analysis, CallGraph, DeterminacyOptions};
use memomut_core::lang::{
    load_project, print_expr, run_test, visit_exprs, visit_stmts, BinOp, Builtin, Callee, Clock, ExecConfig, Expr,
    ExprKind, FunctionDef, NoHooks, Program, StmtKind, UnOp,
};
use memomut_core::memo::{build_memo_db, MemoDB, MemoOptions, Shapes};
use memomut_core::mutation::{apply_mutant, generate_mutants, MutantPool};
use memomut_core::profiler::{profile_suite, test_seed, ExpensivenessCriterion, Limit, Profile, TauMode};
use memomut_core::runner::RunConfig;

pub const SEED: u64 = 42;

pub fn corpus_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn corpus_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(corpus_root())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

pub fn load(name: &str) -> Program {
    load_project(&corpus_root().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn exec() -> ExecConfig {
    ExecConfig { seed: SEED, clock: Clock::Fake, ..ExecConfig::default() }
}

/// Memoizes anything that runs at all.
pub fn eager_criterion() -> ExpensivenessCriterion {
    ExpensivenessCriterion { tau_ns: 1, limit: Limit::Percent(100.0), tau_mode: TauMode::Mean }
}

pub fn fidelity() -> DeterminacyOptions {
    DeterminacyOptions { global_taint: false, print_is_nondeterministic: false }
}

pub struct Fixture {
    pub program: Program,
    pub analysis: Analysis,
    pub profile: Profile,
    pub shapes: Shapes,
    pub db: MemoDB,
    pub pool: MutantPool,
}

pub fn fixture_with(name: &str, det: DeterminacyOptions, crit: ExpensivenessCriterion) -> Fixture {
    let program = load(name);
    let analysis = analyze(&program, det);
    let profile = profile_suite(&program, exec(), 1).unwrap();
    let shapes = Shapes::new(&program, &analysis.effects);
    let opts = MemoOptions { exec: exec(), miss_tolerance: 0 };
    let db = build_memo_db(&program, &analysis, &profile, &shapes, crit, &opts).unwrap();
    let pool = generate_mutants(&program);
    Fixture { program, analysis, profile, shapes, db, pool }
}

pub fn fixture(name: &str) -> Fixture {
    fixture_with(name, DeterminacyOptions::default(), eager_criterion())
}

pub fn run_config(memo: bool) -> RunConfig {
    RunConfig { memo, exec: exec(), ..RunConfig::default() }
}

/// Closure by breadth-first search from each node.
pub fn bfs_closure(cg: &CallGraph) -> BTreeMap<String, BTreeSet<String>> {
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (a, _, b) in &cg.edges {
        adj.entry(a.as_str()).or_default().push(b.as_str());
    }
    let mut out = BTreeMap::new();
    for start in &cg.nodes {
        let mut seen = BTreeSet::from([start.clone()]);
        let mut queue = VecDeque::from([start.as_str()]);
        while let Some(v) = queue.pop_front() {
            for &w in adj.get(v).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(w.to_string()) {
                    queue.push_back(w);
                }
            }
        }
        out.insert(start.clone(), seen);
    }
    out
}

/// (function, node, operator, before, after) for every mutant the operator
/// table admits, found by checking each node id against each operator.
pub type MutantKey = (String, u32, String, String, String);

const AOR: &[(BinOp, BinOp)] =
    &[(BinOp::Add, BinOp::Sub), (BinOp::Sub, BinOp::Add), (BinOp::Mul, BinOp::Div), (BinOp::Div, BinOp::Mul), (BinOp::Rem, BinOp::Mul)];
const ROR: &[(BinOp, BinOp)] = &[
    (BinOp::Lt, BinOp::Le),
    (BinOp::Le, BinOp::Lt),
    (BinOp::Gt, BinOp::Ge),
    (BinOp::Ge, BinOp::Gt),
    (BinOp::Eq, BinOp::Ne),
    (BinOp::Ne, BinOp::Eq),
    (BinOp::Lt, BinOp::Ge),
    (BinOp::Le, BinOp::Gt),
    (BinOp::Gt, BinOp::Le),
    (BinOp::Ge, BinOp::Lt),
];
const LCR: &[(BinOp, BinOp)] = &[(BinOp::And, BinOp::Or), (BinOp::Or, BinOp::And)];

#[derive(PartialEq)]
enum Ty {
    Int,
    Bool,
    Str,
    Arr,
    None,
}

fn ty(e: &Expr) -> Ty {
    use BinOp::*;
    match &e.kind {
        ExprKind::Bool(_) | ExprKind::Unary(UnOp::Not, _) => Ty::Bool,
        ExprKind::Binary(Lt | Le | Gt | Ge | Eq | Ne | And | Or, _, _) => Ty::Bool,
        ExprKind::Str(_) => Ty::Str,
        ExprKind::Binary(Add, l, r) if ty(l) == Ty::Str || ty(r) == Ty::Str => Ty::Str,
        ExprKind::Array(_) => Ty::Arr,
        ExprKind::FnRef(_) => Ty::None,
        ExprKind::Call(Callee::Builtin(Builtin::Push | Builtin::Print), _) => Ty::None,
        _ => Ty::Int,
    }
}

fn printed(kind: ExprKind) -> String {
    print_expr(&Expr { id: 0, kind })
}

fn oracle_function(f: &FunctionDef, out: &mut Vec<MutantKey>) {
    let mut conds = BTreeSet::new();
    let mut returns = BTreeSet::new();
    let mut assigns = BTreeMap::new();
    visit_stmts(&f.body, &mut |s| match &s.kind {
        StmtKind::If(c, _, _) | StmtKind::While(c, _) => {
            conds.insert(c.id);
        }
        StmtKind::Return(Some(e)) => {
            returns.insert(e.id);
        }
        StmtKind::Assign(..) => {
            assigns.insert(s.id, memomut_core::lang::print_stmt(s));
        }
        _ => {}
    });
    let mut exprs = BTreeMap::new();
    visit_exprs(&f.body, &mut |e| {
        exprs.insert(e.id, e);
    });
    let mut push = |node: u32, op: &str, before: String, after: String| {
        out.push((f.name.clone(), node, op.to_string(), before, after));
    };
    for node in 0..f.node_count {
        if let Some(text) = assigns.get(&node) {
            push(node, "SVR", text.clone(), String::new());
        }
        let Some(e) = exprs.get(&node) else { continue };
        let before = print_expr(e);
        if let ExprKind::Binary(op, l, r) = &e.kind {
            for (table, name) in [(AOR, "AOR"), (ROR, "ROR"), (LCR, "LCR")] {
                for (from, to) in table.iter() {
                    if from == op {
                        let after = printed(ExprKind::Binary(*to, l.clone(), r.clone()));
                        push(node, name, before.clone(), after);
                    }
                }
            }
        }
        if conds.contains(&node) {
            let after = printed(ExprKind::Unary(UnOp::Not, Box::new((*e).clone())));
            push(node, "UOI-NEG", before.clone(), after);
        }
        if returns.contains(&node) {
            let lit = match (ty(e), &e.kind) {
                (Ty::Int, ExprKind::Int(0)) => Some(ExprKind::Int(1)),
                (Ty::Int, _) => Some(ExprKind::Int(0)),
                (Ty::Bool, ExprKind::Bool(false)) => Some(ExprKind::Bool(true)),
                (Ty::Bool, _) => Some(ExprKind::Bool(false)),
                (Ty::Str, ExprKind::Str(s)) if s.is_empty() => None,
                (Ty::Str, _) => Some(ExprKind::Str(String::new())),
                (Ty::Arr, ExprKind::Array(v)) if v.is_empty() => None,
                (Ty::Arr, _) => Some(ExprKind::Array(Vec::new())),
                (Ty::None, _) => None,
            };
            if let Some(lit) = lit {
                push(node, "RVM", before.clone(), printed(lit));
            }
        }
        if let ExprKind::Int(k) = e.kind {
            if k < i64::MAX {
                push(node, "CRP", before.clone(), (k + 1).to_string());
            }
        }
        if let ExprKind::Unary(UnOp::Neg, inner) = &e.kind {
            push(node, "AOD", before.clone(), print_expr(inner));
        }
    }
}

pub fn oracle_mutants(program: &Program) -> BTreeSet<MutantKey> {
    let mut out = Vec::new();
    for f in program.functions.values().filter(|f| !f.name.starts_with("test_")) {
        oracle_function(f, &mut out);
    }
    let n = out.len();
    let set: BTreeSet<_> = out.into_iter().collect();
    assert_eq!(set.len(), n, "oracle produced duplicates");
    set
}

pub fn pool_keys(pool: &MutantPool) -> BTreeSet<MutantKey> {
    pool.mutants
        .iter()
        .map(|m| (m.function.clone(), m.node, m.op.to_string(), m.before.clone(), m.after.clone()))
        .collect()
}

/// Killed mutant ids from running every test against every mutant, with the
/// same step budget the runner uses.
pub fn exhaustive_killed(program: &Program, pool: &MutantPool, profile: &Profile, cfg: &RunConfig) -> BTreeSet<u32> {
    let passing: Vec<&String> = program.tests.iter().filter(|t| profile.passed(t)).collect();
    let mut killed = BTreeSet::new();
    for m in &pool.mutants {
        let mutant = apply_mutant(program, m).unwrap();
        for t in &passing {
            let limit = cfg.step_limit(profile.baseline_steps(t));
            let ecfg = ExecConfig { step_limit: limit, seed: test_seed(cfg.exec.seed, t), ..cfg.exec };
            let (outcome, _) = run_test(&mutant, t, &mut NoHooks, ecfg);
            if !outcome.verdict.is_pass() {
                killed.insert(m.id);
                break;
            }
        }
    }
    killed
}
