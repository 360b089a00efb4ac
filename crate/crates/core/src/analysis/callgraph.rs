use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::lang::{Builtin, Callee, Datum, ExprKind, FunctionDef, NodeId, Program, Stmt, StmtKind, Target};

/// Call site key: enclosing function and the call expression's node id.
pub type Site = (String, NodeId);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, NodeId, String)>,
    pub sites: BTreeMap<Site, BTreeSet<String>>,
    pub warnings: Vec<String>,
}

impl CallGraph {
    /// Graph with the given nodes and site-less edges; used for synthetic graphs.
    pub fn from_edges<'a>(
        nodes: impl IntoIterator<Item = &'a str>,
        edges: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> CallGraph {
        let mut cg = CallGraph { nodes: nodes.into_iter().map(str::to_string).collect(), ..Default::default() };
        for (i, (a, b)) in edges.into_iter().enumerate() {
            cg.nodes.insert(a.to_string());
            cg.nodes.insert(b.to_string());
            cg.edges.insert((a.to_string(), i as NodeId, b.to_string()));
        }
        cg
    }

    pub fn successors(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut succ: BTreeMap<&str, BTreeSet<&str>> =
            self.nodes.iter().map(|n| (n.as_str(), BTreeSet::new())).collect();
        for (caller, _, callee) in &self.edges {
            succ.entry(caller.as_str()).or_default().insert(callee.as_str());
        }
        succ
    }

    pub fn callees_of(&self, f: &str) -> BTreeSet<&str> {
        self.edges
            .iter()
            .filter(|(c, _, _)| c == f)
            .map(|(_, _, callee)| callee.as_str())
            .collect()
    }

    pub fn resolve(&self, function: &str, site: NodeId) -> Option<&BTreeSet<String>> {
        self.sites.get(&(function.to_string(), site))
    }

    /// Distinct (caller, callee) pairs, sorted.
    pub fn pairs(&self) -> BTreeSet<(&str, &str)> {
        self.edges.iter().map(|(a, _, b)| (a.as_str(), b.as_str())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum FlowVar {
    Local(String, u32),
    Global(u32),
    ArrCell,
    Ret(String),
}

/// Context-insensitive flow sets of function references, one per variable,
/// one per global, one shared by every array cell, one per function return.
#[derive(Default)]
struct Flows {
    sets: HashMap<FlowVar, BTreeSet<String>>,
    changed: bool,
}

impl Flows {
    fn get(&self, v: &FlowVar) -> BTreeSet<String> {
        self.sets.get(v).cloned().unwrap_or_default()
    }

    fn add(&mut self, v: FlowVar, items: &BTreeSet<String>) {
        if items.is_empty() {
            return;
        }
        let set = self.sets.entry(v).or_default();
        for i in items {
            if set.insert(i.clone()) {
                self.changed = true;
            }
        }
    }
}

fn seed_datum(d: &Datum, out: &mut BTreeSet<String>) {
    match d {
        Datum::FnRef(f) => {
            out.insert(f.clone());
        }
        Datum::Arr(items) => items.iter().for_each(|i| seed_datum(i, out)),
        _ => {}
    }
}

/// Resolves direct calls syntactically and indirect calls with a 0-CFA fixpoint.
pub fn build_call_graph(program: &Program) -> CallGraph {
    let mut flows = Flows::default();
    for (slot, (_, init)) in program.globals.iter().enumerate() {
        let mut top = BTreeSet::new();
        match init {
            Datum::FnRef(f) => {
                top.insert(f.clone());
            }
            Datum::Arr(items) => {
                let mut cells = BTreeSet::new();
                items.iter().for_each(|i| seed_datum(i, &mut cells));
                flows.add(FlowVar::ArrCell, &cells);
            }
            _ => {}
        }
        flows.add(FlowVar::Global(slot as u32), &top);
    }

    loop {
        flows.changed = false;
        for f in program.functions.values() {
            let mut cx = FlowCx { program, func: f, flows: &mut flows, sites: None };
            cx.block(&f.body);
        }
        if !flows.changed {
            break;
        }
    }

    let mut sites = BTreeMap::new();
    for f in program.functions.values() {
        let mut cx = FlowCx { program, func: f, flows: &mut flows, sites: Some(&mut sites) };
        cx.block(&f.body);
    }

    let mut cg = CallGraph::default();
    cg.nodes.extend(program.functions.keys().cloned());
    cg.nodes.extend(Builtin::ALL.iter().map(|b| b.name().to_string()));
    for ((caller, site), (indirect, callees)) in sites {
        if indirect && callees.is_empty() {
            cg.warnings.push(format!("indirect call at {caller}#{site} has no resolved targets"));
        }
        for callee in &callees {
            cg.edges.insert((caller.clone(), site, callee.clone()));
        }
        cg.sites.insert((caller, site), callees);
    }
    cg
}

type SiteMap = BTreeMap<Site, (bool, BTreeSet<String>)>;

struct FlowCx<'a> {
    program: &'a Program,
    func: &'a FunctionDef,
    flows: &'a mut Flows,
    sites: Option<&'a mut SiteMap>,
}

impl FlowCx<'_> {
    fn local(&self, slot: u32) -> FlowVar {
        FlowVar::Local(self.func.name.clone(), slot)
    }

    fn block(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Let { slot, init, .. } | StmtKind::Assign(Target::Local { slot, .. }, init) => {
                let v = self.expr(init);
                self.flows.add(self.local(*slot), &v);
            }
            StmtKind::Assign(Target::Global { slot, .. }, value) => {
                let v = self.expr(value);
                self.flows.add(FlowVar::Global(*slot), &v);
            }
            StmtKind::Assign(Target::Index(base, idx), value) => {
                self.expr(base);
                self.expr(idx);
                let v = self.expr(value);
                self.flows.add(FlowVar::ArrCell, &v);
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
                    let v = self.expr(e);
                    self.flows.add(FlowVar::Ret(self.func.name.clone()), &v);
                }
            }
            StmtKind::Expr(e) | StmtKind::Assert(e) => {
                self.expr(e);
            }
        }
    }

    /// Returns the set of functions the expression's value may refer to.
    fn expr(&mut self, e: &crate::lang::Expr) -> BTreeSet<String> {
        match &e.kind {
            ExprKind::FnRef(f) => BTreeSet::from([f.clone()]),
            ExprKind::Local { slot, .. } => self.flows.get(&self.local(*slot)),
            ExprKind::Global { slot, .. } => self.flows.get(&FlowVar::Global(*slot)),
            ExprKind::Index(base, idx) => {
                self.expr(base);
                self.expr(idx);
                self.flows.get(&FlowVar::ArrCell)
            }
            ExprKind::Array(items) => {
                for item in items {
                    let v = self.expr(item);
                    self.flows.add(FlowVar::ArrCell, &v);
                }
                BTreeSet::new()
            }
            ExprKind::Binary(_, l, r) => {
                self.expr(l);
                self.expr(r);
                BTreeSet::new()
            }
            ExprKind::Unary(_, inner) => {
                self.expr(inner);
                BTreeSet::new()
            }
            ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Str(_) => BTreeSet::new(),
            ExprKind::Call(callee, args) => {
                let arg_flows: Vec<BTreeSet<String>> = args.iter().map(|a| self.expr(a)).collect();
                let (indirect, targets) = match callee {
                    Callee::Direct(f) => (false, BTreeSet::from([f.clone()])),
                    Callee::Builtin(b) => (false, BTreeSet::from([b.name().to_string()])),
                    Callee::Local { slot, .. } => (true, self.flows.get(&self.local(*slot))),
                    Callee::Global { slot, .. } => (true, self.flows.get(&FlowVar::Global(*slot))),
                };
                let mut result = BTreeSet::new();
                for target in &targets {
                    if let Some(g) = self.program.function(target) {
                        for (j, flow) in arg_flows.iter().enumerate().take(g.params.len()) {
                            self.flows.add(FlowVar::Local(g.name.clone(), j as u32), flow);
                        }
                        result.extend(self.flows.get(&FlowVar::Ret(g.name.clone())));
                    } else if target == Builtin::Push.name() {
                        if let Some(v) = arg_flows.get(1) {
                            self.flows.add(FlowVar::ArrCell, v);
                        }
                    }
                }
                if let Some(sites) = self.sites.as_deref_mut() {
                    sites.insert((self.func.name.clone(), e.id), (indirect, targets));
                }
                result
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    fn cg(src: &str) -> CallGraph {
        build_call_graph(&parse(src).unwrap())
    }

    fn targets(cg: &CallGraph, f: &str) -> Vec<BTreeSet<String>> {
        cg.sites.iter().filter(|((c, _), _)| c == f).map(|(_, t)| t.clone()).collect()
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn direct_edge() {
        let g = cg("fn a(){ b(); } fn b(){}");
        assert!(g.pairs().contains(&("a", "b")));
        assert!(g.nodes.contains("rand"));
    }

    #[test]
    fn only_flowing_reference_resolves() {
        let g = cg("fn a(){ let v=&b; v(); } fn b(){} fn c(){}");
        assert_eq!(targets(&g, "a"), vec![set(&["b"])]);
    }

    #[test]
    fn parameter_flows_merge_across_contexts() {
        let g = cg("fn a(p){ p(); } fn m(){ a(&b); a(&c); } fn b(){} fn c(){}");
        assert_eq!(targets(&g, "a"), vec![set(&["b", "c"])]);
    }

    #[test]
    fn flows_through_returns_globals_and_arrays() {
        let g = cg("global H = &b;
            fn pick(){ return &c; }
            fn a(){ let f = pick(); f(); }
            fn d(){ H(); let t = [&e]; let g = t[0]; g(); }
            fn b(){} fn c(){} fn e(){}");
        assert_eq!(targets(&g, "a"), vec![set(&["pick"]), set(&["c"])]);
        let d = targets(&g, "d");
        assert_eq!(d[0], set(&["b"]));
        assert_eq!(d[1], set(&["e"]));
    }

    #[test]
    fn empty_resolution_warns() {
        let g = cg("fn a(p){ p(); }");
        assert_eq!(g.warnings.len(), 1);
        assert!(g.pairs().is_empty());
    }

    #[test]
    fn builtin_references() {
        let g = cg("fn a(xs){ let f = &push; f(xs, &b); let h = xs[0]; h(); } fn b(){}");
        assert_eq!(targets(&g, "a"), vec![set(&["push"]), set(&["b"])]);
    }
}
