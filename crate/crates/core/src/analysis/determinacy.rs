use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};

use super::{CallGraph, SideEffectSummary};
use crate::lang::Builtin;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum NondetReason {
    CallsTime,
    CallsRand,
    PerformsIO,
    TaintedGlobal(String),
    TransitiveVia(String),
}

impl fmt::Display for NondetReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NondetReason::CallsTime => write!(f, "CallsTime"),
            NondetReason::CallsRand => write!(f, "CallsRand"),
            NondetReason::PerformsIO => write!(f, "PerformsIO"),
            NondetReason::TaintedGlobal(g) => write!(f, "TaintedGlobal({g})"),
            NondetReason::TransitiveVia(g) => write!(f, "TransitiveVia({g})"),
        }
    }
}

impl Serialize for NondetReason {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeterminacyOptions {
    /// Propagate nondeterminism through globals written by nondeterministic functions.
    pub global_taint: bool,
    /// Treat `print` as nondeterministic. `output_len` always is.
    pub print_is_nondeterministic: bool,
}

impl Default for DeterminacyOptions {
    fn default() -> Self {
        DeterminacyOptions { global_taint: true, print_is_nondeterministic: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeterminacyReport {
    pub nondeterministic: BTreeMap<String, NondetReason>,
}

impl DeterminacyReport {
    pub fn is_nondeterministic(&self, f: &str) -> bool {
        self.nondeterministic.contains_key(f)
    }
}

fn axiom(b: Builtin, opts: DeterminacyOptions) -> Option<NondetReason> {
    match b {
        Builtin::TimeNow => Some(NondetReason::CallsTime),
        Builtin::Rand => Some(NondetReason::CallsRand),
        Builtin::OutputLen => Some(NondetReason::PerformsIO),
        Builtin::Print if opts.print_is_nondeterministic => Some(NondetReason::PerformsIO),
        _ => None,
    }
}

/// Least fixpoint of: calls a nondeterministic builtin; calls a nondeterministic
/// function; reads a global some nondeterministic function may write.
pub fn analyze_determinacy(
    cg: &CallGraph,
    se: &SideEffectSummary,
    opts: DeterminacyOptions,
) -> DeterminacyReport {
    let succ = cg.successors();
    let mut nondet: BTreeMap<String, NondetReason> = BTreeMap::new();
    for b in Builtin::ALL {
        if let Some(r) = axiom(b, opts) {
            nondet.insert(b.name().to_string(), r);
        }
    }
    let builtin_names: BTreeSet<&str> = Builtin::ALL.iter().map(|b| b.name()).collect();

    for (f, callees) in &succ {
        if builtin_names.contains(f) {
            continue;
        }
        let direct = callees
            .iter()
            .filter_map(|c| Builtin::from_name(c))
            .filter_map(|b| axiom(b, opts))
            .min();
        if let Some(r) = direct {
            nondet.insert(f.to_string(), r);
        }
    }

    loop {
        let mut added = Vec::new();
        for (f, callees) in &succ {
            if nondet.contains_key(*f) || builtin_names.contains(f) {
                continue;
            }
            if let Some(g) = callees.iter().find(|g| nondet.contains_key(**g)) {
                added.push((f.to_string(), NondetReason::TransitiveVia(g.to_string())));
                continue;
            }
            if !opts.global_taint {
                continue;
            }
            let Some(effects) = se.get(f) else { continue };
            let tainted = effects.reads.iter().find(|g| {
                nondet
                    .keys()
                    .filter_map(|h| se.get(h))
                    .any(|e| e.writes.contains(*g))
            });
            if let Some(g) = tainted {
                added.push((f.to_string(), NondetReason::TaintedGlobal(g.clone())));
            }
        }
        if added.is_empty() {
            break;
        }
        nondet.extend(added);
    }
    DeterminacyReport { nondeterministic: nondet }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{analyze_side_effects, build_call_graph};
    use crate::lang::parse;

    fn det(src: &str, opts: DeterminacyOptions) -> DeterminacyReport {
        let p = parse(src).unwrap();
        let cg = build_call_graph(&p);
        let se = analyze_side_effects(&p, &cg);
        analyze_determinacy(&cg, &se, opts)
    }

    #[test]
    fn calls_rand() {
        let r = det("fn f(){ return rand(10); }", DeterminacyOptions::default());
        assert_eq!(r.nondeterministic["f"], NondetReason::CallsRand);
    }

    #[test]
    fn transitive() {
        let r = det("fn f(){ return rand(10); } fn g(){ return f(); }", DeterminacyOptions::default());
        assert_eq!(r.nondeterministic["g"], NondetReason::TransitiveVia("f".into()));
    }

    #[test]
    fn tainted_global() {
        let src = "global G = 0; fn w(){ G = rand(2); } fn r(){ return G; }";
        let r = det(src, DeterminacyOptions::default());
        assert_eq!(r.nondeterministic["w"], NondetReason::CallsRand);
        assert_eq!(r.nondeterministic["r"], NondetReason::TaintedGlobal("G".into()));
        let off = det(src, DeterminacyOptions { global_taint: false, ..Default::default() });
        assert!(!off.is_nondeterministic("r"));
    }

    #[test]
    fn taint_chains_through_globals() {
        let src = "global A = 0; global B = 0; fn w(){ A = time_now(); } fn m(){ B = A; } fn r(){ return B; }";
        let r = det(src, DeterminacyOptions::default());
        assert_eq!(r.nondeterministic["w"], NondetReason::CallsTime);
        assert_eq!(r.nondeterministic["m"], NondetReason::TaintedGlobal("A".into()));
        assert_eq!(r.nondeterministic["r"], NondetReason::TaintedGlobal("B".into()));
    }

    #[test]
    fn print_axiom_is_switchable() {
        let src = "fn p(x){ print(x); return x; }";
        assert_eq!(det(src, DeterminacyOptions::default()).nondeterministic["p"], NondetReason::PerformsIO);
        let fidelity = DeterminacyOptions { global_taint: false, print_is_nondeterministic: false };
        assert!(!det(src, fidelity).is_nondeterministic("p"));
    }

    #[test]
    fn recursion_shares_verdict() {
        let r = det(
            "fn a(n){ if (n > 0) { return b(n - 1); } return rand(3); } fn b(n){ return a(n); } fn c(n){ return n; }",
            DeterminacyOptions::default(),
        );
        assert!(r.is_nondeterministic("a") && r.is_nondeterministic("b"));
        assert!(!r.is_nondeterministic("c"));
    }

    #[test]
    fn indirect_nondeterminism() {
        let r = det("fn coin(){ return rand(2); } fn call(f){ return f(); } fn go(){ return call(&coin); }", DeterminacyOptions::default());
        assert_eq!(r.nondeterministic["call"], NondetReason::TransitiveVia("coin".into()));
        assert_eq!(r.nondeterministic["go"], NondetReason::TransitiveVia("call".into()));
    }
}
