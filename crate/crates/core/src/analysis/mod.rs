//! Static analyses over a parsed program: call graph, dependency closure,
//! side effects and determinacy.

mod callgraph;
mod closure;
mod determinacy;
mod effects;

use std::collections::BTreeMap;

use serde_json::{json, Value as Json};

pub use callgraph::{build_call_graph, CallGraph, Site};
pub use closure::{dependency_closure, sccs, DependencyClosure};
pub use determinacy::{analyze_determinacy, DeterminacyOptions, DeterminacyReport, NondetReason};
pub use effects::{analyze_side_effects, FunctionEffects, SideEffectSummary};

use crate::lang::Program;

/// Everything the later stages need from static analysis.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub call_graph: CallGraph,
    pub closure: DependencyClosure,
    pub effects: SideEffectSummary,
    pub determinacy: DeterminacyReport,
}

impl Analysis {
    pub fn to_json(&self) -> Json {
        let call_graph: Vec<[&str; 2]> = self.call_graph.pairs().into_iter().map(|(a, b)| [a, b]).collect();
        let closure: BTreeMap<&str, Vec<&str>> = self
            .closure
            .reach
            .iter()
            .map(|(f, s)| (f.as_str(), s.iter().map(String::as_str).collect()))
            .collect();
        let nondet: BTreeMap<&str, String> = self
            .determinacy
            .nondeterministic
            .iter()
            .map(|(f, r)| (f.as_str(), r.to_string()))
            .collect();
        json!({
            "call_graph": call_graph,
            "closure": closure,
            "nondet": nondet,
            "effects": self.effects.functions,
            "warnings": self.call_graph.warnings,
        })
    }
}

pub fn analyze(program: &Program, opts: DeterminacyOptions) -> Analysis {
    let call_graph = build_call_graph(program);
    let closure = dependency_closure(&call_graph);
    let effects = analyze_side_effects(program, &call_graph);
    let determinacy = analyze_determinacy(&call_graph, &effects, opts);
    Analysis { call_graph, closure, effects, determinacy }
}
