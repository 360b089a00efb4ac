use std::collections::{BTreeMap, BTreeSet};

use super::CallGraph;

/// Reflexive-transitive callee closure: `closure[f]` holds every function `f`
/// may reach, including `f` itself.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependencyClosure {
    pub reach: BTreeMap<String, BTreeSet<String>>,
}

impl DependencyClosure {
    pub fn get(&self, f: &str) -> Option<&BTreeSet<String>> {
        self.reach.get(f)
    }

    /// True when `f` may (transitively) call `g`, or `f == g`.
    pub fn depends_on(&self, f: &str, g: &str) -> bool {
        f == g || self.reach.get(f).is_some_and(|s| s.contains(g))
    }
}

/// Strongly connected components in reverse topological order (callees first).
pub fn sccs<'a>(succ: &BTreeMap<&'a str, BTreeSet<&'a str>>) -> Vec<Vec<&'a str>> {
    struct Tarjan<'a, 'g> {
        succ: &'g BTreeMap<&'a str, BTreeSet<&'a str>>,
        index: BTreeMap<&'a str, usize>,
        low: BTreeMap<&'a str, usize>,
        stack: Vec<&'a str>,
        on_stack: BTreeSet<&'a str>,
        next: usize,
        out: Vec<Vec<&'a str>>,
    }

    impl<'a> Tarjan<'a, '_> {
        // Iterative to avoid native recursion on long call chains.
        fn run(&mut self, root: &'a str) {
            let mut work: Vec<(&'a str, Vec<&'a str>)> = Vec::new();
            self.visit(root);
            work.push((root, self.succ_list(root)));
            while let Some((v, pending)) = work.last_mut() {
                let v = *v;
                if let Some(w) = pending.pop() {
                    if !self.index.contains_key(w) {
                        self.visit(w);
                        let next = self.succ_list(w);
                        work.push((w, next));
                    } else if self.on_stack.contains(w) {
                        let lw = self.index[w];
                        let lv = self.low.get_mut(v).unwrap();
                        *lv = (*lv).min(lw);
                    }
                    continue;
                }
                work.pop();
                if let Some((parent, _)) = work.last() {
                    let lv = self.low[v];
                    let lp = self.low.get_mut(parent).unwrap();
                    *lp = (*lp).min(lv);
                }
                if self.low[v] == self.index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = self.stack.pop().unwrap();
                        self.on_stack.remove(w);
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    self.out.push(comp);
                }
            }
        }

        fn visit(&mut self, v: &'a str) {
            self.index.insert(v, self.next);
            self.low.insert(v, self.next);
            self.next += 1;
            self.stack.push(v);
            self.on_stack.insert(v);
        }

        fn succ_list(&self, v: &'a str) -> Vec<&'a str> {
            let mut s: Vec<&'a str> = self.succ.get(v).map(|s| s.iter().copied().collect()).unwrap_or_default();
            s.reverse();
            s
        }
    }

    let mut t = Tarjan {
        succ,
        index: BTreeMap::new(),
        low: BTreeMap::new(),
        stack: Vec::new(),
        on_stack: BTreeSet::new(),
        next: 0,
        out: Vec::new(),
    };
    for &v in succ.keys() {
        if !t.index.contains_key(v) {
            t.run(v);
        }
    }
    t.out
}

/// Computes the closure on the SCC condensation: components come out of
/// Tarjan callees-first, so each component unions its successors' finished sets.
pub fn dependency_closure(cg: &CallGraph) -> DependencyClosure {
    let succ = cg.successors();
    let comps = sccs(&succ);
    let mut comp_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, c) in comps.iter().enumerate() {
        for &v in c {
            comp_of.insert(v, i);
        }
    }
    let mut comp_reach: Vec<BTreeSet<String>> = Vec::with_capacity(comps.len());
    for (i, comp) in comps.iter().enumerate() {
        let mut acc: BTreeSet<String> = comp.iter().map(|s| s.to_string()).collect();
        for &v in comp {
            for &w in &succ[v] {
                let j = comp_of[w];
                if j != i {
                    acc.extend(comp_reach[j].iter().cloned());
                }
            }
        }
        comp_reach.push(acc);
    }
    let reach = comp_of
        .iter()
        .map(|(v, &i)| (v.to_string(), comp_reach[i].clone()))
        .collect();
    DependencyClosure { reach }
}
