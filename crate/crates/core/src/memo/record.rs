//! Recording memo-tables from the unmutated program and looking them up.

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::encode::encode_value_into;
use super::{Exclusion, GlobalWrite, InputKey, MemoDB, MemoError, MemoTable, OutputRecord};
use crate::analysis::{Analysis, SideEffectSummary};
use crate::hash::mix_seed;
use crate::lang::{
    run_test, CallEvent, Datum, EnterAction, ExecConfig, ExecState, GlobalPatch, Hooks, Program, Substitution,
    TestOutcome, Value,
};
use crate::profiler::{select_candidates, test_seed, CandidateList, ExpensivenessCriterion, Profile};

/// Which globals and arguments form a function's input and output snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionShape {
    /// May-read globals in name order, with their slots; these key the table.
    pub reads: Vec<(String, usize)>,
    /// May-write globals in name order.
    pub writes: Vec<(String, usize)>,
    pub mutargs: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Shapes(pub BTreeMap<String, FunctionShape>);

impl Shapes {
    pub fn new(program: &Program, effects: &SideEffectSummary) -> Shapes {
        let slot = |g: &String| (g.clone(), program.global_slot(g).expect("analysed global is declared"));
        Shapes(
            effects
                .functions
                .iter()
                .map(|(f, e)| {
                    let shape = FunctionShape {
                        reads: e.reads.iter().map(slot).collect(),
                        writes: e.writes.iter().map(slot).collect(),
                        mutargs: e.mutargs.iter().copied().collect(),
                    };
                    (f.clone(), shape)
                })
                .collect(),
        )
    }

    pub fn get(&self, f: &str) -> Option<&FunctionShape> {
        self.0.get(f)
    }
}

impl FunctionShape {
    pub fn key(&self, function: &str, args: &[Value], state: &ExecState) -> InputKey {
        let mut bytes = Vec::with_capacity(16);
        bytes.extend_from_slice(&(args.len() as u32).to_be_bytes());
        for a in args {
            encode_value_into(a, &mut bytes);
        }
        for (_, slot) in &self.reads {
            encode_value_into(&state.globals[*slot], &mut bytes);
        }
        InputKey::new(function, bytes)
    }

    fn is_written(&self, slot: usize) -> bool {
        self.writes.iter().any(|(_, s)| *s == slot)
    }

    /// Every global in the snapshot scope, each once, with whether it may be written.
    fn global_roots(&self) -> Vec<(usize, bool)> {
        let mut slots: BTreeSet<usize> = self.reads.iter().map(|(_, s)| *s).collect();
        slots.extend(self.writes.iter().map(|(_, s)| *s));
        slots.into_iter().map(|s| (s, self.is_written(s))).collect()
    }

    /// Arrays shared between snapshot roots where restoring one root would
    /// not be visible through the other, or mutated arguments holding nested
    /// arrays whose identities a restore cannot preserve.
    fn entry_unsupported(&self, args: &[Value], state: &ExecState) -> bool {
        let mut roots: Vec<(&Value, bool)> =
            args.iter().enumerate().map(|(i, a)| (a, self.mutargs.contains(&i))).collect();
        roots.extend(self.global_roots().into_iter().map(|(s, w)| (&state.globals[s], w)));
        self.mutargs.iter().any(|&i| args.get(i).is_some_and(has_nested)) || shares(&roots)
    }
}

type Ptr = *const std::cell::RefCell<Vec<Value>>;

fn arrays(v: &Value) -> Vec<Ptr> {
    let mut out = Vec::new();
    v.collect_arrays(&mut out);
    out
}

fn has_nested(v: &Value) -> bool {
    match v {
        Value::Arr(a) => a.borrow().iter().any(|x| matches!(x, Value::Arr(_))),
        _ => false,
    }
}

/// True when some array is reachable from two roots and one of them is mutable.
fn shares(roots: &[(&Value, bool)]) -> bool {
    let mut owner: BTreeMap<Ptr, usize> = BTreeMap::new();
    for (i, (v, _)) in roots.iter().enumerate() {
        for p in arrays(v) {
            match owner.get(&p) {
                Some(&j) if j != i && (roots[i].1 || roots[j].1) => return true,
                Some(_) => {}
                None => {
                    owner.insert(p, i);
                }
            }
        }
    }
    false
}

struct EntryGlobal {
    value: Value,
    snapshot: Option<Datum>,
}

struct Pending {
    function: String,
    entry_len: usize,
    entry_steps: u64,
    key: InputKey,
    args: Vec<Value>,
    writes: Vec<EntryGlobal>,
    unsupported: bool,
    depth: usize,
}

struct Recorder<'a> {
    shapes: &'a Shapes,
    candidates: &'a BTreeSet<String>,
    test: String,
    pending: Vec<Pending>,
    tables: BTreeMap<String, MemoTable>,
    conflicted: BTreeSet<String>,
    unsupported: BTreeSet<String>,
}

impl Recorder<'_> {
    fn finish(&mut self, p: Pending, ret: &Value, state: &ExecState) {
        let shape = self.shapes.get(&p.function).expect("candidate shape");
        let mut unsupported = p.unsupported;
        let mut roots: Vec<(&Value, bool)> =
            p.args.iter().enumerate().map(|(i, a)| (a, shape.mutargs.contains(&i))).collect();
        roots.extend(shape.global_roots().into_iter().map(|(s, w)| (&state.globals[s], w)));
        roots.push((ret, true));
        unsupported |= shares(&roots);
        unsupported |= shape.mutargs.iter().any(|&i| p.args.get(i).is_some_and(has_nested));

        let mut globals = BTreeMap::new();
        for ((name, slot), entry) in shape.writes.iter().zip(&p.writes) {
            let now = &state.globals[*slot];
            let in_place = matches!((&entry.value, now), (Value::Arr(a), Value::Arr(b)) if Rc::ptr_eq(a, b));
            if in_place {
                unsupported |= has_nested(now) || has_nested(&entry.value);
            } else if let (Value::Arr(_), Some(snap)) = (&entry.value, &entry.snapshot) {
                // The old array may still be referenced elsewhere; a rebinding
                // restore cannot replay changes made to it.
                unsupported |= entry.value.freeze() != *snap;
            }
            globals.insert(name.clone(), GlobalWrite { value: now.freeze(), in_place });
        }
        if unsupported {
            self.unsupported.insert(p.function);
            return;
        }
        let args = shape.mutargs.iter().filter_map(|&i| p.args.get(i).map(|a| (i, a.freeze()))).collect();
        let record = OutputRecord {
            ret: ret.freeze(),
            globals,
            args,
            steps: state.logical_steps - p.entry_steps,
            depth: p.depth as u32,
        };
        let table = self.tables.entry(p.function.clone()).or_insert_with(|| MemoTable::new(&p.function));
        table.recorded_from.insert(self.test.clone());
        if table.insert(p.key, record).is_err() {
            self.conflicted.insert(p.function);
        }
    }
}

impl Hooks for Recorder<'_> {
    fn on_call_enter(&mut self, call: &CallEvent<'_>, state: &ExecState) -> EnterAction {
        let len = state.frames.len();
        for p in &mut self.pending {
            p.depth = p.depth.max(len - p.entry_len);
        }
        if !self.candidates.contains(call.function) {
            return EnterAction::Execute;
        }
        let shape = self.shapes.get(call.function).expect("candidate shape");
        let writes = shape
            .writes
            .iter()
            .map(|(_, s)| {
                let value = state.globals[*s].clone();
                let snapshot = matches!(value, Value::Arr(_)).then(|| value.freeze());
                EntryGlobal { value, snapshot }
            })
            .collect();
        self.pending.push(Pending {
            function: call.function.to_string(),
            entry_len: len,
            entry_steps: state.logical_steps,
            key: shape.key(call.function, call.args, state),
            args: call.args.to_vec(),
            writes,
            unsupported: shape.entry_unsupported(call.args, state),
            depth: 0,
        });
        EnterAction::Execute
    }

    fn on_call_exit(&mut self, function: &str, ret: &Value, state: &ExecState) {
        if !self.candidates.contains(function) {
            return;
        }
        let p = self.pending.pop().expect("entry recorded before exit");
        debug_assert_eq!(p.function, function);
        self.finish(p, ret, state);
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MemoOptions {
    pub exec: ExecConfig,
    /// Misses a function may incur during provisional memoization and stay.
    pub miss_tolerance: u64,
}

/// Runs the covering passing tests of every candidate on the unmutated
/// program, snapshotting each dynamic entry and exit of a candidate.
pub fn record_tables(
    program: &Program,
    candidates: &CandidateList,
    profile: &Profile,
    shapes: &Shapes,
    criterion: ExpensivenessCriterion,
    opts: &MemoOptions,
) -> MemoDB {
    let names: BTreeSet<String> = candidates.iter().map(|c| c.function.clone()).collect();
    let tests: BTreeSet<&str> = names.iter().flat_map(|f| profile.passing_covering_tests(f)).collect();
    let mut rec = Recorder {
        shapes,
        candidates: &names,
        test: String::new(),
        pending: Vec::new(),
        tables: BTreeMap::new(),
        conflicted: BTreeSet::new(),
        unsupported: BTreeSet::new(),
    };
    for test in tests {
        rec.test = test.to_string();
        rec.pending.clear();
        let cfg = ExecConfig { seed: test_seed(opts.exec.seed, test), ..opts.exec };
        run_test(program, test, &mut rec, cfg);
    }
    let mut db = MemoDB::new(program.fingerprint(), criterion);
    db.tables = rec.tables;
    for f in &rec.unsupported {
        db.exclude(f, Exclusion::StateRestoreUnsupported);
    }
    for f in &rec.conflicted {
        db.exclude(f, Exclusion::Conflicted);
    }
    db
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eligibility {
    NotMemoized,
    /// Memoized, but look-up is disabled for this execution.
    Gated,
    Eligible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Bypass,
    Miss,
    Gated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub function: String,
    pub decision: Decision,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub gated: u64,
}

impl CacheStats {
    pub fn merge(&mut self, other: &CacheStats) {
        self.hits += other.hits;
        self.misses += other.misses;
        self.gated += other.gated;
    }
}

/// Enter-hook that answers memoized calls from the database.
pub struct LookupHooks<'a> {
    db: &'a MemoDB,
    shapes: &'a Shapes,
    eligibility: &'a dyn Fn(&str) -> Eligibility,
    max_depth: usize,
    pub stats: BTreeMap<String, CacheStats>,
    pub log: Option<Vec<DecisionEvent>>,
}

impl<'a> LookupHooks<'a> {
    pub fn new(
        db: &'a MemoDB,
        shapes: &'a Shapes,
        eligibility: &'a dyn Fn(&str) -> Eligibility,
        max_depth: usize,
        log: bool,
    ) -> Self {
        LookupHooks { db, shapes, eligibility, max_depth, stats: BTreeMap::new(), log: log.then(Vec::new) }
    }

    fn note(&mut self, f: &str, d: Decision) {
        let s = match self.stats.get_mut(f) {
            Some(s) => s,
            None => self.stats.entry(f.to_string()).or_default(),
        };
        match d {
            Decision::Bypass => s.hits += 1,
            Decision::Miss => s.misses += 1,
            Decision::Gated => s.gated += 1,
        }
        if let Some(log) = &mut self.log {
            log.push(DecisionEvent { function: f.to_string(), decision: d });
        }
    }

    pub fn totals(&self) -> CacheStats {
        let mut t = CacheStats::default();
        self.stats.values().for_each(|s| t.merge(s));
        t
    }
}

impl Hooks for LookupHooks<'_> {
    fn on_call_enter(&mut self, call: &CallEvent<'_>, state: &ExecState) -> EnterAction {
        let Some(table) = self.db.tables.get(call.function) else {
            return EnterAction::Execute;
        };
        match (self.eligibility)(call.function) {
            Eligibility::NotMemoized => return EnterAction::Execute,
            Eligibility::Gated => {
                self.note(call.function, Decision::Gated);
                return EnterAction::Execute;
            }
            Eligibility::Eligible => {}
        }
        let shape = self.shapes.get(call.function).expect("memoized function has a shape");
        let key = shape.key(call.function, call.args, state);
        let hit = table
            .get(&key)
            .filter(|r| state.frames.len() + (r.depth as usize) < self.max_depth)
            .filter(|_| !shape.entry_unsupported(call.args, state));
        let Some(record) = hit else {
            self.note(call.function, Decision::Miss);
            return EnterAction::Execute;
        };
        let sub = Substitution {
            ret: record.ret.thaw(),
            globals: shape
                .writes
                .iter()
                .map(|(name, slot)| {
                    let w = &record.globals[name];
                    GlobalPatch { slot: *slot, value: w.value.thaw(), in_place: w.in_place }
                })
                .collect(),
            args: record.args.iter().map(|(i, d)| (*i, d.thaw())).collect(),
            logical_steps: record.steps,
        };
        self.note(call.function, Decision::Bypass);
        EnterAction::Substitute(sub)
    }
}

/// Runs one test with look-ups answered from `db`.
pub fn run_with_lookup<'a>(
    program: &Program,
    test: &str,
    cfg: ExecConfig,
    hooks: &mut LookupHooks<'a>,
) -> (TestOutcome, ExecState) {
    run_test(program, test, hooks, cfg)
}

/// Re-runs each memoized function's covering passing tests with look-up
/// enabled for that function alone, and drops functions whose look-ups break
/// a test or miss.
pub fn provisional_memoization(
    program: &Program,
    mut db: MemoDB,
    profile: &Profile,
    shapes: &Shapes,
    opts: &MemoOptions,
) -> Result<MemoDB, MemoError> {
    db.check_fingerprint(program.fingerprint())?;
    let functions: Vec<String> = db.tables.keys().cloned().collect();
    for f in functions {
        let only = |g: &str| if g == f { Eligibility::Eligible } else { Eligibility::NotMemoized };
        let mut failure = None;
        let mut misses = 0;
        for test in profile.passing_covering_tests(&f) {
            let cfg = ExecConfig { seed: mix_seed(opts.exec.seed, &["provisional", test]), ..opts.exec };
            let mut hooks = LookupHooks::new(&db, shapes, &only, opts.exec.max_depth, false);
            let (outcome, _) = run_with_lookup(program, test, cfg, &mut hooks);
            misses += hooks.totals().misses;
            if !outcome.verdict.is_pass() && failure.is_none() {
                failure = Some(test.to_string());
            }
        }
        if let Some(test) = failure {
            db.exclude(&f, Exclusion::NewTestFailure(test));
        } else if misses > opts.miss_tolerance {
            db.exclude(&f, Exclusion::CacheMissOnCoveringTest);
        }
    }
    Ok(db)
}

/// Candidate selection, recording and provisional filtering in one go.
pub fn build_memo_db(
    program: &Program,
    analysis: &Analysis,
    profile: &Profile,
    shapes: &Shapes,
    criterion: ExpensivenessCriterion,
    opts: &MemoOptions,
) -> Result<MemoDB, MemoError> {
    let candidates = select_candidates(program, profile, &analysis.determinacy, &criterion);
    let db = record_tables(program, &candidates, profile, shapes, criterion, opts);
    provisional_memoization(program, db, profile, shapes, opts)
}
