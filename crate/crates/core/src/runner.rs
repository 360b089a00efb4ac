//! Mutant execution with optional memoized interception, scoring and run
//! comparison.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::DependencyClosure;
use crate::lang::{run_test, ExecConfig, NoHooks, Program, Verdict};
use crate::memo::{CacheStats, DecisionEvent, Eligibility, LookupHooks, MemoDB, MemoError, Shapes};
use crate::mutation::{apply_mutant, mutated_function, Mutant, MutantPool, MutationError};
use crate::profiler::{test_seed, Profile};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Memo(#[from] MemoError),
    #[error("invalid mutant pool: {0}")]
    InvalidPool(#[from] MutationError),
    #[error("the mutant pool is empty")]
    EmptyPool,
    #[error("mutation scores differ: {base:.6} without memoization, {memo:.6} with")]
    ScoreMismatch { base: f64, memo: f64 },
    #[error("profile was taken from a different program")]
    ProfileMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestSelection {
    Covering,
    All,
}

#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub memo: bool,
    /// Per-test step limit is `baseline × factor + 1000`.
    pub step_limit_factor: u64,
    pub selection: TestSelection,
    pub workers: usize,
    pub exec: ExecConfig,
    /// Keep every cache decision in the results.
    pub log_decisions: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            memo: false,
            step_limit_factor: 10,
            selection: TestSelection::Covering,
            workers: 1,
            exec: ExecConfig::default(),
            log_decisions: false,
        }
    }
}

impl RunConfig {
    pub fn step_limit(&self, baseline: u64) -> u64 {
        baseline.saturating_mul(self.step_limit_factor.max(2)).saturating_add(1000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KillCause {
    AssertFail,
    RuntimeError,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum MutantVerdict {
    Killed { test: String, cause: KillCause },
    Survived,
    NotCovered,
}

impl MutantVerdict {
    pub fn is_killed(&self) -> bool {
        matches!(self, MutantVerdict::Killed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutantResult {
    pub id: u32,
    pub op: String,
    #[serde(rename = "fn")]
    pub function: String,
    pub verdict: MutantVerdict,
    pub tests_run: u32,
    pub steps: u64,
    pub logical_steps: u64,
    pub wall_ns: u64,
    pub hits: u64,
    pub misses: u64,
    pub gated: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decisions: Vec<DecisionEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationReport {
    pub fingerprint: String,
    pub memo: bool,
    pub score: f64,
    pub killed: usize,
    pub total: usize,
    pub steps: u64,
    pub wall_ns: u64,
    pub per_method: BTreeMap<String, CacheStats>,
    pub results: Vec<MutantResult>,
}

impl MutationReport {
    pub fn verdicts(&self) -> Vec<(u32, &MutantVerdict)> {
        self.results.iter().map(|r| (r.id, &r.verdict)).collect()
    }

    pub fn totals(&self) -> CacheStats {
        let mut t = CacheStats::default();
        self.per_method.values().for_each(|s| t.merge(s));
        t
    }
}

pub fn compute_score(results: &[MutantResult]) -> Result<f64, RunError> {
    if results.is_empty() {
        return Err(RunError::EmptyPool);
    }
    Ok(results.iter().filter(|r| r.verdict.is_killed()).count() as f64 / results.len() as f64)
}

pub fn format_score(score: f64) -> String {
    format!("{score:.6}")
}

/// Whether a memoized function may be answered from the table while `mutated` is the mutated function.
pub fn intercept_eligibility(db: &MemoDB, closure: &DependencyClosure, f: &str, mutated: &str) -> Eligibility {
    if !db.tables.contains_key(f) {
        Eligibility::NotMemoized
    } else if closure.depends_on(f, mutated) {
        Eligibility::Gated
    } else {
        Eligibility::Eligible
    }
}

struct Shared<'a> {
    program: &'a Program,
    profile: &'a Profile,
    closure: &'a DependencyClosure,
    db: Option<(&'a MemoDB, &'a Shapes)>,
    cfg: RunConfig,
}

impl Shared<'_> {
    fn tests_for(&self, function: &str) -> Vec<&str> {
        match self.cfg.selection {
            TestSelection::Covering => self.profile.passing_covering_tests(function),
            TestSelection::All => self.profile.tests.keys().map(String::as_str).filter(|t| self.profile.passed(t)).collect(),
        }
    }

    fn run_mutant(&self, m: &Mutant) -> Result<(MutantResult, BTreeMap<String, CacheStats>), RunError> {
        let started = Instant::now();
        let view = apply_mutant(self.program, m)?;
        let mutated = mutated_function(m);
        let tests = self.tests_for(mutated);
        let mut result = MutantResult {
            id: m.id,
            op: m.op.name().to_string(),
            function: m.function.clone(),
            verdict: if tests.is_empty() { MutantVerdict::NotCovered } else { MutantVerdict::Survived },
            tests_run: 0,
            steps: 0,
            logical_steps: 0,
            wall_ns: 0,
            hits: 0,
            misses: 0,
            gated: 0,
            decisions: Vec::new(),
        };
        let mut per_method: BTreeMap<String, CacheStats> = BTreeMap::new();
        let eligibility = |f: &str| match self.db {
            Some((db, _)) => intercept_eligibility(db, self.closure, f, mutated),
            None => Eligibility::NotMemoized,
        };
        for test in tests {
            let exec = ExecConfig {
                step_limit: self.cfg.step_limit(self.profile.baseline_steps(test)),
                seed: test_seed(self.cfg.exec.seed, test),
                ..self.cfg.exec
            };
            let outcome = match self.db {
                Some((db, shapes)) => {
                    let mut hooks = LookupHooks::new(db, shapes, &eligibility, exec.max_depth, self.cfg.log_decisions);
                    let (outcome, _) = run_test(&view, test, &mut hooks, exec);
                    for (f, st) in &hooks.stats {
                        per_method.entry(f.clone()).or_default().merge(st);
                    }
                    let t = hooks.totals();
                    result.hits += t.hits;
                    result.misses += t.misses;
                    result.gated += t.gated;
                    result.decisions.extend(hooks.log.take().unwrap_or_default());
                    outcome
                }
                None => run_test(&view, test, &mut NoHooks, exec).0,
            };
            result.tests_run += 1;
            result.steps += outcome.steps;
            result.logical_steps += outcome.logical_steps;
            let cause = match outcome.verdict {
                Verdict::Pass => continue,
                Verdict::AssertFail { .. } => KillCause::AssertFail,
                Verdict::RuntimeError { .. } => KillCause::RuntimeError,
                Verdict::StepLimitExceeded => KillCause::StepLimit,
            };
            result.verdict = MutantVerdict::Killed { test: test.to_string(), cause };
            break;
        }
        result.wall_ns = started.elapsed().as_nanos() as u64;
        Ok((result, per_method))
    }
}

/// Runs every mutant of the pool against its selected tests, stopping at the first kill.
pub fn run_mutation_analysis(
    program: &Program,
    pool: &MutantPool,
    profile: &Profile,
    closure: &DependencyClosure,
    db: Option<(&MemoDB, &Shapes)>,
    cfg: RunConfig,
) -> Result<MutationReport, RunError> {
    let fingerprint = program.fingerprint();
    if profile.fingerprint != fingerprint {
        return Err(RunError::ProfileMismatch);
    }
    let db = if cfg.memo { db } else { None };
    if let Some((db, _)) = db {
        db.check_fingerprint(fingerprint)?;
    }
    let shared = Shared { program, profile, closure, db, cfg };
    let started = Instant::now();
    let next = AtomicUsize::new(0);
    type Item = Result<(MutantResult, BTreeMap<String, CacheStats>), RunError>;
    let collected: Mutex<Vec<Item>> = Mutex::new(Vec::with_capacity(pool.len()));
    let work = || {
        let mut local = Vec::new();
        loop {
            let i = next.fetch_add(1, Ordering::Relaxed);
            let Some(m) = pool.mutants.get(i) else { break };
            local.push(shared.run_mutant(m));
        }
        collected.lock().expect("no worker panicked").extend(local);
    };
    if cfg.workers <= 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..cfg.workers {
                s.spawn(work);
            }
        });
    }
    let wall_ns = started.elapsed().as_nanos() as u64;
    let items = collected.into_inner().expect("no worker panicked").into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut per_method: BTreeMap<String, CacheStats> = BTreeMap::new();
    if let Some((db, _)) = db {
        for f in db.tables.keys() {
            per_method.insert(f.clone(), CacheStats::default());
        }
    }
    let mut results = Vec::with_capacity(items.len());
    for (r, stats) in items {
        for (f, st) in stats {
            per_method.entry(f).or_default().merge(&st);
        }
        results.push(r);
    }
    results.sort_by_key(|r| r.id);
    let score = if results.is_empty() { 0.0 } else { compute_score(&results)? };
    let killed = results.iter().filter(|r| r.verdict.is_killed()).count();
    Ok(MutationReport {
        fingerprint: format!("{fingerprint:016x}"),
        memo: db.is_some(),
        score,
        killed,
        total: results.len(),
        steps: results.iter().map(|r| r.steps).sum(),
        wall_ns,
        per_method,
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub score: f64,
    pub mutants: usize,
    pub base_wall_ns: u64,
    pub memo_wall_ns: u64,
    /// `(t_base - t_memo) / t_base`, as a percentage; negative when memoization slowed the run.
    pub speedup_pct: f64,
    pub base_steps: u64,
    pub memo_steps: u64,
    pub step_saving_pct: f64,
    pub hits: u64,
    pub misses: u64,
    pub gated: u64,
    pub per_method: BTreeMap<String, CacheStats>,
    /// Mutants whose verdict differs between the runs.
    pub verdict_mismatches: Vec<u32>,
}

fn pct_saving(base: f64, memo: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        (base - memo) / base * 100.0
    }
}

pub fn compare_runs(base: &MutationReport, memo: &MutationReport) -> Result<Comparison, RunError> {
    if base.score != memo.score {
        return Err(RunError::ScoreMismatch { base: base.score, memo: memo.score });
    }
    let memo_verdicts: BTreeMap<u32, &MutantVerdict> = memo.verdicts().into_iter().collect();
    let verdict_mismatches = base
        .results
        .iter()
        .filter(|r| memo_verdicts.get(&r.id) != Some(&&r.verdict))
        .map(|r| r.id)
        .collect();
    let t = memo.totals();
    Ok(Comparison {
        score: base.score,
        mutants: base.total,
        base_wall_ns: base.wall_ns,
        memo_wall_ns: memo.wall_ns,
        speedup_pct: pct_saving(base.wall_ns as f64, memo.wall_ns as f64),
        base_steps: base.steps,
        memo_steps: memo.steps,
        step_saving_pct: pct_saving(base.steps as f64, memo.steps as f64),
        hits: t.hits,
        misses: t.misses,
        gated: t.gated,
        per_method: memo.per_method.clone(),
        verdict_mismatches,
    })
}

impl Comparison {
    /// Plain-text table for terminals.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("score            {}\n", format_score(self.score)));
        out.push_str(&format!("mutants          {}\n", self.mutants));
        out.push_str(&format!("time base/memo   {:.3} ms / {:.3} ms\n", self.base_wall_ns as f64 / 1e6, self.memo_wall_ns as f64 / 1e6));
        out.push_str(&format!("speed-up         {:.2}%\n", self.speedup_pct));
        out.push_str(&format!("steps base/memo  {} / {}\n", self.base_steps, self.memo_steps));
        out.push_str(&format!("step saving      {:.2}%\n", self.step_saving_pct));
        out.push_str(&format!("hits/misses      {} / {} (gated {})\n", self.hits, self.misses, self.gated));
        if !self.per_method.is_empty() {
            out.push_str("method                 hits     misses   gated\n");
            for (f, s) in &self.per_method {
                out.push_str(&format!("{f:<22} {:<8} {:<8} {}\n", s.hits, s.misses, s.gated));
            }
        }
        if !self.verdict_mismatches.is_empty() {
            out.push_str(&format!("verdict mismatches {:?}\n", self.verdict_mismatches));
        }
        out
    }
}
