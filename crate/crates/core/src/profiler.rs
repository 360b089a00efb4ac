//! Baseline profiling of the test suite and selection of expensive,
//! deterministic functions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::DeterminacyReport;
use crate::lang::{run_test, CallEvent, EnterAction, ExecConfig, ExecState, Hooks, Program, TestOutcome, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("the program declares no tests")]
    SuiteEmpty,
    #[error("invalid duration `{0}` (expected e.g. 1ms, 250us, 2s, 40ns)")]
    BadDuration(String),
    #[error("invalid limit `{0}` (expected a count or a percentage such as 20%)")]
    BadLimit(String),
    #[error("invalid tau mode `{0}` (expected mean or cumulative)")]
    BadTauMode(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FunctionProfile {
    pub invocations: u64,
    /// Entry-to-exit wall time summed over invocations; nested calls overlap.
    pub inclusive_ns: u64,
    pub inclusive_steps: u64,
    /// Time and steps spent in the function's own body, callees excluded.
    pub self_ns: u64,
    pub self_steps: u64,
    pub mean_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestProfile {
    pub covered: BTreeSet<String>,
    pub outcome: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub fingerprint: u64,
    pub functions: BTreeMap<String, FunctionProfile>,
    pub tests: BTreeMap<String, TestProfile>,
    pub total_ns: u64,
    pub total_steps: u64,
}

impl Profile {
    pub fn passed(&self, test: &str) -> bool {
        self.tests.get(test).is_some_and(|t| t.outcome.verdict.is_pass())
    }

    /// Tests whose execution entered `f`, in name order.
    pub fn covering_tests(&self, f: &str) -> Vec<&str> {
        self.tests
            .iter()
            .filter(|(_, t)| t.covered.contains(f))
            .map(|(n, _)| n.as_str())
            .collect()
    }

    /// Covering tests that passed at baseline.
    pub fn passing_covering_tests(&self, f: &str) -> Vec<&str> {
        self.covering_tests(f).into_iter().filter(|t| self.passed(t)).collect()
    }

    pub fn baseline_steps(&self, test: &str) -> u64 {
        self.tests.get(test).map_or(0, |t| t.outcome.logical_steps)
    }
}

/// Seed of the unmutated and mutant executions of one test.
pub fn test_seed(base: u64, test: &str) -> u64 {
    crate::hash::mix_seed(base, &["exec", test])
}

struct Open {
    function: String,
    started: Instant,
    steps: u64,
    child_ns: u64,
    child_steps: u64,
}

#[derive(Default)]
struct ProfileHooks {
    open: Vec<Open>,
    functions: BTreeMap<String, FunctionProfile>,
    covered: BTreeSet<String>,
}

impl ProfileHooks {
    fn close(&mut self, open: Open, steps_now: u64) {
        let ns = open.started.elapsed().as_nanos() as u64;
        let steps = steps_now - open.steps;
        let fp = self.functions.entry(open.function).or_default();
        fp.inclusive_ns += ns;
        fp.inclusive_steps += steps;
        fp.self_ns += ns.saturating_sub(open.child_ns);
        fp.self_steps += steps.saturating_sub(open.child_steps);
        if let Some(parent) = self.open.last_mut() {
            parent.child_ns += ns;
            parent.child_steps += steps;
        }
    }
}

impl Hooks for ProfileHooks {
    fn on_call_enter(&mut self, call: &CallEvent<'_>, state: &ExecState) -> EnterAction {
        self.covered.insert(call.function.to_string());
        self.functions.entry(call.function.to_string()).or_default().invocations += 1;
        self.open.push(Open {
            function: call.function.to_string(),
            started: Instant::now(),
            steps: state.steps,
            child_ns: 0,
            child_steps: 0,
        });
        EnterAction::Execute
    }

    fn on_call_exit(&mut self, _function: &str, _ret: &Value, state: &ExecState) {
        if let Some(open) = self.open.pop() {
            self.close(open, state.steps);
        }
    }
}

fn profile_once(program: &Program, cfg: ExecConfig) -> Profile {
    let mut functions: BTreeMap<String, FunctionProfile> =
        program.functions.keys().map(|f| (f.clone(), FunctionProfile::default())).collect();
    let mut tests = BTreeMap::new();
    let (mut total_ns, mut total_steps) = (0, 0);
    let mut names = program.tests.clone();
    names.sort();
    for test in names {
        let mut hooks = ProfileHooks::default();
        let exec = ExecConfig { seed: test_seed(cfg.seed, &test), ..cfg };
        let (outcome, state) = run_test(program, &test, &mut hooks, exec);
        // Frames unwound by a failure never see their exit event.
        while let Some(open) = hooks.open.pop() {
            hooks.close(open, state.steps);
        }
        for (f, p) in hooks.functions {
            let acc = functions.entry(f).or_default();
            acc.invocations += p.invocations;
            acc.inclusive_ns += p.inclusive_ns;
            acc.inclusive_steps += p.inclusive_steps;
            acc.self_ns += p.self_ns;
            acc.self_steps += p.self_steps;
        }
        total_ns += outcome.wall_ns;
        total_steps += outcome.steps;
        tests.insert(test, TestProfile { covered: hooks.covered, outcome });
    }
    for p in functions.values_mut() {
        p.mean_ns = if p.invocations == 0 { 0.0 } else { p.inclusive_ns as f64 / p.invocations as f64 };
    }
    Profile { fingerprint: program.fingerprint(), functions, tests, total_ns, total_steps }
}

fn median(mut xs: Vec<u64>) -> u64 {
    xs.sort_unstable();
    xs[xs.len() / 2]
}

/// Runs every test `reps` times (at least once). Counts, steps, coverage and
/// verdicts come from the first repetition; times are per-field medians.
pub fn profile_suite(program: &Program, cfg: ExecConfig, reps: usize) -> Result<Profile, ProfileError> {
    if program.tests.is_empty() {
        return Err(ProfileError::SuiteEmpty);
    }
    let runs: Vec<Profile> = (0..reps.max(1)).map(|_| profile_once(program, cfg)).collect();
    let mut profile = runs[0].clone();
    if runs.len() > 1 {
        for (name, fp) in profile.functions.iter_mut() {
            fp.inclusive_ns = median(runs.iter().map(|r| r.functions[name].inclusive_ns).collect());
            fp.self_ns = median(runs.iter().map(|r| r.functions[name].self_ns).collect());
            fp.mean_ns = if fp.invocations == 0 { 0.0 } else { fp.inclusive_ns as f64 / fp.invocations as f64 };
        }
        for (name, tp) in profile.tests.iter_mut() {
            tp.outcome.wall_ns = median(runs.iter().map(|r| r.tests[name].outcome.wall_ns).collect());
        }
        profile.total_ns = profile.tests.values().map(|t| t.outcome.wall_ns).sum();
    }
    Ok(profile)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauMode {
    /// Threshold on the mean per-invocation time.
    Mean,
    /// Threshold on the cumulative inclusive time.
    Cumulative,
}

impl FromStr for TauMode {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(TauMode::Mean),
            "cumulative" => Ok(TauMode::Cumulative),
            _ => Err(ProfileError::BadTauMode(s.to_string())),
        }
    }
}

impl fmt::Display for TauMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TauMode::Mean => "mean",
            TauMode::Cumulative => "cumulative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Limit {
    Count(u64),
    Percent(f64),
}

impl Limit {
    /// Number of candidates allowed among `declared` functions. Percentages round up.
    pub fn resolve(self, declared: usize) -> usize {
        match self {
            Limit::Count(n) => n as usize,
            Limit::Percent(p) => ((p * declared as f64 / 100.0) - 1e-9).ceil().max(0.0) as usize,
        }
    }
}

impl FromStr for Limit {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ProfileError::BadLimit(s.to_string());
        let s = s.trim();
        match s.strip_suffix('%') {
            Some(p) => {
                let v: f64 = p.trim().parse().map_err(|_| bad())?;
                if !(0.0..=100.0).contains(&v) {
                    return Err(bad());
                }
                Ok(Limit::Percent(v))
            }
            None => s.parse().map(Limit::Count).map_err(|_| bad()),
        }
    }
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Limit::Count(n) => write!(f, "{n}"),
            Limit::Percent(p) => write!(f, "{p}%"),
        }
    }
}

/// Parses `10ns`, `250us`, `1ms`, `2s`, or a bare nanosecond count.
pub fn parse_duration(s: &str) -> Result<u64, ProfileError> {
    let t = s.trim();
    let split = t.find(|c: char| !c.is_ascii_digit() && c != '.').unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let v: f64 = num.parse().map_err(|_| ProfileError::BadDuration(s.to_string()))?;
    let scale = match unit.trim() {
        "" | "ns" => 1.0,
        "us" | "µs" => 1e3,
        "ms" => 1e6,
        "s" => 1e9,
        _ => return Err(ProfileError::BadDuration(s.to_string())),
    };
    let ns = (v * scale).round();
    if ns < 1.0 {
        return Err(ProfileError::BadDuration(s.to_string()));
    }
    Ok(ns as u64)
}

pub fn format_duration(ns: u64) -> String {
    match ns {
        n if n % 1_000_000_000 == 0 => format!("{}s", n / 1_000_000_000),
        n if n % 1_000_000 == 0 => format!("{}ms", n / 1_000_000),
        n if n % 1_000 == 0 => format!("{}us", n / 1_000),
        n => format!("{n}ns"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpensivenessCriterion {
    pub tau_ns: u64,
    pub limit: Limit,
    pub tau_mode: TauMode,
}

impl Default for ExpensivenessCriterion {
    fn default() -> Self {
        ExpensivenessCriterion { tau_ns: 1_000_000, limit: Limit::Percent(20.0), tau_mode: TauMode::Mean }
    }
}

impl fmt::Display for ExpensivenessCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tau={} ({}) limit={}", format_duration(self.tau_ns), self.tau_mode, self.limit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub function: String,
    pub inclusive_ns: u64,
    pub mean_ns: f64,
    pub covering_tests: Vec<String>,
}

pub type CandidateList = Vec<Candidate>;

/// Deterministic, over the threshold, covered by a passing test; most
/// expensive first, truncated to the resolved limit. Tests are never candidates.
pub fn select_candidates(
    program: &Program,
    profile: &Profile,
    det: &DeterminacyReport,
    crit: &ExpensivenessCriterion,
) -> CandidateList {
    let mut list: CandidateList = profile
        .functions
        .iter()
        .filter(|(f, _)| program.function(f).is_some_and(|d| !d.is_test()))
        .filter(|(f, _)| !det.is_nondeterministic(f))
        .filter(|(_, p)| match crit.tau_mode {
            TauMode::Mean => p.mean_ns > crit.tau_ns as f64,
            TauMode::Cumulative => p.inclusive_ns > crit.tau_ns,
        })
        .filter_map(|(f, p)| {
            let covering: Vec<String> = profile.passing_covering_tests(f).into_iter().map(String::from).collect();
            (!covering.is_empty()).then(|| Candidate {
                function: f.clone(),
                inclusive_ns: p.inclusive_ns,
                mean_ns: p.mean_ns,
                covering_tests: covering,
            })
        })
        .collect();
    list.sort_by(|a, b| b.inclusive_ns.cmp(&a.inclusive_ns).then_with(|| a.function.cmp(&b.function)));
    list.truncate(crit.limit.resolve(program.functions.len()));
    list
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub top: Vec<String>,
    pub top_ns: u64,
    pub total_ns: u64,
    /// `top_ns / total_ns` from inclusive times; a nested call is counted in
    /// every enclosing top function, so this can exceed 1.
    pub share: f64,
    /// Share of self time spent in the same functions; never above 1.
    pub self_share: f64,
}

/// Inclusive time of the ⌈fraction·N⌉ most expensive non-test functions over
/// the inclusive time of the test entry functions. A program made only of
/// tests ranks the tests themselves.
pub fn cost_breakdown(program: &Program, profile: &Profile, top_fraction: f64) -> CostBreakdown {
    let is_test = |f: &str| program.function(f).is_some_and(|d| d.is_test());
    let mut pool: Vec<(&str, &FunctionProfile)> =
        profile.functions.iter().filter(|(f, _)| !is_test(f)).map(|(f, p)| (f.as_str(), p)).collect();
    if pool.is_empty() {
        pool = profile.functions.iter().map(|(f, p)| (f.as_str(), p)).collect();
    }
    pool.sort_by(|a, b| b.1.inclusive_ns.cmp(&a.1.inclusive_ns).then_with(|| a.0.cmp(b.0)));
    let k = ((top_fraction * pool.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    pool.truncate(k);
    let top_ns: u64 = pool.iter().map(|t| t.1.inclusive_ns).sum();
    let total_ns: u64 = profile
        .functions
        .iter()
        .filter(|(f, _)| is_test(f))
        .map(|(_, p)| p.inclusive_ns)
        .sum();
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let self_total: u64 = profile.functions.values().map(|p| p.self_ns).sum();
    let self_top: u64 = pool.iter().map(|t| t.1.self_ns).sum();
    CostBreakdown {
        top: pool.iter().map(|t| t.0.to_string()).collect(),
        top_ns,
        total_ns,
        share: ratio(top_ns, total_ns),
        self_share: ratio(self_top, self_total),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{analyze, DeterminacyOptions};
    use crate::lang::{parse, Clock, Verdict};

    fn cfg() -> ExecConfig {
        ExecConfig { clock: Clock::Fake, ..ExecConfig::default() }
    }

    fn synthetic(program: &Program, times: &[(&str, u64, u64)]) -> Profile {
        let mut p = profile_suite(program, cfg(), 1).unwrap();
        for (f, ns, calls) in times {
            let fp = p.functions.get_mut(*f).unwrap();
            fp.inclusive_ns = *ns;
            fp.self_ns = if program.function(f).unwrap().is_test() { 0 } else { *ns };
            fp.invocations = *calls;
            fp.mean_ns = *ns as f64 / *calls as f64;
        }
        p
    }

    #[test]
    fn invocations_and_coverage() {
        let p = parse("fn f(){ return 1; } fn test_a(){ assert(f() == 1); }").unwrap();
        let prof = profile_suite(&p, cfg(), 1).unwrap();
        assert_eq!(prof.functions["f"].invocations, 1);
        assert!(prof.tests["test_a"].covered.contains("f"));
        assert_eq!(prof.covering_tests("f"), vec!["test_a"]);
    }

    #[test]
    fn recursive_entries_each_count() {
        let p = parse("fn f(n){ if (n > 1) { return f(n - 1); } return 0; } fn test_a(){ f(3); }").unwrap();
        let prof = profile_suite(&p, cfg(), 3).unwrap();
        assert_eq!(prof.functions["f"].invocations, 3);
    }

    #[test]
    fn entry_function_steps_bound_test_steps() {
        let p = parse("fn f(n){ let s = 0; while (n > 0) { s = s + n; n = n - 1; } return s; } fn test_a(){ assert(f(4) == 10); assert(f(2) == 3); }").unwrap();
        let prof = profile_suite(&p, cfg(), 1).unwrap();
        let t = &prof.tests["test_a"];
        assert!(prof.functions["test_a"].inclusive_steps <= t.outcome.steps);
        assert!(prof.functions["f"].inclusive_steps < prof.functions["test_a"].inclusive_steps);
        assert!(prof.total_ns >= prof.functions["f"].inclusive_ns);
    }

    #[test]
    fn empty_suite_is_an_error() {
        let p = parse("fn f(){}").unwrap();
        assert_eq!(profile_suite(&p, cfg(), 1), Err(ProfileError::SuiteEmpty));
    }

    #[test]
    fn failing_tests_are_recorded() {
        let p = parse("fn f(){ return 1; } fn test_bad(){ assert(f() == 2); }").unwrap();
        let prof = profile_suite(&p, cfg(), 1).unwrap();
        assert!(matches!(prof.tests["test_bad"].outcome.verdict, Verdict::AssertFail { .. }));
        assert!(prof.passing_covering_tests("f").is_empty());
        assert_eq!(prof.functions["f"].invocations, 1);
    }

    #[test]
    fn selection_threshold_and_order() {
        let p = parse("fn a(){} fn b(){} fn c(){} fn test_t(){ a(); b(); c(); }").unwrap();
        let an = analyze(&p, DeterminacyOptions::default());
        let prof = synthetic(&p, &[("a", 5_000_000, 1), ("b", 500_000, 1), ("c", 2_000_000, 1)]);
        let crit = ExpensivenessCriterion { limit: Limit::Count(3), ..Default::default() };
        let names: Vec<String> = select_candidates(&p, &prof, &an.determinacy, &crit).into_iter().map(|c| c.function).collect();
        assert_eq!(names, ["a", "c"]);
    }

    #[test]
    fn nondeterministic_functions_never_selected() {
        let p = parse("fn a(){ return rand(3); } fn b(){ return time_now(); } fn test_t(){ a(); b(); }").unwrap();
        let an = analyze(&p, DeterminacyOptions::default());
        let prof = synthetic(&p, &[("a", 9_000_000, 1), ("b", 9_000_000, 1)]);
        let crit = ExpensivenessCriterion { limit: Limit::Percent(100.0), ..Default::default() };
        assert!(select_candidates(&p, &prof, &an.determinacy, &crit).is_empty());
    }

    #[test]
    fn percent_limit_of_ten_functions() {
        assert_eq!(Limit::Percent(20.0).resolve(10), 2);
        assert_eq!(Limit::Percent(20.0).resolve(5), 1);
        assert_eq!(Limit::Percent(100.0).resolve(7), 7);
        assert_eq!(Limit::Percent(0.0).resolve(7), 0);
        let src: String = (0..9).map(|i| format!("fn f{i}(){{}} ")).collect::<String>()
            + "fn test_t(){ f0(); f1(); f2(); f3(); f4(); f5(); f6(); f7(); f8(); }";
        let p = parse(&src).unwrap();
        let an = analyze(&p, DeterminacyOptions::default());
        let times: Vec<(String, u64, u64)> = (0..9).map(|i| (format!("f{i}"), 2_000_000 + i, 1)).collect();
        let borrowed: Vec<(&str, u64, u64)> = times.iter().map(|(f, a, b)| (f.as_str(), *a, *b)).collect();
        let prof = synthetic(&p, &borrowed);
        let list = select_candidates(&p, &prof, &an.determinacy, &ExpensivenessCriterion::default());
        assert_eq!(list.len(), 2);
        assert_eq!(list[0].function, "f8");
    }

    #[test]
    fn cumulative_mode() {
        let p = parse("fn a(){} fn test_t(){ a(); a(); a(); }").unwrap();
        let an = analyze(&p, DeterminacyOptions::default());
        let prof = synthetic(&p, &[("a", 1_500_000, 3)]);
        let mean = ExpensivenessCriterion { limit: Limit::Count(5), ..Default::default() };
        assert!(select_candidates(&p, &prof, &an.determinacy, &mean).is_empty());
        let cumulative = ExpensivenessCriterion { tau_mode: TauMode::Cumulative, ..mean };
        assert_eq!(select_candidates(&p, &prof, &an.determinacy, &cumulative).len(), 1);
    }

    #[test]
    fn cost_share_examples() {
        let p = parse("fn test_only(){ let x = 1; }").unwrap();
        let prof = profile_suite(&p, cfg(), 1).unwrap();
        assert_eq!(cost_breakdown(&p, &prof, 0.2).share, 1.0);

        let p = parse("fn f(){} fn g(){} fn test_f(){ f(); } fn test_g(){ g(); }").unwrap();
        let prof = synthetic(&p, &[("f", 300, 1), ("g", 100, 1), ("test_f", 300, 1), ("test_g", 100, 1)]);
        let cb = cost_breakdown(&p, &prof, 0.5);
        assert_eq!(cb.top, ["f"]);
        assert_eq!((cb.top_ns, cb.total_ns), (300, 400));
        assert!((cb.share - 0.75).abs() < 1e-12);
        assert!((cb.self_share - 0.75).abs() < 1e-12);
    }

    #[test]
    fn nested_calls_are_not_counted_twice() {
        let p = parse("fn w(n){ let i = 0; while (i < n) { i = i + 1; } return i; } fn a(){ return w(300); } fn b(){ return w(300); } fn test_x(){ a(); b(); }").unwrap();
        let prof = profile_suite(&p, cfg(), 1).unwrap();
        let w = &prof.functions["w"];
        assert!(w.self_steps == w.inclusive_steps && w.self_steps > 0);
        assert!(prof.functions["a"].self_steps < prof.functions["a"].inclusive_steps);
        let self_total: u64 = prof.functions.values().map(|f| f.self_steps).sum();
        assert_eq!(self_total, prof.functions["test_x"].inclusive_steps);
        let cb = cost_breakdown(&p, &prof, 1.0);
        assert!(cb.self_share <= 1.0);
    }

    #[test]
    fn durations_and_limits_parse() {
        assert_eq!(parse_duration("1ms").unwrap(), 1_000_000);
        assert_eq!(parse_duration("250us").unwrap(), 250_000);
        assert_eq!(parse_duration("2s").unwrap(), 2_000_000_000);
        assert_eq!(parse_duration("40ns").unwrap(), 40);
        assert_eq!(parse_duration("0.5ms").unwrap(), 500_000);
        assert!(parse_duration("0ms").is_err());
        assert!(parse_duration("3 parsecs").is_err());
        assert_eq!("20%".parse::<Limit>().unwrap(), Limit::Percent(20.0));
        assert_eq!("3".parse::<Limit>().unwrap(), Limit::Count(3));
        assert!("120%".parse::<Limit>().is_err());
        assert_eq!(format_duration(1_000_000), "1ms");
    }
}
