mod common;

use common::*;
use memomut_core::analysis::{analyze, DeterminacyOptions};
use memomut_core::lang::parse;
use memomut_core::memo::{build_memo_db, Decision, Eligibility, MemoOptions, Shapes};
use memomut_core::mutation::{generate_mutants, MutantPool};
use memomut_core::profiler::profile_suite;
use memomut_core::runner::{intercept_eligibility, run_mutation_analysis, MutantVerdict, RunConfig, RunError};

const SRC: &str = "
fn f(x){ return h(x) * 2; }
fn h(x){ return x + 1; }
fn g(x){ return x - 1; }
fn test_f(){ assert(f(3) == 8); assert(f(3) == 8); assert(g(f(3)) == 7); }
";

#[test]
fn gate_follows_the_closure() {
    let fx = {
        let program = parse(SRC).unwrap();
        let analysis = analyze(&program, DeterminacyOptions::default());
        let profile = profile_suite(&program, exec(), 1).unwrap();
        let shapes = Shapes::new(&program, &analysis.effects);
        let opts = MemoOptions { exec: exec(), miss_tolerance: 0 };
        let db = build_memo_db(&program, &analysis, &profile, &shapes, eager_criterion(), &opts).unwrap();
        let pool = generate_mutants(&program);
        Fixture { program, analysis, profile, shapes, db, pool }
    };
    assert!(fx.db.tables.contains_key("f") && fx.db.tables.contains_key("h"));
    let c = &fx.analysis.closure;
    assert_eq!(intercept_eligibility(&fx.db, c, "f", "g"), Eligibility::Eligible);
    assert_eq!(intercept_eligibility(&fx.db, c, "f", "f"), Eligibility::Gated);
    assert_eq!(intercept_eligibility(&fx.db, c, "f", "h"), Eligibility::Gated);
    assert_eq!(intercept_eligibility(&fx.db, c, "h", "f"), Eligibility::Eligible);
    assert_eq!(intercept_eligibility(&fx.db, c, "test_f", "g"), Eligibility::NotMemoized);

    let cfg = RunConfig { log_decisions: true, ..run_config(true) };
    let memo = run_mutation_analysis(&fx.program, &fx.pool, &fx.profile, c, Some((&fx.db, &fx.shapes)), cfg).unwrap();
    for r in &memo.results {
        let m = fx.pool.get(r.id).unwrap();
        for d in &r.decisions {
            let unsafe_gate = c.depends_on(&d.function, &m.function);
            assert_eq!(d.decision == Decision::Gated, unsafe_gate, "mutant {} in {}: {:?}", r.id, m.function, d);
        }
        if m.function == "g" {
            assert!(r.hits > 0, "mutant {} in g should bypass f", r.id);
        }
        if m.function == "f" {
            assert_eq!(r.misses, 0);
        }
    }
    let base = run_mutation_analysis(&fx.program, &fx.pool, &fx.profile, c, None, run_config(false)).unwrap();
    assert_eq!(base.verdicts(), memo.verdicts());
}

#[test]
fn uncovered_helper_counts_against_the_score() {
    let p = parse("fn used(x){ return x + 1; } fn unused(x){ return x * 3; } fn test_u(){ assert(used(1) == 2); }").unwrap();
    let an = analyze(&p, DeterminacyOptions::default());
    let profile = profile_suite(&p, exec(), 1).unwrap();
    let pool = generate_mutants(&p);
    let r = run_mutation_analysis(&p, &pool, &profile, &an.closure, None, run_config(false)).unwrap();
    let uncovered: Vec<_> = r.results.iter().filter(|x| x.verdict == MutantVerdict::NotCovered).collect();
    assert!(!uncovered.is_empty());
    assert!(uncovered.iter().all(|x| x.function == "unused" && x.tests_run == 0));
    assert_eq!(r.total, pool.len());
    assert!(r.score < 1.0);
}

#[test]
fn single_killed_mutant_scores_one() {
    let p = parse("fn f(){ return 2; } fn test_f(){ assert(f() == 2); }").unwrap();
    let an = analyze(&p, DeterminacyOptions::default());
    let profile = profile_suite(&p, exec(), 1).unwrap();
    let pool = generate_mutants(&p);
    let crp: Vec<_> = pool.records().into_iter().filter(|m| m.op == "CRP").collect();
    let pool = MutantPool::from_records(&p, &crp).unwrap();
    let r = run_mutation_analysis(&p, &pool, &profile, &an.closure, None, run_config(false)).unwrap();
    assert_eq!((r.killed, r.total, r.score), (1, 1, 1.0));
}

#[test]
fn infinite_loop_mutant_is_killed_by_the_step_limit() {
    let p = parse("fn f(n){ let i = 0; while (i < n) { i = i + 1; } return i; } fn test_f(){ assert(f(5) == 5); }").unwrap();
    let an = analyze(&p, DeterminacyOptions::default());
    let profile = profile_suite(&p, exec(), 1).unwrap();
    let pool = generate_mutants(&p);
    let r = run_mutation_analysis(&p, &pool, &profile, &an.closure, None, run_config(false)).unwrap();
    let svr = r.results.iter().find(|x| x.op == "SVR").unwrap();
    assert!(matches!(&svr.verdict, MutantVerdict::Killed { cause, .. } if format!("{cause:?}") == "StepLimit"));
}

#[test]
fn parallel_workers_agree_with_one() {
    for name in ["fib", "globals", "indirect"] {
        let fx = fixture(name);
        let c = &fx.analysis.closure;
        let one = run_mutation_analysis(&fx.program, &fx.pool, &fx.profile, c, Some((&fx.db, &fx.shapes)), run_config(true)).unwrap();
        let four = RunConfig { workers: 4, ..run_config(true) };
        let par = run_mutation_analysis(&fx.program, &fx.pool, &fx.profile, c, Some((&fx.db, &fx.shapes)), four).unwrap();
        assert_eq!(one.verdicts(), par.verdicts(), "{name}");
        assert_eq!(one.steps, par.steps, "{name}");
    }
}

#[test]
fn stale_database_is_rejected() {
    let fx = fixture("fib");
    let mut db = fx.db.clone();
    db.fingerprint ^= 1;
    let c = &fx.analysis.closure;
    let err = run_mutation_analysis(&fx.program, &fx.pool, &fx.profile, c, Some((&db, &fx.shapes)), run_config(true)).unwrap_err();
    assert!(matches!(err, RunError::Memo(_)));
}
