mod common;

use common::*;
use memomut_core::lang::{run_test, ExecConfig, NoHooks};
use memomut_core::profiler::test_seed;

#[test]
fn corpus_has_required_programs() {
    let names = corpus_names();
    assert!(names.len() >= 8);
    for n in ["fib", "matrix", "strings", "globals", "recursive", "indirect", "bench_expensive"] {
        assert!(names.iter().any(|x| x == n), "{n} missing");
    }
}

#[test]
fn every_corpus_test_passes_at_baseline() {
    for name in corpus_names() {
        let p = load(&name);
        assert!(!p.tests.is_empty(), "{name} has no tests");
        for t in &p.tests {
            let cfg = ExecConfig { seed: test_seed(SEED, t), ..exec() };
            let (o, _) = run_test(&p, t, &mut NoHooks, cfg);
            assert!(o.verdict.is_pass(), "{name}::{t}: {:?}", o.verdict);
        }
    }
}
