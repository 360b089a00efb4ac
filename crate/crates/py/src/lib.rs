//! Python bindings: each function returns plain dicts and lists.

use std::path::Path;

use memomut_core::analysis::{analyze as analyze_program, DeterminacyOptions};
use memomut_core::lang::{load_project, parse, run_test, Clock, ExecConfig, NoHooks, Program};
use memomut_core::memo::{build_memo_db, MemoOptions, Shapes, SCHEMA_VERSION};
use memomut_core::mutation::generate_mutants;
use memomut_core::profiler::{
    cost_breakdown, parse_duration, profile_suite, select_candidates, test_seed, ExpensivenessCriterion, Profile,
};
use memomut_core::runner::{compare_runs, run_mutation_analysis, RunConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn load(project: &str) -> PyResult<Program> {
    load_project(Path::new(project)).map_err(err)
}

fn exec(seed: u64, fake_time: bool) -> ExecConfig {
    ExecConfig { seed, clock: if fake_time { Clock::Fake } else { Clock::Real }, ..ExecConfig::default() }
}

fn criterion(tau: &str, limit: &str) -> PyResult<ExpensivenessCriterion> {
    Ok(ExpensivenessCriterion {
        tau_ns: parse_duration(tau).map_err(err)?,
        limit: limit.parse().map_err(err)?,
        ..ExpensivenessCriterion::default()
    })
}

fn determinacy(global_taint: bool, print_deterministic: bool) -> DeterminacyOptions {
    DeterminacyOptions { global_taint, print_is_nondeterministic: !print_deterministic }
}

/// Memo database schema version.
#[pyfunction]
fn schema_version() -> u16 {
    SCHEMA_VERSION
}

/// Runs one test of a Mini source string; returns verdict, steps and output.
#[pyfunction]
#[pyo3(signature = (source, test, seed = 0))]
fn run_source<'py>(py: Python<'py>, source: &str, test: &str, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let program = parse(source).map_err(err)?;
    if program.function(test).is_none() {
        return Err(PyValueError::new_err(format!("no function `{test}`")));
    }
    let (outcome, state) = run_test(&program, test, &mut NoHooks, exec(test_seed(seed, test), true));
    to_py(py, &serde_json::json!({ "outcome": outcome, "output": state.output }))
}

#[pyfunction]
#[pyo3(signature = (project, global_taint = true, print_deterministic = false))]
fn analyze<'py>(py: Python<'py>, project: &str, global_taint: bool, print_deterministic: bool) -> PyResult<Bound<'py, PyAny>> {
    let program = load(project)?;
    to_py(py, &analyze_program(&program, determinacy(global_taint, print_deterministic)).to_json())
}

#[pyfunction]
fn mutants<'py>(py: Python<'py>, project: &str) -> PyResult<Bound<'py, PyAny>> {
    let program = load(project)?;
    to_py(py, &generate_mutants(&program).records())
}

fn profiled(program: &Program, seed: u64, fake_time: bool, reps: usize) -> PyResult<Profile> {
    profile_suite(program, exec(seed, fake_time), reps).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (project, tau = "1ms", limit = "20%", seed = 0, fake_time = true, reps = 1))]
fn profile<'py>(
    py: Python<'py>,
    project: &str,
    tau: &str,
    limit: &str,
    seed: u64,
    fake_time: bool,
    reps: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let program = load(project)?;
    let crit = criterion(tau, limit)?;
    let analysis = analyze_program(&program, DeterminacyOptions::default());
    let profile = profiled(&program, seed, fake_time, reps)?;
    let candidates = select_candidates(&program, &profile, &analysis.determinacy, &crit);
    let cost = cost_breakdown(&program, &profile, 0.2);
    to_py(py, &serde_json::json!({ "candidates": candidates, "cost": cost, "profile": profile }))
}

/// Profiles, memoizes and runs the mutants with and without memoization.
#[pyfunction]
#[pyo3(signature = (project, tau = "1ms", limit = "20%", seed = 0, fake_time = true, workers = 1))]
fn pipeline<'py>(
    py: Python<'py>,
    project: &str,
    tau: &str,
    limit: &str,
    seed: u64,
    fake_time: bool,
    workers: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let program = load(project)?;
    let crit = criterion(tau, limit)?;
    let analysis = analyze_program(&program, DeterminacyOptions::default());
    let profile = profiled(&program, seed, fake_time, 1)?;
    let shapes = Shapes::new(&program, &analysis.effects);
    let opts = MemoOptions { exec: exec(seed, fake_time), miss_tolerance: 0 };
    let db = build_memo_db(&program, &analysis, &profile, &shapes, crit, &opts).map_err(err)?;
    let pool = generate_mutants(&program);
    let cfg = RunConfig { workers: workers.max(1), exec: opts.exec, ..RunConfig::default() };
    let (base, memo) = py
        .detach(|| {
            let base = run_mutation_analysis(&program, &pool, &profile, &analysis.closure, None, cfg)?;
            let memo_cfg = RunConfig { memo: true, ..cfg };
            let memo =
                run_mutation_analysis(&program, &pool, &profile, &analysis.closure, Some((&db, &shapes)), memo_cfg)?;
            Ok::<_, memomut_core::runner::RunError>((base, memo))
        })
        .map_err(err)?;
    let comparison = compare_runs(&base, &memo).map_err(err)?;
    to_py(
        py,
        &serde_json::json!({
            "comparison": comparison,
            "memoized": db.tables.keys().collect::<Vec<_>>(),
            "exclusions": db.exclusions.iter().map(|(f, why)| (f.clone(), why.to_string())).collect::<std::collections::BTreeMap<_, _>>(),
        }),
    )
}

#[pymodule]
fn memomut(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(schema_version, m)?)?;
    m.add_function(wrap_pyfunction!(run_source, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(mutants, m)?)?;
    m.add_function(wrap_pyfunction!(profile, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    Ok(())
}
