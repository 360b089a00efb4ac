//! One function per subcommand. Each reads its inputs from disk and writes
//! key-sorted JSON.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use memomut_core::analysis::{analyze as analyze_program, Analysis, DeterminacyOptions};
use memomut_core::lang::{load_project, Clock, ExecConfig, Program};
use memomut_core::memo::{build_memo_db, load_db, record_tables, provisional_memoization, save_db, MemoDB, MemoError, MemoOptions, Shapes};
use memomut_core::mutation::{generate_mutants, MutantPool, MutantRecord, MutationError};
use memomut_core::profiler::{
    cost_breakdown, format_duration, profile_suite, select_candidates, CandidateList, CostBreakdown, ExpensivenessCriterion,
    Profile, ProfileError,
};
use memomut_core::runner::{compare_runs, run_mutation_analysis, MutationReport, RunConfig, RunError, TestSelection};
use serde::{Deserialize, Serialize};

use crate::config::ProjectConfig;
use crate::{EXIT_FINGERPRINT, EXIT_SCORE_MISMATCH, EXIT_USAGE};

#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(e: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(UsageError(format!("{e:#}")))
}

/// An artifact built from a different version of the program.
#[derive(Debug)]
pub struct StaleArtifact(pub String);

impl fmt::Display for StaleArtifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} was produced from a different program; regenerate it", self.0)
    }
}

impl std::error::Error for StaleArtifact {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UsageError>() || cause.is::<ProfileError>() {
            return EXIT_USAGE;
        }
        if cause.is::<StaleArtifact>() {
            return EXIT_FINGERPRINT;
        }
        if let Some(MemoError::FingerprintMismatch { .. }) = cause.downcast_ref::<MemoError>() {
            return EXIT_FINGERPRINT;
        }
        if let Some(MutationError::StaleMutant { .. }) = cause.downcast_ref::<MutationError>() {
            return EXIT_FINGERPRINT;
        }
        match cause.downcast_ref::<RunError>() {
            Some(RunError::ScoreMismatch { .. }) => return EXIT_SCORE_MISMATCH,
            Some(RunError::ProfileMismatch)
            | Some(RunError::Memo(MemoError::FingerprintMismatch { .. }))
            | Some(RunError::InvalidPool(MutationError::StaleMutant { .. })) => return EXIT_FINGERPRINT,
            _ => {}
        }
    }
    1
}

fn load(project: &Path) -> Result<Program> {
    load_project(project).with_context(|| format!("loading {}", project.display()))
}

fn exec(cfg: &ProjectConfig) -> ExecConfig {
    ExecConfig { seed: cfg.seed, clock: if cfg.fake_time { Clock::Fake } else { Clock::Real }, ..ExecConfig::default() }
}

fn determinacy(cfg: &ProjectConfig) -> DeterminacyOptions {
    DeterminacyOptions { global_taint: cfg.global_taint, print_is_nondeterministic: cfg.print_is_nondeterministic }
}

fn criterion(cfg: &ProjectConfig) -> ExpensivenessCriterion {
    ExpensivenessCriterion { tau_ns: cfg.tau_ns, limit: cfg.limit, tau_mode: cfg.tau_mode }
}

fn memo_options(cfg: &ProjectConfig) -> MemoOptions {
    MemoOptions { exec: exec(cfg), miss_tolerance: cfg.miss_tolerance }
}

/// Pretty JSON with every object's keys sorted.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn emit<T: Serialize>(value: &T, output: Option<&Path>) -> Result<()> {
    let text = to_json(value)?;
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn analyze(project: &Path, cfg: &ProjectConfig, output: Option<&Path>) -> Result<()> {
    let program = load(project)?;
    emit(&analyze_program(&program, determinacy(cfg)).to_json(), output)
}

/// Contents of `profile.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ProfileFile {
    pub fingerprint: String,
    pub criterion: ExpensivenessCriterion,
    pub candidates: CandidateList,
    pub cost: CostBreakdown,
    pub profile: Profile,
}

fn fingerprint_hex(p: &Program) -> String {
    format!("{:016x}", p.fingerprint())
}

fn build_profile(program: &Program, analysis: &Analysis, cfg: &ProjectConfig) -> Result<ProfileFile> {
    let profile = profile_suite(program, exec(cfg), cfg.profile_reps)?;
    let crit = criterion(cfg);
    let candidates = select_candidates(program, &profile, &analysis.determinacy, &crit);
    let cost = cost_breakdown(program, &profile, 0.2);
    Ok(ProfileFile { fingerprint: fingerprint_hex(program), criterion: crit, candidates, cost, profile })
}

pub fn profile(project: &Path, cfg: &ProjectConfig, output: Option<&Path>) -> Result<()> {
    let program = load(project)?;
    let analysis = analyze_program(&program, determinacy(cfg));
    let file = build_profile(&program, &analysis, cfg)?;
    eprintln!(
        "profiled {} tests; {} candidates under {}; top 20% carry {:.1}% of the time \
         (inclusive, nested calls counted in each enclosing function; {:.1}% by self time)",
        file.profile.tests.len(),
        file.candidates.len(),
        file.criterion,
        file.cost.share * 100.0,
        file.cost.self_share * 100.0
    );
    emit(&file, output)
}

pub fn mutate(project: &Path, output: Option<&Path>) -> Result<()> {
    let program = load(project)?;
    emit(&generate_mutants(&program).records(), output)
}

fn read_profile(path: &Path, program: &Program) -> Result<ProfileFile> {
    let file: ProfileFile = read_json(path)?;
    if file.profile.fingerprint != program.fingerprint() {
        return Err(StaleArtifact(path.display().to_string()).into());
    }
    Ok(file)
}

pub fn memoize(project: &Path, cfg: &ProjectConfig, profile_path: &Path, output: &Path, dump: bool) -> Result<()> {
    let program = load(project)?;
    let analysis = analyze_program(&program, determinacy(cfg));
    let file = read_profile(profile_path, &program)?;
    let shapes = Shapes::new(&program, &analysis.effects);
    let opts = memo_options(cfg);
    let db = record_tables(&program, &file.candidates, &file.profile, &shapes, file.criterion, &opts);
    let db = provisional_memoization(&program, db, &file.profile, &shapes, &opts)?;
    save_db(&db, output).with_context(|| format!("writing {}", output.display()))?;
    summarize_db(&db);
    if dump {
        print!("{}", to_json(&db.to_json())?);
    }
    Ok(())
}

fn summarize_db(db: &MemoDB) {
    eprintln!("memoized {} functions ({} entries); excluded {}", db.tables.len(), db.entry_count(), db.exclusions.len());
    for (f, why) in &db.exclusions {
        eprintln!("  excluded {f}: {why}");
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub all_tests: bool,
    pub log_decisions: bool,
}

fn run_config(cfg: &ProjectConfig, memo: bool, opts: RunOptions) -> RunConfig {
    RunConfig {
        memo,
        step_limit_factor: cfg.step_limit_factor,
        selection: if opts.all_tests { TestSelection::All } else { TestSelection::Covering },
        workers: cfg.workers,
        exec: exec(cfg),
        log_decisions: opts.log_decisions,
    }
}

pub fn run(
    project: &Path,
    cfg: &ProjectConfig,
    mutants: &Path,
    memo: Option<&Path>,
    profile_path: Option<&Path>,
    opts: RunOptions,
    output: Option<&Path>,
) -> Result<()> {
    let program = load(project)?;
    let analysis = analyze_program(&program, determinacy(cfg));
    let records: Vec<MutantRecord> = read_json(mutants)?;
    let pool = MutantPool::from_records(&program, &records)?;
    let profile = match profile_path {
        Some(p) => read_profile(p, &program)?.profile,
        None => profile_suite(&program, exec(cfg), 1)?,
    };
    let db = memo.map(|p| load_db(p, &program).with_context(|| format!("loading {}", p.display()))).transpose()?;
    let shapes = Shapes::new(&program, &analysis.effects);
    let report = run_mutation_analysis(
        &program,
        &pool,
        &profile,
        &analysis.closure,
        db.as_ref().map(|d| (d, &shapes)),
        run_config(cfg, db.is_some(), opts),
    )?;
    eprintln!(
        "{} of {} mutants killed (score {:.6}) in {}",
        report.killed,
        report.total,
        report.score,
        format_duration(report.wall_ns)
    );
    emit(&report, output)
}

pub fn report(base: &Path, memo: &Path, output: Option<&Path>) -> Result<()> {
    let base: MutationReport = read_json(base)?;
    let memo: MutationReport = read_json(memo)?;
    if base.fingerprint != memo.fingerprint {
        return Err(StaleArtifact("the memoized report".into()).into());
    }
    let c = compare_runs(&base, &memo)?;
    print!("{}", c.render());
    emit(&c, output)
}

fn artifact(dir: Option<&Path>, name: &str) -> Option<PathBuf> {
    dir.map(|d| d.join(name))
}

pub fn pipeline(project: &Path, cfg: &ProjectConfig, out_dir: Option<&Path>) -> Result<()> {
    let dir = out_dir.map(Path::to_path_buf).or_else(|| cfg.artifact_dir.clone());
    if let Some(d) = &dir {
        std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let dir = dir.as_deref();
    let program = load(project)?;
    let analysis = analyze_program(&program, determinacy(cfg));
    if let Some(p) = artifact(dir, "analysis.json") {
        emit(&analysis.to_json(), Some(&p))?;
    }

    let file = build_profile(&program, &analysis, cfg)?;
    eprintln!(
        "profile: {} tests, {} candidates under {}; top 20% carry {:.1}% of the time \
         (inclusive, nested calls counted in each enclosing function; {:.1}% by self time)",
        file.profile.tests.len(),
        file.candidates.len(),
        file.criterion,
        file.cost.share * 100.0,
        file.cost.self_share * 100.0
    );
    if let Some(p) = artifact(dir, "profile.json") {
        emit(&file, Some(&p))?;
    }

    let pool = generate_mutants(&program);
    eprintln!("mutants: {}", pool.len());
    if let Some(p) = artifact(dir, "mutants.json") {
        emit(&pool.records(), Some(&p))?;
    }

    let shapes = Shapes::new(&program, &analysis.effects);
    let db = build_memo_db(&program, &analysis, &file.profile, &shapes, file.criterion, &memo_options(cfg))?;
    summarize_db(&db);
    if let Some(p) = artifact(dir, "memo.db") {
        save_db(&db, &p)?;
    }

    let opts = RunOptions::default();
    let base = run_mutation_analysis(&program, &pool, &file.profile, &analysis.closure, None, run_config(cfg, false, opts))?;
    let memo = run_mutation_analysis(
        &program,
        &pool,
        &file.profile,
        &analysis.closure,
        Some((&db, &shapes)),
        run_config(cfg, true, opts),
    )?;
    if let Some(p) = artifact(dir, "base.json") {
        emit(&base, Some(&p))?;
    }
    if let Some(p) = artifact(dir, "memo.json") {
        emit(&memo, Some(&p))?;
    }
    let c = compare_runs(&base, &memo)?;
    if let Some(p) = artifact(dir, "comparison.json") {
        emit(&c, Some(&p))?;
    }
    print!("{}", c.render());
    Ok(())
}
