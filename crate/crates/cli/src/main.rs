//! `memomut`: memoized mutation analysis for Mini projects.

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::ProjectConfig;

pub const EXIT_USAGE: u8 = 64;
pub const EXIT_FINGERPRINT: u8 = 2;
pub const EXIT_SCORE_MISMATCH: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "memomut", about = "Mutation analysis with memoized expensive functions", disable_version_flag = true)]
struct Cli {
    /// Print the memo database schema version and exit.
    #[arg(long, global = true)]
    version: bool,
    #[command(flatten)]
    tuning: Tuning,
    #[command(subcommand)]
    command: Option<Command>,
}

/// Overrides for `memomut.toml` values.
#[derive(Args, Debug, Default, Clone)]
pub struct Tuning {
    /// Seed of the interpreter's `rand` stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Deterministic `time_now`: a counter instead of the wall clock.
    #[arg(long, global = true)]
    fake_time: bool,
    /// Expensiveness threshold, e.g. 1ms or 250us.
    #[arg(long, global = true)]
    tau: Option<String>,
    /// Candidate cap: a count or a percentage of declared functions, e.g. 20%.
    #[arg(long, global = true)]
    limit: Option<String>,
    /// Compare tau with the mean or the cumulative inclusive time.
    #[arg(long, global = true)]
    tau_mode: Option<String>,
    #[arg(long, global = true)]
    profile_reps: Option<usize>,
    /// Cache misses a function may incur during provisional memoization.
    #[arg(long, global = true)]
    miss_tolerance: Option<u64>,
    #[arg(long, global = true)]
    step_limit_factor: Option<u64>,
    /// Do not propagate nondeterminism through globals.
    #[arg(long, global = true)]
    no_global_taint: bool,
    /// Treat `print` as deterministic.
    #[arg(long, global = true)]
    print_deterministic: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Call graph, dependency closure, side effects and determinacy as JSON.
    Analyze {
        project: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Profile the test suite and select expensive candidates.
    Profile {
        project: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate the mutant pool.
    Mutate {
        project: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Record memo-tables for the profiled candidates and filter them provisionally.
    Memoize {
        project: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also print a JSON mirror of the database.
        #[arg(long)]
        dump_json: bool,
    },
    /// Run the mutants, optionally with memoization.
    Run {
        project: PathBuf,
        #[arg(long)]
        mutants: PathBuf,
        #[arg(long)]
        memo: Option<PathBuf>,
        /// Profile to take coverage from; the suite is profiled afresh when omitted.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Run every passing test instead of the covering ones.
        #[arg(long)]
        all_tests: bool,
        /// Keep every cache decision in the report.
        #[arg(long)]
        log_decisions: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare a run without and a run with memoization.
    Report {
        base: PathBuf,
        memo: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// All stages end to end, finishing with the comparison.
    Pipeline {
        project: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Write every intermediate artifact here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

impl Tuning {
    fn overlay(&self, cfg: &mut ProjectConfig) -> anyhow::Result<()> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.fake_time |= self.fake_time;
        if let Some(t) = &self.tau {
            cfg.tau_ns = memomut_core::profiler::parse_duration(t)?;
        }
        if let Some(l) = &self.limit {
            cfg.limit = l.parse()?;
        }
        if let Some(m) = &self.tau_mode {
            cfg.tau_mode = m.parse()?;
        }
        if let Some(r) = self.profile_reps {
            cfg.profile_reps = r.max(1);
        }
        if let Some(m) = self.miss_tolerance {
            cfg.miss_tolerance = m;
        }
        if let Some(f) = self.step_limit_factor {
            anyhow::ensure!(f >= 2, "--step-limit-factor must be at least 2");
            cfg.step_limit_factor = f;
        }
        if self.no_global_taint {
            cfg.global_taint = false;
        }
        if self.print_deterministic {
            cfg.print_is_nondeterministic = false;
        }
        Ok(())
    }
}

fn settings(project: &std::path::Path, tuning: &Tuning, workers: Option<usize>) -> anyhow::Result<ProjectConfig> {
    let mut cfg = ProjectConfig::load(project)?;
    tuning.overlay(&mut cfg).map_err(stages::usage)?;
    if let Some(w) = workers {
        anyhow::ensure!(w >= 1, stages::usage(anyhow::anyhow!("--workers must be at least 1")));
        cfg.workers = w;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let t = &cli.tuning;
    match cli.command.expect("checked by caller") {
        Command::Analyze { project, output } => stages::analyze(&project, &settings(&project, t, None)?, output.as_deref()),
        Command::Profile { project, output } => stages::profile(&project, &settings(&project, t, None)?, output.as_deref()),
        Command::Mutate { project, output } => stages::mutate(&project, output.as_deref()),
        Command::Memoize { project, profile, output, dump_json } => {
            stages::memoize(&project, &settings(&project, t, None)?, &profile, &output, dump_json)
        }
        Command::Run { project, mutants, memo, profile, workers, all_tests, log_decisions, output } => {
            let cfg = settings(&project, t, workers)?;
            let opts = stages::RunOptions { all_tests, log_decisions };
            stages::run(&project, &cfg, &mutants, memo.as_deref(), profile.as_deref(), opts, output.as_deref())
        }
        Command::Report { base, memo, output } => stages::report(&base, &memo, output.as_deref()),
        Command::Pipeline { project, workers, out_dir } => {
            let cfg = settings(&project, t, workers)?;
            stages::pipeline(&project, &cfg, out_dir.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.version {
        println!(
            "memomut {} (memo database schema {})",
            env!("CARGO_PKG_VERSION"),
            memomut_core::memo::SCHEMA_VERSION
        );
        return ExitCode::SUCCESS;
    }
    if cli.command.is_none() {
        eprintln!("error: a subcommand is required\n\nRun `memomut --help` for usage.");
        return ExitCode::from(EXIT_USAGE);
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(stages::exit_code(&e))
        }
    }
}
