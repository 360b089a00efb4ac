//! `memomut.toml`: one `key = value` per line, `#` starts a comment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use memomut_core::profiler::{parse_duration, Limit, TauMode};

pub const FILE_NAME: &str = "memomut.toml";

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectConfig {
    pub tau_ns: u64,
    pub limit: Limit,
    pub tau_mode: TauMode,
    pub step_limit_factor: u64,
    pub workers: usize,
    pub miss_tolerance: u64,
    pub seed: u64,
    pub profile_reps: usize,
    pub fake_time: bool,
    pub global_taint: bool,
    pub print_is_nondeterministic: bool,
    pub artifact_dir: Option<PathBuf>,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            tau_ns: 1_000_000,
            limit: Limit::Percent(20.0),
            tau_mode: TauMode::Mean,
            step_limit_factor: 10,
            workers: 1,
            miss_tolerance: 0,
            seed: 0,
            profile_reps: 1,
            fake_time: false,
            global_taint: true,
            print_is_nondeterministic: true,
            artifact_dir: None,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => bail!("{key}: expected true or false, got `{v}`"),
    }
}

pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`", i + 1);
        };
        let v = v.trim().trim_matches('"');
        out.insert(k.trim().replace('-', "_"), v.to_string());
    }
    Ok(out)
}

impl ProjectConfig {
    pub fn apply(&mut self, pairs: &BTreeMap<String, String>, base: &Path) -> Result<()> {
        for (k, v) in pairs {
            let num = || v.parse::<u64>().with_context(|| format!("{k}: expected an integer, got `{v}`"));
            match k.as_str() {
                "tau" => self.tau_ns = parse_duration(v)?,
                "limit" => self.limit = v.parse()?,
                "tau_mode" => self.tau_mode = v.parse()?,
                "step_limit_factor" => self.step_limit_factor = num()?,
                "workers" => self.workers = num()? as usize,
                "miss_tolerance" => self.miss_tolerance = num()?,
                "seed" => self.seed = num()?,
                "profile_reps" => self.profile_reps = num()? as usize,
                "fake_time" => self.fake_time = parse_bool(k, v)?,
                "global_taint" => self.global_taint = parse_bool(k, v)?,
                "print_is_nondeterministic" => self.print_is_nondeterministic = parse_bool(k, v)?,
                "artifact_dir" => self.artifact_dir = Some(base.join(v)),
                _ => bail!("unknown configuration key `{k}`"),
            }
        }
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if self.step_limit_factor < 2 {
            bail!("step_limit_factor must be at least 2");
        }
        Ok(())
    }

    /// Defaults, then `memomut.toml` from the project directory if present.
    pub fn load(project: &Path) -> Result<ProjectConfig> {
        let mut cfg = ProjectConfig::default();
        let dir = if project.is_dir() { project } else { project.parent().unwrap_or(Path::new(".")) };
        let path = dir.join(FILE_NAME);
        if path.is_file() {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let pairs = parse_pairs(&text).with_context(|| format!("in {}", path.display()))?;
            cfg.apply(&pairs, dir).with_context(|| format!("in {}", path.display()))?;
        }
        Ok(cfg)
    }
}
