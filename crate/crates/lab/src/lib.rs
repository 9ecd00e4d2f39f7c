//! Batch experiment runner for the cusp spectral laboratory.
//!
//! A run reads a strict TOML configuration, executes one experiment kind,
//! and leaves CSV tables, `summary.txt` and `manifest.json` in the output
//! directory. Eigen-decompositions of finite element pencils are cached on
//! disk, keyed by pencil and mesh hashes.

pub mod config;
pub mod experiments;
pub mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cusplab::linalg::{hex, EigenCache, VerifyOutcome};

use config::{ConfigError, ExperimentConfig, ExperimentKind};
use experiments::RunRecord;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable overriding the cache directory.
pub const CACHE_ENV: &str = "CUSPLAB_CACHE_DIR";

/// `$CUSPLAB_CACHE_DIR`, else `$XDG_CACHE_HOME/cusplab`, else
/// `$HOME/.cache/cusplab`, else `.cusplab-cache`.
pub fn cache_dir() -> PathBuf {
    let var = |k: &str| std::env::var_os(k).filter(|v| !v.is_empty()).map(PathBuf::from);
    var(CACHE_ENV)
        .or_else(|| var("XDG_CACHE_HOME").map(|p| p.join("cusplab")))
        .or_else(|| var("HOME").map(|p| p.join(".cache").join("cusplab")))
        .unwrap_or_else(|| PathBuf::from(".cusplab-cache"))
}

#[derive(Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub record: RunRecord,
    pub exit_code: i32,
}

/// Loads, validates and runs a configuration file. Relative output paths are
/// resolved against the directory holding the configuration. Nothing is
/// written when the configuration is rejected.
pub fn run_config_file(path: &Path, cache_dir: &Path) -> Result<RunOutcome, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if cfg.experiment.output_dir.is_relative() {
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.experiment.output_dir = base.join(&cfg.experiment.output_dir);
    }
    run_config(&cfg, &text, cache_dir)
}

/// Runs a validated configuration; `config_text` is the source it came from
/// and is only hashed.
pub fn run_config(cfg: &ExperimentConfig, config_text: &str, cache_dir: &Path) -> Result<RunOutcome, ConfigError> {
    cfg.validate()?;
    let out = cfg.experiment.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| ConfigError(format!("cannot create output directory {}: {e}", out.display())))?;
    let cache = if cfg.solver.cache {
        match EigenCache::open(cache_dir) {
            Ok(c) => Some(c),
            Err(e) => {
                log::warn!("eigen cache disabled: {e}");
                None
            }
        }
    } else {
        None
    };
    let record = experiments::execute(cfg, &out, cache);
    let exit_code = if record.passed() { EXIT_PASS } else { EXIT_CHECK_FAILURE };
    let summary = summary_text(cfg.experiment.kind, &record);
    let mut exit = exit_code;
    if let Err(e) = fs::write(out.join(manifest::SUMMARY_FILE), summary) {
        log::error!("cannot write summary: {e}");
        exit = EXIT_CHECK_FAILURE;
    }
    let m = manifest::build(cfg, config_text, &record, &out, exit);
    if let Err(e) = manifest::write_json_atomic(&out, manifest::MANIFEST_FILE, &m) {
        log::error!("cannot write manifest: {e}");
        exit = EXIT_CHECK_FAILURE;
    }
    Ok(RunOutcome { output_dir: out, record, exit_code: exit })
}

pub fn summary_text(kind: ExperimentKind, record: &RunRecord) -> String {
    let mut s = format!("experiment: {}\n", kind.name());
    for c in &record.checks {
        let _ = writeln!(s, "{} {}: {}", c.status.label(), c.name, c.detail);
    }
    if let Some(f) = &record.failure {
        let _ = writeln!(s, "FAIL stage {}: {}", f.stage, f.error);
    }
    let _ = writeln!(s, "RESULT: {}", if record.passed() { "PASS" } else { "FAIL" });
    s
}

/// The built-in configuration of `kind` (a kebab-case experiment name) as TOML.
pub fn default_config_text(kind: &str, output_dir: PathBuf) -> Result<String, ConfigError> {
    let kind: ExperimentKind = serde_json::from_value(serde_json::Value::String(kind.into()))
        .map_err(|_| ConfigError(format!("unknown experiment kind `{kind}`")))?;
    toml::to_string(&ExperimentConfig::defaults(kind, output_dir)).map_err(|e| ConfigError(e.to_string()))
}

/// `lab check`: the inequality suite with built-in defaults.
pub fn check(output_dir: &Path, cache_dir: &Path) -> Result<RunOutcome, ConfigError> {
    let cfg = ExperimentConfig::defaults(ExperimentKind::InequalitySuite, output_dir.to_path_buf());
    let text = toml::to_string(&cfg).map_err(|e| ConfigError(e.to_string()))?;
    run_config(&cfg, &text, cache_dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheCommand {
    Status,
    Clear,
    Verify,
}

/// Runs a cache subcommand and returns the report and the exit code.
pub fn cache_command(cmd: CacheCommand, dir: &Path) -> (String, i32) {
    let cache = match EigenCache::open(dir) {
        Ok(c) => c,
        Err(e) => return (format!("cannot open cache {}: {e}\n", dir.display()), EXIT_USAGE),
    };
    let mut s = format!("cache: {}\n", cache.dir().display());
    match cmd {
        CacheCommand::Status => match cache.status() {
            Ok((entries, bad)) => {
                let _ = writeln!(s, "{} entries", entries.len());
                for e in &entries {
                    let name = e.file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                    let _ = writeln!(
                        s,
                        "{name} problem={} grid={} k={} tol={:e} dim={} pairs={}",
                        hex(&e.problem_hash[..8]),
                        hex(&e.grid_hash[..8]),
                        e.k,
                        e.tol,
                        e.dimension,
                        e.n_pairs
                    );
                }
                for b in &bad {
                    let _ = writeln!(s, "unreadable: {}", b.display());
                }
                (s, EXIT_PASS)
            }
            Err(e) => (s + &format!("error: {e}\n"), EXIT_CHECK_FAILURE),
        },
        CacheCommand::Clear => match cache.clear() {
            Ok(n) => (s + &format!("removed {n} entries\n"), EXIT_PASS),
            Err(e) => (s + &format!("error: {e}\n"), EXIT_CHECK_FAILURE),
        },
        CacheCommand::Verify => match cache.verify() {
            Ok(rep) => {
                for (p, o) in &rep.entries {
                    let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                    let line = match o {
                        VerifyOutcome::Ok { recomputed_residual: Some(r) } => format!("ok {name} residual={r:.3e}"),
                        VerifyOutcome::Ok { recomputed_residual: None } => format!("ok {name}"),
                        VerifyOutcome::Quarantined { reason } => format!("quarantined {name}: {reason}"),
                    };
                    let _ = writeln!(s, "{line}");
                }
                let q = rep.quarantined();
                let _ = writeln!(s, "{} entries verified, {q} quarantined", rep.entries.len());
                (s, if q == 0 { EXIT_PASS } else { EXIT_CHECK_FAILURE })
            }
            Err(e) => (s + &format!("error: {e}\n"), EXIT_CHECK_FAILURE),
        },
    }
}
