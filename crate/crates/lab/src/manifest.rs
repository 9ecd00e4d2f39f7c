//! Run manifest: configuration echo, versions, file hashes, stage timings and
//! violation counters, written through a temporary file and a rename.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use cusplab::linalg::{hex, ContentHasher};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::experiments::{Check, Failure, RunRecord, StageRecord};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub experiment: &'a str,
    pub config: &'a ExperimentConfig,
    pub config_sha256: String,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub passed: bool,
    pub exit_code: i32,
    pub failure: Option<&'a Failure>,
    pub stages: &'a [StageRecord],
    pub checks: &'a [Check],
    pub violations: &'a BTreeMap<String, u64>,
    pub constants: BTreeMap<&'a str, Option<f64>>,
    pub cache: BTreeMap<&'static str, u64>,
    /// sha256 of every output file except the manifest itself.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&ContentHasher::new().bytes(bytes).finish())
}

/// Hashes of the named files under `dir`; unreadable files are recorded as such.
pub fn output_hashes(dir: &Path, files: &[String]) -> BTreeMap<String, String> {
    files
        .iter()
        .map(|f| {
            let h = fs::read(dir.join(f)).map(|b| sha256_hex(&b)).unwrap_or_else(|e| format!("unreadable: {e}"));
            (f.clone(), h)
        })
        .collect()
}

pub fn build<'a>(cfg: &'a ExperimentConfig, config_text: &str, record: &'a RunRecord, dir: &Path, exit_code: i32) -> RunManifest<'a> {
    let mut files = record.files.clone();
    files.push(SUMMARY_FILE.into());
    RunManifest {
        experiment: cfg.experiment.kind.name(),
        config: cfg,
        config_sha256: sha256_hex(config_text.as_bytes()),
        versions: BTreeMap::from([("cusplab", cusplab::VERSION), ("cusplab-cli", env!("CARGO_PKG_VERSION"))]),
        passed: record.passed(),
        exit_code,
        failure: record.failure.as_ref(),
        stages: &record.stages,
        checks: &record.checks,
        violations: &record.violations,
        // JSON has no NaN or infinity; such constants are written as null
        constants: record.constants.iter().map(|(k, v)| (k.as_str(), v.is_finite().then_some(*v))).collect(),
        cache: BTreeMap::from([("hits", record.cache_hits), ("misses", record.cache_misses)]),
        outputs: output_hashes(dir, &files),
    }
}

/// Serializes `value` to `dir/name` atomically.
pub fn write_json_atomic<T: Serialize>(dir: &Path, name: &str, value: &T) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        write_json_atomic(dir.path(), "m.json", &BTreeMap::from([("a", 1)])).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("m.json")]);
        assert!(fs::read_to_string(dir.path().join("m.json")).unwrap().contains("\"a\": 1"));
    }
}
