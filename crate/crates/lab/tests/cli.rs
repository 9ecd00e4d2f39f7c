use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lab(args: &[&str], cache: &Path, cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(args)
        .env("CUSPLAB_CACHE_DIR", cache)
        .current_dir(cwd)
        .output()
        .expect("lab binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const SQUARE: &str = r#"
[experiment]
kind = "square-sanity"
output_dir = "OUT"

[geometry]
A = 1.0
alpha = 2.0
beta = 0.75
w_min = 1e-3
h0 = 0.015625
ratio = 0.5
cap = 0.5

[solver]
k = 11
tol = 1e-9
seed = 1
cache = true
"#;

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn unknown_key_is_a_usage_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let body = SQUARE.replace("ratio = 0.5", "ratio = 0.5\nsmoothing = 3");
    let cfg = write_config(dir.path(), "bad.toml", &body);
    let o = lab(&["run", cfg.to_str().unwrap()], &dir.path().join("cache"), dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    let msg = text(&o);
    assert!(msg.contains("smoothing"), "{msg}");
    assert!(msg.contains("line"), "{msg}");
    assert!(!dir.path().join("OUT").exists());
}

#[test]
fn out_of_range_value_and_missing_file_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &SQUARE.replace("beta = 0.75", "beta = 1.5"));
    let o = lab(&["run", cfg.to_str().unwrap()], &dir.path().join("cache"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("geometry.beta"));
    assert!(!dir.path().join("OUT").exists());

    let o = lab(&["run", "does-not-exist.toml"], &dir.path().join("cache"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = lab(&["frobnicate"], &dir.path().join("cache"), dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn square_sanity_cold_and_warm_cache_agree_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let status = lab(&["cache", "status"], &cache, dir.path());
    assert_eq!(status.status.code(), Some(0));
    assert!(text(&status).contains("0 entries"), "{}", text(&status));

    let cold = write_config(dir.path(), "cold.toml", &SQUARE.replace("OUT", "cold"));
    let o = lab(&["run", cold.to_str().unwrap()], &cache, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let summary = fs::read_to_string(dir.path().join("cold/summary.txt")).unwrap();
    assert_eq!(summary.lines().filter(|l| l.starts_with("INFO square-eigenvalue-")).count(), 10);
    assert!(summary.contains("PASS square-spectrum"));
    assert_eq!(manifest(&dir.path().join("cold"))["cache"]["misses"], 1);

    let status = lab(&["cache", "status"], &cache, dir.path());
    assert!(text(&status).contains("1 entries"), "{}", text(&status));

    let warm = write_config(dir.path(), "warm.toml", &SQUARE.replace("OUT", "warm"));
    let o = lab(&["run", warm.to_str().unwrap()], &cache, dir.path());
    assert_eq!(o.status.code(), Some(0));
    let m = manifest(&dir.path().join("warm"));
    assert_eq!(m["cache"]["hits"], 1);
    let a = csv_files(&dir.path().join("cold"));
    assert!(!a.is_empty());
    assert_eq!(a, csv_files(&dir.path().join("warm")));
    assert_eq!(m["outputs"]["eigenvalues.csv"], manifest(&dir.path().join("cold"))["outputs"]["eigenvalues.csv"]);
}

#[test]
fn corrupted_cache_entry_is_quarantined_by_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cfg = write_config(dir.path(), "sq.toml", &SQUARE.replace("h0 = 0.015625", "h0 = 0.03125").replace("k = 11", "k = 6"));
    assert_eq!(lab(&["run", cfg.to_str().unwrap()], &cache, dir.path()).status.code(), Some(0));
    let o = lab(&["cache", "verify"], &cache, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(text(&o).contains("1 entries verified, 0 quarantined"));

    let entry = fs::read_dir(&cache).unwrap().map(|e| e.unwrap().path()).find(|p| p.is_file()).unwrap();
    let mut bytes = fs::read(&entry).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    fs::write(&entry, bytes).unwrap();
    let o = lab(&["cache", "verify"], &cache, dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("quarantined"), "{}", text(&o));
    assert!(!entry.exists());
    let s = lab(&["cache", "status"], &cache, dir.path());
    assert!(text(&s).contains("0 entries"));

    // the next run recomputes and repopulates
    assert_eq!(lab(&["run", cfg.to_str().unwrap()], &cache, dir.path()).status.code(), Some(0));
    let o = lab(&["cache", "clear"], &cache, dir.path());
    assert!(text(&o).contains("removed 1 entries"), "{}", text(&o));
}

#[test]
fn check_reruns_reproduce_every_table() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let a = lab(&["check", "--output", "a"], &cache, dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", text(&a));
    let b = lab(&["check", "--output", "b"], &cache, dir.path());
    assert_eq!(b.status.code(), Some(0));
    let ta = csv_files(&dir.path().join("a"));
    assert!(ta.len() >= 6, "{:?}", ta.iter().map(|t| &t.0).collect::<Vec<_>>());
    assert_eq!(ta, csv_files(&dir.path().join("b")));
    let m = manifest(&dir.path().join("a"));
    assert_eq!(m["passed"], true);
    assert_eq!(m["violations"]["estbasic"], 0);
    assert_eq!(m["violations"]["deficit_shape"], 0);
    assert!(m["config_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn stage_failure_is_recorded_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
[experiment]
kind = "cusp-heatkernel"
output_dir = "hk"

[solver]
k = 40
tol = 1e-8
seed = 1
cache = false

[heat]
t_grid = [1e-5, 1.0]
node_stride = 50
"#;
    let cfg = write_config(dir.path(), "hk.toml", body);
    let o = lab(&["run", cfg.to_str().unwrap()], &dir.path().join("cache"), dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    let m = manifest(&dir.path().join("hk"));
    assert_eq!(m["passed"], false);
    assert!(m["failure"]["stage"].is_string(), "{m}");
    let summary = fs::read_to_string(dir.path().join("hk/summary.txt")).unwrap();
    assert!(summary.contains("FAIL stage"), "{summary}");
    assert!(summary.ends_with("RESULT: FAIL\n"));
}

#[test]
fn init_prints_a_config_that_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["init", "ball-volume", "--output", "bv"], &dir.path().join("cache"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    let cfg = write_config(dir.path(), "bv.toml", &String::from_utf8(o.stdout).unwrap());
    let o = lab(&["run", cfg.to_str().unwrap()], &dir.path().join("cache"), dir.path());
    // the asymptotic ratio check is expected to fail at these radii
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", text(&o));
    assert!(dir.path().join("bv/ball_volume.csv").exists());
    assert!(dir.path().join("bv/embedding.csv").exists());
    assert_eq!(lab(&["init", "nonsense"], &dir.path().join("cache"), dir.path()).status.code(), Some(2));
}
