use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bpre_harness::config::SEED_ENV;
use bpre_harness::output::RunDir;
use bpre_harness::ExperimentConfig;

fn smoke() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

fn bpre(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpre"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove(SEED_ENV)
        .output()
        .unwrap()
}

fn only_run_dir(out: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

fn smoke_text() -> String {
    fs::read_to_string(smoke()).unwrap()
}

#[test]
fn tables_have_an_exact_structural_row() {
    let out = tempfile::tempdir().unwrap();
    let o = bpre(&["tables", "--config", smoke().to_str().unwrap()], out.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(only_run_dir(out.path()).join("v_table.csv")).unwrap();
    let mut lines = csv.lines();
    let preamble = lines.next().unwrap();
    assert!(preamble.starts_with("# schema=renewal-table/1 config_hash="));
    assert!(preamble.contains("seed=20240611") && preamble.contains("version=v"));
    assert_eq!(lines.next().unwrap(), "abscissa,raw_estimate,std_error,isotonic_estimate,n_terms,paths");
    assert_eq!(lines.next().unwrap(), "0,0,0,0,0,0");
}

#[test]
fn reruns_are_byte_identical_and_independent_of_workers() {
    let cfg = smoke();
    let cfg = cfg.to_str().unwrap();
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, workers) in dirs.iter().zip(["1", "1", "8"]) {
        let o = bpre(&["verify", "--config", cfg, "--workers", workers], d.path());
        assert!(o.status.code().is_some(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let files = |d: &Path| -> Vec<(String, Vec<u8>)> {
        let run = only_run_dir(d);
        let mut v: Vec<_> = fs::read_dir(&run)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
            })
            .collect();
        v.sort();
        v
    };
    let first = files(dirs[0].path());
    assert!(first.iter().any(|(n, _)| n == "verify.json"));
    assert_eq!(first, files(dirs[1].path()));
    assert_eq!(first, files(dirs[2].path()));
    // a rerun into the same directory finds identical bytes and succeeds
    let again = bpre(&["tables", "--config", cfg], dirs[0].path());
    assert!(again.status.success());
}

#[test]
fn inadmissible_threshold_is_a_validation_error() {
    let text = smoke_text().replace("eta = 0.4", "eta = 0.9");
    assert!(ExperimentConfig::from_toml(&text).is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, text).unwrap();
    let o = bpre(&["verify", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("inadmissible parameters"));
}

#[test]
fn unknown_keys_and_missing_files_are_rejected() {
    let text = smoke_text().replace("[model]\n", "[model]\nmystery = 1\n");
    assert!(ExperimentConfig::from_toml(&text).is_err());
    let dir = tempfile::tempdir().unwrap();
    let o = bpre(&["tables", "--config", "/nonexistent.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn truncated_budgets_are_inconclusive() {
    let text = smoke_text()
        .replace("paths = 20_000\ndeviation_paths = 20_000", "paths = 300\ndeviation_paths = 300")
        .replace("plus_paths = 20_000", "plus_paths = 300")
        .replace("env_paths = 20_000", "env_paths = 300");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.toml");
    fs::write(&path, text).unwrap();
    let o = bpre(&["verify", "--config", path.to_str().unwrap()], dir.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("INCONCLUSIVE"), "{stdout}");
    assert!(!stdout.contains("FAIL         theorem.flatness"), "{stdout}");
}

#[test]
fn config_round_trips_and_hash_ignores_seed() {
    let cfg = ExperimentConfig::from_toml(&smoke_text()).unwrap();
    let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(cfg, back);
    let mut other = cfg.clone();
    other.seed += 1;
    other.workers = 8;
    assert_eq!(cfg.content_hash(), other.content_hash());
    assert_ne!(cfg.run_dir(), other.run_dir());
    other.verify.paths += 1;
    assert_ne!(cfg.content_hash(), other.content_hash());
}

#[test]
fn seed_variable_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bpre"))
        .args(["simulate", "--config", smoke().to_str().unwrap(), "--out"])
        .arg(dir.path())
        .env(SEED_ENV, "77")
        .output()
        .unwrap();
    assert!(o.status.success());
    let run = only_run_dir(dir.path());
    assert!(run.file_name().unwrap().to_string_lossy().ends_with("-s77"));
    let csv = fs::read_to_string(run.join("trajectories.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("trajectory,generation"));
    assert!(csv.lines().count() > 20);
}

#[test]
fn run_directories_are_append_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_toml(&smoke_text()).unwrap();
    cfg.out = dir.path().to_path_buf();
    let run = RunDir::create(&cfg).unwrap();
    run.write("a.txt", b"one").unwrap();
    run.write("a.txt", b"one").unwrap();
    assert!(run.write("a.txt", b"two").is_err());
    assert_eq!(fs::read(run.root().join("a.txt")).unwrap(), b"one");
}
