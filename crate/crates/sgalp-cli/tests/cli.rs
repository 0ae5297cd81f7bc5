use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sgalp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgalp"))
        .args(args)
        .output()
        .expect("spawn sgalp")
}

fn toy_config(dir: &Path, tolerance: f64, max_bases: usize) -> PathBuf {
    let path = dir.join(format!("toy-{tolerance}-{max_bases}.json"));
    let cfg = serde_json::json!({
        "problem": "toy",
        "model": "falp",
        "seed": 3,
        "output_dir": dir.join("runs"),
        "loop": { "batch": 1, "tolerance": tolerance, "max_bases": max_bases },
        "toy": { "thetas": [2.0, -5.0, 3.0] }
    });
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn run_dir(out: &Output) -> PathBuf {
    let stdout = String::from_utf8(out.stdout.clone()).unwrap();
    PathBuf::from(stdout.lines().next().expect("run directory on stdout"))
}

#[test]
fn run_writes_a_reproducible_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy_config(tmp.path(), 0.4, 3);
    let first = sgalp(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(
        first.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let dir = run_dir(&first);
    for f in ["manifest.json", "trace.csv", "bounds.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let bounds: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("bounds.json")).unwrap()).unwrap();
    assert!(bounds["tau_star"].as_f64().unwrap() <= 0.4);
    assert_eq!(bounds["stop"], "converged");

    let second = sgalp(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(second.status.code(), Some(0));
    let dir2 = run_dir(&second);
    assert_ne!(dir, dir2);
    assert_eq!(
        fs::read(dir.join("trace.csv")).unwrap(),
        fs::read(dir2.join("trace.csv")).unwrap()
    );

    // a manifest is accepted as a config and reproduces the trace
    let third = sgalp(&[
        "run",
        "--config",
        dir.join("manifest.json").to_str().unwrap(),
    ]);
    assert_eq!(
        third.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&third.stderr)
    );
    assert_eq!(
        fs::read(dir.join("trace.csv")).unwrap(),
        fs::read(run_dir(&third).join("trace.csv")).unwrap()
    );

    let table = sgalp(&["summarize", dir.to_str().unwrap(), dir2.to_str().unwrap()]);
    assert_eq!(table.status.code(), Some(0));
    let csv = String::from_utf8(table.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("problem,runs,min_gap_pct,median_gap_pct,max_gap_pct")
    );
    assert!(lines.next().unwrap().starts_with("toy,2,"));
}

#[test]
fn basis_cap_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy_config(tmp.path(), 1e-9, 2);
    let out = sgalp(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy_config(tmp.path(), 0.4, 3);
    let out = sgalp(&["run", "--config", cfg.to_str().unwrap(), "--seed", "17"]);
    assert_eq!(out.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir(&out).join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["seed"], 17);
}

#[test]
fn bad_configs_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (
            "no-output.json",
            r#"{"problem": "toy", "model": "falp"}"#,
            "output_dir",
        ),
        (
            "unknown.json",
            r#"{"problem": "toy", "model": "falp", "output_dir": "x", "colour": 1}"#,
            "colour",
        ),
        (
            "problem.json",
            r#"{"problem": "pic:99", "model": "falp", "output_dir": "x"}"#,
            "99",
        ),
        (
            "custom.json",
            r#"{"problem": "gjr:custom", "model": "falp", "output_dir": "x"}"#,
            "gjr.instance",
        ),
    ];
    for (name, text, needle) in cases {
        let path = tmp.path().join(name);
        fs::write(&path, text).unwrap();
        for cmd in ["validate-config", "run"] {
            let out = sgalp(&[cmd, "--config", path.to_str().unwrap()]);
            assert_eq!(out.status.code(), Some(1), "{cmd} {name}");
            let err = String::from_utf8_lossy(&out.stderr);
            assert!(err.contains(needle), "{cmd} {name}: {err}");
        }
    }
    let ok = toy_config(tmp.path(), 0.4, 3);
    let out = sgalp(&["validate-config", "--config", ok.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "ok");
}

#[test]
fn print_instance() {
    let out = sgalp(&["print-instance", "pic:1"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["gamma"].as_f64().is_some());

    let a = sgalp(&["print-instance", "gjr:2:constant:100", "--seed", "5"]);
    let b = sgalp(&["print-instance", "gjr:2:constant:100", "--seed", "5"]);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    assert_eq!(a.stdout, b.stdout);

    assert_eq!(
        sgalp(&["print-instance", "gjr:custom"]).status.code(),
        Some(1)
    );
    assert_eq!(sgalp(&["print-instance", "nope"]).status.code(), Some(1));
}

#[test]
fn summarize_rejects_foreign_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sgalp(&["summarize", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
