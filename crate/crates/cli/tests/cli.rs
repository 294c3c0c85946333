use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rfield(dir: &Path, args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rfield"));
    cmd.current_dir(dir).args(args).env_remove("RFIELD_WORKERS");
    if let Some(w) = workers {
        cmd.env("RFIELD_WORKERS", w);
    }
    cmd.output().expect("binary runs")
}

fn without_timestamp(text: &str) -> String {
    text.lines().filter(|l| !l.trim_start().starts_with("\"timestamp\"")).collect::<Vec<_>>().join("\n")
}

#[test]
fn verify_clt_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = rfield(
        dir.path(),
        &[
            "verify-clt", "--model", "linear:2tap", "--shape", "box:n=48,d=2", "--replicates", "5000", "--seed", "1",
            "-o", "r.json", "--csv", "r.csv",
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(doc["pass"], Value::Bool(true));
    assert_eq!(doc["command"], "verify-clt");
    let k = doc["report"]["kolmogorov"].as_f64().unwrap();
    let l = doc["report"]["levy"].as_f64().unwrap();
    assert!(l <= k && k < 0.03);
    assert_eq!(doc["provenance"]["seed"], 1);
    assert_eq!(doc["provenance"]["config_hash"].as_str().unwrap().len(), 64);
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5001);
    assert!(csv.starts_with("replicate,value\n"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = rfield(dir.path(), &["simulate", "--model", "linear:2tap", "--domain-file", "missing.txt"], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.txt"));
    for args in [
        &["simulate", "--shape", "box:n=3"][..],
        &["verify-clt", "--model", "linear:cubic.txt", "--shape", "box:n=3"],
        &["frobnicate"],
        &["simulate", "--model", "linear:2tap", "--shape", "circle:r=3"],
        &["verify-variance", "--model", "linear:2tap"],
    ] {
        let out = rfield(dir.path(), args, None);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
    let out = rfield(dir.path(), &["simulate", "--model", "linear:2tap", "--shape", "box:n=3"], Some("zero"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_verification_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = rfield(
        dir.path(),
        &["verify-clt", "--model", "linear:2tap", "--shape", "box:n=4,d=2", "--replicates", "1000", "--tolerance", "1e-6"],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["pass"], Value::Bool(false));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("dom.txt"), "dim=2\n1,1\n2,1\n3,1\n1,2\n5,5\n").unwrap();
    fs::write(dir.path().join("k.txt"), "# kernel\n0,0 : 1\n1,0 : 0.5\n0,1 : -0.25\n").unwrap();
    let args = [
        "estimate", "--model", "linear:k.txt", "--domain-file", "dom.txt", "--noise", "exponential", "--lag", "1,0",
        "--lag", "0,-1", "--replicates", "3000", "--seed", "9", "--save-config", "cfg.json", "-o", "a.json",
    ];
    assert_eq!(rfield(dir.path(), &args, Some("1")).status.code(), Some(0));
    let out = rfield(dir.path(), &["run", "cfg.json", "-o", "b.json"], Some("4"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let a = fs::read_to_string(dir.path().join("a.json")).unwrap();
    let b = fs::read_to_string(dir.path().join("b.json")).unwrap();
    let (a, b) = (without_timestamp(&a), without_timestamp(&b));
    // Only the output path differs; it is excluded from the config hash.
    assert_eq!(a.replace("a.json", "b.json"), b);
    // The saved config names a.json as its output; rerunning rewrites it.
    assert_eq!(rfield(dir.path(), &["run", "cfg.json"], Some("3")).status.code(), Some(0));
    assert_eq!(without_timestamp(&fs::read_to_string(dir.path().join("a.json")).unwrap()), a);
    // The hash covers referenced files.
    fs::write(dir.path().join("k.txt"), "0,0 : 1\n").unwrap();
    assert_eq!(rfield(dir.path(), &["run", "cfg.json", "-o", "c.json"], None).status.code(), Some(0));
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("c.json")).unwrap()).unwrap();
    let first: Value = serde_json::from_str(&a).unwrap();
    assert_ne!(doc["provenance"]["config_hash"], first["provenance"]["config_hash"]);
}

#[test]
fn every_subcommand_runs() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 10] = [
        &["simulate", "--model", "volterra:lag1", "--shape", "line:n=10,d=1", "--csv", "s.csv"],
        &["dependence", "--model", "linear:ma:1,-0.5", "--shape", "line:n=10,d=1", "--p", "4"],
        &["estimate", "--model", "linear:2tap", "--shape", "box:n=10,d=2", "--lag", "1,0", "--csv", "e.csv"],
        &["verify-clt", "--model", "subordinated:2tap:K=tanh", "--shape", "box:n=20,d=2", "--replicates", "1000",
            "--tolerance", "0.1"],
        &["verify-moment", "--model", "volterra:lag1", "--shape", "box:n=4,d=2", "--p", "4", "--replicates", "500",
            "--weights", "uniform:2"],
        &["verify-variance", "--model", "linear:ma:1,1", "--dim", "1"],
        &["verify-truncation", "--model", "linear:ma:1,0.5", "--shape", "line:n=30,d=1", "--m", "0,1,2"],
        &["verify-autocov", "--model", "linear:2tap", "--shape", "line:n=500,d=1", "--lag", "1", "--replicates",
            "1000", "--tolerance", "0.1"],
        &["fclt", "--model", "linear:identity", "--n", "16", "--pair", "quadrant:t=0.5|rect:s=0.25;t=1",
            "--gap-set", "quadrant:t=0.3", "--replicates", "2000"],
        &["vc-index", "--kind", "rect", "--d", "1"],
    ];
    for args in runs {
        let out = rfield(dir.path(), args, None);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(doc["command"], args[0]);
    }
    let est = fs::read_to_string(dir.path().join("e.csv")).unwrap();
    assert!(est.starts_with("lag,lag_set_size,gamma_hat,gamma_exact,se,ci_lower,ci_upper\n\"(1,0)\",90,"));
    assert_eq!(fs::read_to_string(dir.path().join("s.csv")).unwrap().lines().count(), 11);
}
