use std::path::Path;
use std::process::{Command, Output};

fn updown(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_updown"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn verify_succeeds_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = updown(&["verify", "--instance", "graph", "--nmax", "4", "--p", "1/3"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["all_passed"], true);
    assert_eq!(manifest(dir.path())["passed"], true);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["verify", "--instance", "perm", "--nmax", "99"],
        vec!["verify", "--instance", "perm", "--nmax", "3", "--p", "0.5"],
        vec!["simulate", "--instance", "perm", "--n", "3", "--t", "1", "--pattern", "1234"],
        vec!["sepdist", "--mode", "sideways", "--n", "5"],
        vec!["bogus"],
    ] {
        let out = updown(&args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# defaults\ninstance = perm\nnmax = 3\np = 1/3\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = updown(&["--config", cfg.to_str().unwrap(), "verify", "--p", "1/2"], &out_dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let config = &manifest(&out_dir)["config"];
    assert_eq!(config["p"], "1/2");
    assert_eq!(config["nmax"], 3);
}

#[test]
fn discrete_separation_for_two_states() {
    let dir = tempfile::tempdir().unwrap();
    let out = updown(&["sepdist", "--mode", "discrete", "--n", "2", "--m", "0..3"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sepdist.csv")).unwrap();
    let exact: Vec<&str> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(exact, ["1/1", "2/3", "4/9", "8/27"]);
}
