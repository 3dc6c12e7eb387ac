use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gne(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gne"));
    cmd.args(args).env_remove("GNE_OUTPUT_ROOT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(path: &Path, body: &str) {
    fs::write(path, body).unwrap();
}

#[test]
fn generate_writes_a_loadable_instance() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("inst.json");
    let out = gne(&["generate", "--agents", "5", "--seed", "3", "-o", file.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = incentive_gne::harness::InstanceDocument::read(&file).unwrap();
    let (game, geom) = doc.build().unwrap();
    assert_eq!(game.dim(), 5);
    assert_eq!(geom.num_rows(), 4);

    let stdout = gne(&["generate", "--agents", "5", "--seed", "3"], &[]);
    assert_eq!(String::from_utf8(stdout.stdout).unwrap(), fs::read_to_string(&file).unwrap());
}

#[test]
fn oracle_prints_json() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("inst.json");
    assert!(gne(&["generate", "--agents", "4", "-o", file.to_str().unwrap()], &[]).status.success());
    let out = gne(&["oracle", file.to_str().unwrap(), "--starts", "3"], &[]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["starts"], 3);
    assert_eq!(v["x_best"].as_array().unwrap().len(), 4);
}

#[test]
fn run_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    write_config(
        &cfg,
        r#"{"estimator": ["perfect", "ls"], "rounds": 8, "seeds": [0], "output_dir": "sweep",
            "instance": {"num_agents": 4}, "oracle_starts": 2, "probe_count": 1}"#,
    );
    // the relative output_dir lands under the override root
    let out = gne(&["run", cfg.to_str().unwrap()], &[("GNE_OUTPUT_ROOT", tmp.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("sweep");
    assert!(dir.join("summary.json").exists());

    let rep = gne(&["report", dir.to_str().unwrap()], &[]);
    assert!(rep.status.success());
    let table = String::from_utf8(rep.stdout).unwrap();
    assert!(table.contains("s0_perfect_cxi0.5") && table.contains("s0_ls_cxi0.5"));
    assert_eq!(table, fs::read_to_string(dir.join("report.txt")).unwrap());
}

#[test]
fn output_flag_beats_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    write_config(
        &cfg,
        r#"{"estimator": "perfect", "rounds": 3, "seeds": [1], "output_dir": "unused",
            "instance": {"num_agents": 3}, "oracle_starts": 0}"#,
    );
    let dir = tmp.path().join("elsewhere");
    let out = gne(&["run", cfg.to_str().unwrap(), "-o", dir.to_str().unwrap()], &[]);
    assert!(out.status.success());
    assert!(dir.join("summary.csv").exists());
}

#[test]
fn config_errors_exit_with_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    write_config(&cfg, r#"{"estimator": "ls", "rounds": 3, "seeds": [], "output_dir": "x"}"#);
    assert_eq!(gne(&["run", cfg.to_str().unwrap()], &[]).status.code(), Some(1));
    assert_eq!(gne(&["run", "/no/such/config.json"], &[]).status.code(), Some(1));
    assert_eq!(gne(&["report", tmp.path().to_str().unwrap()], &[]).status.code(), Some(1));
    assert_eq!(gne(&["frobnicate"], &[]).status.code(), Some(1));
    assert_eq!(gne(&["generate", "--agents", "0"], &[]).status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    write_config(
        &cfg,
        &format!(
            r#"{{"estimator": "perfect", "rounds": 5, "seeds": [0, 1, 2, 3], "output_dir": "{}",
                "instance": {{"num_agents": 6}}, "max_inner_iters": 1, "oracle_starts": 0}}"#,
            tmp.path().join("out").display()
        ),
    );
    let out = gne(&["run", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));
    assert!(tmp.path().join("out/summary.json").exists());
}

#[test]
fn help_exits_cleanly() {
    let out = gne(&["--help"], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("generate"));
}
