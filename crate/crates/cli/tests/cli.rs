use std::path::Path;
use std::process::{Command, Output};

fn gdmgame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdmgame"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_one_line_failure(o: &Output, needle: &str) {
    assert!(!o.status.success());
    let err = stderr(o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains(needle), "{err}");
}

#[test]
fn run_writes_runs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = gdmgame(&[
        "run",
        "--out",
        out,
        "--solvers",
        "random,ppo",
        "--seeds",
        "0,1",
        "--epochs",
        "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["random_seed0", "random_seed1", "ppo_seed0", "ppo_seed1"] {
        let text = std::fs::read_to_string(dir.path().join(format!("runs/{name}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 6);
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("oracle_utility"));
}

#[test]
fn config_file_is_honoured_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "schema_version = 1\nsolvers = [\"random\"]\nepochs = 7\nseeds = [3]\nreward_mode = \"binary\"\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = gdmgame(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--epochs",
        "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("runs/random_seed3.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
    for line in text.lines().skip(1) {
        let reward = line.rsplit(',').next().unwrap();
        assert!(reward == "0.0" || reward == "1.0", "{line}");
    }
}

#[test]
fn bad_inputs_fail_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_one_line_failure(
        &gdmgame(&["run", "--out", out, "--solvers", "sac"]),
        "unknown solver `sac`",
    );
    assert_one_line_failure(&gdmgame(&["run", "--out", out, "--epochs", "0"]), "epochs");
    assert_one_line_failure(
        &gdmgame(&["run", "--out", out, "--reward-mode", "shaped"]),
        "reward mode",
    );
    assert_one_line_failure(
        &gdmgame(&["run", "--out", out, "--seeds", "a,b"]),
        "--seeds",
    );
    assert_one_line_failure(
        &gdmgame(&["sweep", "--out", out, "--param", "gamma", "--values", "1"]),
        "unknown sweep parameter `gamma`",
    );
    assert_one_line_failure(
        &gdmgame(&[
            "run",
            "--config",
            dir.path().join("missing.toml").to_str().unwrap(),
        ]),
        "missing.toml",
    );
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 9\n").unwrap();
    assert_one_line_failure(
        &gdmgame(&["oracle", "--config", bad.to_str().unwrap()]),
        "schema_version",
    );
}

#[test]
fn unwritable_output_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    std::fs::write(&file, "").unwrap();
    let target = file.join("sub");
    let o = gdmgame(&[
        "run",
        "--solvers",
        "random",
        "--epochs",
        "2",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_one_line_failure(&o, "plain-file");
}

#[test]
fn oracle_persists_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = gdmgame(&[
        "oracle",
        "--out",
        dir.path().to_str().unwrap(),
        "--seeds",
        "0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("seed 0: price "));
    let json = std::fs::read_to_string(dir.path().join("oracle_seed0.json")).unwrap();
    assert!(json.contains("\"flat_objective\": false"));
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = gdmgame(&[
        "sweep",
        "--out",
        dir.path().to_str().unwrap(),
        "--param",
        "beta",
        "--values",
        "0.1,0.3,0.5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(Path::new(dir.path()).join("sweep_beta.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "value,price,utility");
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn gradcheck_passes() {
    let o = gdmgame(&["gradcheck"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 7);
}
