use std::path::Path;
use std::process::{Command, Output};

fn cmdpac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmdpac")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn verify_fixture_passes() {
    let o = cmdpac(&["verify", "--fixture", "five_state"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    assert!(!out.contains("FAIL"));
}

#[test]
fn verify_input_errors_exit_with_two() {
    assert_eq!(cmdpac(&["verify", "--fixture", "nope"]).status.code(), Some(2));
    assert_eq!(cmdpac(&["verify"]).status.code(), Some(2));
    assert_eq!(cmdpac(&["verify", "--fixture", "two_state", "--grid", "5"]).status.code(), Some(2));
}

#[test]
fn run_then_diag() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        &format!(
            "model = \"fixture:three_state\"\nalgorithm = \"cac\"\ntotal_steps = 4000\nsnapshot_every = 100\n\
             seeds = [0, 1]\noutput_dir = {:?}\noracle = true\n",
            out_dir.to_string_lossy()
        ),
    );
    let o = cmdpac(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("config_hash"));
    for f in ["config.toml", "summary.csv", "seed_0.csv", "seed_1.csv", "policy_seed_1.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let o = cmdpac(&["diag", &out_dir.to_string_lossy()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("rate: skipped"));
}

#[test]
fn output_dir_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "model = \"fixture:two_state\"\nalgorithm = \"cnac\"\ntotal_steps = 500\nseeds = [2]\n",
    );
    let dir = tmp.path().join("elsewhere");
    let o = cmdpac(&["run", &cfg, "--output-dir", &dir.to_string_lossy(), "--sequential"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(dir.join("seed_2.csv").exists());
}

#[test]
fn bad_config_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "model = \"fixture:two_state\"\nalgorithm = \"cac\"\nstep_count = 5\n");
    let o = cmdpac(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step_count"));
    assert_eq!(cmdpac(&["diag", &tmp.path().join("missing").to_string_lossy()]).status.code(), Some(2));
}

#[test]
fn failed_seed_exits_with_one() {
    // unit step constants on the grid break the Fisher estimate at the first refresh
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        &format!(
            "model = \"grid:5\"\nalgorithm = \"cnac\"\ntotal_steps = 3000\nseeds = [0]\noutput_dir = {:?}\n",
            out_dir.to_string_lossy()
        ),
    );
    let o = cmdpac(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAILED"));
    assert_eq!(cmdpac(&["diag", &out_dir.to_string_lossy()]).status.code(), Some(1));
}

#[test]
fn gridworld_spec_round_trips_through_toml() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cmdpac(&["gridworld", "describe", "--side", "6", "--cost-seed", "4", "--toml"]);
    assert_eq!(o.status.code(), Some(0));
    let spec = tmp.path().join("grid.toml");
    std::fs::write(&spec, &o.stdout).unwrap();

    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    let o = cmdpac(&["gridworld", "generate", "--side", "6", "--cost-seed", "4", "--out", &a.to_string_lossy()]);
    assert_eq!(o.status.code(), Some(0));
    let o = cmdpac(&["gridworld", "generate", "--spec", &spec.to_string_lossy(), "--out", &b.to_string_lossy()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let o = cmdpac(&["verify", "--model", &a.to_string_lossy()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn describe_marks_start_goal_and_hazards() {
    let o = cmdpac(&["gridworld", "describe", "--side", "5"]);
    let out = stdout(&o);
    assert!(out.starts_with("5x5 grid"));
    assert!(out.contains('S') && out.contains('G'));
    assert_eq!(out.matches('!').count(), 3);
    assert_eq!(cmdpac(&["gridworld", "describe", "--side", "1"]).status.code(), Some(2));
}
