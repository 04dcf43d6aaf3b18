use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ice(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ice")).args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn gen_tasks_rejects_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = ice(&["gen-tasks", "--n", "0", "--out", "t.txt"], dir.path());
    assert!(!out.status.success());
    assert!(!dir.path().join("t.txt").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.cfg"), "rung = vanilla\neps = 0\nn_tasks = 5\n").unwrap();
    ok(&ice(&["run", "--config", "exp.cfg", "--out", "file.csv"], dir.path()));
    ok(&ice(&["run", "--config", "exp.cfg", "--rung", "ice", "--tau", "0.9", "--out", "flag.csv"], dir.path()));
    let file = csv_rows(&dir.path().join("file.csv"));
    let flag = csv_rows(&dir.path().join("flag.csv"));
    assert_eq!(file.len(), 1 + 5 + 1);
    assert_eq!(file[1][1], "vanilla");
    assert_eq!(flag[1][1], "ice");
    // Exact oracle: ice exits on the first call, vanilla spends one call per slot.
    assert_eq!(flag[6][13], "1");
    assert_eq!(file[6][13], "13");
}

#[test]
fn baseline_speedup_is_a_call_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&ice(&["gen-tasks", "--seed", "2", "--n", "8", "--out", "tasks.txt"], d));
    ok(&ice(&["run", "--tasks", "tasks.txt", "--eps", "0", "--rung", "vanilla", "--out", "base.csv"], d));
    ok(&ice(&["run", "--tasks", "tasks.txt", "--eps", "0", "--baseline", "base.csv", "--out", "ice.csv"], d));
    let rows = csv_rows(&d.join("ice.csv"));
    let agg = rows.last().unwrap();
    assert_eq!(agg[0], "aggregate");
    assert_eq!(agg[12], "1");
    assert_eq!(agg[14], "13");
}

#[test]
fn nt_sweep_counts_layout_errors() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["sweep", "--m-min", "3", "--m-max", "3", "--n-tasks", "6", "--axis", "nt", "--values", "1,3"];
    ok(&ice(&[&args[..], &["--out", "sweep.csv"]].concat(), dir.path()));
    let rows = csv_rows(&dir.path().join("sweep.csv"));
    let metric =
        |value: &str, name: &str| rows.iter().find(|r| r[1] == value && r[2] == name).map(|r| r[3].clone()).unwrap();
    assert_eq!(metric("1", "layout_errors"), "6");
    assert_eq!(metric("3", "layout_errors"), "0");
    assert_eq!(metric("3", "step_budget_2"), "4");
}

#[test]
fn trace_stats_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&ice(&["run", "--rung", "structured", "--n-tasks", "10", "--trace-dir", "traces", "--out", "s.csv"], d));
    assert_eq!(fs::read_dir(d.join("traces")).unwrap().count(), 10);
    ok(&ice(&["trace-stats", "--traces", "traces", "--out", "stats"], d));
    let traj = csv_rows(&d.join("stats/trajectory.csv"));
    assert_eq!(traj[0], ["trace", "step", "avg_answer_conf"]);
    assert!(traj.len() > 10);
    let hist = csv_rows(&d.join("stats/histogram.csv"));
    assert_eq!(hist[0], ["category", "count"]);
    assert_eq!(hist.len(), 1 + 6);
    assert!(d.join("stats/jumps.csv").exists());
}

#[test]
fn config_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "colour = blue\n").unwrap();
    for args in [
        &["run", "--config", "bad.cfg", "--out", "x.csv"][..],
        &["run", "--eps", "0.7", "--out", "x.csv"],
        &["run", "--nt", "0", "--out", "x.csv"],
        &["sweep", "--axis", "depth", "--values", "1", "--out", "x.csv"],
        &["run", "--config", "missing.cfg", "--out", "x.csv"],
    ] {
        assert!(!ice(args, dir.path()).status.success(), "{args:?} should fail");
    }
}
