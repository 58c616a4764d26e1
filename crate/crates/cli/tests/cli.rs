use std::path::Path;
use std::process::{Command, Output};

fn excite(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_excite"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn excite");
    assert!(
        out.status.success(),
        "excite {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    excite(d, &["--seed", "3", "generate", "--admissible", "--output", "w.txt", "--adjacency", "a.txt"]);
    excite(
        d,
        &[
            "--seed", "4", "simulate", "--weights", "w.txt", "--horizon", "40", "--excite-node", "2",
            "--excite-time", "30", "--excitation", "20", "--output", "traj.csv",
        ],
    );
    let traj = std::fs::read_to_string(d.join("traj.csv")).unwrap();
    assert!(traj.contains("# excite node=2 t=30 e=20"));

    let csv = stdout(&excite(d, &["infer", "onehop", "--weights", "w.txt", "--trajectory", "traj.csv"]));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("source,hop,node,deviation,threshold,member"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 19);
    for r in &rows {
        assert_eq!(r[0], "2");
        assert_ne!(r[2], "2");
        let dev: f64 = r[3].parse().unwrap();
        let thr: f64 = r[4].parse().unwrap();
        assert_eq!(r[5] == "1", dev.abs() >= thr);
    }

    let json = stdout(&excite(d, &["--out", "json", "infer", "multihop", "--weights", "w.txt", "--trajectory", "traj.csv"]));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v.as_array().is_some_and(|a| !a.is_empty()));

    std::fs::write(d.join("c.txt"), "0 1 zero\n").unwrap();
    excite(d, &["estimate", "ols", "--trajectory", "traj.csv", "--truth", "w.txt", "--output", "ols.txt"]);
    let out = excite(
        d,
        &["estimate", "constrained", "--trajectory", "traj.csv", "--constraints", "c.txt", "--output", "c.txt.out"],
    );
    assert!(out.status.success());
    let est = std::fs::read_to_string(d.join("c.txt.out")).unwrap();
    let first: Vec<f64> = est.lines().nth(1).unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
    assert_eq!(first.len(), 20);
    assert_eq!(first[1], 0.0);
}

#[test]
fn seed_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = stdout(&excite(d, &["--seed", "9", "generate"]));
    let b = stdout(&excite(d, &["--seed", "9", "generate"]));
    let c = stdout(&excite(d, &["--seed", "10", "generate"]));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn experiment_table_formats() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let csv = stdout(&excite(d, &["--trials", "40", "--seed", "1", "experiment", "fig1a"]));
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("experiment,parameter,theoretical,empirical,trials,half_width,extra")
    );
    assert_eq!(lines.count(), 4);
    let again = stdout(&excite(d, &["--trials", "40", "--seed", "1", "experiment", "fig1a"]));
    assert_eq!(csv, again);

    let json = stdout(&excite(d, &["--out", "json", "--trials", "40", "experiment", "fig1a"]));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["experiment"], "fig1a");
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn config_file_is_honoured_and_unknown_keys_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.toml"), "error_targets = [0.1, 0.2]\n").unwrap();
    let csv = stdout(&excite(d, &["--config", "cfg.toml", "design-excitation"]));
    assert_eq!(csv.lines().count(), 3);

    std::fs::write(d.join("bad.toml"), "no_such_key = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_excite"))
        .current_dir(d)
        .args(["--config", "bad.toml", "design-excitation"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
