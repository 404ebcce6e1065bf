use std::path::Path;
use std::process::{Command, Output};

fn ddwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddwave"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn list_schemes_prints_every_id() {
    let o = ddwave(&["list-schemes"]);
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    for id in ["otfs", "gf_otfs", "rw_otfs", "dr_ufmc"] {
        assert!(out.lines().any(|l| l.starts_with(id)), "{id} missing from\n{out}");
    }
}

#[test]
fn oracle_suite_passes() {
    let o = ddwave(&["oracle"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().contains("checks passed"));
}

#[test]
fn config_errors_exit_2_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    let cases = [
        ("unknown.json", r#"{"experiment": "loopback", "frames": 3}"#, "frames"),
        ("zero.json", r#"{"n_frames": 0}"#, "n_frames"),
        ("syntax.json", "{\n  \"m\": 64,\n  \"n\": \n}", "line 4"),
        ("divide.json", r#"{"m": 64, "n_sc_rb": 7}"#, "m=64"),
    ];
    for (name, body, needle) in cases {
        let cfg = write_config(tmp.path(), name, body);
        let o = ddwave(&["run", &cfg, "--out", out_s]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{name}: {}", stderr(&o));
        assert!(!out.exists(), "{name} wrote output");
    }
    let o = ddwave(&["run", tmp.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "nan.json",
        r#"{"m": 8, "n": 4, "schemes": ["otfs"], "n_frames": 1, "snr_grid_db": [-7000]}"#,
    );
    let out = tmp.path().join("out");
    let o = ddwave(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn loopback_csv_is_all_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "lb.json", r#"{"experiment": "loopback", "n_frames": 2}"#);
    let out = tmp.path().join("lb");
    let o = ddwave(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for id in ["otfs", "gf_otfs", "rw_otfs", "dr_ufmc"] {
        let body = std::fs::read_to_string(out.join(format!("loopback_{id}.csv"))).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next(), Some("snr_db,ber,n_bits,n_errors,ci95_lo,ci95_hi"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.0, "{id}");
        assert_eq!(row[3], "0");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["m"], 64);
    assert_eq!(report["config"]["filter_len"], 129);
    assert!(report["snr_definition"].as_str().unwrap().contains("Es"));
}

#[test]
fn seed_and_workers_reproduce_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "ber.json",
        r#"{"snr_grid_db": "5:10:25", "n_frames": 4, "schemes": ["otfs", "gf_otfs"]}"#,
    );
    let run = |dir: &str, workers: &str, seed: &str| {
        let out = tmp.path().join(dir);
        let o = ddwave(&["run", &cfg, "--out", out.to_str().unwrap(), "--workers", workers, "--seed", seed]);
        assert!(o.status.success(), "{}", stderr(&o));
        ["ber_otfs.csv", "ber_gf_otfs.csv"].map(|f| std::fs::read(out.join(f)).unwrap())
    };
    let a = run("a", "1", "9");
    assert_eq!(a, run("b", "1", "9"));
    assert_eq!(a, run("c", "4", "9"));
    assert_ne!(a, run("d", "1", "10"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("a/report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 9);
}
