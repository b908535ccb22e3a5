use std::path::Path;
use std::process::{Command, Output};

fn pclocal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pclocal")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ball_levels_of_t3() {
    let out = stdout(&pclocal(&["ball", "--family", "t3", "--radius", "2"]));
    let sizes: Vec<&str> = out.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(sizes, ["1", "3", "6"]);
}

#[test]
fn harmonic_on_t3_is_uniform() {
    let out = stdout(&pclocal(&["harmonic", "--family", "t3", "--radius", "3"]));
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    for r in rows {
        let mu: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!((mu - 1.0 / 12.0).abs() < 1e-14);
    }
}

#[test]
fn validation_errors_exit_with_two() {
    let o = pclocal(&["percolate", "--family", "t3", "--radius", "2", "--p", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--master-seed"));
    for bad in [
        &["ball", "--family", "t3", "--bogus"][..],
        &["ball", "--family", "nonsense", "--radius", "2"],
        &["percolate", "--family", "t3", "--radius", "2", "--p", "1.5", "--master-seed", "1"],
        &["locality", "--family", "t3", "--n-list", "4,3", "--master-seed", "1"],
        &["frobnicate"],
    ] {
        assert_eq!(pclocal(bad).status.code(), Some(2), "{bad:?}");
    }
}

#[test]
fn output_does_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("pc{threads}.csv"));
        let o = pclocal(&[
            "pc-estimate", "--family", "z2z3", "--n-list", "4,6", "--trials", "4000", "--master-seed", "7",
            "--threads", threads, "--out", path(&out),
        ]);
        assert!(o.status.success());
        files.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn manifest_reproduces_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("run.csv");
    let o = pclocal(&[
        "explore", "--family", "z2z3", "--quotient-n", "4", "--p", "0.5", "--eps", "0.05", "--eps1", "0.05",
        "--runs", "5", "--cap", "200", "--master-seed", "3", "--out", path(&first),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = dir.path().join("run.csv.manifest.json");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(json["command"], "explore");
    assert_eq!(json["master_seed"], 3);
    let again = dir.path().join("again.csv");
    let o = pclocal(&["explore", "--config", path(&manifest), "--out", path(&again)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn toml_config_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "family = \"z2z3\"\nradius = 2\n").unwrap();
    let out = stdout(&pclocal(&["ball", "--family", "t3", "--radius", "5", "--config", path(&cfg)]));
    let sizes: Vec<&str> = out.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(sizes, ["1", "3", "4"]);
}

#[test]
fn quotient_check_residuals_vanish() {
    let out = stdout(&pclocal(&["quotient-check", "--family", "z2z3", "--n-list", "2,3,4", "--radius", "10"]));
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 30);
    for r in rows {
        let res: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(res <= 1e-12);
    }
}

#[test]
fn csv_quotes_fields_with_commas() {
    let out = stdout(&pclocal(&["graph-info", "--family", "free:3,3", "--radius", "1"]));
    let mut reader = csv::Reader::from_reader(out.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows[0].len(), 2);
}

#[test]
fn other_commands_run() {
    for args in [
        &["spectral", "--family", "z2z3", "--tmax", "12"][..],
        &["assumption", "--family", "z2z3", "--radius", "2", "--p", "0.6", "--trials", "2000", "--master-seed", "1"],
        &["locality", "--family", "t3", "--n-list", "3,4", "--radius", "4", "--trials", "2000", "--master-seed", "1"],
    ] {
        let out = stdout(&pclocal(args));
        assert!(out.lines().count() >= 2, "{args:?}: {out}");
    }
}
