use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wrcouple::io::Table;

fn benchmarks() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks")
}

fn wrcouple(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wrcouple")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[test]
fn analyze_exit_codes() {
    let a = wrcouple(&["analyze", path(&benchmarks().join("circuit_a.net"))]);
    assert_eq!(a.status.code(), Some(0));
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.contains("M1: parallel CVR path 0 - n2"), "{text}");

    let b = wrcouple(&["analyze", "--json", path(&benchmarks().join("circuit_b.net"))]);
    assert_eq!(b.status.code(), Some(2));
    let json: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    assert_eq!(json["prediction"], "NotGuaranteed");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.net");
    std::fs::write(&bad, "R1 1 0 1\nX9 1 0 2\n").unwrap();
    let out = wrcouple(&["analyze", path(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 2"));
}

#[test]
fn simulate_convergent_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("a.csv");
    let out = wrcouple(&["simulate", "--config", path(&benchmarks().join("convergent.json")), "--out", path(&csv)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stderr).unwrap().contains("status: converged"));
    let table = Table::from_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(&table.headers[..4], ["t", "mon", "1", "2"]);
    assert_eq!(table.rows(), 81);
}

#[test]
fn simulate_divergent_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    let out = wrcouple(&[
        "simulate",
        "--config",
        path(&benchmarks().join("divergent.json")),
        "--mode",
        "wr",
        "--out",
        path(&csv),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("status: diverged"));
    let table = Table::from_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert!(table.column("mon").is_none());
    assert!(sup(table.column("2").unwrap()) > sup(table.column("1").unwrap()));
}

#[test]
fn simulate_plain_circuit_monolithic_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("rc.net"), ".source s 1\nV1 1 0 s\nR1 1 2 1\nC1 2 0 1\n").unwrap();
    let cfg = dir.path().join("rc.json");
    std::fs::write(&cfg, r#"{"netlist": "rc.net", "t_end": 0.1, "probe": "2"}"#).unwrap();
    let out = wrcouple(&["simulate", "--config", path(&cfg), "--mode", "mono"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = Table::from_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(table.headers, ["t", "mon"]);
    // Implicit Euler for e2' = 1 − e2 from e2(0) = 0.
    let mut e = 0.0;
    for &v in &table.column("mon").unwrap()[1..] {
        e = (e + 0.01) / 1.01;
        assert!((v - e).abs() < 1e-11);
    }
}

#[test]
fn simulate_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"netlist": "missing.net"}"#).unwrap();
    assert_eq!(wrcouple(&["simulate", "--config", path(&cfg)]).status.code(), Some(1));
    std::fs::write(&cfg, r#"{"netlist": "x.net", "typo": 1}"#).unwrap();
    assert_eq!(wrcouple(&["simulate", "--config", path(&cfg)]).status.code(), Some(1));
    let unknown_probe = wrcouple(&[
        "simulate",
        "--config",
        path(&benchmarks().join("convergent.json")),
        "--probe",
        "n9",
        "--out",
        path(&dir.path().join("x.csv")),
    ]);
    assert_eq!(unknown_probe.status.code(), Some(1));
}

#[test]
fn validate_builtin_and_broken_models() {
    let out = wrcouple(&["validate", "transformer-lite"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains("FAIL"), "{text}");

    assert_eq!(wrcouple(&["validate", path(&benchmarks().join("one-dof"))]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| std::fs::write(dir.path().join(name), body).unwrap();
    write("M.mtx", "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 2 1\n2 1 2\n");
    write("K.mtx", "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 2\n2 2 2\n");
    write("X.mtx", "%%MatrixMarket matrix coordinate real general\n2 1 1\n1 1 1\n");
    let asym = wrcouple(&["validate", path(dir.path())]);
    assert_eq!(asym.status.code(), Some(2));
    assert!(String::from_utf8(asym.stdout).unwrap().contains("FAIL M symmetric"));

    write("M.mtx", "%%MatrixMarket matrix coordinate real symmetric\n2 2 0\n");
    write("X.mtx", "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n1 2 1\n");
    let rank = wrcouple(&["validate", path(dir.path())]);
    assert_eq!(rank.status.code(), Some(2));
    let text = String::from_utf8(rank.stdout).unwrap();
    assert!(text.contains("FAIL X full column rank") && text.contains("PASS M symmetric"), "{text}");

    let missing = wrcouple(&["validate", "no-such-model"]);
    assert_eq!(missing.status.code(), Some(1));
}
