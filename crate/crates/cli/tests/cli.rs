use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn lmqn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lmqn"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    dir.join(name)
}

#[test]
fn small_sweep_passes_and_writes_csv() {
    let csv = scratch("sweep.csv");
    let out = lmqn()
        .args(["--n", "40", "--n", "60", "--seed", "3", "--csv"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("RE exp 1") && stdout.contains("all runs passed"));

    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,family,phi,experiment,re,t_method,t_oracle");
    // 4 families x 2 sizes x 3 experiments.
    assert_eq!(lines.len(), 1 + 24);
    for line in &lines[1..] {
        let re: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(re <= 1e-13);
    }
}

#[test]
fn single_experiment_and_family() {
    let csv = scratch("single.csv");
    let out = lmqn()
        .args([
            "--family",
            "broyden",
            "--phi",
            "0.25",
            "--n",
            "30",
            "--experiment",
            "2",
            "--csv",
        ])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("30,broyden,0.25,2,"));
}

#[test]
fn zero_gate_fails_with_oracle_and_passes_without() {
    let failing = lmqn()
        .args(["--family", "bfgs", "--n", "30", "--re-gate", "0"])
        .output()
        .unwrap();
    assert_eq!(failing.status.code(), Some(1));
    let skipped = lmqn()
        .args([
            "--family",
            "bfgs",
            "--n",
            "30",
            "--re-gate",
            "0",
            "--no-oracle",
        ])
        .output()
        .unwrap();
    assert!(skipped.status.success());
    assert!(String::from_utf8_lossy(&skipped.stdout).contains("skipped"));
}

#[test]
fn invalid_configuration_is_reported() {
    let out = lmqn().args(["--n", "5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = lmqn()
        .args(["--family", "broyden", "--phi", "1.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = lmqn().args(["--family", "newton"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn loads_pairs_from_files() {
    let s = scratch("s.txt");
    let y = scratch("y.txt");
    fs::write(&s, "4 2\n1 0\n0 1\n0 0\n0 0\n").unwrap();
    fs::write(&y, "4 2\n2 0\n0 3\n0 0\n0 0\n").unwrap();
    let csv = scratch("loaded.csv");
    let out = lmqn()
        .args([
            "--family",
            "bfgs",
            "--gamma",
            "1",
            "--experiment",
            "1",
            "--load-s",
        ])
        .arg(&s)
        .arg("--load-y")
        .arg(&y)
        .arg("--csv")
        .arg(&csv)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(&csv).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("4,bfgs,0,1,"));
}
