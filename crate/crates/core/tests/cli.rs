use std::process::Command;

fn fpmimo(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_fpmimo"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.success(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn sweep_writes_reproducible_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "scenario = SIMO\nM = 16, 64\nformat = fp16\ntrials = 30\nseed = 42\n",
    )
    .unwrap();
    let a = dir.path().join("a.csv");
    let (ok, _, err) = fpmimo(&[
        "sweep",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        a.to_str().unwrap(),
    ]);
    assert!(ok, "{err}");
    let (ok, b, _) = fpmimo(&["sweep", "-c", cfg.to_str().unwrap()]);
    assert!(ok);
    let a = std::fs::read_to_string(a).unwrap();
    assert_eq!(a, b);
    assert!(a.contains("# seed = 42"));
    let parsed = fpmimo::harness::parse_csv(&a).unwrap();
    assert_eq!(parsed.rows.len(), 2);
    assert_eq!(parsed.config.seed, 42);
}

#[test]
fn set_overrides_and_errors() {
    let (ok, out, _) = fpmimo(&[
        "sweep",
        "-s",
        "M=32",
        "-s",
        "trials=5",
        "-s",
        "scenario=MISO",
    ]);
    assert!(ok);
    assert!(out.contains("MISO,32,1,"));
    let (ok, _, err) = fpmimo(&["sweep", "-s", "colour=blue"]);
    assert!(!ok);
    assert!(err.contains("colour"));
}

#[test]
fn verify_reports_per_lambda() {
    let (ok, out, err) = fpmimo(&[
        "verify",
        "-s",
        "scenario=MU-SIMO",
        "-s",
        "M=32",
        "-s",
        "trials=20",
    ]);
    assert!(ok, "{err}");
    let header = out.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.contains("violation_lambda_0.5") && header.contains("median_backward_ratio"));
    assert_eq!(out.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn bounds_table() {
    let (ok, out, err) = fpmimo(&["bounds", "--m", "100,1000", "--samples", "200"]);
    assert!(ok, "{err}");
    assert!(out.contains("# m_max_simo = 308"));
    assert_eq!(
        out.lines()
            .filter(|l| l.starts_with("100,") || l.starts_with("1000,"))
            .count(),
        2
    );
}

#[test]
fn cost_table() {
    let (ok, out, _) = fpmimo(&["cost", "--n", "1000", "--b", "32", "--g", "1,2"]);
    assert!(ok);
    let rows: Vec<&str> = out.lines().filter(|l| l.starts_with("1000,")).collect();
    assert_eq!(rows.len(), 2);
    // G = 1 carries no overhead
    assert!(rows[0].ends_with(",0.0,0.0"));
}
