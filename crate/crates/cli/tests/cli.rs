use std::path::PathBuf;
use std::process::{Command, Output};

fn dirci(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dirci"))
        .args(args)
        .env_remove("DIRCI_SEED")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn data(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "data", name]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

#[test]
fn compute_text_examples() {
    let out = dirci(&[
        "compute",
        "--method",
        "pp",
        "--r-minus",
        "1.3",
        "--y",
        "1.65",
    ]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "(0.0000, 3.6100) strict_positive");

    let out = dirci(&["compute", "--y", "0"]);
    assert_eq!(stdout(&out).trim(), "(-1.9600, 1.9600) undetermined");

    let out = dirci(&["compute", "--method", "mp", "--y", "-1.65"]);
    assert_eq!(stdout(&out).trim(), "(-3.2976, 0.0000] weak_negative");
}

#[test]
fn compute_json_and_csv() {
    let out = dirci(&[
        "compute",
        "--setting",
        "conditional",
        "--y",
        "3.5",
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["lower"].as_f64().unwrap() > 0.0);
    assert_eq!(v["sign"], "strict_positive");

    let out = dirci(&["compute", "--y", "2", "--format", "csv"]);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lower,upper,closure,sign"));
    assert!(lines.next().unwrap().ends_with(",(),strict_positive"));
}

#[test]
fn exit_codes() {
    assert_eq!(dirci(&["compute", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        dirci(&["compute", "--y", "0", "--alpha", "1.5"])
            .status
            .code(),
        Some(2)
    );
    let out = dirci(&["compute", "--setting", "conditional", "--y", "1.5"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not selected"));
    assert_eq!(
        dirci(&["simulate", "--preset", "nope"]).status.code(),
        Some(2)
    );
    assert_eq!(
        dirci(&["batch", "--input", "/no/such/file.csv"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn invalid_scenario_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ \"study\": \"comparison\", \"thetas\": [1,").unwrap();
    let out = dirci(&["simulate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenario_file_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let json = r#"{
        "study": "comparison",
        "thetas": [0.0, 1.0],
        "methods": [{"method": {"kind": "shortest"}, "setting": {"kind": "marginal"}, "alpha": 0.05}],
        "reps": 50,
        "seed": 3
    }"#;
    std::fs::write(&path, json).unwrap();
    let out = dirci(&["simulate", "--scenario", path.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).starts_with("scenario,theta,method,metric,value,se\n"));
}

#[test]
fn simulate_is_reproducible_and_seed_env_wins() {
    let args = [
        "simulate",
        "--preset",
        "two-group",
        "--reps",
        "5",
        "--seed",
        "7",
    ];
    let a = dirci(&args);
    let b = dirci(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);

    let c = Command::new(env!("CARGO_BIN_EXE_dirci"))
        .args([
            "simulate",
            "--preset",
            "two-group",
            "--reps",
            "5",
            "--seed",
            "1",
        ])
        .env("DIRCI_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(a.stdout, c.stdout);
    let d = dirci(&[
        "simulate",
        "--preset",
        "two-group",
        "--reps",
        "5",
        "--seed",
        "8",
    ]);
    assert_ne!(a.stdout, d.stdout);
}

#[test]
fn fig4_columns_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("fig4.svg");
    let out = dirci(&[
        "simulate",
        "--preset",
        "fig4",
        "--reps",
        "3",
        "--svg",
        svg.to_str().unwrap(),
        "--svg-metric",
        "length",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let header = rows.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        ["scenario", "theta", "method", "metric", "value", "se"]
    );
    let metrics: std::collections::BTreeSet<String> =
        rows.records().map(|r| r.unwrap()[3].to_string()).collect();
    for m in [
        "length",
        "minimal_effect",
        "sign_weak",
        "sign_strict",
        "coverage",
    ] {
        assert!(metrics.contains(m), "{m}");
    }
    let doc = std::fs::read_to_string(svg).unwrap();
    assert!(doc.starts_with("<svg") && doc.matches("<polyline").count() == 6);
}

#[test]
fn batch_by05_with_everything_selected_equals_unadjusted() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    std::fs::write(&input, "id,estimate,se\na,2.5,1\nb,-3.1,1\nc,4.0,2\n").unwrap();
    let run = |adj: &str| {
        let out = dirci(&[
            "batch",
            "--input",
            input.to_str().unwrap(),
            "--adjustment",
            adj,
        ]);
        assert!(out.status.success());
        stdout(&out)
    };
    assert_eq!(run("by05"), run("none"));
}

#[test]
fn batch_exp_transform_and_stdin() {
    use std::io::Write;
    let mut child = Command::new(env!("CARGO_BIN_EXE_dirci"))
        .args(["batch", "--input", "-", "--transform", "exp"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"id,estimate\nx,0\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    let text = stdout(&out);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let (lo, hi): (f64, f64) = (row[3].parse().unwrap(), row[4].parse().unwrap());
    assert!((lo - (-1.959964f64).exp()).abs() < 1e-4 && (hi - 1.959964f64.exp()).abs() < 1e-3);
}

#[test]
fn gwas_fixture_and_missing_se() {
    let out = dirci(&[
        "gwas",
        "--input",
        &data("gwas_fixture.csv"),
        "--m",
        "319222",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 8);
    for kind in [
        "conditional,mp(1.3)",
        "conditional,pp(1.3)",
        "conditional,shortest",
        "by05,mp(1.3)",
        "by05,pp(1.3)",
        "by05,shortest",
        "unadjusted,shortest",
    ] {
        assert!(text.contains(kind), "{kind}");
    }

    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("no_se.csv");
    std::fs::write(&input, "id,estimate\nrs1,0.9\n").unwrap();
    let out = dirci(&["gwas", "--input", input.to_str().unwrap(), "--m", "100"]);
    assert_eq!(out.status.code(), Some(2));
}
