use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lhs-lab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_minimal_config_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("sim.toml"), "n = 2\nt_end = 1\n").unwrap();
    for out_dir in ["a", "b"] {
        let out = lab(tmp.path(), &["simulate", "--config", "sim.toml", "--out", out_dir]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let mut files: Vec<_> = fs::read_dir(tmp.path().join(out_dir))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        files.sort();
        assert_eq!(files, ["manifest.json", "observables.csv"]);
    }
    let a = fs::read(tmp.path().join("a/observables.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/observables.csv")).unwrap();
    assert_eq!(a, b);
    let header = String::from_utf8(a).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("t,F,G,R2,defect,J_re_0"));
    let manifest = json(&tmp.path().join("a/manifest.json"));
    let manifest_b = json(&tmp.path().join("b/manifest.json"));
    assert_eq!(manifest["resolved_config_sha256"], manifest_b["resolved_config_sha256"]);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["artifacts"], serde_json::json!(["observables.csv", "manifest.json"]));
}

#[test]
fn malformed_config_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "n = 2\nt_end = [1,\n").unwrap();
    let out = lab(tmp.path(), &["simulate", "--config", "bad.toml", "--out", "o"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad.toml:2"), "{}", stderr(&out));
    assert!(!tmp.path().join("o").exists());

    fs::write(tmp.path().join("typo.toml"), "n = 2\n\nkapa0 = 1\n").unwrap();
    let out = lab(tmp.path(), &["simulate", "--config", "typo.toml", "--out", "o"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("typo.toml:3"), "{}", stderr(&out));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn experiment_e1_defaults_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lab(tmp.path(), &["experiment", "e1", "--out", "e1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&tmp.path().join("e1/report.json"));
    assert_eq!(report["passed"], true);
    assert_eq!(report["id"], "e1");
    assert!(report.get("wall_clock_seconds").is_none());
    assert!(json(&tmp.path().join("e1/timing.json"))["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    let series = fs::read_to_string(tmp.path().join("e1/series.csv")).unwrap();
    assert_eq!(series.lines().count(), 201);
}

#[test]
fn inadmissible_delta_rejected_before_simulation() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("e1.toml"), "experiment = \"e1\"\nn = 8\ndelta = 0.95\n").unwrap();
    let out = lab(tmp.path(), &["experiment", "--config", "e1.toml", "--out", "o"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("e1.toml:3"), "{}", stderr(&out));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn unknown_experiment_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lab(tmp.path(), &["experiment", "--experiment", "e8", "--out", "o"]);
    assert_eq!(code(&out), 2);
    fs::write(tmp.path().join("x.toml"), "experiment = \"e0\"\n").unwrap();
    let out = lab(tmp.path(), &["experiment", "--config", "x.toml", "--out", "o"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("x.toml:1"), "{}", stderr(&out));
    assert!(!tmp.path().join("o").exists());
    let out = lab(tmp.path(), &["experiment"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn e3_reports_nonincreasing_sups() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("e3.toml"), "experiment = \"e3\"\nt_end = 10\nsamples = 50\n").unwrap();
    let out = lab(tmp.path(), &["experiment", "--config", "e3.toml", "--out", "e3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&tmp.path().join("e3/report.json"));
    let sups: Vec<f64> = report["metrics"]["sup_w2"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(sups.len(), 3);
    assert!(sups.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn failed_assertion_exits_1() {
    // initial nested W2 values of this seed are not monotone
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("e3.toml"), "experiment = \"e3\"\nt_end = 1\nsamples = 5\nhorizons = []\n").unwrap();
    let out = lab(tmp.path(), &["experiment", "--config", "e3.toml", "--seed", "4", "--out", "o"]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&tmp.path().join("o/report.json"));
    assert_eq!(report["passed"], false);
}

#[test]
fn kappa1_sweep_flips_at_admissibility_boundary() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("sw.toml"),
        "experiment = \"e1\"\nn = 8\nt_end = 4\nsamples = 40\n[sweep]\nparameter = \"kappa1\"\nvalues = [-0.6, -0.25, 0.0, 0.25, 0.6]\n",
    )
    .unwrap();
    let out = lab(tmp.path(), &["sweep", "--config", "sw.toml", "--out", "sw", "--workers", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(tmp.path().join("sw/sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    let passed: Vec<&str> = rows.iter().map(|r| r[2]).collect();
    assert_eq!(passed, ["0", "1", "1", "1", "0"]);
    let admissible: Vec<&str> = rows.iter().map(|r| r[1]).collect();
    assert_eq!(admissible, ["0", "1", "1", "1", "0"]);
    assert!(csv.starts_with("kappa1,admissible,passed,fitted_rate,guaranteed_rate\n"));
    let manifest = json(&tmp.path().join("sw/manifest.json"));
    let artifacts: Vec<String> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a.as_str().unwrap().to_string())
        .collect();
    for a in &artifacts {
        assert!(tmp.path().join("sw").join(a).exists(), "{a}");
    }
    assert!(artifacts.contains(&"point_001/report.json".to_string()));
}

#[test]
fn single_point_sweep_matches_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let base = "experiment = \"e1\"\nn = 8\nt_end = 3\nsamples = 30\nkappa1 = 0.1\n";
    fs::write(tmp.path().join("one.toml"), format!("{base}[sweep]\nparameter = \"kappa1\"\nvalues = [0.1]\n")).unwrap();
    fs::write(tmp.path().join("exp.toml"), base).unwrap();
    assert_eq!(code(&lab(tmp.path(), &["sweep", "--config", "one.toml", "--out", "s"])), 0);
    assert_eq!(code(&lab(tmp.path(), &["experiment", "--config", "exp.toml", "--out", "e"])), 0);
    for f in ["report.json", "series.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("s/point_000").join(f)).unwrap(),
            fs::read(tmp.path().join("e").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_sweep_reports_spread() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("seeds.toml"),
        "experiment = \"e1\"\nn = 8\nt_end = 3\nsamples = 30\n[sweep]\nseeds = 4\n",
    )
    .unwrap();
    let out = lab(tmp.path(), &["sweep", "--config", "seeds.toml", "--out", "s", "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = json(&tmp.path().join("s/summary.json"));
    assert_eq!(summary["parameter"], "seed");
    assert_eq!(summary["fitted_rate"]["count"], 4);
    assert!(summary["fitted_rate"]["std"].as_f64().unwrap() > 0.0);
    let csv = fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("7.0000000000000000e0,"));
}

#[test]
fn empty_sweep_axis_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("e.toml"),
        "experiment = \"e1\"\n[sweep]\nparameter = \"kappa1\"\nvalues = []\n",
    )
    .unwrap();
    let out = lab(tmp.path(), &["sweep", "--config", "e.toml", "--out", "o"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("e.toml:4"), "{}", stderr(&out));
    assert!(!tmp.path().join("o").exists());
}
