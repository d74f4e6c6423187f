mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::*;
use idxtrack::market_data::ReturnsPanel;
use idxtrack::synth;

fn idxtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idxtrack"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn write_panel(dir: &Path, name: &str, panel: &ReturnsPanel) -> PathBuf {
    let path = dir.join(name);
    let prices = synth::to_prices(panel, "INDEX");
    synth::write_prices_csv(&prices, fs::File::create(&path).unwrap()).unwrap();
    path
}

/// Six assets; the index holds assets 0, 2 and 4 at 3/7, 2/7 and 2/7.
fn constructed_six(dir: &Path) -> PathBuf {
    let mut r = rng(31);
    let rows = random_returns(&mut r, 6, 40);
    write_panel(dir, "six.csv", &constructed_panel(rows, &[3, 0, 2, 0, 2, 0], 7))
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: PathBuf) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn track_recovers_constructed_index() {
    let dir = tempfile::tempdir().unwrap();
    let data = constructed_six(dir.path());
    let out = dir.path().join("run");
    let o = idxtrack(&["track", "--data", s(&data), "-K", "7", "-C", "3", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(out.join("solutions.json"));
    // one of the 20 default samples ends on a phantom-indicator local minimum
    assert!(doc["success_rate"].as_f64().unwrap() >= 0.95);
    let best = doc["best_by_energy"].as_u64().unwrap();
    let sample = doc["samples"]
        .as_array()
        .unwrap()
        .iter()
        .find(|x| x["sample_index"] == best)
        .unwrap();
    assert!(sample["report"]["cte"].as_f64().unwrap() <= 1e-10);
    assert!(fs::read_to_string(out.join("success.txt")).unwrap().starts_with("success_rate 0.9"));
    let weights = csv_rows(out.join("weights.csv"));
    let units: Vec<&str> = weights.iter().map(|r| r[2].as_str()).collect();
    assert_eq!(units, ["3", "0", "2", "0", "2", "0"]);
    let header = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(header.starts_with("C,K,e_cte,mre,mdre,vol_error\n3,7,0.00000,"));
    assert_eq!(csv_rows(out.join("cumrets.csv")).len(), 40);
}

#[test]
fn artifacts_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_panel(dir.path(), "p.csv", &synth::synthetic_panel(8, 50, 2));
    for cmd in ["track", "enhance"] {
        let (a, b) = (dir.path().join(format!("{cmd}-a")), dir.path().join(format!("{cmd}-b")));
        for out in [&a, &b] {
            let o = idxtrack(&[cmd, "--data", s(&data), "-K", "9", "-C", "3", "--samples", "6", "--sweeps", "300", "--window", "10", "--lambda-grid", "0,0.2", "--seed", "42", "--out", s(out)]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(names.len() >= 3);
        for name in names {
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
        }
    }
}

#[test]
fn validation_errors_exit_one_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_panel(dir.path(), "p.csv", &synth::synthetic_panel(4, 20, 1));
    let out = dir.path().join("out");
    let cases: [&[&str]; 4] = [
        &["track", "--data", s(&data), "-C", "5", "-K", "9", "--out", s(&out)],
        &["enhance", "--data", s(&data), "-C", "2", "-K", "5", "--lambda-grid", "0,1.5", "--out", s(&out)],
        &["sweep", "--data", s(&data), "--grid", "", "--out", s(&out)],
        &["track", "--data", s(&data), "--max-holding", "1.5", "--out", s(&out)],
    ];
    for args in cases {
        let o = idxtrack(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!out.exists(), "{args:?} wrote artifacts");
    }
    assert_eq!(idxtrack(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(idxtrack(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "date,A,INDEX\n2024-01-01,10,100\n2024-01-02,0,101\n").unwrap();
    let missing = dir.path().join("missing.csv");
    for data in [&bad, &missing] {
        let o = idxtrack(&["track", "--data", s(data), "-K", "2", "-C", "1", "--out", s(dir.path())]);
        assert_eq!(o.status.code(), Some(3));
    }
}

#[test]
fn no_feasible_sample_exits_two_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_panel(dir.path(), "p.csv", &synth::synthetic_panel(6, 30, 1));
    let out = dir.path().join("out");
    // without constraint penalties nothing pins the budget or cardinality
    let o = idxtrack(&[
        "track", "--data", s(&data), "-K", "7", "-C", "3", "--out", s(&out), "--samples", "4", "--sweeps", "50",
        "--penalty-budget", "0", "--penalty-card", "0", "--penalty-indicator", "0", "--penalty-tracking", "0",
    ]);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert_eq!(o.status.code(), Some(2), "{stderr}");
    assert!(stderr.contains("0/4 samples feasible; violations:"), "{stderr}");
    assert!(out.join("solutions.json").exists());
    assert!(!out.join("report.csv").exists());
}

#[test]
fn enhance_at_zero_matches_track() {
    let dir = tempfile::tempdir().unwrap();
    let data = constructed_six(dir.path());
    let (t, e) = (dir.path().join("t"), dir.path().join("e"));
    let common = ["--data", s(&data), "-K", "7", "-C", "3", "--samples", "20", "--seed", "9"];
    assert!(idxtrack(&[&["track", "--out", s(&t)], &common[..]].concat()).status.success());
    let o = idxtrack(&[&["enhance", "--lambda-grid", "0", "--window", "10", "--out", s(&e)], &common[..]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(e.join("enhanced.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "0");
    assert_eq!(rows[0][1], csv_rows(t.join("report.csv"))[0][2]);
    assert_eq!(csv_rows(e.join("sharpe_vs_tracking.csv")).len(), 20);
    assert_eq!(csv_rows(e.join("enhanced_best_score.csv")).len(), 1);
}

#[test]
fn enhance_lowers_volatility_on_duplicate_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_panel(dir.path(), "dup.csv", &high_variance_duplicate());
    let out = dir.path().join("e");
    let o = idxtrack(&["enhance", "--data", s(&data), "-K", "4", "-C", "2", "--lambda-grid", "0,0.5", "--window", "20", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(out.join("enhanced.csv"));
    let vol = |i: usize| rows[i][2].parse::<f64>().unwrap();
    assert!(vol(1) <= vol(0), "{rows:?}");
}

#[test]
fn sweep_reports_problem_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let hundred = write_panel(dir.path(), "n100.csv", &synth::synthetic_panel(100, 30, 7));
    let five_hundred = write_panel(dir.path(), "n500.csv", &synth::synthetic_panel(500, 30, 7));
    let mut counts = Vec::new();
    for (data, grid) in [(&hundred, "25:31,25:63,25:127,50:255,5:3"), (&five_hundred, "25:127")] {
        let out = dir.path().join(data.file_stem().unwrap());
        let o = idxtrack(&[
            "sweep", "--data", s(data), "--grid", grid, "--max-holding", "0.2", "--samples", "2", "--sweeps", "20", "--out", s(&out), "-v",
        ]);
        let stderr = String::from_utf8_lossy(&o.stderr);
        assert!(o.status.success(), "{stderr}");
        for row in csv_rows(out.join("summary.csv")) {
            assert!(stderr.contains(&format!("C={} K={}: {} variables", row[0], row[1], row[2])));
            counts.push(row[2].parse::<usize>().unwrap());
        }
        let boxplot = csv_rows(out.join("boxplot.csv"));
        assert_eq!(boxplot.len(), 2 * counts.len().min(if grid == "25:127" { 1 } else { 4 }));
        if grid.contains("5:3") {
            assert_eq!(fs::read_to_string(out.join("skipped.txt")).unwrap(), "C=5 K=3: K/C < 1\n");
        }
    }
    assert_eq!(counts, [400, 500, 600, 700, 3000]);
}

#[test]
fn config_file_and_report_and_markowitz() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_panel(dir.path(), "p.csv", &synth::synthetic_panel(6, 40, 4));
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("m");
    fs::write(&cfg, format!("data = {}\nresolution = 8\ncardinality = 2\nsweeps = 400\nout = {}\n", s(&data), s(&out))).unwrap();
    let o = idxtrack(&["markowitz", "--config", s(&cfg), "--gamma", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(out.join("solutions.json"));
    assert_eq!(doc["meta"]["resolution"], 8);
    assert_eq!(doc["meta"]["gamma"], 2.0);

    let o = idxtrack(&["report", "--data", s(&data), "--weights", s(&out.join("weights.csv")), "--window", "10", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(out.join("report.json"));
    assert!((report["weight_sum"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(report["sharpe_series"].as_array().unwrap().len(), 40);
}

#[test]
fn synth_writes_loadable_prices() {
    let dir = tempfile::tempdir().unwrap();
    let o = idxtrack(&["synth", "--assets", "5", "--periods", "12", "--seed", "3", "--out", s(dir.path())]);
    assert!(o.status.success());
    let prices = idxtrack::load_prices(dir.path().join("prices.csv"), "INDEX").unwrap();
    assert_eq!((prices.n_assets(), prices.n_rows()), (5, 13));
}
