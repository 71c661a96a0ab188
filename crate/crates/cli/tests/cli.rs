use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn persist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_persist"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn report_without_timestamp(dir: &Path) -> String {
    fs::read_to_string(dir.join("report.json"))
        .unwrap()
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-prices.csv");
    let out = persist(&["analyze", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-prices.csv"));
}

#[test]
fn parse_errors_exit_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "date,ticker,close\n2002-01-04,A,10\n2002-01-07,A,ten\n").unwrap();
    let out = persist(&["analyze", input.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{out:?}");
}

#[test]
fn no_windows_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("one-day.csv");
    fs::write(&input, "date,ticker,close\n2002-01-04,A,10\n2002-01-04,B,11\n").unwrap();
    let out = persist(&["analyze", input.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn all_flipped_fit_range_exits_4_but_still_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flip.csv");
    let mut csv = String::from("date,ticker,close\n");
    for (d, p) in ["04", "07", "08", "09", "10", "11", "14", "15", "16", "17"].iter().zip([10, 11, 9, 12, 8, 13, 7, 14, 6, 15]) {
        csv.push_str(&format!("2002-01-{d},A,{p}\n"));
    }
    fs::write(&input, csv).unwrap();
    let out_dir = dir.path().join("o");
    let out = persist(&[
        "analyze",
        input.to_str().unwrap(),
        "--scheme",
        "full",
        "--fit-range",
        "1:8",
        "--resamples",
        "0",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4, "{out:?}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("fit failed"));
    assert!(out_dir.join("curve.csv").exists() && out_dir.join("plot.dat").exists());
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    // R(t) = 0 from t = 1, so the range is pulled back past t_min
    assert_eq!(report["fit"]["truncated"], true);
    assert_eq!(report["fit"]["t_max"], 0);
    assert!(report["fit"]["error"].is_string());
    assert!(report["fit"]["double"].is_null());
}

#[test]
fn simulate_rejects_zero_steps() {
    let out = persist(&["simulate", "--walkers", "3", "--steps", "0"]);
    assert_eq!(code(&out), 2);
    let out = persist(&["simulate", "--walkers", "3", "--steps", "10", "--start-price", "5"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let args = ["simulate", "--model", "geom", "--walkers", "50", "--steps", "40", "--seed", "9"];
    let a = persist(&args);
    let b = persist(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let c = persist(&["simulate", "--model", "geom", "--walkers", "50", "--steps", "40", "--seed", "10"]);
    assert_ne!(a.stdout, c.stdout);
    let threaded = persist(&[&args[..], &["--threads", "3"]].concat());
    assert_eq!(a.stdout, threaded.stdout);
}

#[test]
fn simulated_panel_round_trips_through_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    let out = persist(&[
        "simulate", "--walkers", "400", "--steps", "120", "--seed", "3", "-o", panel.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let rows = fs::read_to_string(&panel).unwrap().lines().count();
    assert_eq!(rows, 1 + 400 * 121);

    let out_dir = dir.path().join("o");
    let out = persist(&[
        "analyze",
        panel.to_str().unwrap(),
        "--scheme",
        "full",
        "--fit-range",
        "1:100",
        "--resamples",
        "100",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["windows"][0]["companies"], 400);
    assert_eq!(report["windows"][0]["trading_days"], 121);
    assert_eq!(report["averaged"]["n"][0], "400");
    assert!(report["partition_notes"].as_array().unwrap().is_empty());
    assert!(report["bootstrap"]["long_slope"]["ci_low"].is_f64());
}

#[test]
fn oracle_rows_and_cap() {
    let out = persist(&["oracle", "--t-max", "1"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "t,exact,decimal\n0,1,1.0\n1,3/4,0.75\n");
    let out = persist(&["oracle", "--t-max", "0"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "t,exact,decimal\n0,1,1.0\n");
    assert_eq!(code(&persist(&["oracle", "--t-max", "100"])), 2);
    assert_eq!(code(&persist(&["oracle", "--t-max", "100", "--cap", "128"])), 0);
}

#[test]
fn five_price_fixture_curve() {
    // base 257, then 239 228 235 245: every close sits below base, so nothing flips
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("one.csv");
    fs::write(
        &input,
        "date,ticker,close\n2002-01-04,X,257\n2002-01-07,X,239\n2002-01-08,X,228\n2002-01-09,X,235\n2002-01-10,X,245\n",
    )
    .unwrap();
    let out_dir = dir.path().join("o");
    let out = persist(&[
        "analyze",
        input.to_str().unwrap(),
        "--scheme",
        "full",
        "--resamples",
        "0",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    // four points leave no room for a two-segment fit
    assert_eq!(code(&out), 4);
    assert_eq!(
        fs::read_to_string(out_dir.join("curve.csv")).unwrap(),
        "t,n,R,R_full\n0,1,1,1\n1,1,1,1\n2,1,1,1\n3,1,1,1\n"
    );
}

#[test]
fn plot_logs_match_curve_values() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    persist(&["simulate", "--walkers", "300", "--steps", "60", "--seed", "8", "-o", panel.to_str().unwrap()]);
    let out_dir = dir.path().join("o");
    let out = persist(&[
        "analyze", panel.to_str().unwrap(), "--scheme", "full", "--resamples", "0", "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let curve = fs::read_to_string(out_dir.join("curve.csv")).unwrap();
    let r: Vec<f64> = curve.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    let plot = fs::read_to_string(out_dir.join("plot.dat")).unwrap();
    let rows: Vec<Vec<f64>> = plot
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    let positive: Vec<usize> = (1..r.len()).filter(|&t| r[t] > 0.0).collect();
    assert_eq!(rows.len(), positive.len());
    for (row, &t) in rows.iter().zip(&positive) {
        assert!((row[0] - (t as f64).ln()).abs() <= 1e-12);
        assert!((row[1] - r[t].ln()).abs() <= 1e-12);
        // the reference has slope -3/2 and meets the data at t = 1
        assert!((row[2] - (r[1].ln() - 1.5 * row[0])).abs() <= 1e-12);
    }
}

#[test]
fn report_ignores_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    persist(&["simulate", "--walkers", "500", "--steps", "80", "--seed", "5", "-o", panel.to_str().unwrap()]);
    let run = |threads: &str| {
        let out_dir = dir.path().join(format!("o{threads}"));
        let out = persist(&[
            "analyze",
            panel.to_str().unwrap(),
            "--scheme",
            "full",
            "--resamples",
            "150",
            "--seed",
            "11",
            "--threads",
            threads,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        out_dir
    };
    let one = run("1");
    let four = run("4");
    assert_eq!(report_without_timestamp(&one), report_without_timestamp(&four));
    for f in ["curve.csv", "plot.dat"] {
        assert_eq!(fs::read(one.join(f)).unwrap(), fs::read(four.join(f)).unwrap());
    }
}

#[test]
fn source_date_epoch_pins_the_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    persist(&["simulate", "--walkers", "20", "--steps", "30", "-o", panel.to_str().unwrap()]);
    let out_dir = dir.path().join("o");
    let status = Command::new(env!("CARGO_BIN_EXE_persist"))
        .args(["analyze", panel.to_str().unwrap(), "--scheme", "full", "--resamples", "0", "--out"])
        .arg(&out_dir)
        .env("SOURCE_DATE_EPOCH", "1000000000")
        .status()
        .unwrap();
    assert!(status.success());
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["metadata"]["timestamp"], "2001-09-09T01:46:40Z");
}
