use std::path::Path;
use std::process::{Command, Output};

use volcd::io::{format_samples, GroundTruth};
use volcd::synth::{gen_segments, gen_stationary};

fn volcd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volcd"))
        .args(args)
        .env_remove("VOLCD_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_rows(path: &Path, rows: &[Vec<f64>]) {
    std::fs::write(path, format_samples(rows).unwrap()).unwrap();
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn stationary_input_gives_no_events() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("flat.csv");
    write_rows(&csv, &gen_stationary(5000, 1, 1.0, 7).unwrap().samples);
    let o = volcd(&["detect", "-i", p(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "");
}

#[test]
fn single_step_gives_one_event() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("step.csv");
    write_rows(&csv, &gen_segments(&[3000], &[1.0, 2.0], 6000, 1, 3).unwrap().samples);
    let o = volcd(&["detect", "-i", p(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 1, "{lines:?}");
    let ev: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    let t = ev["detect_time"].as_u64().unwrap();
    assert!((3000..3300).contains(&t), "{t}");
    assert!(ev["location_estimate"].as_u64().is_some());
}

#[test]
fn wrong_arity_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("two.csv");
    write_rows(&csv, &gen_stationary(600, 2, 1.0, 1).unwrap().samples);
    let o = volcd(&["detect", "-i", p(&csv), "--detector", "cafcd", "--channels", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("expected 3"), "{}", stderr(&o));
}

#[test]
fn afcd_on_multichannel_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("two.csv");
    write_rows(&csv, &gen_stationary(600, 2, 1.0, 1).unwrap().samples);
    let o = volcd(&["detect", "-i", p(&csv)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_and_malformed_inputs_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(volcd(&["detect", "-i", p(&empty)]).status.code(), Some(2));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "ch0\n1.0\nfoo\n").unwrap();
    let o = volcd(&["detect", "-i", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row"), "{}", stderr(&o));
    assert_eq!(volcd(&["detect", "-i", p(&dir.path().join("missing.csv"))]).status.code(), Some(2));
}

#[test]
fn bad_parameters_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    write_rows(&csv, &gen_stationary(600, 1, 1.0, 1).unwrap().samples);
    assert_eq!(volcd(&["detect", "-i", p(&csv), "--gamma", "1.5"]).status.code(), Some(2));
    assert_eq!(volcd(&["detect", "-i", p(&csv), "--bogus"]).status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("step.csv");
    write_rows(&csv, &gen_segments(&[3000], &[1.0, 2.0], 6000, 1, 3).unwrap().samples);
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "detector = \"glr\"\nmu = 1.0\n").unwrap();
    let glr = volcd(&["detect", "-i", p(&csv), "--config", p(&cfg)]);
    assert!(glr.status.success(), "{}", stderr(&glr));
    let afcd = volcd(&["detect", "-i", p(&csv), "--config", p(&cfg), "--detector", "afcd"]);
    assert!(afcd.status.success());
    let first = |o: &Output| -> f64 {
        let v: serde_json::Value = serde_json::from_str(stdout(o).lines().next().unwrap()).unwrap();
        v["statistic"].as_f64().unwrap()
    };
    // GLR reports a log-likelihood ratio above its threshold, AFCD a weight <= 1
    assert!(first(&glr) > 5.0);
    assert!(first(&afcd) <= 1.0);
}

#[test]
fn output_file_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("step.csv");
    let out = dir.path().join("events.jsonl");
    write_rows(&csv, &gen_segments(&[3000], &[1.0, 2.0], 6000, 1, 3).unwrap().samples);
    let o = volcd(&["detect", "-i", p(&csv), "-o", p(&out)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "");
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1);
}

#[test]
fn simulate_is_deterministic_and_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = volcd(&["simulate", "-o", p(d), "--seed", "1"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["scenario.csv", "scenario.truth.toml"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
    }
    let truth = GroundTruth::read(&a.join("scenario.truth.toml")).unwrap();
    assert!((5000..=30_000).contains(&truth.n_samples));
    assert_eq!(truth.correlation, vec![vec![1.0]]);
    let rows = volcd::io::read_samples(&a.join("scenario.csv")).unwrap();
    assert_eq!(rows.len(), truth.n_samples);
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, seed: &str| {
        let d = dir.path().join(sub);
        let o = Command::new(env!("CARGO_BIN_EXE_volcd"))
            .args(["simulate", "-o", p(&d)])
            .env("VOLCD_SEED", seed)
            .output()
            .unwrap();
        assert!(o.status.success());
        std::fs::read(d.join("scenario.csv")).unwrap()
    };
    assert_eq!(run("x", "4"), run("y", "4"));
    assert_ne!(run("x", "4"), run("z", "5"));
}

#[test]
fn evaluate_scores_simulated_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let o = volcd(&["simulate", "-o", p(dir.path()), "--count", "3", "--seed", "2"]);
    assert!(o.status.success());
    let report = dir.path().join("report.toml");
    let o = volcd(&["evaluate", "-i", p(dir.path()), "--report", p(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let last: serde_json::Value = serde_json::from_str(stdout(&o).lines().last().unwrap()).unwrap();
    assert_eq!(last["scenarios"], 3);
    let tp = last["aggregate"]["tp_proportion"].as_f64().unwrap();
    assert!(tp > 0.3, "{tp}");
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("tp_proportion"));
}

#[test]
fn evaluate_without_inputs_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert_ne!(volcd(&["evaluate", "-i", p(dir.path())]).status.code(), Some(0));
    // a sample file without its sidecar is skipped; nothing left is an error
    let csv = dir.path().join("lonely.csv");
    write_rows(&csv, &gen_stationary(600, 1, 1.0, 1).unwrap().samples);
    let o = volcd(&["evaluate", "-i", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lonely"), "{}", stderr(&o));
}

#[test]
fn analyze_tables_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let o = volcd(&[
        "analyze", "--sigma1", "1", "--sigma2", "1", "--n-mc", "1000", "--plot-dir", p(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("# expected_lambda"));
    assert!(text.contains("# sigma_d_profile"));
    for name in ["lambda.svg", "mixture.svg", "sigma_d.svg"] {
        let svg = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }
}

#[test]
fn analyze_profile_peaks_at_zero() {
    let o = volcd(&["analyze", "--n-mc", "1000", "--diff-window", "20"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let section = text.split("# sigma_d_profile").nth(1).unwrap();
    let rows: Vec<(i64, f64)> = section
        .lines()
        .filter_map(|l| {
            let mut f = l.split('\t');
            let k = f.next()?.trim().parse().ok()?;
            let v = f.next()?.trim().parse().ok()?;
            Some((k, v))
        })
        .collect();
    assert!(rows.len() > 10);
    let peak = rows.iter().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap();
    assert_eq!(peak.0, 0);
}

#[test]
fn calibrate_reports_a_mu() {
    let o = volcd(&[
        "calibrate", "--target", "0.5", "--stationary", "--scenarios", "5", "--grid-n", "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(v["mu"].as_f64().unwrap() > 0.0);
}

#[test]
fn calibrate_infeasible_target_is_runtime_error() {
    let o = volcd(&[
        "calibrate", "--target", "0", "--scenarios", "3", "--grid-lo", "50", "--grid-hi", "100", "--grid-n", "2",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn first_difference_shifts_indices_back() {
    let dir = tempfile::tempdir().unwrap();
    let s = gen_segments(&[3000], &[1.0, 2.5], 6000, 1, 8).unwrap();
    let mut level = 0.0;
    let walk: Vec<Vec<f64>> = s
        .samples
        .iter()
        .map(|r| {
            level += r[0];
            vec![level]
        })
        .collect();
    let csv = dir.path().join("walk.csv");
    write_rows(&csv, &walk);
    let o = volcd(&["detect", "-i", p(&csv), "--preprocess", "first-difference"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 1, "{lines:?}");
    let ev: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert!((3000..3300).contains(&ev["detect_time"].as_u64().unwrap()));
}
