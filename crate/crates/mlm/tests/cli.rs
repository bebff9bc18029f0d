//! Black-box tests of the `mlm` binary: exit codes, file round-trips, and
//! output formats.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mlm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mlm"))
}

fn run(args: &[&str]) -> Output {
    mlm().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mlm_cli_{tag}_{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn parse_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = match lines.next() {
        None => return (vec![], vec![]),
        Some(h) => h.split(',').map(str::to_string).collect(),
    };
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn gen_s1_writes_the_sine_sum() {
    let dir = workdir("gen");
    let out = dir.join("s1.csv");
    let result = run(&[
        "gen-s1",
        "--n",
        "25",
        "--seed",
        "3",
        "--out",
        &path_str(&out),
    ]);
    assert_eq!(result.status.code(), Some(0), "{}", stderr(&result));
    let (header, rows) = parse_csv(&out);
    assert_eq!(header, vec!["x1", "x2", "y"]);
    assert_eq!(rows.len(), 25);
    for row in &rows {
        let want = (2.0 * std::f64::consts::PI * row[0]).sin()
            + (2.0 * std::f64::consts::PI * row[1]).sin();
        assert!((row[2] - want).abs() < 1e-12);
    }
}

#[test]
fn fit_then_predict_round_trips_training_data() {
    let dir = workdir("roundtrip");
    let data = dir.join("train.csv");
    let model = dir.join("model.json");
    let preds = dir.join("preds.csv");

    let result = run(&[
        "gen-s1",
        "--n",
        "80",
        "--seed",
        "5",
        "--out",
        &path_str(&data),
    ]);
    assert_eq!(result.status.code(), Some(0));

    let result = run(&[
        "fit",
        &path_str(&data),
        "--method",
        "rs_maximin",
        "--krel",
        "100",
        "--out",
        &path_str(&model),
    ]);
    assert_eq!(result.status.code(), Some(0), "{}", stderr(&result));
    let text = stdout(&result);
    let residual: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("fit_residual: "))
        .expect("fit prints the residual")
        .parse()
        .unwrap();
    assert!(
        residual <= 1e-8,
        "full-K residual {residual} should interpolate"
    );

    // The training file itself is accepted: trailing target column ignored.
    let result = run(&[
        "predict",
        &path_str(&model),
        &path_str(&data),
        "--out",
        &path_str(&preds),
    ]);
    assert_eq!(result.status.code(), Some(0), "{}", stderr(&result));
    let (_, train_rows) = parse_csv(&data);
    let (pred_header, pred_rows) = parse_csv(&preds);
    assert_eq!(pred_header, vec!["y"]);
    assert_eq!(pred_rows.len(), train_rows.len());
    for (pred, actual) in pred_rows.iter().zip(train_rows.iter()) {
        assert!(
            (pred[0] - actual[2]).abs() <= 1e-5,
            "prediction {} vs target {} in original units",
            pred[0],
            actual[2]
        );
    }
}

#[test]
fn fit_is_deterministic_per_seed() {
    let dir = workdir("determinism");
    let data = dir.join("train.csv");
    run(&[
        "gen-s1",
        "--n",
        "60",
        "--seed",
        "8",
        "--out",
        &path_str(&data),
    ]);

    for (method, seed) in [("rs_maximin", "0"), ("rs_kmedoidspp", "21")] {
        let m1 = dir.join(format!("{method}_a.json"));
        let m2 = dir.join(format!("{method}_b.json"));
        for m in [&m1, &m2] {
            let result = run(&[
                "fit",
                &path_str(&data),
                "--method",
                method,
                "--krel",
                "20",
                "--seed",
                seed,
                "--out",
                &path_str(m),
            ]);
            assert_eq!(result.status.code(), Some(0), "{}", stderr(&result));
        }
        assert_eq!(
            fs::read(&m1).unwrap(),
            fs::read(&m2).unwrap(),
            "{method} model files differ"
        );
    }
}

#[test]
fn fit_rejects_k_zero_with_exit_2() {
    let dir = workdir("kzero");
    let data = dir.join("train.csv");
    run(&[
        "gen-s1",
        "--n",
        "10",
        "--seed",
        "1",
        "--out",
        &path_str(&data),
    ]);
    let result = run(&[
        "fit",
        &path_str(&data),
        "--method",
        "random",
        "--k",
        "0",
        "--out",
        &path_str(&dir.join("m.json")),
    ]);
    assert_eq!(result.status.code(), Some(2));
    assert!(
        stderr(&result).contains("K must be in [1,"),
        "{}",
        stderr(&result)
    );
}

#[test]
fn fit_rejects_unreadable_file_and_bad_cells() {
    let dir = workdir("badinput");
    let result = run(&[
        "fit",
        &path_str(&dir.join("missing.csv")),
        "--method",
        "random",
        "--k",
        "1",
        "--out",
        &path_str(&dir.join("m.json")),
    ]);
    assert_eq!(result.status.code(), Some(2));

    let bad = dir.join("bad.csv");
    fs::write(&bad, "x,y\n1.0,oops\n").unwrap();
    let result = run(&[
        "fit",
        &path_str(&bad),
        "--method",
        "random",
        "--k",
        "1",
        "--out",
        &path_str(&dir.join("m.json")),
    ]);
    assert_eq!(result.status.code(), Some(2));
    assert!(
        stderr(&result).contains("not numeric"),
        "{}",
        stderr(&result)
    );
}

#[test]
fn predict_handles_empty_and_mismatched_inputs() {
    let dir = workdir("predict_edges");
    let data = dir.join("train.csv");
    let model = dir.join("model.json");
    run(&[
        "gen-s1",
        "--n",
        "30",
        "--seed",
        "2",
        "--out",
        &path_str(&data),
    ]);
    let result = run(&[
        "fit",
        &path_str(&data),
        "--method",
        "random",
        "--krel",
        "100",
        "--out",
        &path_str(&model),
    ]);
    assert_eq!(result.status.code(), Some(0));

    // Empty input file: empty output, success.
    let empty = dir.join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = dir.join("empty_preds.csv");
    let result = run(&[
        "predict",
        &path_str(&model),
        &path_str(&empty),
        "--out",
        &path_str(&out),
    ]);
    assert_eq!(result.status.code(), Some(0), "{}", stderr(&result));
    assert_eq!(fs::read_to_string(&out).unwrap(), "");

    // Header-only input: header-only output.
    let header_only = dir.join("header.csv");
    fs::write(&header_only, "x1,x2\n").unwrap();
    let out = dir.join("header_preds.csv");
    let result = run(&[
        "predict",
        &path_str(&model),
        &path_str(&header_only),
        "--out",
        &path_str(&out),
    ]);
    assert_eq!(result.status.code(), Some(0), "{}", stderr(&result));
    assert_eq!(fs::read_to_string(&out).unwrap(), "y\n");

    // Wrong column count: exit 2.
    let mismatched = dir.join("mismatch.csv");
    fs::write(&mismatched, "a\n1.0\n").unwrap();
    let result = run(&[
        "predict",
        &path_str(&model),
        &path_str(&mismatched),
        "--out",
        &path_str(&out),
    ]);
    assert_eq!(result.status.code(), Some(2));
    assert!(stderr(&result).contains("columns"), "{}", stderr(&result));
}

#[test]
fn select_refs_prints_indices_and_profile() {
    let dir = workdir("select");
    let data = dir.join("train.csv");
    run(&[
        "gen-s1",
        "--n",
        "50",
        "--seed",
        "4",
        "--out",
        &path_str(&data),
    ]);

    let result = run(&[
        "select-refs",
        &path_str(&data),
        "--method",
        "rs_maximin",
        "--k",
        "10",
        "--profile",
        "5",
    ]);
    assert_eq!(result.status.code(), Some(0), "{}", stderr(&result));
    let text = stdout(&result);
    let indices_line = text.lines().find(|l| l.starts_with("indices: ")).unwrap();
    let indices: Vec<usize> = indices_line["indices: ".len()..]
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(indices.len(), 10);
    let profile_line = text.lines().find(|l| l.starts_with("profile: ")).unwrap();
    let profile: Vec<f64> = profile_line["profile: ".len()..]
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(profile.len(), 5);
    assert!(
        profile.windows(2).all(|w| w[0] <= w[1]),
        "profile must ascend"
    );

    // k = N returns every row index.
    let result = run(&[
        "select-refs",
        &path_str(&data),
        "--method",
        "random",
        "--k",
        "50",
    ]);
    assert_eq!(result.status.code(), Some(0));
    let text = stdout(&result);
    let line = text.lines().find(|l| l.starts_with("indices: ")).unwrap();
    let got: Vec<usize> = line["indices: ".len()..]
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(got, (0..50).collect::<Vec<_>>());

    // Unknown method: exit 2.
    let result = run(&[
        "select-refs",
        &path_str(&data),
        "--method",
        "kmeans",
        "--k",
        "5",
    ]);
    assert_eq!(result.status.code(), Some(2));
    assert!(stderr(&result).contains("unknown selection method"));
}

#[test]
fn benchmark_runs_a_tiny_config_and_rejects_unknown_keys() {
    let dir = workdir("bench");
    let json_out = dir.join("report.json");
    let csv_out = dir.join("report.csv");
    let config = dir.join("config.json");
    fs::write(
        &config,
        format!(
            r#"{{
  "version": 1,
  "seed": 33,
  "datasets": [{{"name": "s1-tiny", "gen_s1": {{"n": 60, "seed": 12}}}}],
  "methods": ["random"],
  "krel_grid": [100],
  "output": {{"json": "{}", "csv": "{}"}}
}}"#,
            path_str(&json_out),
            path_str(&csv_out)
        ),
    )
    .unwrap();

    let result = run(&["benchmark", &path_str(&config)]);
    assert_eq!(result.status.code(), Some(0), "{}", stderr(&result));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json_out).unwrap()).unwrap();
    assert_eq!(report["format"], "mlm-benchmark-report");
    let cells = report["datasets"][0]["cells"].as_array().unwrap();
    assert_eq!(
        cells.len(),
        30,
        "3 outer x 10 inner x 1 method x 1 grid point"
    );
    let summary = &report["datasets"][0]["summaries"][0];
    assert_eq!(summary["test_rmses"].as_array().unwrap().len(), 30);
    assert_eq!(report["datasets"][0]["hygiene_violations"], 0);

    let csv = fs::read_to_string(&csv_out).unwrap();
    assert!(csv.starts_with("dataset,method,krel,outer,inner,k,"));
    assert_eq!(csv.lines().count(), 31);

    // Unknown key: exit 2 and the offending key named.
    let bad = dir.join("bad_config.json");
    fs::write(
        &bad,
        r#"{"version": 1, "seed": 1, "datasets": [], "methods": ["random"],
           "krel_grid": [100], "output": {}, "typo_key": true}"#,
    )
    .unwrap();
    let result = run(&["benchmark", &path_str(&bad)]);
    assert_eq!(result.status.code(), Some(2));
    assert!(stderr(&result).contains("typo_key"), "{}", stderr(&result));
}

#[test]
fn unknown_subcommand_and_missing_args_exit_2() {
    let result = run(&["frobnicate"]);
    assert_eq!(result.status.code(), Some(2));
    let result = run(&["fit"]);
    assert_eq!(result.status.code(), Some(2));
}
