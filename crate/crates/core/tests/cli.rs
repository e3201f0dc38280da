mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ssv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssv"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn ssv")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap_or_default()
        .to_string()
}

#[test]
fn simulate_writes_paths_observations_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssv(
        dir.path(),
        &[
            "--seed",
            "3",
            "simulate",
            "--n-paths",
            "2",
            "--n-bars",
            "30",
            "--out-dir",
            "o",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("o");
    assert_eq!(first_line(&o.join("observations.csv")), "t,s,p,v");
    assert_eq!(first_line(&o.join("plot_long.csv")), "path_id,t,series,value");
    let obs = std::fs::read_to_string(o.join("observations.csv")).unwrap();
    assert_eq!(obs.lines().count(), 32);
    let plot = std::fs::read_to_string(o.join("plot_long.csv")).unwrap();
    for series in ["sentiment", "log_price", "return", "log_variance"] {
        assert!(plot.contains(&format!(",{series},")), "{series}");
    }
    let resolved = read_json(&o.join("resolved_config.json"));
    assert_eq!(resolved["config"]["seed"], 3);
    assert_eq!(resolved["config"]["simulate"]["n_bars"], 30);
    assert_eq!(resolved["command"]["name"], "simulate");
}

#[test]
fn sentiment_simulation_has_one_channel() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssv(
        dir.path(),
        &["simulate", "--model", "sentiment", "--n-bars", "10", "--out-dir", "o"],
    );
    assert!(out.status.success());
    assert_eq!(first_line(&dir.path().join("o/observations.csv")), "t,s");
}

#[test]
fn moments_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssv(dir.path(), &["moments", "--horizons", "0,0.5", "--out-dir", "j"]);
    assert!(out.status.success());
    let j = read_json(&dir.path().join("j/moments.json"));
    let rows = j["moments"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["var_s"], 0.0);
    assert!(rows[0]["rho_sv_t"].is_null());
    assert_eq!(rows[1]["source"], "closed_form");
    assert!(j["monte_carlo"].is_null());

    let out = ssv(dir.path(), &["moments", "--format", "csv", "--out-dir", "c"]);
    assert!(out.status.success());
    let header = first_line(&dir.path().join("c/moments.csv"));
    assert!(header.starts_with("t,e_s,") && header.ends_with(",rho_sv_t,source"));
}

#[test]
fn fit_ou_reports_estimate_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"estimator": {"n_sims": 80, "m_substeps": 2}, "ou_params": {"lambda_s": 20, "mu_s": 0.1, "sigma_s": 0.8}}"#,
    )
    .unwrap();
    let out = ssv(
        dir.path(),
        &[
            "--config",
            "c.json",
            "simulate",
            "--model",
            "sentiment",
            "--n-bars",
            "300",
            "--out-dir",
            "s",
        ],
    );
    assert!(out.status.success());
    let out = ssv(
        dir.path(),
        &[
            "--config",
            "c.json",
            "fit-ou",
            "--data",
            "s/observations.csv",
            "--out-dir",
            "f",
        ],
    );
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 2, "{}", String::from_utf8_lossy(&out.stderr));
    let fit = read_json(&dir.path().join("f/fit.json"));
    assert_eq!(fit["model"], "sentiment");
    assert_eq!(fit["n_rows"], 301);
    assert_eq!(fit["converged"], code == 0);
    let lambda = fit["theta_hat"]["params"]["lambda_s"].as_f64().unwrap();
    assert!(lambda > 0.0);
    assert_eq!(
        first_line(&dir.path().join("f/trace.csv")),
        "iteration,loglik,lambda_s,mu_s,sigma_s"
    );
}

#[test]
fn data_errors_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "t,s\n0,0.1\n1,abc\n2,0.3\n").unwrap();
    let out = ssv(dir.path(), &["fit-ou", "--data", "bad.csv", "--out-dir", "o"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));

    let out = ssv(dir.path(), &["fit-ssv", "--out-dir", "o"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn bad_configuration_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"estimator": {"nsims": 10}}"#).unwrap();
    let out = ssv(dir.path(), &["--config", "c.json", "moments", "--out-dir", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nsims"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn sentiment_pipeline_from_labeled_sentences_to_bars() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("labeled.csv"), common::labeled_csv(240, 1)).unwrap();
    std::fs::write(dir.path().join("news.csv"), common::news_csv(2)).unwrap();
    let run = |args: &[&str]| {
        let out = ssv(dir.path(), args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run(&["train-classifier", "--data", "labeled.csv", "--out-dir", "clf"]);
    let training = read_json(&dir.path().join("clf/training.json"));
    assert!(training.to_string().contains("accuracy"));
    run(&[
        "score-news",
        "--model",
        "clf/classifier.model",
        "--news",
        "news.csv",
        "--out-dir",
        "sc",
    ]);
    let scores = std::fs::read_to_string(dir.path().join("sc/scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 61);
    assert_eq!(
        scores.lines().next().unwrap(),
        "doc_id,timestamp,b_score,n_sentences,n_pos,n_neg"
    );
    run(&["aggregate-sentiment", "--scores", "sc/scores.csv", "--out-dir", "bars"]);
    let bars = std::fs::read_to_string(dir.path().join("bars/bars.csv")).unwrap();
    // News on three days; items after the last close roll into a fourth
    // session. 26 bars per session plus a header.
    assert_eq!(bars.lines().count(), 4 * 26 + 1, "{bars}");
    let report = read_json(&dir.path().join("bars/bars_report.json"));
    assert!(!report["reassigned"].as_array().unwrap().is_empty());
    assert_eq!(report["n_bars"], 4 * 26);
}

#[test]
fn bootstrap_from_a_fit_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"estimator": {"n_sims": 60, "m_substeps": 1}, "bootstrap": {"n_reps": 4, "n_bars": 150}}"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("fit.json"),
        r#"{"theta_hat": {"model": "sentiment", "params": {"lambda_s": 30, "mu_s": 0.2, "sigma_s": 0.9}}}"#,
    )
    .unwrap();
    let out = ssv(
        dir.path(),
        &["--config", "c.json", "bootstrap", "--fit", "fit.json", "--out-dir", "b"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let b = read_json(&dir.path().join("b/bootstrap.json"));
    assert_eq!(b["n_reps"], 4);
    assert_eq!(b["params"].as_array().unwrap().len(), 3);
    let table = std::fs::read_to_string(dir.path().join("b/bootstrap_table.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "row,lambda_s,mu_s,sigma_s");
    assert!(table.contains("\npoint estimate,30,"));
}
