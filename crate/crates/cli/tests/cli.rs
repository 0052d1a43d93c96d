use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .unwrap()
}

fn sqlbalance(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqlbalance"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &std::path::Path) -> String {
    p.to_str().unwrap().to_string()
}

fn data_args() -> Vec<String> {
    let fx = fixtures();
    vec![
        "--train".into(),
        s(&fx.join("train.jsonl")),
        "--test".into(),
        s(&fx.join("test.jsonl")),
        "--tables".into(),
        s(&fx.join("train.tables.jsonl")),
        "--tables".into(),
        s(&fx.join("test.tables.jsonl")),
    ]
}

fn run(extra: &[&str]) -> Output {
    let mut args: Vec<String> = data_args();
    args.extend(extra.iter().map(|a| a.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    sqlbalance(&refs)
}

#[test]
fn exec_results_and_exit_codes() {
    let t = s(&fixtures().join("players.tables.jsonl"));
    let max = sqlbalance(&["exec", "--tables", &t, "--sketch", r#"{"sel":1,"agg":1,"conds":[]}"#]);
    assert!(max.status.success());
    assert_eq!(
        String::from_utf8_lossy(&max.stdout),
        "SELECT MAX(\"goals\") FROM t1\n7\n"
    );
    let count = sqlbalance(&[
        "exec",
        "--tables",
        &t,
        "--sketch",
        r#"{"sel":1,"agg":3,"conds":[[0,0,"zed"]]}"#,
    ]);
    assert_eq!(count.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&count.stdout).ends_with("\n0\n"));
    let empty = sqlbalance(&[
        "exec",
        "--tables",
        &t,
        "--sketch",
        r#"{"sel":1,"agg":1,"conds":[[0,0,"zed"]]}"#,
    ]);
    assert_eq!(empty.status.code(), Some(sqlbalance_cli::EXIT_EMPTY_AGGREGATE));
}

#[test]
fn stats_match_hand_counts() {
    let fx = fixtures();
    // count the fixture directly from its JSON
    let mut conds: BTreeMap<String, u64> = BTreeMap::new();
    let mut aggs: BTreeMap<String, u64> = BTreeMap::new();
    for line in fs::read_to_string(fx.join("train.jsonl")).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let n = v["sql"]["conds"].as_array().unwrap().len();
        *conds.entry(n.to_string()).or_default() += 1;
        let names = ["NONE", "MAX", "MIN", "COUNT", "SUM", "AVG"];
        *aggs
            .entry(names[v["sql"]["agg"].as_u64().unwrap() as usize].to_string())
            .or_default() += 1;
    }
    let out = run(&["stats"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["tool"], "sqlbalance");
    assert_eq!(report["version"], env!("CARGO_PKG_VERSION"));
    assert!(report["config"]["paths"]["train"]
        .as_str()
        .unwrap()
        .ends_with("train.jsonl"));
    let train = &report["result"]["train"];
    assert_eq!(train["example_count"], 200);
    let got_conds: BTreeMap<String, u64> = serde_json::from_value(train["cond_count_hist"].clone()).unwrap();
    let got_aggs: BTreeMap<String, u64> = serde_json::from_value(train["agg_hist"].clone()).unwrap();
    assert_eq!(got_conds, conds);
    assert_eq!(got_aggs, aggs);
    assert_eq!(report["result"]["test"]["example_count"], 100);
}

#[test]
fn missing_file_fails_with_path() {
    let out = sqlbalance(&[
        "stats",
        "--train",
        "/nonexistent/x.jsonl",
        "--tables",
        "/nonexistent/t.jsonl",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/t.jsonl"));
}

#[test]
fn reports_are_never_overwritten() {
    let dir = tempfile::tempdir().unwrap();
    let rd = s(dir.path());
    assert!(run(&["stats", "--report-dir", &rd]).status.success());
    assert!(dir.path().join("stats.json").exists());
    assert!(dir.path().join("histograms.csv").exists());
    let second = run(&["stats", "--report-dir", &rd]);
    assert_eq!(second.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&second.stderr).contains("refusing to overwrite"));
}

#[test]
fn baseline_only_experiment_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let rd = s(&dir.path().join("r"));
    let out = run(&[
        "experiment",
        "--factors",
        "",
        "--seeds",
        "1",
        "--epochs",
        "1",
        "--report-dir",
        &rd,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("r/ratios.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("baseline,0,"));
}

#[test]
fn full_sweep_has_four_rows_with_delta() {
    let dir = tempfile::tempdir().unwrap();
    let rd = s(dir.path());
    let out = run(&[
        "experiment",
        "--seeds",
        "1,2,3",
        "--epochs",
        "2",
        "--finetune-epochs",
        "1",
        "--report-dir",
        &rd,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("ratios.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].contains("delta_vs_previous"));
    let ratios: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ratios, ["baseline", "1:1", "1:2", "1:3"]);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("experiment.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["factors"], serde_json::json!([1, 2, 3]));
    assert_eq!(report["result"]["runs"].as_array().unwrap().len(), 12);
}

#[test]
fn balance_writes_provenance_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("balanced.jsonl");
    let out = run(&["balance", "--factor", "1", "--out", &s(&out_path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let (maj, min, m) = (
        report["result"]["n_majority"].as_u64().unwrap(),
        report["result"]["n_minority"].as_u64().unwrap(),
        report["result"]["duplicates_added"].as_u64().unwrap(),
    );
    assert_eq!(m, maj - min);
    let examples = fs::read_to_string(&out_path).unwrap();
    let prov = fs::read_to_string(dir.path().join("balanced.jsonl.provenance")).unwrap();
    assert_eq!(examples.lines().count() as u64, maj + min + m);
    assert_eq!(prov.lines().count(), examples.lines().count());
    assert_eq!(prov.lines().filter(|l| l.starts_with("DUPLICATE:")).count() as u64, m);
}

#[test]
fn train_predict_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = s(&dir.path().join("m.model"));
    let preds = s(&dir.path().join("preds.jsonl"));
    assert!(run(&["train", "--epochs", "2", "--model", &model]).status.success());
    let tuned = s(&dir.path().join("tuned.model"));
    assert!(run(&["finetune", "--model", &model, "--out", &tuned, "--epochs", "1"])
        .status
        .success());
    assert!(run(&["predict", "--model", &tuned, "--out", &preds]).status.success());
    assert_eq!(fs::read_to_string(&preds).unwrap().lines().count(), 100);
    let out = run(&["evaluate", "--predictions", &preds]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let reports = report["result"]["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(reports[0]["slice"], "ALL");
    assert_eq!(reports[0]["n"], 100);
    let errors = &report["result"]["errors"];
    let total: u64 = errors["counts"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(total, errors["total_errors"].as_u64().unwrap());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "seed = 5\nk = 3\n[paths]\ntrain = {:?}\ntables = [{:?}]\n[train]\nepochs = 1\n",
            s(&fx.join("train.jsonl")),
            s(&fx.join("train.tables.jsonl"))
        ),
    )
    .unwrap();
    let out = sqlbalance(&["kfold", "--config", &s(&cfg), "--seed", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["config"]["seed"], 9);
    assert_eq!(report["config"]["k"], 3);
    assert_eq!(report["result"]["folds"].as_array().unwrap().len(), 3);
    let missing_k = sqlbalance(&[
        "kfold",
        "--train",
        &s(&fx.join("train.jsonl")),
        "--tables",
        &s(&fx.join("train.tables.jsonl")),
    ]);
    assert_eq!(missing_k.status.code(), Some(1));
}
