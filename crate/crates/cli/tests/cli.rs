use std::fs;
use std::io::BufReader;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::thread;

use pathshap_core::fixtures::G1;
use pathshap_core::predictor::FnScorer;
use pathshap_core::protocol::serve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pathshap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn generate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["generate", "--out", p(dir)];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr(&out));
}

fn inputs(dir: &Path) -> Vec<String> {
    ["graph.txt", "data.csv", "schema.txt"]
        .iter()
        .zip(["--graph", "--data", "--schema"])
        .flat_map(|(f, flag)| [flag.to_string(), dir.join(f).to_str().unwrap().to_string()])
        .collect()
}

/// The three-feature graph with linear links and a thresholded outcome.
fn g1_files(dir: &Path, rows: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut csv = String::from("A,X1,X2,X3,Y\n");
    for _ in 0..rows {
        let a = rng.random_bool(0.4) as u8 as f64;
        let e: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let x1 = 0.3 + 1.7 * a + e[0];
        let x2 = -0.4 - 0.9 * a + 1.3 * x1 + e[1];
        let x3 = e[2];
        let y = (0.6 * x1 + 0.5 * x3 + e[3] > 1.0) as u8;
        csv.push_str(&format!("{a},{x1},{x2},{x3},{y}\n"));
    }
    fs::write(dir.join("data.csv"), csv).unwrap();
    fs::write(dir.join("graph.txt"), G1).unwrap();
    fs::write(
        dir.join("schema.txt"),
        "A:binary:sensitive\nX1:continuous\nX2:continuous\nX3:continuous\nY:binary:outcome\n",
    )
    .unwrap();
}

#[test]
fn generate_is_deterministic_per_seed() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    generate(a.path(), &["--seed", "7", "--rows", "300"]);
    generate(b.path(), &["--seed", "7", "--rows", "300"]);
    for f in ["graph.txt", "data.csv", "schema.txt", "generator.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let graph = fs::read_to_string(a.path().join("graph.txt")).unwrap();
    assert_eq!(
        graph
            .lines()
            .filter(|l| l.ends_with("kind=feature"))
            .count(),
        10
    );
    assert!(graph.starts_with("# pathshap "));
}

#[test]
fn second_setting_keeps_a_binary_outcome() {
    let (s1, s2) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    generate(s1.path(), &["--rows", "300"]);
    generate(s2.path(), &["--rows", "300", "--setting", "s2"]);
    let schema = fs::read_to_string(s2.path().join("schema.txt")).unwrap();
    assert!(schema.lines().any(|l| l == "Y:binary:outcome"), "{schema}");
    assert_eq!(
        json(s2.path().join("generator.json"))["config"]["setting"],
        "s2"
    );
    assert_ne!(
        fs::read(s1.path().join("data.csv")).unwrap(),
        fs::read(s2.path().join("data.csv")).unwrap()
    );
}

#[test]
fn explain_on_the_three_feature_graph() {
    let dir = TempDir::new().unwrap();
    g1_files(dir.path(), 5000);
    let out_dir = dir.path().join("out");
    let mut args: Vec<String> = vec!["explain".into()];
    args.extend(inputs(dir.path()));
    args.extend(["--predictor", "logistic", "--out", p(&out_dir)].map(String::from));
    let out = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", stderr(&out));
    let doc = json(out_dir.join("contributions.json"));
    let report = &doc["reports"][0];
    let labels: Vec<&str> = report["paths"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["path"].as_str().unwrap())
        .collect();
    assert_eq!(
        labels,
        [
            "A -> X1 -> Yhat",
            "A -> X2 -> Yhat",
            "A -> X1 -> X2 -> Yhat"
        ]
    );
    let gap = report["normalized_gap"].as_f64().unwrap();
    assert!(gap <= 0.02, "normalized gap {gap}");
    assert_eq!(doc["meta"]["tool"], "pathshap");
    assert_eq!(doc["meta"]["seed"], 0);
    for f in ["facts.json", "contributions.csv", "features.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(out_dir.join("contributions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 3);
    let hash = doc["meta"]["config_hash"].as_str().unwrap();
    assert!(csv
        .lines()
        .next()
        .unwrap()
        .ends_with(&format!("config={hash}")));
}

#[test]
fn missing_schema_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    g1_files(dir.path(), 50);
    fs::remove_file(dir.path().join("schema.txt")).unwrap();
    let mut args: Vec<String> = vec!["explain".into()];
    args.extend(inputs(dir.path()));
    let out = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.starts_with("E_SCHEMA: "), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn outcome_metrics_need_an_outcome_column() {
    let dir = TempDir::new().unwrap();
    g1_files(dir.path(), 50);
    let data = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    let trimmed: String = data
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect();
    fs::write(dir.path().join("data.csv"), trimmed).unwrap();
    fs::write(
        dir.path().join("schema.txt"),
        "A:binary:sensitive\nX1:continuous\nX2:continuous\nX3:continuous\n",
    )
    .unwrap();
    let mut args: Vec<String> = vec!["explain".into()];
    args.extend(inputs(dir.path()));
    args.extend(["--metric", "eo"].map(String::from));
    let out = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("E_OUTCOME: "), "{}", stderr(&out));
}

#[test]
fn select_sweeps_the_weights() {
    let dir = TempDir::new().unwrap();
    generate(dir.path(), &["--rows", "3000"]);
    let out_dir = dir.path().join("sel");
    let mut args: Vec<String> = vec!["select".into()];
    args.extend(inputs(dir.path()));
    args.extend(
        [
            "--predictor",
            "logistic",
            "--lambda",
            "0,0.1,0.2,0.5,1,2,5,10,100,1000",
            "--out",
            p(&out_dir),
        ]
        .map(String::from),
    );
    let out = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("tradeoff.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv
        .lines()
        .skip(2)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 10);
    let disparity = |r: &Vec<&str>| r[4].parse::<f64>().unwrap().abs();
    assert!(disparity(&rows[9]) <= disparity(&rows[0]));

    // with no disparity weight, exactly the paths that add utility are kept
    let doc = json(out_dir.join("selection.json"));
    let positive: Vec<u64> = doc["paths"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|p| p["psi"].as_f64().unwrap() > 0.0)
        .map(|p| p["id"].as_u64().unwrap())
        .collect();
    let kept: Vec<u64> = doc["selections"][0]["greedy"]["selected"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(kept, positive);
    assert!(doc["selections"][0]["exhaustive"].is_object());
}

#[test]
fn descending_weights_are_rejected() {
    let dir = TempDir::new().unwrap();
    generate(dir.path(), &["--rows", "300"]);
    let mut args: Vec<String> = vec!["select".into()];
    args.extend(inputs(dir.path()));
    args.extend(["--lambda", "10,1"].map(String::from));
    let out = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("E_ARGS: "), "{}", stderr(&out));
}

#[test]
fn evaluate_scores_against_exact_contributions() {
    let dir = TempDir::new().unwrap();
    generate(dir.path(), &["--rows", "2000"]);
    let out_dir = dir.path().join("eval");
    let gen = dir.path().join("generator.json");
    let out = run(&[
        "evaluate",
        "--generator",
        p(&gen),
        "--predictor",
        "logistic",
        "--out",
        p(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let metrics = json(out_dir.join("metrics.json"));
    assert!(metrics["nrmse"].as_f64().unwrap() < 0.2, "{metrics}");
    let paths = metrics["paths"].as_array().unwrap().len();
    assert_eq!(metrics["stderr"].as_array().unwrap().len(), paths);

    let truth = out_dir.join("truth.json");
    let again = dir.path().join("again");
    let out = run(&[
        "evaluate",
        "--estimates",
        p(&truth),
        "--truth",
        p(&truth),
        "--out",
        p(&again),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let metrics = json(again.join("metrics.json"));
    assert_eq!(metrics["nrmse"], 0.0);
    assert!(metrics["efficiency_gap"].as_f64().unwrap() < 1e-12);
}

#[test]
fn exact_oracle_guard_exits_with_three() {
    // this seed yields 20 paths
    let dir = TempDir::new().unwrap();
    let gen = dir.path().join("generator.json");
    fs::write(
        &gen,
        r#"{"config":{"features":10,"p_feature":0.2,"p_sensitive":0.4,"setting":"s1","rows":5000,"seed":4,"signed_weights":false}}"#,
    )
    .unwrap();
    let out = run(&["evaluate", "--generator", p(&gen), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).starts_with("E_GUARD: "), "{}", stderr(&out));
}

#[test]
fn external_predictor_over_tcp() {
    let dir = TempDir::new().unwrap();
    g1_files(dir.path(), 400);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let server = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let scorer = Arc::new(FnScorer::new(3, |x: &[f64]| {
            1.0 / (1.0 + (-(0.5 * x[0] - 0.2 * x[1] + 0.1 * x[2])).exp())
        }));
        serve(
            scorer.as_ref(),
            BufReader::new(stream.try_clone().unwrap()),
            stream,
        )
        .unwrap();
    });
    let out_dir = dir.path().join("ext");
    let mut args: Vec<String> = vec!["explain".into()];
    args.extend(inputs(dir.path()));
    args.extend([
        "--predictor".to_string(),
        format!("external:{addr}"),
        "--orderings".into(),
        "20".into(),
        "--out".into(),
        p(&out_dir).into(),
    ]);
    let out = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", stderr(&out));
    server.join().unwrap();
    let doc = json(out_dir.join("contributions.json"));
    assert_eq!(doc["predictor"]["kind"], "external");
    assert_eq!(doc["reports"][0]["paths"].as_array().unwrap().len(), 3);
}

#[test]
fn unknown_flags_are_argument_errors() {
    let out = run(&["explain", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("E_ARGS: "), "{}", stderr(&out));
}
