//! Subcommand implementations.

use std::fs;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use pathshap_core::decomposition::MetricKind;
use pathshap_core::pipeline::{find_paths, train_test_split};
use pathshap_core::predictor::{ModelKind, TrainingTrace};
use pathshap_core::protocol::ExternalScorer;
use pathshap_core::selection::{adjusted_scores, selection_loss, EXHAUSTIVE_LIMIT};
use pathshap_core::synthetic::{self, GeneratorConfig, GroundTruth, Setting};
use pathshap_core::{
    aggregate_to_features, disparity_contributions, exhaustive_select, fit_explainer,
    greedy_select, sweep, train_on, utility_contributions, Coalition, ContributionReport, Dataset,
    Engine, Error, FactMode, NodeData, OutputMode, Pdag, PermutationPlan, PipelineConfig,
    Predictor, PredictorKind, Schema, SearchOptions, TrainConfig,
};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::failure::{args, Failure};
use crate::output::{digest, opt, Csv, Meta, OutDir};
use crate::{
    CheckArg, EvaluateArgs, ExplainArgs, GenerateArgs, InputArgs, MetricArg, ModelArgs, SelectArgs,
    SettingArg,
};

/// Score cut-off for accuracy on the trade-off curve.
const DECISION_THRESHOLD: f64 = 0.5;

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let cfg = GeneratorConfig {
        features: a.features,
        p_feature: a.p_feature,
        p_sensitive: a.p_sensitive,
        setting: match a.setting {
            SettingArg::S1 => Setting::S1,
            SettingArg::S2 => Setting::S2,
        },
        rows: a.rows,
        seed: a.seed,
        signed_weights: a.signed,
    };
    let inst = synthetic::generate(&cfg)?;
    let meta = Meta::new(
        cfg.seed,
        &json!({ "command": "generate", "generator": cfg }),
    );
    let out = OutDir::create(&a.out)?;
    out.write("graph.txt", &(meta.comment() + &inst.graph.to_text()))?;
    out.write("schema.txt", &(meta.comment() + &inst.schema.to_text()))?;
    out.write(
        "data.csv",
        &(meta.comment() + &inst.dataset.to_csv_string()),
    )?;
    out.write_json("generator.json", &meta, json!({ "config": cfg }))?;
    println!(
        "generated {} features, {} rows into {}",
        cfg.features,
        inst.dataset.rows(),
        a.out.display()
    );
    Ok(())
}

struct Inputs {
    graph: Pdag,
    data: NodeData,
    digests: Value,
}

fn read_input(path: &Path, code: &'static str, what: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Failure::new(code, format!("cannot read {what} {}: {e}", path.display())).into()
    })
}

fn load(input: &InputArgs) -> Result<Inputs> {
    let schema_text = read_input(&input.schema, "E_SCHEMA", "schema")?;
    let graph_text = read_input(&input.graph, "E_GRAPH", "graph")?;
    let data_text = read_input(&input.data, "E_DATA", "data")?;
    let schema = Schema::parse(&schema_text).context("schema")?;
    let graph = Pdag::parse(&graph_text).context("graph")?;
    let dataset = Dataset::from_csv_str(&data_text, &schema).context("data")?;
    let data = NodeData::from_dataset(&graph, &dataset).context("data")?;
    Ok(Inputs {
        graph,
        data,
        digests: json!({
            "graph": digest(graph_text.as_bytes()),
            "data": digest(data_text.as_bytes()),
            "schema": digest(schema_text.as_bytes()),
        }),
    })
}

enum PredictorSpec {
    Builtin(ModelKind),
    External(String),
}

fn parse_predictor(text: &str) -> Result<PredictorSpec> {
    match text {
        "logistic" => Ok(PredictorSpec::Builtin(ModelKind::Logistic)),
        "mlp" => Ok(PredictorSpec::Builtin(ModelKind::Mlp)),
        _ => match text.strip_prefix("external:") {
            Some(target) if !target.trim().is_empty() => {
                Ok(PredictorSpec::External(target.trim().to_string()))
            }
            _ => Err(args(format!(
                "unknown predictor `{text}` (expected logistic, mlp or external:<target>)"
            ))),
        },
    }
}

fn check_model_args(m: &ModelArgs) -> Result<PredictorSpec> {
    if m.orderings == 0 {
        return Err(args("--orderings must be at least 1"));
    }
    if !(m.alpha > 0.0 && m.alpha < 1.0) {
        return Err(args("--alpha must lie in (0, 1)"));
    }
    parse_predictor(&m.predictor)
}

fn model_config(m: &ModelArgs) -> Value {
    json!({
        "predictor": m.predictor,
        "threshold": m.threshold,
        "epochs": m.epochs,
        "hidden": m.hidden,
        "orderings": m.orderings,
        "exact": m.exact,
        "seed": m.seed,
        "check": match m.check {
            CheckArg::Structural => Value::from("structural"),
            CheckArg::Ci => json!({ "ci": m.alpha }),
        },
    })
}

fn plan(m: &ModelArgs) -> PermutationPlan {
    PermutationPlan {
        orderings: m.orderings,
        seed: m.seed,
        exact: m.exact,
    }
}

fn build_predictor(
    spec: &PredictorSpec,
    m: &ModelArgs,
    graph: &Pdag,
    data: &NodeData,
) -> Result<(Predictor, Option<TrainingTrace>)> {
    let output = m
        .threshold
        .map_or(OutputMode::Probability, OutputMode::Thresholded);
    match spec {
        PredictorSpec::Builtin(kind) => {
            let cfg = TrainConfig {
                kind: *kind,
                hidden: m.hidden,
                epochs: m.epochs,
                seed: m.seed,
                output,
                ..TrainConfig::default()
            };
            let (p, trace) = train_on(graph, data, &cfg)?;
            Ok((p, Some(trace)))
        }
        PredictorSpec::External(target) => {
            let dim = graph
                .prediction_inputs()
                .iter()
                .map(|&v| data.width(v))
                .sum();
            let timeout = Duration::from_secs(m.timeout);
            let scorer = if target.parse::<SocketAddr>().is_ok() {
                ExternalScorer::connect(target, dim, timeout)
            } else {
                ExternalScorer::spawn(target, dim, timeout)
            }
            .map_err(|e| Failure::new("E_PREDICTOR", format!("{target}: {e}")))?;
            Ok((
                Predictor::new(Arc::new(scorer), PredictorKind::External, output),
                None,
            ))
        }
    }
}

fn metric_name(m: MetricArg) -> &'static str {
    match m {
        MetricArg::Dp => "dp",
        MetricArg::Eo => "eo",
        MetricArg::Odds => "odds",
        MetricArg::Acc => "acc",
    }
}

fn kind_name(k: MetricKind) -> &'static str {
    match k {
        MetricKind::DemographicParity => "demographic_parity",
        MetricKind::EqualizedOddsY1 => "equalized_odds_y1",
        MetricKind::EqualizedOddsY0 => "equalized_odds_y0",
        MetricKind::AccuracyParity => "accuracy_parity",
    }
}

fn metric_kinds(m: MetricArg) -> Vec<MetricKind> {
    match m {
        MetricArg::Dp => vec![MetricKind::DemographicParity],
        MetricArg::Eo => vec![MetricKind::EqualizedOddsY1],
        MetricArg::Odds => vec![MetricKind::EqualizedOddsY1, MetricKind::EqualizedOddsY0],
        MetricArg::Acc => vec![MetricKind::AccuracyParity],
    }
}

fn pipeline_config(metric: MetricArg, m: &ModelArgs) -> PipelineConfig {
    let outcome_metric = metric != MetricArg::Dp;
    PipelineConfig {
        mode: if outcome_metric {
            FactMode::RelativeToY
        } else {
            FactMode::Marginal
        },
        conditional: outcome_metric,
        seed: m.seed,
        ci_alpha: matches!(m.check, CheckArg::Ci).then_some(m.alpha),
    }
}

fn require_outcome(metric: MetricArg, data: &NodeData) -> Result<()> {
    if metric != MetricArg::Dp && !data.has_outcome() {
        return Err(Error::MissingOutcome(format!(
            "metric `{}` needs an outcome column in the schema",
            metric_name(metric)
        ))
        .into());
    }
    Ok(())
}

fn contributions_csv(meta: &Meta, reports: &[ContributionReport]) -> String {
    let mut csv = Csv::new(
        meta,
        &["metric", "id", "path", "phi", "phi_se", "psi", "psi_se"],
    );
    for r in reports {
        for p in &r.paths {
            csv.row(&[
                kind_name(r.metric).into(),
                p.id.to_string(),
                p.path.clone(),
                p.phi.to_string(),
                p.phi_se.to_string(),
                opt(p.psi),
                opt(p.psi_se),
            ]);
        }
    }
    csv.finish()
}

pub fn explain(a: &ExplainArgs) -> Result<()> {
    let spec = check_model_args(&a.model)?;
    let inp = load(&a.input)?;
    require_outcome(a.metric, &inp.data)?;
    let config = json!({
        "command": "explain",
        "inputs": inp.digests,
        "metric": metric_name(a.metric),
        "model": model_config(&a.model),
        "gap_alarm": a.gap_alarm,
    });
    let meta = Meta::new(a.model.seed, &config);

    let (predictor, trace) = build_predictor(&spec, &a.model, &inp.graph, &inp.data)?;
    let ex = fit_explainer(&inp.graph, &inp.data, &pipeline_config(a.metric, &a.model))?;
    for w in &ex.facts.warnings {
        eprintln!("warning: {w}");
    }
    let engine = Engine::new(&inp.data, &ex.model, &ex.residuals, &predictor)?
        .with_labels(&inp.graph, &ex.partition);
    let plan = plan(&a.model);
    let reports = metric_kinds(a.metric)
        .into_iter()
        .map(|k| disparity_contributions(&engine, k, &plan))
        .collect::<pathshap_core::Result<Vec<_>>>()?;
    for r in &reports {
        for w in &r.warnings {
            eprintln!("warning: {w}");
        }
        if let Some(g) = r.normalized_gap.filter(|&g| g > a.gap_alarm) {
            eprintln!(
                "warning: {} efficiency gap {g:.4} exceeds {} (disparity {:.6}, sum of contributions {:.6})",
                kind_name(r.metric),
                a.gap_alarm,
                r.disparity,
                r.sum_phi
            );
        }
    }

    let out = OutDir::create(&a.out)?;
    out.write_json(
        "facts.json",
        &meta,
        json!({
            "facts": ex.facts.to_json(&inp.graph),
            "labels": ex.labels(&inp.graph),
        }),
    )?;
    out.write_json(
        "contributions.json",
        &meta,
        json!({
            "predictor": {
                "kind": predictor.kind(),
                "output": predictor.output(),
                "training": trace,
            },
            "reports": reports,
        }),
    )?;
    out.write("contributions.csv", &contributions_csv(&meta, &reports))?;
    let mut features = Csv::new(&meta, &["metric", "feature", "phi", "psi"]);
    for r in &reports {
        for f in aggregate_to_features(r, &inp.graph, &ex.partition) {
            features.row(&[
                kind_name(r.metric).into(),
                f.feature,
                f.phi.to_string(),
                opt(f.psi),
            ]);
        }
    }
    out.write("features.csv", &features.finish())?;

    for r in &reports {
        println!(
            "{}: disparity {:.6}, {} paths, sum of contributions {:.6}",
            kind_name(r.metric),
            r.disparity,
            r.paths.len(),
            r.sum_phi
        );
    }
    Ok(())
}

pub fn parse_lambdas(text: &str) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| args(format!("lambda `{t}` is not a non-negative number")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if let Some(w) = values.windows(2).find(|w| w[0] >= w[1]) {
        return Err(args(format!(
            "lambda values must be strictly ascending ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(values)
}

/// Accuracy at the decision threshold and group gap in mean score.
fn accuracy_and_gap(scores: &[f64], data: &NodeData) -> (f64, f64) {
    let mut correct = 0usize;
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for (r, &s) in scores.iter().enumerate() {
        let label = if s >= DECISION_THRESHOLD { 1.0 } else { 0.0 };
        if data.outcome(r) == Some(label) {
            correct += 1;
        }
        let g = (data.sensitive(r) == 1.0) as usize;
        sums[g] += s;
        counts[g] += 1;
    }
    (
        correct as f64 / scores.len() as f64,
        sums[1] / counts[1].max(1) as f64 - sums[0] / counts[0].max(1) as f64,
    )
}

pub fn select(a: &SelectArgs) -> Result<()> {
    let spec = check_model_args(&a.model)?;
    let lambdas = parse_lambdas(&a.lambda)?;
    if a.metric == MetricArg::Odds {
        return Err(args(
            "select takes a single metric; use eo for the true-positive-rate gap",
        ));
    }
    if !(a.train_share > 0.0 && a.train_share < 1.0) {
        return Err(args("--train-share must lie in (0, 1)"));
    }
    let inp = load(&a.input)?;
    if !inp.data.has_outcome() {
        return Err(Error::MissingOutcome(
            "selection measures accuracy and needs an outcome".into(),
        )
        .into());
    }
    let config = json!({
        "command": "select",
        "inputs": inp.digests,
        "metric": metric_name(a.metric),
        "model": model_config(&a.model),
        "lambda": lambdas,
        "train_share": a.train_share,
    });
    let meta = Meta::new(a.model.seed, &config);

    let (train_rows, test_rows) = train_test_split(inp.data.rows(), a.train_share, a.model.seed);
    let train = inp.data.subset(&train_rows);
    let test = inp.data.subset(&test_rows);
    let (predictor, _) = build_predictor(&spec, &a.model, &inp.graph, &train)?;
    let ex = fit_explainer(&inp.graph, &train, &pipeline_config(a.metric, &a.model))?;
    let plan = plan(&a.model);
    let engine = Engine::new(&train, &ex.model, &ex.residuals, &predictor)?
        .with_labels(&inp.graph, &ex.partition);
    let kind = metric_kinds(a.metric)[0];
    let report = disparity_contributions(&engine, kind, &plan)?;
    let phi = report.phi();
    let psi = match report.psi() {
        Some(psi) => psi,
        None => utility_contributions(&engine, &plan)?,
    };

    let test_residuals = ex.residuals_for(&test)?;
    let test_engine = Engine::new(&test, &ex.model, &test_residuals, &predictor)?;
    let points = sweep(&lambdas, &phi, &psi, &test_engine, DECISION_THRESHOLD)?;
    let n = phi.len();
    let baseline = adjusted_scores(&test_engine, &Coalition::full(n))?;
    let (base_acc, base_gap) = accuracy_and_gap(&baseline, &test);

    let mut per_lambda = Vec::with_capacity(lambdas.len());
    for point in &points {
        let greedy = greedy_select(&phi, &psi, point.lambda)?;
        let exhaustive = if n <= EXHAUSTIVE_LIMIT {
            Some(exhaustive_select(&phi, &psi, point.lambda)?)
        } else {
            None
        };
        per_lambda.push(json!({
            "lambda": point.lambda,
            "greedy": greedy,
            "exhaustive": exhaustive,
            "loss_all": selection_loss(&phi, &psi, &(0..n).collect::<Vec<_>>(), point.lambda),
            "test_accuracy": point.accuracy,
            "test_disparity": point.disparity,
        }));
    }
    let paths: Vec<Value> = report
        .paths
        .iter()
        .zip(&psi)
        .map(|(p, u)| json!({ "id": p.id, "path": p.path, "phi": p.phi, "psi": u }))
        .collect();

    let out = OutDir::create(&a.out)?;
    out.write_json(
        "selection.json",
        &meta,
        json!({
            "metric": kind_name(kind),
            "rows": { "train": train_rows.len(), "test": test_rows.len() },
            "disparity": report.disparity,
            "paths": paths,
            "baseline": { "test_accuracy": base_acc, "test_disparity": base_gap },
            "selections": per_lambda,
        }),
    )?;
    let mut csv = Csv::new(
        &meta,
        &["lambda", "selected", "loss", "accuracy", "disparity"],
    );
    for p in &points {
        let ids: Vec<String> = p.selected.iter().map(|i| i.to_string()).collect();
        csv.row(&[
            p.lambda.to_string(),
            ids.join(" "),
            p.loss.to_string(),
            p.accuracy.to_string(),
            p.disparity.to_string(),
        ]);
    }
    out.write("tradeoff.csv", &csv.finish())?;
    println!(
        "{} paths, {} weights; baseline accuracy {:.4}, disparity {:.4}",
        n,
        points.len(),
        base_acc,
        base_gap
    );
    Ok(())
}

struct Contributions {
    labels: Vec<String>,
    values: Vec<f64>,
    stderr: Option<Vec<f64>>,
    disparity: f64,
}

fn read_contributions(path: &Path) -> Result<Contributions> {
    let text = read_input(path, "E_DATA", "contributions")?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::new("E_DATA", format!("{}: {e}", path.display())))?;
    let body = doc
        .get("truth")
        .or_else(|| doc.get("reports").and_then(|r| r.get(0)))
        .unwrap_or(&doc);
    if let Ok(t) = GroundTruth::deserialize(body) {
        return Ok(Contributions {
            labels: t.paths,
            values: t.theta,
            stderr: None,
            disparity: t.disparity,
        });
    }
    if let Ok(r) = ContributionReport::deserialize(body) {
        return Ok(Contributions {
            labels: r.paths.iter().map(|p| p.path.clone()).collect(),
            values: r.phi(),
            stderr: Some(r.paths.iter().map(|p| p.phi_se).collect()),
            disparity: r.disparity,
        });
    }
    Err(Failure::new(
        "E_DATA",
        format!(
            "{} holds neither contributions nor exact contributions",
            path.display()
        ),
    )
    .into())
}

fn metrics_body(est: &Contributions, truth: &Contributions) -> Result<Value> {
    if est.labels != truth.labels {
        return Err(Failure::new("E_DATA", "estimates and truth cover different paths").into());
    }
    let nrmse = synthetic::score(&est.values, &truth.values, truth.disparity)?.nrmse;
    let gap = synthetic::score(&est.values, &est.values, est.disparity)?.efficiency_gap;
    Ok(json!({
        "nrmse": nrmse,
        "efficiency_gap": gap,
        "stderr": est.stderr.clone().unwrap_or_else(|| vec![0.0; est.values.len()]),
        "paths": est.labels,
    }))
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let out_dir = &a.out;
    if let (Some(est), Some(truth)) = (&a.estimates, &a.truth) {
        let est_text = read_input(est, "E_DATA", "estimates")?;
        let truth_text = read_input(truth, "E_DATA", "truth")?;
        let meta = Meta::new(
            a.model.seed,
            &json!({
                "command": "evaluate",
                "estimates": digest(est_text.as_bytes()),
                "truth": digest(truth_text.as_bytes()),
            }),
        );
        let body = metrics_body(&read_contributions(est)?, &read_contributions(truth)?)?;
        print_metrics(&body);
        return OutDir::create(out_dir)?.write_json("metrics.json", &meta, body);
    }
    let generator = a.generator.as_ref().expect("clap requires a mode");
    let spec = check_model_args(&a.model)?;
    let text = read_input(generator, "E_DATA", "generator")?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::new("E_DATA", format!("{}: {e}", generator.display())))?;
    let cfg: GeneratorConfig = serde_json::from_value(doc.get("config").unwrap_or(&doc).clone())
        .map_err(|e| Failure::new("E_DATA", format!("{}: {e}", generator.display())))?;
    let meta = Meta::new(
        a.model.seed,
        &json!({
            "command": "evaluate",
            "generator": cfg,
            "model": model_config(&a.model),
            "guard": a.guard,
        }),
    );

    let inst = synthetic::generate(&cfg)?;
    let facts = find_paths(&inst.graph, FactMode::Marginal, &SearchOptions::default())?;
    if facts.len() > a.guard {
        return Err(Error::GuardExceeded {
            paths: facts.len(),
            limit: a.guard,
        }
        .into());
    }
    let data = NodeData::from_dataset(&inst.graph, &inst.dataset)?;
    let (predictor, _) = build_predictor(&spec, &a.model, &inst.graph, &data)?;
    let ex = fit_explainer(
        &inst.graph,
        &data,
        &pipeline_config(MetricArg::Dp, &a.model),
    )?;
    let engine = Engine::new(&data, &ex.model, &ex.residuals, &predictor)?
        .with_labels(&inst.graph, &ex.partition);
    let report = disparity_contributions(&engine, MetricKind::DemographicParity, &plan(&a.model))?;
    let truth = synthetic::exact_ground_truth(&inst, &predictor, a.guard)?;

    let est = Contributions {
        labels: report.paths.iter().map(|p| p.path.clone()).collect(),
        values: report.phi(),
        stderr: Some(report.paths.iter().map(|p| p.phi_se).collect()),
        disparity: report.disparity,
    };
    let exact = Contributions {
        labels: truth.paths.clone(),
        values: truth.theta.clone(),
        stderr: None,
        disparity: truth.disparity,
    };
    let body = metrics_body(&est, &exact)?;
    print_metrics(&body);
    let out = OutDir::create(out_dir)?;
    out.write_json("contributions.json", &meta, json!({ "reports": [report] }))?;
    out.write_json("truth.json", &meta, json!({ "truth": truth }))?;
    out.write_json("metrics.json", &meta, body)
}

fn print_metrics(body: &Value) {
    println!(
        "nrmse {:.6}, efficiency gap {:.6}",
        body["nrmse"].as_f64().unwrap_or(f64::NAN),
        body["efficiency_gap"].as_f64().unwrap_or(f64::NAN)
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambdas_must_ascend() {
        assert_eq!(parse_lambdas("0, 1,10").unwrap(), vec![0.0, 1.0, 10.0]);
        for bad in ["10,1", "1,1", "-1", "x", "", "0,inf"] {
            let err = parse_lambdas(bad).unwrap_err();
            assert_eq!(crate::failure::classify(&err), "E_ARGS", "{bad}");
        }
    }

    #[test]
    fn predictor_specs() {
        assert!(matches!(
            parse_predictor("mlp"),
            Ok(PredictorSpec::Builtin(ModelKind::Mlp))
        ));
        assert!(matches!(
            parse_predictor("external:127.0.0.1:9000"),
            Ok(PredictorSpec::External(t)) if t == "127.0.0.1:9000"
        ));
        assert!(parse_predictor("external:").is_err());
        assert!(parse_predictor("forest").is_err());
    }

    #[test]
    fn truth_scored_against_itself_is_perfect() {
        let t = Contributions {
            labels: vec!["a".into(), "b".into()],
            values: vec![0.1, -0.05],
            stderr: None,
            disparity: 0.05,
        };
        let body = metrics_body(&t, &t).unwrap();
        assert_eq!(body["nrmse"], 0.0);
        assert!(body["efficiency_gap"].as_f64().unwrap() < 1e-12);
    }
}
