//! Random linear causal systems with known ground-truth path contributions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnSpec, ColumnType, Dataset, NodeData, Role, Schema};
use crate::decomposition::{Coalition, CoalitionTable, Engine};
use crate::error::{Error, Result};
use crate::facts::{group_variables, search_facts, search_facts_relative_to_y, SearchOptions};
use crate::graph::{Edge, NodeId, NodeKind, Pdag};
use crate::predictor::Predictor;
use crate::structural::{LinearEquation, Residuals, Skeleton, StructuralModel};

/// Default limit on paths for exhaustive coalition enumeration.
pub const GUARD: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Outcome probability is the min-max normalized linear score.
    S1,
    /// Outcome probability is a logistic squashing of the standardized score.
    S2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub features: usize,
    pub p_feature: f64,
    pub p_sensitive: f64,
    pub setting: Setting,
    pub rows: usize,
    pub seed: u64,
    /// Draw a random sign for every structural weight instead of keeping them positive.
    pub signed_weights: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            features: 10,
            p_feature: 0.2,
            p_sensitive: 0.4,
            setting: Setting::S1,
            rows: 5000,
            seed: 0,
            signed_weights: false,
        }
    }
}

/// Slope of the logistic squashing in [`Setting::S2`].
const S2_SLOPE: f64 = 3.0;

/// The generating process of a synthetic instance.
#[derive(Clone, Debug)]
pub struct TrueSystem {
    /// Structural equation of every feature.
    pub equations: BTreeMap<NodeId, LinearEquation>,
    pub features: Vec<NodeId>,
    pub outcome_weights: Vec<f64>,
    pub setting: Setting,
    pub p_a: f64,
    /// Per row: noise of each feature, in `features` order.
    pub noise: Vec<Vec<f64>>,
    /// Per row: uniform draw deciding the outcome.
    pub outcome_draw: Vec<f64>,
    /// Mean and spread of the outcome score used for normalization.
    score_center: f64,
    score_spread: f64,
}

#[derive(Clone, Debug)]
pub struct SyntheticInstance {
    pub graph: Pdag,
    pub dataset: Dataset,
    pub schema: Schema,
    pub truth: TrueSystem,
}

fn weight(rng: &mut ChaCha8Rng, signed: bool) -> f64 {
    let w = rng.random_range(0.5..1.5);
    if !signed || rng.random_bool(0.5) {
        w
    } else {
        -w
    }
}

impl TrueSystem {
    /// Feature values for one noise draw and sensitive value.
    fn features_for(&self, a: f64, noise: &[f64], sensitive: NodeId) -> Vec<f64> {
        let mut values: BTreeMap<NodeId, f64> = BTreeMap::from([(sensitive, a)]);
        let mut out = Vec::with_capacity(self.features.len());
        for (k, v) in self.features.iter().enumerate() {
            let eq = &self.equations[v];
            let x = eq.intercept
                + eq.weights.iter().map(|(p, w)| w * values[p]).sum::<f64>()
                + noise[k];
            values.insert(*v, x);
            out.push(x);
        }
        out
    }

    fn score(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.outcome_weights)
            .map(|(a, b)| a * b)
            .sum()
    }

    fn outcome_probability(&self, score: f64) -> f64 {
        let z = (score - self.score_center) / self.score_spread;
        match self.setting {
            Setting::S1 => (z + 0.5).clamp(0.0, 1.0),
            Setting::S2 => 1.0 / (1.0 + (-S2_SLOPE * z).exp()),
        }
    }

    /// Every noise draw paired with both sensitive values: row `2i` has `A = 0`,
    /// row `2i + 1` has `A = 1`.
    pub fn twin_data(&self, graph: &Pdag) -> Result<NodeData> {
        let n = graph.node_count();
        let mut columns: Vec<Option<Vec<f64>>> = vec![None; n];
        let s = graph.sensitive();
        let mut a_col = Vec::new();
        let mut x_cols = vec![Vec::new(); self.features.len()];
        let mut y_col = Vec::new();
        for (noise, &u) in self.noise.iter().zip(&self.outcome_draw) {
            for a in [0.0, 1.0] {
                let x = self.features_for(a, noise, s);
                a_col.push(a);
                y_col.push((u < self.outcome_probability(self.score(&x))) as u8 as f64);
                for (c, v) in x_cols.iter_mut().zip(x) {
                    c.push(v);
                }
            }
        }
        columns[s.0] = Some(a_col);
        for (v, c) in self.features.iter().zip(x_cols) {
            columns[v.0] = Some(c);
        }
        if let Some(y) = graph.outcome() {
            columns[y.0] = Some(y_col);
        }
        NodeData::from_node_columns(graph, columns)
    }

    /// True residuals for the twin rows, laid out for `skeleton`.
    pub fn twin_residuals(&self, skeleton: &Skeleton) -> Residuals {
        let width = skeleton.member_count();
        let pos: BTreeMap<NodeId, usize> = self
            .features
            .iter()
            .enumerate()
            .map(|(k, &v)| (v, k))
            .collect();
        let mut values = Vec::with_capacity(2 * self.noise.len() * width);
        for noise in &self.noise {
            for _ in 0..2 {
                for members in &skeleton.groups {
                    for v in members {
                        values.push(noise[pos[v]]);
                    }
                }
            }
        }
        Residuals {
            rows: 2 * self.noise.len(),
            width,
            values,
        }
    }
}

/// Random DAG over `A, X1..XM, Y, Yhat` with linear equations and generated rows.
pub fn generate(config: &GeneratorConfig) -> Result<SyntheticInstance> {
    if config.features == 0 {
        return Err(Error::InvalidArgument(
            "at least one feature is required".into(),
        ));
    }
    for (name, p) in [
        ("p_feature", config.p_feature),
        ("p_sensitive", config.p_sensitive),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be in [0, 1], got {p}"
            )));
        }
    }
    let m = config.features;
    let signed = config.signed_weights;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut kinds = vec![("A".to_string(), NodeKind::Sensitive)];
    kinds.extend((1..=m).map(|i| (format!("X{i}"), NodeKind::Feature)));
    kinds.push(("Y".to_string(), NodeKind::Outcome));
    kinds.push(("Yhat".to_string(), NodeKind::Prediction));
    let a = NodeId(0);
    let feature = |i: usize| NodeId(i + 1);
    let y = NodeId(m + 1);

    let mut edges = Vec::new();
    let mut equations = BTreeMap::new();
    for i in 0..m {
        let mut eq = LinearEquation::default();
        if rng.random_bool(config.p_sensitive) {
            edges.push(Edge::directed(a, feature(i)));
            eq.weights.insert(a, weight(&mut rng, signed));
        }
        for j in 0..i {
            if rng.random_bool(config.p_feature) {
                edges.push(Edge::directed(feature(j), feature(i)));
                eq.weights.insert(feature(j), weight(&mut rng, signed));
            }
        }
        equations.insert(feature(i), eq);
    }
    let outcome_weights: Vec<f64> = (0..m).map(|_| weight(&mut rng, signed)).collect();
    for i in 0..m {
        edges.push(Edge::directed(feature(i), y));
    }
    let graph = Pdag::new(kinds, edges)?;

    let p_a = 0.5;
    let mut truth = TrueSystem {
        equations,
        features: (0..m).map(feature).collect(),
        outcome_weights,
        setting: config.setting,
        p_a,
        noise: Vec::with_capacity(config.rows),
        outcome_draw: Vec::with_capacity(config.rows),
        score_center: 0.0,
        score_spread: 1.0,
    };
    let mut a_col = Vec::with_capacity(config.rows);
    let mut xs = Vec::with_capacity(config.rows);
    for _ in 0..config.rows {
        let av = rng.random_bool(p_a) as u8 as f64;
        let noise: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        xs.push(truth.features_for(av, &noise, a));
        a_col.push(av);
        truth.noise.push(noise);
        truth.outcome_draw.push(rng.random::<f64>());
    }
    let scores: Vec<f64> = xs.iter().map(|x| truth.score(x)).collect();
    match config.setting {
        Setting::S1 => {
            let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            truth.score_spread = if hi > lo { hi - lo } else { 1.0 };
            truth.score_center = lo + 0.5 * truth.score_spread;
        }
        Setting::S2 => {
            let n = scores.len().max(1) as f64;
            let mean = scores.iter().sum::<f64>() / n;
            let sd = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
            truth.score_center = mean;
            truth.score_spread = if sd > 0.0 { sd } else { 1.0 };
        }
    }
    let y_col: Vec<f64> = scores
        .iter()
        .zip(&truth.outcome_draw)
        .map(|(&s, &u)| (u < truth.outcome_probability(s)) as u8 as f64)
        .collect();

    let mut columns = vec![Column::binary("A", a_col)];
    for i in 0..m {
        columns.push(Column::continuous(
            &format!("X{}", i + 1),
            xs.iter().map(|x| x[i]).collect(),
        ));
    }
    columns.push(Column::binary("Y", y_col));
    let dataset = Dataset::from_columns(columns)?;
    let mut schema = Schema {
        columns: vec![ColumnSpec {
            name: "A".into(),
            kind: ColumnType::Binary,
            role: Some(Role::Sensitive),
        }],
    };
    for i in 0..m {
        schema.columns.push(ColumnSpec {
            name: format!("X{}", i + 1),
            kind: ColumnType::Continuous,
            role: None,
        });
    }
    schema.columns.push(ColumnSpec {
        name: "Y".into(),
        kind: ColumnType::Binary,
        role: Some(Role::Outcome),
    });
    Ok(SyntheticInstance {
        graph,
        dataset,
        schema,
        truth,
    })
}

/// Exact path contributions of `predictor` under the true generating process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub paths: Vec<String>,
    pub theta: Vec<f64>,
    /// Group gap of the predictor on the twin rows.
    pub disparity: f64,
}

/// Model, twin rows and residuals of the true process, wired like the fitted pipeline.
pub struct TrueWorld {
    pub data: NodeData,
    pub model: StructuralModel,
    pub residuals: Residuals,
    pub labels: Vec<String>,
}

pub fn true_world(instance: &SyntheticInstance) -> Result<TrueWorld> {
    let graph = &instance.graph;
    let facts = search_facts(graph, &SearchOptions::default())?;
    let partition = group_variables(graph, &facts)?;
    let skeleton = Skeleton::new(graph, &facts, &partition);
    let data = instance.truth.twin_data(graph)?;
    let residuals = instance.truth.twin_residuals(&skeleton);
    let model = StructuralModel::from_linear(
        skeleton,
        &data,
        std::slice::from_ref(&instance.truth.equations),
        instance.truth.p_a,
        None,
    )?;
    let labels = (0..partition.paths.len())
        .map(|i| partition.display_path(graph, i))
        .collect();
    Ok(TrueWorld {
        data,
        model,
        residuals,
        labels,
    })
}

/// Shapley values by the coalition-weight formula over all `2^n` coalitions.
pub fn coalition_shapley(values: &[f64], n: usize) -> Vec<f64> {
    let mut fact = vec![1.0f64; n + 1];
    for k in 1..=n {
        fact[k] = fact[k - 1] * k as f64;
    }
    let mut phi = vec![0.0; n];
    for (p, slot) in phi.iter_mut().enumerate() {
        let bit = 1usize << p;
        for mask in 0..(1usize << n) {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = fact[s] * fact[n - s - 1] / fact[n];
            *slot += w * (values[mask | bit] - values[mask]);
        }
    }
    phi
}

/// Ground truth by exhaustive coalition enumeration on the true twin rows.
pub fn exact_ground_truth(
    instance: &SyntheticInstance,
    predictor: &Predictor,
    guard: usize,
) -> Result<GroundTruth> {
    let world = true_world(instance)?;
    exact_contributions(&world, predictor, guard)
}

pub fn exact_contributions(
    world: &TrueWorld,
    predictor: &Predictor,
    guard: usize,
) -> Result<GroundTruth> {
    let n = world.model.skeleton.paths.len();
    if n > guard {
        return Err(Error::GuardExceeded {
            paths: n,
            limit: guard,
        });
    }
    let engine = Engine::new(&world.data, &world.model, &world.residuals, predictor)?;
    let coalitions: Vec<Coalition> = (0..1usize << n)
        .map(|mask| {
            let ids: Vec<usize> = (0..n).filter(|&p| mask >> p & 1 == 1).collect();
            Coalition::from_ids(n, &ids)
        })
        .collect::<Result<_>>()?;
    let table = CoalitionTable::new(&engine, &coalitions);
    let rows: Vec<usize> = (0..world.data.rows()).collect();
    let partials: Vec<([Vec<f64>; 2], [f64; 2], [usize; 2])> = rows
        .par_chunks(64)
        .map(|chunk| -> Result<_> {
            let mut phi = [vec![0.0; n], vec![0.0; n]];
            let mut score = [0.0; 2];
            let mut count = [0usize; 2];
            for &r in chunk {
                let values = engine.table_values(r, &table)?;
                let g = (world.data.sensitive(r) == 1.0) as usize;
                for (acc, v) in phi[g].iter_mut().zip(coalition_shapley(&values, n)) {
                    *acc += v;
                }
                score[g] += values[(1 << n) - 1];
                count[g] += 1;
            }
            Ok((phi, score, count))
        })
        .collect::<Result<_>>()?;
    let mut phi = [vec![0.0; n], vec![0.0; n]];
    let mut score = [0.0; 2];
    let mut count = [0usize; 2];
    for (p, s, c) in partials {
        for g in 0..2 {
            for (a, b) in phi[g].iter_mut().zip(&p[g]) {
                *a += b;
            }
            score[g] += s[g];
            count[g] += c[g];
        }
    }
    let (c0, c1) = (count[0] as f64, count[1] as f64);
    Ok(GroundTruth {
        paths: world.labels.clone(),
        theta: (0..n).map(|p| phi[1][p] / c1 - phi[0][p] / c0).collect(),
        disparity: score[1] / c1 - score[0] / c0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub nrmse: f64,
    pub efficiency_gap: f64,
}

/// `nrmse = ||θ - Φ|| / ||θ||` and `efficiency_gap = |ΣΦ - Δ| / |Δ|`.
pub fn score(estimates: &[f64], truth: &[f64], disparity: f64) -> Result<Score> {
    if estimates.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} estimates for {} paths",
            estimates.len(),
            truth.len()
        )));
    }
    let norm = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Undefined("ground truth has zero norm".into()));
    }
    if disparity == 0.0 {
        return Err(Error::Undefined("disparity is zero".into()));
    }
    let err = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t).powi(2))
        .sum::<f64>()
        .sqrt();
    let sum: f64 = estimates.iter().sum();
    Ok(Score {
        nrmse: err / norm,
        efficiency_gap: (sum - disparity).abs() / disparity.abs(),
    })
}

/// Twin-balanced data from a known conditional system on the graph
/// `A -> X1 -> Y <- X2` (with every feature feeding the prediction).
///
/// Given `Y = y`: `X1 = c1[y] + b1[y] A + E1` and `X2 = c2[y] + g2[y] X1 + E2`.
pub struct SpouseSystem {
    pub graph: Pdag,
    pub data: NodeData,
    pub model: StructuralModel,
    pub residuals: Residuals,
    pub labels: Vec<String>,
}

pub fn spouse_system(draws: usize, seed: u64) -> Result<SpouseSystem> {
    let graph = Pdag::parse(crate::fixtures::SPOUSE)?;
    let facts = search_facts_relative_to_y(&graph, &SearchOptions::default())?;
    let partition = group_variables(&graph, &facts)?;
    let skeleton = Skeleton::new(&graph, &facts, &partition);
    let id = |n: &str| graph.node_by_name(n).expect("fixture node");
    let (a, x1, x2, y) = (id("A"), id("X1"), id("X2"), id("Y"));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signed = true;
    let mut systems = Vec::new();
    for _ in 0..2 {
        let e1 = LinearEquation {
            intercept: rng.random_range(-1.0..1.0),
            weights: BTreeMap::from([(a, weight(&mut rng, signed))]),
        };
        let e2 = LinearEquation {
            intercept: rng.random_range(-1.0..1.0),
            weights: BTreeMap::from([(x1, weight(&mut rng, signed))]),
        };
        systems.push(BTreeMap::from([(x1, e1), (x2, e2)]));
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 4];
    let mut noise = Vec::new();
    for _ in 0..draws {
        let yv = rng.random_bool(0.4) as usize;
        let n1: f64 = rng.sample(StandardNormal);
        let n2: f64 = rng.sample(StandardNormal);
        for av in [0.0, 1.0] {
            let s = &systems[yv];
            let v1 = s[&x1].intercept + s[&x1].weights[&a] * av + n1;
            let v2 = s[&x2].intercept + s[&x2].weights[&x1] * v1 + n2;
            for (c, v) in cols.iter_mut().zip([av, v1, v2, yv as f64]) {
                c.push(v);
            }
            noise.push([n1, n2]);
        }
    }
    let mut columns = vec![None; graph.node_count()];
    for (node, c) in [a, x1, x2, y].into_iter().zip(cols) {
        columns[node.0] = Some(c);
    }
    let data = NodeData::from_node_columns(&graph, columns)?;
    let order: Vec<NodeId> = skeleton.groups.iter().flatten().copied().collect();
    let residuals = Residuals {
        rows: noise.len(),
        width: order.len(),
        values: noise
            .iter()
            .flat_map(|n| {
                order
                    .iter()
                    .map(move |&v| if v == x1 { n[0] } else { n[1] })
            })
            .collect(),
    };
    let model = StructuralModel::from_linear(skeleton, &data, &systems, 0.5, Some([0.5, 0.5]))?;
    let labels = (0..partition.paths.len())
        .map(|i| partition.display_path(&graph, i))
        .collect();
    Ok(SpouseSystem {
        graph,
        data,
        model,
        residuals,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeneratorConfig {
            rows: 50,
            seed: 7,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.dataset, b.dataset);
    }

    #[test]
    fn forced_star_topology() {
        let cfg = GeneratorConfig {
            p_feature: 0.0,
            p_sensitive: 1.0,
            rows: 10,
            ..Default::default()
        };
        let inst = generate(&cfg).unwrap();
        let g = &inst.graph;
        for v in g.features() {
            let parents: Vec<NodeId> = g.parents(v).collect();
            assert_eq!(parents, vec![g.sensitive()]);
        }
    }

    #[test]
    fn rejects_invalid_probabilities() {
        let cfg = GeneratorConfig {
            p_feature: 1.5,
            ..Default::default()
        };
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn coalition_formula_on_known_game() {
        // v(S) = |S|^2 over two players: each gets 2
        let phi = coalition_shapley(&[0.0, 1.0, 1.0, 4.0], 2);
        assert_abs_diff_eq!(phi[0], 2.0);
        assert_abs_diff_eq!(phi[1], 2.0);
    }

    #[test]
    fn score_examples() {
        let t = [0.1, -0.2, 0.3];
        let s = score(&t, &t, 0.2).unwrap();
        assert_eq!(s.nrmse, 0.0);
        assert_abs_diff_eq!(s.efficiency_gap, 0.0, epsilon = 1e-12);
        let twice: Vec<f64> = t.iter().map(|v| 2.0 * v).collect();
        assert_abs_diff_eq!(score(&twice, &t, 0.2).unwrap().nrmse, 1.0, epsilon = 1e-12);
        assert!(matches!(
            score(&t, &[0.0; 3], 0.2),
            Err(Error::Undefined(_))
        ));
        assert!(matches!(score(&t, &t, 0.0), Err(Error::Undefined(_))));
    }

    #[test]
    fn twin_rows_share_noise() {
        let cfg = GeneratorConfig {
            rows: 20,
            seed: 3,
            ..Default::default()
        };
        let inst = generate(&cfg).unwrap();
        let d = inst.truth.twin_data(&inst.graph).unwrap();
        assert_eq!(d.rows(), 40);
        let original = NodeData::from_dataset(&inst.graph, &inst.dataset).unwrap();
        // the twin matching the observed A reproduces the observed row
        for r in 0..20 {
            let a = original.sensitive(r) as usize;
            for v in inst.graph.features() {
                assert_abs_diff_eq!(d.value(v, 2 * r + a), original.value(v, r), epsilon = 1e-12);
            }
        }
    }
}
