//! Worlds with known structural equations, and hand-computed reference values.

use std::collections::BTreeMap;
use std::sync::Arc;

use pathshap_core::fixtures::G1;
use pathshap_core::predictor::FnScorer;
use pathshap_core::structural::{LinearEquation, Skeleton};
use pathshap_core::synthetic::{generate, GeneratorConfig, SyntheticInstance};
use pathshap_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn custom(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Predictor {
    Predictor::new(
        Arc::new(FnScorer::new(dim, f)),
        PredictorKind::Custom,
        OutputMode::Probability,
    )
}

pub fn exact() -> PermutationPlan {
    PermutationPlan {
        exact: true,
        ..Default::default()
    }
}

// X1 = c1 + b1 A + E1, X2 = c2 + b2 A + g X1 + E2, X3 = E3, f = w0 + w1 X1 + w2 X2 + w3 X3
pub const C1: f64 = 0.3;
pub const B1: f64 = 1.7;
pub const C2: f64 = -0.4;
pub const B2: f64 = -0.9;
pub const G: f64 = 1.3;
pub const W: [f64; 4] = [0.2, 0.8, -0.5, 0.35];

pub struct G1World {
    pub graph: Pdag,
    pub data: NodeData,
    pub model: StructuralModel,
    pub residuals: Residuals,
    pub noise: Vec<[f64; 3]>,
    pub p_a: f64,
}

pub fn g1_world(rows: usize, seed: u64) -> G1World {
    let graph = Pdag::parse(G1).unwrap();
    let id = |n: &str| graph.node_by_name(n).unwrap();
    let (a, x1, x2, x3, y) = (id("A"), id("X1"), id("X2"), id("X3"), id("Y"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![Vec::new(); 5];
    let mut noise = Vec::new();
    for _ in 0..rows {
        let av = rng.random_bool(0.4) as u8 as f64;
        let e: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let v1 = C1 + B1 * av + e[0];
        let v2 = C2 + B2 * av + G * v1 + e[1];
        let yv = (v1 + e[2] > 1.0) as u8 as f64;
        for (c, v) in cols.iter_mut().zip([av, v1, v2, e[2], yv]) {
            c.push(v);
        }
        noise.push(e);
    }
    let mut columns = vec![None; graph.node_count()];
    for (node, c) in [a, x1, x2, x3, y].into_iter().zip(cols) {
        columns[node.0] = Some(c);
    }
    let data = NodeData::from_node_columns(&graph, columns).unwrap();
    let p_a = (0..rows).map(|r| data.sensitive(r)).sum::<f64>() / rows as f64;
    let facts = search_facts(&graph, &SearchOptions::default()).unwrap();
    let partition = group_variables(&graph, &facts).unwrap();
    let skeleton = Skeleton::new(&graph, &facts, &partition);
    let order: Vec<NodeId> = skeleton.groups.iter().flatten().copied().collect();
    let residuals = Residuals {
        rows,
        width: order.len(),
        values: noise
            .iter()
            .flat_map(|e| {
                order
                    .iter()
                    .map(move |&v| if v == x1 { e[0] } else { e[1] })
            })
            .collect(),
    };
    let system = BTreeMap::from([
        (
            x1,
            LinearEquation {
                intercept: C1,
                weights: BTreeMap::from([(a, B1)]),
            },
        ),
        (
            x2,
            LinearEquation {
                intercept: C2,
                weights: BTreeMap::from([(a, B2), (x1, G)]),
            },
        ),
    ]);
    let model = StructuralModel::from_linear(skeleton, &data, &[system], p_a, None).unwrap();
    G1World {
        graph,
        data,
        model,
        residuals,
        noise,
        p_a,
    }
}

/// Value of a coalition for one row by propagating the linear system by hand.
///
/// Paths: 0 = A->X1->Yhat, 1 = A->X2->Yhat, 2 = A->X1->X2->Yhat.
pub fn hand_value(w: &G1World, row: usize, t: [bool; 3]) -> f64 {
    let a = w.data.sensitive(row);
    let [e1, e2, e3] = w.noise[row];
    let x1_obs = C1 + B1 * a + e1;
    let x2_obs = C2 + B2 * a + G * x1_obs + e2;
    let mut v = 0.0;
    for (a_prime, weight) in [(0.0, 1.0 - w.p_a), (1.0, w.p_a)] {
        // an edge carries observed values only when every path through it is in T
        let a_x1 = if t[0] && t[2] { a } else { a_prime };
        let a_x2 = if t[1] { a } else { a_prime };
        let x1 = C1 + B1 * a_x1 + e1;
        let x1_into_x2 = if t[2] { x1_obs } else { x1 };
        let x2 = C2 + B2 * a_x2 + G * x1_into_x2 + e2;
        let x1_into_f = if t[0] { x1_obs } else { x1 };
        let x2_into_f = if t[1] && t[2] { x2_obs } else { x2 };
        v += weight * (W[0] + W[1] * x1_into_f + W[2] * x2_into_f + W[3] * e3);
    }
    v
}

pub fn g1_predictor(graph: &Pdag) -> Predictor {
    let inputs = graph.prediction_inputs();
    let pos = |n: &str| inputs.iter().position(|&v| graph.name(v) == n).unwrap();
    let (i1, i2, i3) = (pos("X1"), pos("X2"), pos("X3"));
    custom(inputs.len(), move |x| {
        W[0] + W[1] * x[i1] + W[2] * x[i2] + W[3] * x[i3]
    })
}

/// Small generated instances with between one and `EXACT_LIMIT` paths.
pub fn small_instances(count: usize, rows: usize) -> Vec<SyntheticInstance> {
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < count {
        let cfg = GeneratorConfig {
            features: 4,
            p_feature: 0.4,
            p_sensitive: 0.5,
            rows,
            seed,
            signed_weights: true,
            ..Default::default()
        };
        seed += 1;
        let inst = generate(&cfg).unwrap();
        let n = search_facts(&inst.graph, &Default::default())
            .unwrap()
            .len();
        if (1..=decomposition::EXACT_LIMIT).contains(&n) {
            out.push(inst);
        }
    }
    out
}
