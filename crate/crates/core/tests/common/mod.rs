//! Random graphs and brute-force reference implementations shared by test targets.
#![allow(dead_code)]

pub mod worlds;

use pathshap_core::{Edge, NodeId, NodeKind, Orientation, Pdag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random PDAG over `A`, up to `max_features` features, optionally `Y`, and `Yhat`.
///
/// Edges follow a random topological order with `A` first, then a share of them
/// lose their direction.
pub fn random_pdag(seed: u64, max_features: usize, with_outcome: bool) -> Pdag {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=max_features);
    let mut kinds = vec![("A".to_string(), NodeKind::Sensitive)];
    kinds.extend((1..=k).map(|i| (format!("X{i}"), NodeKind::Feature)));
    if with_outcome {
        kinds.push(("Y".to_string(), NodeKind::Outcome));
    }
    kinds.push(("Yhat".to_string(), NodeKind::Prediction));

    let mut order: Vec<usize> = (1..=k).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    order.insert(0, 0);
    let p_edge = rng.random_range(0.3..0.7);
    let p_undirected = rng.random_range(0.0..0.6);
    let mut edges = Vec::new();
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            if rng.random_bool(p_edge) {
                let (u, v) = (NodeId(order[i]), NodeId(order[j]));
                edges.push(if rng.random_bool(p_undirected) {
                    Edge::undirected(u, v)
                } else {
                    Edge::directed(u, v)
                });
            }
        }
    }
    if with_outcome {
        for x in 1..=k {
            if rng.random_bool(0.5) {
                edges.push(Edge::directed(NodeId(x), NodeId(k + 1)));
            }
        }
    }
    Pdag::new(kinds, edges).expect("acyclic by construction")
}

/// Directed edges `(tail, head)` for one full orientation; `bits` picks the
/// direction of each undirected edge in order.
fn orient(graph: &Pdag, bits: u64) -> Vec<(usize, usize)> {
    let mut k = 0;
    graph
        .edges()
        .iter()
        .map(|e| {
            let (a, b) = (e.a.0, e.b.0);
            match e.orientation {
                Orientation::AtoB => (a, b),
                Orientation::BtoA => (b, a),
                Orientation::Undirected => {
                    let flip = bits >> k & 1 == 1;
                    k += 1;
                    if flip {
                        (b, a)
                    } else {
                        (a, b)
                    }
                }
            }
        })
        .collect()
}

fn acyclic(n: usize, arcs: &[(usize, usize)]) -> bool {
    let mut indegree = vec![0; n];
    for &(_, h) in arcs {
        indegree[h] += 1;
    }
    let mut ready: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = ready.pop() {
        seen += 1;
        for &(t, h) in arcs {
            if t == v {
                indegree[h] -= 1;
                if indegree[h] == 0 {
                    ready.push(h);
                }
            }
        }
    }
    seen == n
}

/// Whether `nodes` is active under the arcs: every collider must be the outcome
/// when conditioning on it, and no collider is allowed otherwise; a conditioned
/// outcome blocks as a non-collider.
fn active(nodes: &[usize], arcs: &[(usize, usize)], outcome: Option<usize>) -> bool {
    let points_to = |u: usize, v: usize| arcs.contains(&(u, v));
    for w in nodes.windows(3) {
        let collider = points_to(w[0], w[1]) && points_to(w[2], w[1]);
        let conditioned = outcome == Some(w[1]);
        if collider != conditioned {
            return false;
        }
    }
    true
}

/// Every simple path from `A` to `Yhat` in the skeleton.
fn simple_paths(graph: &Pdag) -> Vec<Vec<usize>> {
    let n = graph.node_count();
    let mut adj = vec![Vec::new(); n];
    for e in graph.edges() {
        adj[e.a.0].push(e.b.0);
        adj[e.b.0].push(e.a.0);
    }
    let (start, end) = (graph.sensitive().0, graph.prediction().0);
    let mut out = Vec::new();
    let mut stack = vec![vec![start]];
    while let Some(path) = stack.pop() {
        let last = *path.last().expect("non-empty");
        if last == end {
            out.push(path);
            continue;
        }
        for &next in &adj[last] {
            if !path.contains(&next) {
                let mut p = path.clone();
                p.push(next);
                stack.push(p);
            }
        }
    }
    out
}

/// Potential active paths found by testing the definition on every path against
/// every full orientation of the graph's undirected edges.
pub fn brute_force_facts(graph: &Pdag, relative_to_outcome: bool) -> Vec<Vec<usize>> {
    let n = graph.node_count();
    let undirected = graph
        .edges()
        .iter()
        .filter(|e| e.orientation == Orientation::Undirected)
        .count();
    let orientations: Vec<Vec<(usize, usize)>> = (0..1u64 << undirected)
        .map(|bits| orient(graph, bits))
        .collect();
    let acyclic_flags: Vec<bool> = orientations.iter().map(|o| acyclic(n, o)).collect();
    let outcome = if relative_to_outcome {
        graph.outcome().map(|y| y.0)
    } else {
        None
    };
    let is_undirected = |u: usize, v: usize| {
        graph.edges().iter().any(|e| {
            e.orientation == Orientation::Undirected
                && e.key() == (NodeId(u.min(v)), NodeId(u.max(v)))
        })
    };

    let mut out: Vec<Vec<usize>> = simple_paths(graph)
        .into_iter()
        .filter(|p| {
            let on_path_undirected = p.windows(2).any(|w| is_undirected(w[0], w[1]));
            let mut every = true;
            let mut some_dag = false;
            for (arcs, &dag) in orientations.iter().zip(&acyclic_flags) {
                let ok = active(p, arcs, outcome);
                every &= ok;
                some_dag |= ok && dag;
            }
            some_dag || (on_path_undirected && every)
        })
        .collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

pub fn ids(paths: &[pathshap_core::Path]) -> Vec<Vec<usize>> {
    paths
        .iter()
        .map(|p| p.nodes().iter().map(|v| v.0).collect())
        .collect()
}
