//! Conditional-independence oracles used when checking undirected edges
//! against observational data.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::graph::{d_separated, Dag, NodeId};

/// Answers "is `i` independent of `j` given `given`?".
///
/// Implementations must be symmetric in `(i, j)` and deterministic.
pub trait CiOracle: Sync {
    fn independent(&self, i: NodeId, j: NodeId, given: &BTreeSet<NodeId>) -> bool;
}

/// Ground truth from a known DAG via d-separation.
pub struct DSeparationOracle {
    dag: Dag,
}

impl DSeparationOracle {
    pub fn new(dag: Dag) -> Self {
        DSeparationOracle { dag }
    }
}

impl CiOracle for DSeparationOracle {
    fn independent(&self, i: NodeId, j: NodeId, given: &BTreeSet<NodeId>) -> bool {
        d_separated(&self.dag, i, j, given)
    }
}

impl<F> CiOracle for F
where
    F: Fn(NodeId, NodeId, &BTreeSet<NodeId>) -> bool + Sync,
{
    fn independent(&self, i: NodeId, j: NodeId, given: &BTreeSet<NodeId>) -> bool {
        self(i, j, given)
    }
}

/// Fisher-z test on the partial correlation of `x` and `y` given `z`.
/// Returns the two-sided p-value.
pub fn partial_correlation_test(x: &[f64], y: &[f64], z: &[&[f64]]) -> f64 {
    let n = x.len();
    let k = z.len();
    if n <= k + 3 {
        return 1.0;
    }
    let r = partial_correlation(x, y, z);
    let r = r.clamp(-0.999_999_999, 0.999_999_999);
    let stat = 0.5 * ((1.0 + r) / (1.0 - r)).ln() * ((n - k - 3) as f64).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * (1.0 - normal.cdf(stat.abs()))
}

/// Partial correlation from the inverse of the correlation matrix of `[x, y, z...]`.
pub fn partial_correlation(x: &[f64], y: &[f64], z: &[&[f64]]) -> f64 {
    let mut cols: Vec<&[f64]> = vec![x, y];
    cols.extend_from_slice(z);
    let m = cols.len();
    let n = x.len() as f64;
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let mut cov = DMatrix::<f64>::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let s: f64 = cols[a]
                .iter()
                .zip(cols[b])
                .map(|(u, v)| (u - means[a]) * (v - means[b]))
                .sum();
            cov[(a, b)] = s / n;
            cov[(b, a)] = s / n;
        }
    }
    if cov[(0, 0)] <= 0.0 || cov[(1, 1)] <= 0.0 {
        return 0.0;
    }
    let precision = match cov.clone().try_inverse() {
        Some(p) => p,
        None => return 0.0,
    };
    let denom = (precision[(0, 0)] * precision[(1, 1)]).sqrt();
    if denom == 0.0 || !denom.is_finite() {
        return 0.0;
    }
    -precision[(0, 1)] / denom
}

/// Likelihood-ratio (G) test of independence of two discrete variables,
/// stratified over the joint configurations of `z`. Returns the p-value.
pub fn g_test(x: &[f64], y: &[f64], z: &[&[f64]]) -> f64 {
    let key = |v: f64| v.round() as i64;
    let mut strata: BTreeMap<Vec<i64>, BTreeMap<(i64, i64), f64>> = BTreeMap::new();
    for r in 0..x.len() {
        let s: Vec<i64> = z.iter().map(|c| key(c[r])).collect();
        *strata
            .entry(s)
            .or_default()
            .entry((key(x[r]), key(y[r])))
            .or_insert(0.0) += 1.0;
    }
    let mut g = 0.0;
    let mut df = 0usize;
    for table in strata.values() {
        let mut rows: BTreeMap<i64, f64> = BTreeMap::new();
        let mut cols: BTreeMap<i64, f64> = BTreeMap::new();
        let mut total = 0.0;
        for (&(a, b), &c) in table {
            *rows.entry(a).or_insert(0.0) += c;
            *cols.entry(b).or_insert(0.0) += c;
            total += c;
        }
        for (&(a, b), &obs) in table {
            let expected = rows[&a] * cols[&b] / total;
            if obs > 0.0 {
                g += 2.0 * obs * (obs / expected).ln();
            }
        }
        df += (rows.len().saturating_sub(1)) * (cols.len().saturating_sub(1));
    }
    if df == 0 {
        return 1.0;
    }
    let chi = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    1.0 - chi.cdf(g.max(0.0))
}

/// CI tests against observed columns: G-test when every involved column is
/// discrete, partial correlation otherwise. Results are memoized.
pub struct DataCiTest {
    columns: HashMap<NodeId, (Vec<f64>, bool)>,
    alpha: f64,
    cache: Mutex<HashMap<(NodeId, NodeId, Vec<NodeId>), bool>>,
}

impl DataCiTest {
    pub const DEFAULT_ALPHA: f64 = 0.01;

    /// `columns`: `(node, values, is_discrete)`.
    pub fn new(columns: Vec<(NodeId, Vec<f64>, bool)>, alpha: f64) -> Self {
        DataCiTest {
            columns: columns.into_iter().map(|(id, v, d)| (id, (v, d))).collect(),
            alpha,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn p_value(&self, i: NodeId, j: NodeId, given: &BTreeSet<NodeId>) -> Option<f64> {
        let (x, dx) = self.columns.get(&i)?;
        let (y, dy) = self.columns.get(&j)?;
        let mut z = Vec::with_capacity(given.len());
        let mut all_discrete = *dx && *dy;
        for g in given {
            let (c, d) = self.columns.get(g)?;
            all_discrete &= *d;
            z.push(c.as_slice());
        }
        Some(if all_discrete {
            g_test(x, y, &z)
        } else {
            partial_correlation_test(x, y, &z)
        })
    }
}

impl CiOracle for DataCiTest {
    fn independent(&self, i: NodeId, j: NodeId, given: &BTreeSet<NodeId>) -> bool {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let key = (lo, hi, given.iter().copied().collect::<Vec<_>>());
        if let Some(&hit) = self.cache.lock().expect("cache lock").get(&key) {
            return hit;
        }
        // columns without data (the prediction node) are treated as dependent
        let result = self
            .p_value(lo, hi, given)
            .map(|p| p > self.alpha)
            .unwrap_or(false);
        self.cache.lock().expect("cache lock").insert(key, result);
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn chain(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut c = Vec::new();
        for _ in 0..n {
            let x: f64 = rng.sample(StandardNormal);
            let y = 0.8 * x + rng.sample::<f64, _>(StandardNormal);
            let z = 0.8 * y + rng.sample::<f64, _>(StandardNormal);
            a.push(x);
            b.push(y);
            c.push(z);
        }
        (a, b, c)
    }

    #[test]
    fn partial_correlation_detects_chain_structure() {
        let (a, b, c) = chain(5000, 3);
        assert!(partial_correlation_test(&a, &c, &[]) < 0.01);
        assert!(partial_correlation_test(&a, &c, &[&b]) > 0.01);
    }

    #[test]
    fn g_test_on_discrete_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut c = Vec::new();
        for _ in 0..5000 {
            let x = rng.random_bool(0.5) as u8 as f64;
            let y = if rng.random_bool(0.8) { x } else { 1.0 - x };
            let z = if rng.random_bool(0.8) { y } else { 1.0 - y };
            a.push(x);
            b.push(y);
            c.push(z);
        }
        assert!(g_test(&a, &c, &[]) < 0.01);
        assert!(g_test(&a, &c, &[&b]) > 0.01);
    }

    #[test]
    fn data_test_is_symmetric_and_cached() {
        let (a, b, c) = chain(2000, 5);
        let t = DataCiTest::new(
            vec![
                (NodeId(0), a, false),
                (NodeId(1), b, false),
                (NodeId(2), c, false),
            ],
            0.01,
        );
        let given: BTreeSet<NodeId> = [NodeId(1)].into();
        assert_eq!(
            t.independent(NodeId(0), NodeId(2), &given),
            t.independent(NodeId(2), NodeId(0), &given)
        );
        assert!(!t.independent(NodeId(0), NodeId(1), &BTreeSet::new()));
        // unknown column
        assert!(!t.independent(NodeId(0), NodeId(7), &BTreeSet::new()));
    }
}
