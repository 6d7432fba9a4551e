//! Shapley values of paths for the counterfactual value function, and their
//! aggregation into disparity and utility contributions.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::NodeData;
use crate::error::{Error, Result};
use crate::facts::GroupPartition;
use crate::facts::Unit;
use crate::graph::Pdag;
use crate::predictor::Predictor;
use crate::structural::{Residuals, StructuralModel};

/// Largest path count for which all orderings are enumerated.
pub const EXACT_LIMIT: usize = 7;
/// Rows per unit of parallel work; fixed so results do not depend on thread count.
const CHUNK: usize = 64;

/// A set of path ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Coalition {
    words: Vec<u64>,
    len: usize,
}

impl Coalition {
    pub fn empty(len: usize) -> Self {
        Coalition {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn full(len: usize) -> Self {
        let mut c = Self::empty(len);
        for i in 0..len {
            c.insert(i);
        }
        c
    }

    pub fn from_ids(len: usize, ids: &[usize]) -> Result<Self> {
        let mut c = Self::empty(len);
        for &i in ids {
            if i >= len {
                return Err(Error::UnknownPath(i));
            }
            c.insert(i);
        }
        Ok(c)
    }

    pub fn universe(&self) -> usize {
        self.len
    }

    pub fn insert(&mut self, id: usize) {
        self.words[id / 64] |= 1 << (id % 64);
    }

    pub fn remove(&mut self, id: usize) {
        self.words[id / 64] &= !(1 << (id % 64));
    }

    pub fn contains(&self, id: usize) -> bool {
        id < self.len && self.words[id / 64] >> (id % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ids(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| self.contains(i)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    DemographicParity,
    /// Gap in true positive rates (rows with `Y = 1`).
    EqualizedOddsY1,
    /// Gap in false positive rates (rows with `Y = 0`).
    EqualizedOddsY0,
    AccuracyParity,
}

impl MetricKind {
    pub fn transform(self) -> Transform {
        match self {
            MetricKind::AccuracyParity => Transform::OutcomeAligned,
            _ => Transform::Identity,
        }
    }

    pub fn needs_outcome(self) -> bool {
        self != MetricKind::DemographicParity
    }

    fn includes(self, y: Option<f64>) -> bool {
        match self {
            MetricKind::EqualizedOddsY1 => y == Some(1.0),
            MetricKind::EqualizedOddsY0 => y == Some(0.0),
            _ => true,
        }
    }
}

/// Score mapping applied to predictor outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `s` when `Y = 1`, `1 - s` when `Y = 0`.
    OutcomeAligned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub orderings: usize,
    pub seed: u64,
    /// Enumerate every ordering when there are at most [`EXACT_LIMIT`] paths.
    pub exact: bool,
}

impl Default for PermutationPlan {
    fn default() -> Self {
        PermutationPlan {
            orderings: 100,
            seed: 0,
            exact: false,
        }
    }
}

impl PermutationPlan {
    /// Orderings of `n` paths and whether they are exhaustive.
    pub fn orderings_for(&self, n: usize) -> (Vec<Vec<usize>>, bool) {
        if self.exact && n <= EXACT_LIMIT {
            return (all_permutations(n), true);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let orders = (0..self.orderings.max(1))
            .map(|_| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        (orders, false)
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut out = vec![p.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..n)
            .rev()
            .find(|&j| p[j] > p[i - 1])
            .expect("successor exists");
        p.swap(i - 1, j);
        p[i..].reverse();
        out.push(p.clone());
    }
}

/// Coalitions visited by a set of orderings, shared by every row.
struct Schedule {
    coalitions: Vec<Coalition>,
    /// Per ordering, per step: `(path, index before, index after)`.
    steps: Vec<Vec<(usize, usize, usize)>>,
    exact: bool,
}

impl Schedule {
    fn new(n: usize, plan: &PermutationPlan) -> Self {
        let (orders, exact) = plan.orderings_for(n);
        let mut coalitions = vec![Coalition::empty(n)];
        let mut index: HashMap<Coalition, usize> = HashMap::from([(Coalition::empty(n), 0)]);
        let mut steps = Vec::with_capacity(orders.len());
        for order in &orders {
            let mut c = Coalition::empty(n);
            let mut before = 0;
            let mut seq = Vec::with_capacity(n);
            for &p in order {
                c.insert(p);
                let after = *index.entry(c.clone()).or_insert_with(|| {
                    coalitions.push(c.clone());
                    coalitions.len() - 1
                });
                seq.push((p, before, after));
                before = after;
            }
            steps.push(seq);
        }
        Schedule {
            coalitions,
            steps,
            exact,
        }
    }
}

/// Coalitions grouped by their distinct open-edge patterns.
pub struct CoalitionTable {
    patterns: Vec<Vec<bool>>,
    /// Pattern of each coalition.
    index: Vec<usize>,
}

impl CoalitionTable {
    pub fn new(engine: &Engine<'_>, coalitions: &[Coalition]) -> Self {
        let mut seen: HashMap<Vec<bool>, usize> = HashMap::new();
        let mut patterns = Vec::new();
        let index = coalitions
            .iter()
            .map(|c| {
                let open = engine.open_edges(c);
                *seen.entry(open.clone()).or_insert_with(|| {
                    patterns.push(open);
                    patterns.len() - 1
                })
            })
            .collect();
        CoalitionTable { patterns, index }
    }
}

/// Per-row Shapley values of the raw score.
#[derive(Clone, Debug, PartialEq)]
pub struct RowShapley {
    pub phi: Vec<f64>,
    pub v_empty: f64,
    pub v_full: f64,
    /// Marginal contributions per ordering, `[ordering][path]`.
    pub per_ordering: Vec<Vec<f64>>,
}

/// Evaluates the counterfactual value function for rows of a dataset.
pub struct Engine<'a> {
    data: &'a NodeData,
    model: &'a StructuralModel,
    residuals: &'a Residuals,
    predictor: &'a Predictor,
    labels: Vec<String>,
}

impl<'a> Engine<'a> {
    pub fn new(
        data: &'a NodeData,
        model: &'a StructuralModel,
        residuals: &'a Residuals,
        predictor: &'a Predictor,
    ) -> Result<Self> {
        if residuals.rows != data.rows() {
            return Err(Error::MissingResidual(residuals.rows.min(data.rows())));
        }
        let labels = (0..model.skeleton.paths.len())
            .map(|i| format!("path{i}"))
            .collect();
        Ok(Engine {
            data,
            model,
            residuals,
            predictor,
            labels,
        })
    }

    /// Path labels used in reports.
    pub fn with_labels(mut self, graph: &Pdag, partition: &GroupPartition) -> Self {
        self.labels = (0..partition.paths.len())
            .map(|i| partition.display_path(graph, i))
            .collect();
        self
    }

    pub fn path_count(&self) -> usize {
        self.model.skeleton.paths.len()
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn data(&self) -> &NodeData {
        self.data
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    fn open_edges(&self, coalition: &Coalition) -> Vec<bool> {
        self.model
            .skeleton
            .edges
            .iter()
            .map(|e| e.paths.iter().all(|&p| coalition.contains(p)))
            .collect()
    }

    fn check(&self, coalition: &Coalition) -> Result<()> {
        if coalition.universe() != self.path_count() {
            return Err(Error::UnknownPath(
                coalition.universe().max(self.path_count()),
            ));
        }
        Ok(())
    }

    /// Raw (untransformed) values of several coalitions for one row, scored in one batch.
    pub fn values(&self, row: usize, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        self.values_with_open(
            row,
            &coalitions
                .iter()
                .map(|c| self.open_edges(c))
                .collect::<Vec<_>>(),
        )
    }

    fn values_with_open(&self, row: usize, open: &[Vec<bool>]) -> Result<Vec<f64>> {
        let ctx = self.model.row_context(self.data, self.residuals, row)?;
        let w1 = self.model.a_weight(self.data, row);
        let mut flat = Vec::with_capacity(open.len() * 2 * self.predictor.dim());
        let mut buf = Vec::new();
        for o in open {
            for a in [0.0, 1.0] {
                ctx.counterfactual_input(a, o, &mut buf);
                flat.extend_from_slice(&buf);
            }
        }
        let s = self.predictor.predict_batch(&flat)?;
        Ok(s.chunks(2)
            .map(|p| {
                if p[0] == p[1] {
                    p[0]
                } else {
                    (1.0 - w1) * p[0] + w1 * p[1]
                }
            })
            .collect())
    }

    /// `v(T)` for one row under a score transform.
    pub fn value(&self, row: usize, coalition: &Coalition, transform: Transform) -> Result<f64> {
        self.check(coalition)?;
        let v = self.values(row, std::slice::from_ref(coalition))?[0];
        Ok(self.transformed(row, v, transform))
    }

    fn transformed(&self, row: usize, v: f64, transform: Transform) -> f64 {
        match (transform, self.data.outcome(row)) {
            (Transform::OutcomeAligned, Some(0.0)) => 1.0 - v,
            _ => v,
        }
    }

    /// Observed score `f(x)` for one row.
    pub fn observed_score(&self, row: usize) -> Result<f64> {
        let ctx = self.model.row_context(self.data, self.residuals, row)?;
        let mut x = Vec::new();
        ctx.observed_input(&mut x);
        self.predictor.predict(&x)
    }

    /// Raw values of every coalition of `table` for one row.
    pub fn table_values(&self, row: usize, table: &CoalitionTable) -> Result<Vec<f64>> {
        let distinct = self.values_with_open(row, &table.patterns)?;
        Ok(table.index.iter().map(|&i| distinct[i]).collect())
    }

    fn row_shapley_scheduled(
        &self,
        row: usize,
        schedule: &Schedule,
        table: &CoalitionTable,
    ) -> Result<RowShapley> {
        let n = self.path_count();
        let values = self.table_values(row, table)?;
        let mut phi = vec![0.0; n];
        let mut per_ordering = Vec::with_capacity(schedule.steps.len());
        for seq in &schedule.steps {
            let mut m = vec![0.0; n];
            for &(p, before, after) in seq {
                m[p] = values[after] - values[before];
                phi[p] += m[p];
            }
            per_ordering.push(m);
        }
        let r = schedule.steps.len() as f64;
        for v in &mut phi {
            *v /= r;
        }
        let full = schedule
            .steps
            .first()
            .and_then(|s| s.last())
            .map(|&(_, _, after)| after)
            .unwrap_or(0);
        Ok(RowShapley {
            phi,
            v_empty: values[0],
            v_full: values[full],
            per_ordering,
        })
    }

    /// Shapley values of every path for one row.
    pub fn path_shapley(&self, row: usize, plan: &PermutationPlan) -> Result<RowShapley> {
        let schedule = Schedule::new(self.path_count(), plan);
        let table = CoalitionTable::new(self, &schedule.coalitions);
        self.row_shapley_scheduled(row, &schedule, &table)
    }
}

/// Contribution of one path to a disparity metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathContribution {
    pub id: usize,
    pub path: String,
    /// Contribution to the disparity.
    pub phi: f64,
    pub phi_se: f64,
    /// Contribution to the expected outcome-aligned score.
    pub psi: Option<f64>,
    pub psi_se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContributionReport {
    pub metric: MetricKind,
    pub paths: Vec<PathContribution>,
    /// Group gap in the (transformed) score over the metric's rows.
    pub disparity: f64,
    pub sum_phi: f64,
    /// `disparity - sum_phi`: the group gap left in the empty-coalition value.
    pub efficiency_gap: f64,
    /// `|efficiency_gap| / |disparity|`; absent when the disparity is zero.
    pub normalized_gap: Option<f64>,
    /// Mean outcome-aligned score over the metric's rows.
    pub utility: Option<f64>,
    /// Mean outcome-aligned empty-coalition value.
    pub utility_baseline: Option<f64>,
    pub rows: usize,
    pub group_sizes: [usize; 2],
    pub orderings: usize,
    pub exact: bool,
    pub warnings: Vec<String>,
    /// Per-row raw-score Shapley values `(row, phi)` for the metric's rows.
    #[serde(skip)]
    pub row_phi: Vec<(usize, Vec<f64>)>,
}

impl ContributionReport {
    pub fn phi(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.phi).collect()
    }

    pub fn psi(&self) -> Option<Vec<f64>> {
        self.paths.iter().map(|p| p.psi).collect()
    }
}

#[derive(Clone)]
struct Accumulator {
    phi: [Vec<f64>; 2],
    per_ordering: [Vec<Vec<f64>>; 2],
    psi: Vec<f64>,
    psi_per_ordering: Vec<Vec<f64>>,
    v_empty: [f64; 2],
    v_full: [f64; 2],
    psi_empty: f64,
    psi_full: f64,
    counts: [usize; 2],
    rows: Vec<(usize, Vec<f64>)>,
}

impl Accumulator {
    fn new(n: usize, r: usize) -> Self {
        Accumulator {
            phi: [vec![0.0; n], vec![0.0; n]],
            per_ordering: [vec![vec![0.0; n]; r], vec![vec![0.0; n]; r]],
            psi: vec![0.0; n],
            psi_per_ordering: vec![vec![0.0; n]; r],
            v_empty: [0.0; 2],
            v_full: [0.0; 2],
            psi_empty: 0.0,
            psi_full: 0.0,
            counts: [0; 2],
            rows: Vec::new(),
        }
    }

    fn merge(&mut self, other: Accumulator) {
        for g in 0..2 {
            add(&mut self.phi[g], &other.phi[g]);
            for (a, b) in self.per_ordering[g].iter_mut().zip(&other.per_ordering[g]) {
                add(a, b);
            }
            self.v_empty[g] += other.v_empty[g];
            self.v_full[g] += other.v_full[g];
            self.counts[g] += other.counts[g];
        }
        add(&mut self.psi, &other.psi);
        for (a, b) in self
            .psi_per_ordering
            .iter_mut()
            .zip(&other.psi_per_ordering)
        {
            add(a, b);
        }
        self.psi_empty += other.psi_empty;
        self.psi_full += other.psi_full;
        self.rows.extend(other.rows);
    }
}

fn add(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

fn standard_error(samples: impl Iterator<Item = f64>, exact: bool) -> f64 {
    if exact {
        return 0.0;
    }
    let v: Vec<f64> = samples.collect();
    let r = v.len() as f64;
    if r < 2.0 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / r;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (var / r).sqrt()
}

/// Path contributions to a group disparity metric, with outcome-aligned
/// utility contributions when the outcome is observed.
pub fn disparity_contributions(
    engine: &Engine<'_>,
    metric: MetricKind,
    plan: &PermutationPlan,
) -> Result<ContributionReport> {
    let data = engine.data;
    if metric.needs_outcome() && !data.has_outcome() {
        return Err(Error::MissingOutcome(format!(
            "metric {metric:?} needs an outcome column"
        )));
    }
    let n = engine.path_count();
    let schedule = Schedule::new(n, plan);
    let table = CoalitionTable::new(engine, &schedule.coalitions);
    let r = schedule.steps.len();
    let rows: Vec<usize> = (0..data.rows())
        .filter(|&i| metric.includes(data.outcome(i)))
        .collect();
    let transform = metric.transform();
    // utility is defined over every row, so stratified metrics leave it out
    let with_outcome = data.has_outcome() && metric.includes(None);

    let partials: Vec<Accumulator> = rows
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<Accumulator> {
            let mut acc = Accumulator::new(n, r);
            for &row in chunk {
                let rs = engine.row_shapley_scheduled(row, &schedule, &table)?;
                let g = (data.sensitive(row) == 1.0) as usize;
                let y = data.outcome(row);
                // sign of a raw-score difference under the metric transform
                let sign = |t: Transform| match (t, y) {
                    (Transform::OutcomeAligned, Some(0.0)) => -1.0,
                    _ => 1.0,
                };
                let s = sign(transform);
                acc.counts[g] += 1;
                for p in 0..n {
                    acc.phi[g][p] += s * rs.phi[p];
                }
                for (k, m) in rs.per_ordering.iter().enumerate() {
                    for p in 0..n {
                        acc.per_ordering[g][k][p] += s * m[p];
                    }
                }
                acc.v_empty[g] += engine.transformed(row, rs.v_empty, transform);
                acc.v_full[g] += engine.transformed(row, rs.v_full, transform);
                if with_outcome {
                    let u = sign(Transform::OutcomeAligned);
                    for p in 0..n {
                        acc.psi[p] += u * rs.phi[p];
                    }
                    for (k, m) in rs.per_ordering.iter().enumerate() {
                        for p in 0..n {
                            acc.psi_per_ordering[k][p] += u * m[p];
                        }
                    }
                    acc.psi_empty += engine.transformed(row, rs.v_empty, Transform::OutcomeAligned);
                    acc.psi_full += engine.transformed(row, rs.v_full, Transform::OutcomeAligned);
                }
                acc.rows.push((row, rs.phi));
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Accumulator::new(n, r);
    for p in partials {
        total.merge(p);
    }

    let [n0, n1] = total.counts;
    if n0 == 0 || n1 == 0 {
        return Err(Error::Data(format!(
            "metric {metric:?} has an empty sensitive group among its rows ({n0} with A=0, {n1} with A=1)"
        )));
    }
    let (c0, c1) = (n0 as f64, n1 as f64);
    let m = (n0 + n1) as f64;
    let disparity = total.v_full[1] / c1 - total.v_full[0] / c0;
    let per_ordering_gap =
        |k: usize, p: usize| total.per_ordering[1][k][p] / c1 - total.per_ordering[0][k][p] / c0;
    let mut paths = Vec::with_capacity(n);
    for p in 0..n {
        let phi = total.phi[1][p] / c1 - total.phi[0][p] / c0;
        let phi_se = standard_error((0..r).map(|k| per_ordering_gap(k, p)), schedule.exact);
        let (psi, psi_se) = if with_outcome {
            (
                Some(total.psi[p] / m),
                Some(standard_error(
                    (0..r).map(|k| total.psi_per_ordering[k][p] / m),
                    schedule.exact,
                )),
            )
        } else {
            (None, None)
        };
        paths.push(PathContribution {
            id: p,
            path: engine.labels[p].clone(),
            phi,
            phi_se,
            psi,
            psi_se,
        });
    }
    let sum_phi: f64 = paths.iter().map(|p| p.phi).sum();
    let efficiency_gap = disparity - sum_phi;
    let mut warnings = Vec::new();
    if plan.exact && !schedule.exact {
        warnings.push(format!(
            "{n} paths exceed the exhaustive limit of {EXACT_LIMIT}; sampled {r} orderings"
        ));
    }
    Ok(ContributionReport {
        metric,
        paths,
        disparity,
        sum_phi,
        efficiency_gap,
        normalized_gap: (disparity != 0.0).then(|| efficiency_gap.abs() / disparity.abs()),
        utility: with_outcome.then(|| total.psi_full / m),
        utility_baseline: with_outcome.then(|| total.psi_empty / m),
        rows: n0 + n1,
        group_sizes: [n0, n1],
        orderings: r,
        exact: schedule.exact,
        warnings,
        row_phi: total.rows,
    })
}

/// Outcome-aligned utility contributions `Ψ` over all rows.
pub fn utility_contributions(engine: &Engine<'_>, plan: &PermutationPlan) -> Result<Vec<f64>> {
    if !engine.data.has_outcome() {
        return Err(Error::MissingOutcome(
            "utility needs an outcome column".into(),
        ));
    }
    let report = disparity_contributions(engine, MetricKind::DemographicParity, plan)?;
    Ok(report.psi().expect("outcome present"))
}

/// Contributions to the true-positive-rate gap and the false-positive-rate gap.
/// Use a model fitted with conditional links for the stratum-specific expectation.
pub fn equalized_odds_contributions(
    engine: &Engine<'_>,
    plan: &PermutationPlan,
) -> Result<(ContributionReport, ContributionReport)> {
    Ok((
        disparity_contributions(engine, MetricKind::EqualizedOddsY1, plan)?,
        disparity_contributions(engine, MetricKind::EqualizedOddsY0, plan)?,
    ))
}

/// Summed contributions of the paths whose last step before the prediction is a given node group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureContribution {
    pub feature: String,
    pub phi: f64,
    pub psi: Option<f64>,
}

pub fn aggregate_to_features(
    report: &ContributionReport,
    graph: &Pdag,
    partition: &GroupPartition,
) -> Vec<FeatureContribution> {
    let mut order: Vec<Unit> = Vec::new();
    let mut sums: HashMap<Unit, (f64, Option<f64>)> = HashMap::new();
    for pc in &report.paths {
        let path = partition.effective_path(pc.id);
        let terminal = path[path.len().saturating_sub(2)];
        let entry = sums.entry(terminal).or_insert_with(|| {
            order.push(terminal);
            (0.0, pc.psi.map(|_| 0.0))
        });
        entry.0 += pc.phi;
        if let (Some(s), Some(p)) = (entry.1.as_mut(), pc.psi) {
            *s += p;
        }
    }
    order.sort();
    order
        .into_iter()
        .map(|u| FeatureContribution {
            feature: partition.label(graph, u),
            phi: sums[&u].0,
            psi: sums[&u].1,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coalition_bitset_operations() {
        let mut c = Coalition::empty(70);
        c.insert(3);
        c.insert(65);
        assert!(c.contains(65) && c.contains(3) && !c.contains(4));
        assert_eq!(c.count(), 2);
        c.remove(3);
        assert_eq!(c.ids(), vec![65]);
        assert_eq!(Coalition::full(70).count(), 70);
        assert!(matches!(
            Coalition::from_ids(3, &[5]),
            Err(Error::UnknownPath(5))
        ));
    }

    #[test]
    fn permutations_are_complete_and_distinct() {
        let p = all_permutations(4);
        assert_eq!(p.len(), 24);
        let set: std::collections::HashSet<_> = p.iter().collect();
        assert_eq!(set.len(), 24);
        assert_eq!(all_permutations(0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn sampled_orderings_depend_only_on_seed() {
        let plan = PermutationPlan {
            orderings: 5,
            seed: 11,
            exact: false,
        };
        assert_eq!(plan.orderings_for(6), plan.orderings_for(6));
        let exact = PermutationPlan {
            exact: true,
            ..plan.clone()
        };
        assert!(exact.orderings_for(3).1);
        assert!(!exact.orderings_for(EXACT_LIMIT + 1).1);
    }

    #[test]
    fn schedule_shares_prefix_coalitions() {
        let s = Schedule::new(
            3,
            &PermutationPlan {
                exact: true,
                ..Default::default()
            },
        );
        assert_eq!(s.coalitions.len(), 8);
        assert_eq!(s.steps.len(), 6);
    }
}
