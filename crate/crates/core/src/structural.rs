//! Group-level structural model: one link per involved node, fitted on the
//! node's informative predecessors and the uninvolved features, plus the
//! exogenous residuals that reproduce each observed row.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{ColumnType, NodeData};
use crate::error::{Error, Result};
use crate::facts::{FactMode, FactSet, GroupPartition, Unit};
use crate::graph::{NodeId, Pdag};
use crate::regress::{fit_softmax, ols, softmax_probs};

/// Ridge on non-intercept coefficients of discrete links.
const LOGISTIC_RIDGE: f64 = 1e-6;
/// Smallest class probability used when building class CDFs.
const PROB_FLOOR: f64 = 1e-12;
/// Default minimum stratum size for conditional links.
pub const MIN_STRATUM: usize = 30;

/// An edge between consecutive units on some grouped path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InfoEdge {
    pub from: Unit,
    pub to: Unit,
    /// Ids of the grouped paths that traverse this edge.
    pub paths: Vec<usize>,
}

/// Wiring of the structural model, derived from the grouped paths.
#[derive(Clone, Debug)]
pub struct Skeleton {
    pub mode: FactMode,
    pub groups: Vec<Vec<NodeId>>,
    /// Evaluation order of groups.
    pub topo: Vec<usize>,
    /// Predecessor units of each group (sensitive attribute and earlier groups).
    pub inputs: Vec<Vec<Unit>>,
    /// Features on no path; always fed observed values.
    pub uninvolved: Vec<NodeId>,
    /// Grouped paths without the conditioned outcome.
    pub paths: Vec<Vec<Unit>>,
    pub edges: Vec<InfoEdge>,
    pub prediction_inputs: Vec<NodeId>,
    /// For each group, the info edge carrying each input, if any.
    input_edges: Vec<Vec<Option<usize>>>,
    /// For each prediction input, the info edge carrying it, if any.
    prediction_edges: Vec<Option<usize>>,
    /// Group of each prediction input, `None` for the sensitive attribute or uninvolved nodes.
    prediction_groups: Vec<Option<usize>>,
    /// Offset of each group's first member in a residual row.
    member_offsets: Vec<usize>,
}

impl Skeleton {
    pub fn new(graph: &Pdag, facts: &FactSet, partition: &GroupPartition) -> Self {
        let groups = partition.groups.clone();
        let topo = partition.topological_groups();
        let inputs: Vec<Vec<Unit>> = (0..groups.len())
            .map(|g| {
                partition
                    .order
                    .predecessors
                    .get(&Unit::Group(g))
                    .map(|s| s.iter().copied().collect())
                    .unwrap_or_default()
            })
            .collect();
        let paths: Vec<Vec<Unit>> = (0..partition.paths.len())
            .map(|id| partition.effective_path(id))
            .collect();
        let mut edge_map: BTreeMap<(Unit, Unit), Vec<usize>> = BTreeMap::new();
        for (id, p) in paths.iter().enumerate() {
            for w in p.windows(2) {
                let ids = edge_map.entry((w[0], w[1])).or_default();
                if ids.last() != Some(&id) {
                    ids.push(id);
                }
            }
        }
        let edges: Vec<InfoEdge> = edge_map
            .into_iter()
            .map(|((from, to), paths)| InfoEdge { from, to, paths })
            .collect();
        let find = |from: Unit, to: Unit| edges.iter().position(|e| e.from == from && e.to == to);
        let input_edges = (0..groups.len())
            .map(|g| inputs[g].iter().map(|&u| find(u, Unit::Group(g))).collect())
            .collect();
        let prediction_inputs = graph.prediction_inputs();
        let group_of = |v: NodeId| groups.iter().position(|m| m.contains(&v));
        let mut prediction_edges = Vec::new();
        let mut prediction_groups = Vec::new();
        for &v in &prediction_inputs {
            let (unit, group) = if v == graph.sensitive() {
                (Some(Unit::Sensitive), None)
            } else if let Some(g) = group_of(v) {
                (Some(Unit::Group(g)), Some(g))
            } else {
                (None, None)
            };
            prediction_edges.push(unit.and_then(|u| find(u, Unit::Prediction)));
            prediction_groups.push(group);
        }
        let mut member_offsets = Vec::with_capacity(groups.len());
        let mut offset = 0;
        for g in &groups {
            member_offsets.push(offset);
            offset += g.len();
        }
        Skeleton {
            mode: facts.mode,
            groups,
            topo,
            inputs,
            uninvolved: facts.uninvolved.iter().copied().collect(),
            paths,
            edges,
            prediction_inputs,
            input_edges,
            prediction_edges,
            prediction_groups,
            member_offsets,
        }
    }

    pub fn member_count(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn member_offset(&self, group: usize) -> usize {
        self.member_offsets[group]
    }

    /// Edge index for every grouped path; `edges_of_path[p]` lists the edges it traverses.
    pub fn path_edges(&self, path: usize) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&e| self.edges[e].paths.contains(&path))
            .collect()
    }

    fn group_label(&self, graph: &Pdag, g: usize) -> String {
        self.groups[g]
            .iter()
            .map(|&v| graph.name(v))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Link for one node: a regression of the node on its group's design row.
#[derive(Clone, Debug)]
pub enum Link {
    /// Intercept first; residuals are additive.
    Linear { coef: Vec<f64> },
    /// Softmax with class 0 as reference; residuals are latent CDF quantiles.
    Discrete { coef: DMatrix<f64> },
}

impl Link {
    fn linear_part(coef: &[f64], design: &[f64]) -> f64 {
        coef.iter().zip(design).map(|(c, x)| c * x).sum()
    }

    /// Cumulative class probabilities, floored and renormalized.
    fn cdf(coef: &DMatrix<f64>, design: &[f64]) -> Vec<f64> {
        let mut p = softmax_probs(coef, design);
        for v in &mut p {
            *v = v.max(PROB_FLOOR);
        }
        let s: f64 = p.iter().sum();
        let mut acc = 0.0;
        p.iter()
            .map(|v| {
                acc += v / s;
                acc
            })
            .collect()
    }

    /// Value of the node for a design row and residual.
    pub fn evaluate(&self, design: &[f64], residual: f64) -> f64 {
        match self {
            Link::Linear { coef } => Self::linear_part(coef, design) + residual,
            Link::Discrete { coef } => {
                let f = Self::cdf(coef, design);
                f.iter().position(|&c| residual < c).unwrap_or(f.len() - 1) as f64
            }
        }
    }

    /// Residual reproducing `value`; discrete links draw a quantile inside the class interval.
    fn residual(&self, design: &[f64], value: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Link::Linear { coef } => value - Self::linear_part(coef, design),
            Link::Discrete { coef } => {
                let f = Self::cdf(coef, design);
                let c = value as usize;
                let lo = if c == 0 { 0.0 } else { f[c - 1] };
                let hi = f[c];
                let u = lo + (0.01 + 0.98 * rng.random::<f64>()) * (hi - lo);
                if self.evaluate(design, u) == value {
                    u
                } else {
                    0.5 * (lo + hi)
                }
            }
        }
    }
}

/// Links for every member of every group, in skeleton order.
#[derive(Clone, Debug)]
pub struct LinkSet {
    pub groups: Vec<Vec<Link>>,
}

/// Exogenous noise per row and group member.
#[derive(Clone, Debug, PartialEq)]
pub struct Residuals {
    pub rows: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Residuals {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.width..(r + 1) * self.width]
    }
}

#[derive(Clone, Debug)]
pub enum Links {
    Marginal(LinkSet),
    /// Separate links for the `Y = 0` and `Y = 1` strata.
    Conditional([LinkSet; 2]),
}

/// Coefficients of a known linear equation, keyed by input node.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearEquation {
    pub intercept: f64,
    pub weights: BTreeMap<NodeId, f64>,
}

#[derive(Clone, Debug)]
pub struct StructuralModel {
    pub skeleton: Skeleton,
    pub links: Links,
    /// `P(A = 1)`.
    pub p_a: f64,
    /// `P(A = 1 | Y = y)` for `y = 0, 1`, when the outcome is observed.
    pub p_a_given_y: Option<[f64; 2]>,
    pub seed: u64,
}

/// Encoded observed values of a row, grouped by unit.
struct Observed {
    a: f64,
    groups: Vec<Vec<f64>>,
    uninvolved: Vec<f64>,
}

fn observe(skeleton: &Skeleton, data: &NodeData, row: usize) -> Observed {
    let groups = skeleton
        .groups
        .iter()
        .map(|members| {
            let mut enc = Vec::new();
            for &v in members {
                data.encode_value(v, data.value(v, row), &mut enc);
            }
            enc
        })
        .collect();
    let mut uninvolved = Vec::new();
    for &v in &skeleton.uninvolved {
        data.encode_value(v, data.value(v, row), &mut uninvolved);
    }
    Observed {
        a: data.sensitive(row),
        groups,
        uninvolved,
    }
}

fn design_row(
    skeleton: &Skeleton,
    g: usize,
    a: f64,
    enc: &[Vec<f64>],
    uninvolved: &[f64],
    out: &mut Vec<f64>,
) {
    out.clear();
    out.push(1.0);
    for &u in &skeleton.inputs[g] {
        match u {
            Unit::Sensitive => out.push(a),
            Unit::Group(h) => out.extend_from_slice(&enc[h]),
            _ => {}
        }
    }
    out.extend_from_slice(uninvolved);
}

fn fit_links(
    skeleton: &Skeleton,
    graph: &Pdag,
    data: &NodeData,
    rows: &[usize],
) -> Result<LinkSet> {
    let observed: Vec<Observed> = rows.iter().map(|&r| observe(skeleton, data, r)).collect();
    let mut groups = Vec::with_capacity(skeleton.groups.len());
    let mut design = Vec::new();
    for (g, members) in skeleton.groups.iter().enumerate() {
        let mut flat = Vec::new();
        let mut width = 0;
        for o in &observed {
            design_row(skeleton, g, o.a, &o.groups, &o.uninvolved, &mut design);
            width = design.len();
            flat.extend_from_slice(&design);
        }
        let x = DMatrix::from_row_slice(rows.len(), width, &flat);
        let singular = || Error::SingularDesign {
            group: skeleton.group_label(graph, g),
        };
        let mut links = Vec::with_capacity(members.len());
        for &v in members {
            let target: Vec<f64> = rows.iter().map(|&r| data.value(v, r)).collect();
            let link = match data.kind(v) {
                Some(ColumnType::Continuous) => {
                    let coef = ols(&x, &DVector::from_vec(target)).ok_or_else(singular)?;
                    Link::Linear {
                        coef: coef.iter().copied().collect(),
                    }
                }
                Some(_) => {
                    let classes = data.levels(v).max(2);
                    let y: Vec<usize> = target.iter().map(|&t| t as usize).collect();
                    let coef = fit_softmax(&x, &y, classes, LOGISTIC_RIDGE).ok_or_else(singular)?;
                    Link::Discrete { coef }
                }
                None => {
                    return Err(Error::Data(format!(
                        "no data for involved node `{}`",
                        graph.name(v)
                    )))
                }
            };
            links.push(link);
        }
        groups.push(links);
    }
    Ok(LinkSet { groups })
}

fn share_of_ones(values: impl Iterator<Item = f64>) -> f64 {
    let (mut ones, mut n) = (0.0, 0.0);
    for v in values {
        ones += v;
        n += 1.0;
    }
    if n == 0.0 {
        0.0
    } else {
        ones / n
    }
}

fn stratum_weights(data: &NodeData) -> Option<[f64; 2]> {
    if !data.has_outcome() {
        return None;
    }
    let mut w = [0.0; 2];
    for (y, slot) in w.iter_mut().enumerate() {
        *slot = share_of_ones(
            (0..data.rows())
                .filter(|&r| data.outcome(r) == Some(y as f64))
                .map(|r| data.sensitive(r)),
        );
    }
    Some(w)
}

/// Fit one link set on all rows and extract residuals.
pub fn fit_structural_model(
    graph: &Pdag,
    data: &NodeData,
    facts: &FactSet,
    partition: &GroupPartition,
    seed: u64,
) -> Result<(StructuralModel, Residuals)> {
    let skeleton = Skeleton::new(graph, facts, partition);
    let rows: Vec<usize> = (0..data.rows()).collect();
    let links = fit_links(&skeleton, graph, data, &rows)?;
    let model = StructuralModel {
        skeleton,
        links: Links::Marginal(links),
        p_a: share_of_ones((0..data.rows()).map(|r| data.sensitive(r))),
        p_a_given_y: stratum_weights(data),
        seed,
    };
    let residuals = model.residuals(data)?;
    Ok((model, residuals))
}

/// Fit separate link sets within the `Y = 0` and `Y = 1` strata.
pub fn fit_conditional_models(
    graph: &Pdag,
    data: &NodeData,
    facts: &FactSet,
    partition: &GroupPartition,
    seed: u64,
    min_stratum: usize,
) -> Result<(StructuralModel, Residuals)> {
    if !data.has_outcome() {
        return Err(Error::MissingOutcome(
            "conditional links need an observed outcome column".into(),
        ));
    }
    let skeleton = Skeleton::new(graph, facts, partition);
    let mut sets = Vec::with_capacity(2);
    for y in 0..2u8 {
        let rows: Vec<usize> = (0..data.rows())
            .filter(|&r| data.outcome(r) == Some(y as f64))
            .collect();
        if rows.len() < min_stratum {
            return Err(Error::StratumTooSmall {
                y,
                size: rows.len(),
                min: min_stratum,
            });
        }
        sets.push(fit_links(&skeleton, graph, data, &rows)?);
    }
    let y1 = sets.pop().expect("two strata");
    let y0 = sets.pop().expect("two strata");
    let model = StructuralModel {
        skeleton,
        links: Links::Conditional([y0, y1]),
        p_a: share_of_ones((0..data.rows()).map(|r| data.sensitive(r))),
        p_a_given_y: stratum_weights(data),
        seed,
    };
    let residuals = model.residuals(data)?;
    Ok((model, residuals))
}

/// Per-row view used to evaluate counterfactual predictor inputs.
pub struct RowContext<'a> {
    model: &'a StructuralModel,
    data: &'a NodeData,
    links: &'a LinkSet,
    residuals: &'a [f64],
    observed: Observed,
    /// Start of each group's encoding in the concatenated group encodings.
    offsets: Vec<usize>,
    /// Range of each prediction input inside its group's encoding.
    prediction_slots: Vec<Option<(usize, usize)>>,
    row: usize,
}

impl StructuralModel {
    /// Build a model from known linear equations; every equation input must be
    /// a design input of its node's group.
    pub fn from_linear(
        skeleton: Skeleton,
        data: &NodeData,
        equations: &[BTreeMap<NodeId, LinearEquation>],
        p_a: f64,
        p_a_given_y: Option<[f64; 2]>,
    ) -> Result<Self> {
        let mut sets = Vec::with_capacity(equations.len());
        for system in equations {
            let mut groups = Vec::with_capacity(skeleton.groups.len());
            for (g, members) in skeleton.groups.iter().enumerate() {
                let mut layout = Vec::new();
                for &u in &skeleton.inputs[g] {
                    match u {
                        Unit::Sensitive => layout.push(data.sensitive_node()),
                        Unit::Group(h) => layout.extend(skeleton.groups[h].iter().copied()),
                        _ => {}
                    }
                }
                layout.extend(skeleton.uninvolved.iter().copied());
                if layout.iter().any(|&v| data.width(v) != 1) {
                    return Err(Error::InvalidArgument(
                        "linear equations need single-column inputs".into(),
                    ));
                }
                let mut links = Vec::with_capacity(members.len());
                for v in members {
                    let eq = system.get(v).ok_or_else(|| {
                        Error::InvalidArgument(format!("no equation for node {v}"))
                    })?;
                    if let Some(p) = eq.weights.keys().find(|p| !layout.contains(p)) {
                        return Err(Error::InvalidArgument(format!(
                            "parent {p} of node {v} is not a design input"
                        )));
                    }
                    let mut coef = vec![eq.intercept];
                    coef.extend(
                        layout
                            .iter()
                            .map(|p| eq.weights.get(p).copied().unwrap_or(0.0)),
                    );
                    links.push(Link::Linear { coef });
                }
                groups.push(links);
            }
            sets.push(LinkSet { groups });
        }
        let links = match sets.len() {
            1 => Links::Marginal(sets.pop().expect("one set")),
            2 => {
                let y1 = sets.pop().expect("two sets");
                let y0 = sets.pop().expect("two sets");
                Links::Conditional([y0, y1])
            }
            n => {
                return Err(Error::InvalidArgument(format!(
                    "expected 1 or 2 equation systems, got {n}"
                )))
            }
        };
        Ok(StructuralModel {
            skeleton,
            links,
            p_a,
            p_a_given_y,
            seed: 0,
        })
    }

    pub fn is_conditional(&self) -> bool {
        matches!(self.links, Links::Conditional(_))
    }

    fn links_for(&self, data: &NodeData, row: usize) -> Result<&LinkSet> {
        match &self.links {
            Links::Marginal(l) => Ok(l),
            Links::Conditional(sets) => match data.outcome(row) {
                Some(y) => Ok(&sets[y as usize]),
                None => Err(Error::MissingOutcome(
                    "conditional links need the outcome of every row".into(),
                )),
            },
        }
    }

    /// Weight of `a' = 1` in the counterfactual expectation for a row.
    pub fn a_weight(&self, data: &NodeData, row: usize) -> f64 {
        match (&self.links, self.p_a_given_y, data.outcome(row)) {
            (Links::Conditional(_), Some(w), Some(y)) => w[y as usize],
            _ => self.p_a,
        }
    }

    /// Residuals reproducing every row of `data` under the observed inputs.
    /// Discrete quantiles are drawn from a generator seeded with the model seed.
    pub fn residuals(&self, data: &NodeData) -> Result<Residuals> {
        let width = self.skeleton.member_count();
        let mut values = Vec::with_capacity(width * data.rows());
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut design = Vec::new();
        for row in 0..data.rows() {
            let links = self.links_for(data, row)?;
            let obs = observe(&self.skeleton, data, row);
            for (g, members) in self.skeleton.groups.iter().enumerate() {
                design_row(
                    &self.skeleton,
                    g,
                    obs.a,
                    &obs.groups,
                    &obs.uninvolved,
                    &mut design,
                );
                for (k, &v) in members.iter().enumerate() {
                    values.push(links.groups[g][k].residual(&design, data.value(v, row), &mut rng));
                }
            }
        }
        Ok(Residuals {
            rows: data.rows(),
            width,
            values,
        })
    }

    pub fn row_context<'a>(
        &'a self,
        data: &'a NodeData,
        residuals: &'a Residuals,
        row: usize,
    ) -> Result<RowContext<'a>> {
        if row >= residuals.rows {
            return Err(Error::MissingResidual(row));
        }
        let sk = &self.skeleton;
        let observed = observe(sk, data, row);
        let mut offsets = Vec::with_capacity(sk.groups.len() + 1);
        offsets.push(0);
        for g in &observed.groups {
            offsets.push(offsets.last().expect("non-empty") + g.len());
        }
        let prediction_slots = sk
            .prediction_inputs
            .iter()
            .zip(&sk.prediction_groups)
            .map(|(&v, g)| {
                g.map(|g| {
                    let pos = sk.groups[g].iter().position(|&m| m == v).expect("member");
                    let start = offsets[g]
                        + sk.groups[g][..pos]
                            .iter()
                            .map(|&m| data.width(m))
                            .sum::<usize>();
                    (start, start + data.width(v))
                })
            })
            .collect();
        Ok(RowContext {
            model: self,
            data,
            links: self.links_for(data, row)?,
            residuals: residuals.row(row),
            observed,
            offsets,
            prediction_slots,
            row,
        })
    }
}

impl RowContext<'_> {
    pub fn row(&self) -> usize {
        self.row
    }

    pub fn observed_a(&self) -> f64 {
        self.observed.a
    }

    /// Encoded predictor input when info edge `e` carries observed values iff
    /// `open[e]`, and the sensitive attribute is set to `a_prime` elsewhere.
    /// Inputs that no path traverses carry observed values only when every edge is open.
    pub fn counterfactual_input(&self, a_prime: f64, open: &[bool], out: &mut Vec<f64>) {
        let sk = &self.model.skeleton;
        let full = open.iter().all(|&o| o);
        let data = self.data;
        let offsets = &self.offsets;
        let mut cf = vec![0.0; offsets[sk.groups.len()]];
        let mut design = Vec::new();
        for &g in &sk.topo {
            let (lo, hi) = (offsets[g], offsets[g + 1]);
            let all_open = sk.input_edges[g]
                .iter()
                .all(|e| e.map(|e| open[e]).unwrap_or(full));
            if all_open {
                cf[lo..hi].copy_from_slice(&self.observed.groups[g]);
                continue;
            }
            // design with each input taken from the observed or counterfactual world
            design.clear();
            design.push(1.0);
            for (k, &u) in sk.inputs[g].iter().enumerate() {
                let use_observed = sk.input_edges[g][k].map(|e| open[e]).unwrap_or(full);
                match u {
                    Unit::Sensitive => design.push(if use_observed {
                        self.observed.a
                    } else {
                        a_prime
                    }),
                    Unit::Group(h) if use_observed => {
                        design.extend_from_slice(&self.observed.groups[h])
                    }
                    Unit::Group(h) => design.extend_from_slice(&cf[offsets[h]..offsets[h + 1]]),
                    _ => {}
                }
            }
            design.extend_from_slice(&self.observed.uninvolved);
            let offset = sk.member_offset(g);
            let mut enc = Vec::with_capacity(hi - lo);
            for (k, &v) in sk.groups[g].iter().enumerate() {
                let value = self.links.groups[g][k].evaluate(&design, self.residuals[offset + k]);
                data.encode_value(v, value, &mut enc);
            }
            cf[lo..hi].copy_from_slice(&enc);
        }

        out.clear();
        for (i, &v) in sk.prediction_inputs.iter().enumerate() {
            let use_observed = sk.prediction_edges[i].map(|e| open[e]).unwrap_or(full);
            if v == data.sensitive_node() {
                out.push(if use_observed {
                    self.observed.a
                } else {
                    a_prime
                });
                continue;
            }
            match (sk.prediction_groups[i], self.prediction_slots[i]) {
                (Some(_), Some((lo, hi))) if !use_observed => out.extend_from_slice(&cf[lo..hi]),
                _ => data.encode_value(v, data.value(v, self.row), out),
            }
        }
    }

    /// Observed predictor input.
    pub fn observed_input(&self, out: &mut Vec<f64>) {
        out.clear();
        for &v in &self.model.skeleton.prediction_inputs {
            self.data.encode_value(v, self.data.value(v, self.row), out);
        }
    }
}
