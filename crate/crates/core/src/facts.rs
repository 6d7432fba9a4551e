//! Enumeration of fairness-aware causal paths from the sensitive attribute to
//! the prediction, order relations over the nodes they involve, and grouping
//! of nodes into a completely ordered partition.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::ci::CiOracle;
use crate::error::{Error, Result};
use crate::graph::{consistent_dag_extensions, d_separated, Mark, NodeId, Path, Pdag};

/// Which conditioning set path activity is judged against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactMode {
    /// Empty conditioning set.
    Marginal,
    /// Conditioning on the outcome `Y`.
    RelativeToY,
}

/// How undirected edges on a candidate path are resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    /// Acyclicity of the oriented path edges against the directed part of the graph.
    Structural,
    /// Search for a consistent DAG extension that also agrees with CI tests.
    CiChecked,
}

#[derive(Clone, Copy)]
pub struct SearchOptions<'a> {
    pub check: CheckMode,
    pub ci: Option<&'a dyn CiOracle>,
    pub budget: usize,
}

impl Default for SearchOptions<'_> {
    fn default() -> Self {
        SearchOptions {
            check: CheckMode::Structural,
            ci: None,
            budget: 4096,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Potential {
    Active,
    Inactive,
    /// The extension budget ran out before a witness was found.
    Indeterminate,
}

/// Largest conditioning set used when checking an extension against CI tests.
const MAX_CI_ORDER: usize = 2;

/// Activity of a path under an orientation of all its edges. `marks[i]` is
/// the edge `nodes[i]`–`nodes[i+1]` seen from `nodes[i]`.
fn active_under(nodes: &[NodeId], marks: &[Mark], outcome: Option<NodeId>) -> bool {
    for pos in 1..nodes.len().saturating_sub(1) {
        let collider = marks[pos - 1] == Mark::Out && marks[pos] == Mark::In;
        let conditioned = Some(nodes[pos]) == outcome;
        if collider != conditioned {
            return false;
        }
    }
    true
}

fn conditioning(graph: &Pdag, mode: FactMode) -> Option<NodeId> {
    match mode {
        FactMode::Marginal => None,
        FactMode::RelativeToY => graph.outcome(),
    }
}

/// Whether `path` is potentially active: active in at least one DAG
/// consistent with `graph` (and, in [`CheckMode::CiChecked`], with the CI oracle).
pub fn is_potential_active(
    graph: &Pdag,
    path: &Path,
    mode: FactMode,
    options: &SearchOptions<'_>,
) -> Result<Potential> {
    if mode == FactMode::RelativeToY && graph.outcome().is_none() {
        return Err(Error::MissingOutcome(
            "graph has no outcome node to condition on".into(),
        ));
    }
    let outcome = conditioning(graph, mode);
    let nodes = path.nodes();
    let marks = path.marks(graph);
    let free: Vec<usize> = (0..marks.len())
        .filter(|&i| marks[i] == Mark::Undirected)
        .collect();
    if free.len() > 20 {
        return Err(Error::InvalidArgument(format!(
            "path has {} undirected edges",
            free.len()
        )));
    }

    let mut active_orientations = Vec::new();
    for bits in 0u32..(1u32 << free.len()) {
        let mut m = marks.clone();
        for (k, &i) in free.iter().enumerate() {
            m[i] = if bits >> k & 1 == 0 {
                Mark::Out
            } else {
                Mark::In
            };
        }
        if active_under(nodes, &m, outcome) {
            active_orientations.push(m);
        }
    }
    if active_orientations.is_empty() {
        return Ok(Potential::Inactive);
    }
    if active_orientations.len() == 1 << free.len() {
        return Ok(Potential::Active);
    }

    match options.check {
        CheckMode::Structural => {
            let any = active_orientations
                .iter()
                .any(|m| acyclic_with(graph, nodes, m));
            Ok(if any {
                Potential::Active
            } else {
                Potential::Inactive
            })
        }
        CheckMode::CiChecked => ci_checked(graph, path, outcome, options),
    }
}

/// Directed part of `graph` plus the path's edges oriented by `marks` has no cycle.
fn acyclic_with(graph: &Pdag, nodes: &[NodeId], marks: &[Mark]) -> bool {
    let n = graph.node_count();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in graph.edges() {
        if let Some((t, h)) = e.tail_head() {
            children[t.0].push(h.0);
        }
    }
    for (i, m) in marks.iter().enumerate() {
        let (u, v) = (nodes[i].0, nodes[i + 1].0);
        match m {
            Mark::Out => children[u].push(v),
            Mark::In => children[v].push(u),
            Mark::Undirected => {}
        }
    }
    let mut indegree = vec![0usize; n];
    for cs in &children {
        for &c in cs {
            indegree[c] += 1;
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut removed = 0;
    while let Some(v) = queue.pop() {
        removed += 1;
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                queue.push(c);
            }
        }
    }
    removed == n
}

fn ci_checked(
    graph: &Pdag,
    path: &Path,
    outcome: Option<NodeId>,
    options: &SearchOptions<'_>,
) -> Result<Potential> {
    let testable: Vec<NodeId> = path
        .nodes()
        .iter()
        .copied()
        .filter(|&v| v != graph.prediction())
        .collect();
    for dag in consistent_dag_extensions(graph, options.budget) {
        let dag = match dag {
            Ok(d) => d,
            Err(Error::BudgetExhausted(_)) => return Ok(Potential::Indeterminate),
            Err(e) => return Err(e),
        };
        if !active_under(path.nodes(), &path.marks(&dag), outcome) {
            continue;
        }
        let Some(ci) = options.ci else {
            return Ok(Potential::Active);
        };
        let agrees = testable.iter().enumerate().all(|(a, &i)| {
            testable[a + 1..].iter().all(|&j| {
                let rest: Vec<NodeId> = testable
                    .iter()
                    .copied()
                    .filter(|&v| v != i && v != j)
                    .collect();
                subsets_up_to(&rest, MAX_CI_ORDER)
                    .into_iter()
                    .all(|s| d_separated(&dag, i, j, &s) == ci.independent(i, j, &s))
            })
        });
        if agrees {
            return Ok(Potential::Active);
        }
    }
    Ok(Potential::Inactive)
}

fn subsets_up_to(items: &[NodeId], max: usize) -> Vec<BTreeSet<NodeId>> {
    let mut out = vec![BTreeSet::new()];
    for &v in items {
        let grown: Vec<BTreeSet<NodeId>> = out
            .iter()
            .filter(|s| s.len() < max)
            .map(|s| {
                let mut t = s.clone();
                t.insert(v);
                t
            })
            .collect();
        out.extend(grown);
    }
    out
}

/// Potentially active paths from the sensitive attribute to the prediction.
#[derive(Clone, Debug)]
pub struct FactSet {
    pub paths: Vec<Path>,
    /// Interior nodes of some path (the outcome excluded when conditioned on).
    pub involved: BTreeSet<NodeId>,
    /// Features on no path.
    pub uninvolved: BTreeSet<NodeId>,
    /// Unordered graph edge to the ids of the paths traversing it.
    pub edge_index: BTreeMap<(NodeId, NodeId), BTreeSet<usize>>,
    pub mode: FactMode,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct FactSetDocument {
    mode: FactMode,
    paths: Vec<FactDocument>,
    involved: Vec<String>,
    uninvolved: Vec<String>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct FactDocument {
    id: usize,
    nodes: Vec<String>,
    display: String,
}

impl FactSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn to_json(&self, graph: &Pdag) -> serde_json::Value {
        let names = |s: &BTreeSet<NodeId>| s.iter().map(|&v| graph.name(v).to_string()).collect();
        serde_json::to_value(FactSetDocument {
            mode: self.mode,
            paths: self
                .paths
                .iter()
                .enumerate()
                .map(|(id, p)| FactDocument {
                    id,
                    nodes: p.names(graph),
                    display: p.display(graph),
                })
                .collect(),
            involved: names(&self.involved),
            uninvolved: names(&self.uninvolved),
            warnings: self.warnings.clone(),
        })
        .expect("fact set serializes")
    }

    /// Node sequence of a path with the conditioned outcome removed.
    pub fn effective_nodes(&self, graph: &Pdag, id: usize) -> Vec<NodeId> {
        let skip = conditioning(graph, self.mode);
        self.paths[id]
            .nodes()
            .iter()
            .copied()
            .filter(|&v| Some(v) != skip)
            .collect()
    }
}

/// All potentially active paths relative to the empty set.
pub fn search_facts(graph: &Pdag, options: &SearchOptions<'_>) -> Result<FactSet> {
    search(graph, FactMode::Marginal, options)
}

/// All potentially active paths relative to `{Y}`.
pub fn search_facts_relative_to_y(graph: &Pdag, options: &SearchOptions<'_>) -> Result<FactSet> {
    if graph.outcome().is_none() {
        return Err(Error::MissingOutcome(
            "graph has no outcome node to condition on".into(),
        ));
    }
    search(graph, FactMode::RelativeToY, options)
}

fn search(graph: &Pdag, mode: FactMode, options: &SearchOptions<'_>) -> Result<FactSet> {
    let a = graph.sensitive();
    let yhat = graph.prediction();
    let mut found = Vec::new();
    let mut warnings = Vec::new();
    let mut queue: VecDeque<Vec<NodeId>> = VecDeque::from([vec![a]]);
    while let Some(prefix) = queue.pop_front() {
        let last = *prefix.last().expect("non-empty prefix");
        for next in graph.neighbors(last) {
            if prefix.contains(&next) {
                continue;
            }
            let mut nodes = prefix.clone();
            nodes.push(next);
            let path = Path::from_vec_unchecked(nodes);
            match is_potential_active(graph, &path, mode, options)? {
                Potential::Inactive => continue,
                Potential::Indeterminate => warnings.push(format!(
                    "budget exhausted while checking {}; kept as potentially active",
                    path.display(graph)
                )),
                Potential::Active => {}
            }
            if next == yhat {
                found.push(path);
            } else {
                queue.push_back(path.nodes().to_vec());
            }
        }
    }
    found.sort_by(|p, q| p.len().cmp(&q.len()).then_with(|| p.nodes().cmp(q.nodes())));

    let skip = conditioning(graph, mode);
    let mut involved = BTreeSet::new();
    let mut edge_index: BTreeMap<(NodeId, NodeId), BTreeSet<usize>> = BTreeMap::new();
    for (id, p) in found.iter().enumerate() {
        involved.extend(p.interior().iter().copied().filter(|&v| Some(v) != skip));
        for w in p.nodes().windows(2) {
            let key = (w[0].min(w[1]), w[0].max(w[1]));
            edge_index.entry(key).or_default().insert(id);
        }
    }
    let uninvolved = graph.features().filter(|v| !involved.contains(v)).collect();
    Ok(FactSet {
        paths: found,
        involved,
        uninvolved,
        edge_index,
        mode,
        warnings,
    })
}

/// Strict precedence over units along paths, restricted to adjacent pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderRelation<U: Ord> {
    /// For each involved unit, its adjacent (informative) predecessors, the source included.
    pub predecessors: BTreeMap<U, BTreeSet<U>>,
    /// For each involved unit, its adjacent successors, the sink included.
    pub successors: BTreeMap<U, BTreeSet<U>>,
    /// Every adjacent pair of involved units is ordered.
    pub complete: bool,
}

fn precedes<U: Ord + Copy>(seqs: &[Vec<U>], source: U, sink: U, u: U, v: U) -> bool {
    if u == v {
        return false;
    }
    if u == source || v == sink {
        return true;
    }
    if v == source || u == sink {
        return false;
    }
    let mut shared = false;
    for s in seqs {
        let pu: Vec<usize> = (0..s.len()).filter(|&i| s[i] == u).collect();
        let pv: Vec<usize> = (0..s.len()).filter(|&i| s[i] == v).collect();
        if pu.is_empty() || pv.is_empty() {
            continue;
        }
        shared = true;
        if pu.last() >= pv.first() {
            return false;
        }
    }
    shared
}

fn order_over<U: Ord + Copy>(
    seqs: &[Vec<U>],
    source: U,
    sink: U,
    units: &BTreeSet<U>,
    adjacent: impl Fn(U, U) -> bool,
    source_always_informs: bool,
) -> OrderRelation<U> {
    let mut predecessors = BTreeMap::new();
    let mut successors = BTreeMap::new();
    for &v in units {
        let mut pre: BTreeSet<U> = units
            .iter()
            .copied()
            .chain([source])
            .filter(|&u| adjacent(u, v) && precedes(seqs, source, sink, u, v))
            .collect();
        if source_always_informs {
            pre.insert(source);
        }
        let suc: BTreeSet<U> = units
            .iter()
            .copied()
            .chain([sink])
            .filter(|&w| adjacent(v, w) && precedes(seqs, source, sink, v, w))
            .collect();
        predecessors.insert(v, pre);
        successors.insert(v, suc);
    }
    let complete = unordered_pairs(seqs, source, sink, units, &adjacent).is_empty();
    OrderRelation {
        predecessors,
        successors,
        complete,
    }
}

fn unordered_pairs<U: Ord + Copy>(
    seqs: &[Vec<U>],
    source: U,
    sink: U,
    units: &BTreeSet<U>,
    adjacent: &impl Fn(U, U) -> bool,
) -> Vec<(U, U)> {
    let list: Vec<U> = units.iter().copied().collect();
    let mut out = Vec::new();
    for (i, &u) in list.iter().enumerate() {
        for &v in &list[i + 1..] {
            if adjacent(u, v)
                && !precedes(seqs, source, sink, u, v)
                && !precedes(seqs, source, sink, v, u)
            {
                out.push((u, v));
            }
        }
    }
    out
}

/// Adjacency used for ordering: graph adjacency, plus co-parents of `Y` when conditioning on it.
fn info_adjacent(graph: &Pdag, mode: FactMode, u: NodeId, v: NodeId) -> bool {
    graph.adjacent(u, v)
        || matches!((mode, graph.outcome()), (FactMode::RelativeToY, Some(y)) if graph.spouses_with_child(u, v, y))
}

/// Order relation over the involved nodes of `facts`.
pub fn compute_order_relations(graph: &Pdag, facts: &FactSet) -> OrderRelation<NodeId> {
    let seqs: Vec<Vec<NodeId>> = (0..facts.len())
        .map(|id| facts.effective_nodes(graph, id))
        .collect();
    order_over(
        &seqs,
        graph.sensitive(),
        graph.prediction(),
        &facts.involved,
        |u, v| info_adjacent(graph, facts.mode, u, v),
        facts.mode == FactMode::RelativeToY,
    )
}

/// A position on a grouped path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Unit {
    Sensitive,
    Group(usize),
    /// The conditioned outcome; kept for display, skipped by order relations.
    Outcome,
    Prediction,
}

/// Involved nodes partitioned into completely ordered groups.
#[derive(Clone, Debug)]
pub struct GroupPartition {
    /// Sorted members of each group; groups sorted by smallest member.
    pub groups: Vec<Vec<NodeId>>,
    /// The paths of the fact set, rewritten over units.
    pub paths: Vec<Vec<Unit>>,
    pub order: OrderRelation<Unit>,
    pub mode: FactMode,
}

impl GroupPartition {
    pub fn group_of(&self, node: NodeId) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&node))
    }

    pub fn effective_path(&self, id: usize) -> Vec<Unit> {
        self.paths[id]
            .iter()
            .copied()
            .filter(|&u| u != Unit::Outcome)
            .collect()
    }

    /// Groups in an order compatible with the predecessor relation.
    pub fn topological_groups(&self) -> Vec<usize> {
        let n = self.groups.len();
        let mut indegree = vec![0usize; n];
        for (&v, pre) in &self.order.predecessors {
            if let Unit::Group(g) = v {
                indegree[g] = pre.iter().filter(|u| matches!(u, Unit::Group(_))).count();
            }
        }
        let mut done = vec![false; n];
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let next = (0..n)
                .find(|&g| !done[g] && indegree[g] == 0)
                .expect("predecessor relation over groups is acyclic");
            done[next] = true;
            out.push(next);
            for (&v, pre) in &self.order.predecessors {
                if let Unit::Group(h) = v {
                    if pre.contains(&Unit::Group(next)) {
                        indegree[h] -= 1;
                    }
                }
            }
        }
        out
    }

    pub fn label(&self, graph: &Pdag, unit: Unit) -> String {
        match unit {
            Unit::Sensitive => graph.name(graph.sensitive()).to_string(),
            Unit::Prediction => graph.name(graph.prediction()).to_string(),
            Unit::Outcome => graph
                .outcome()
                .map(|y| graph.name(y).to_string())
                .unwrap_or_default(),
            Unit::Group(g) => {
                let names: Vec<&str> = self.groups[g].iter().map(|&v| graph.name(v)).collect();
                if names.len() == 1 {
                    names[0].to_string()
                } else {
                    format!("{{{}}}", names.join(","))
                }
            }
        }
    }

    pub fn display_path(&self, graph: &Pdag, id: usize) -> String {
        self.paths[id]
            .iter()
            .map(|&u| self.label(graph, u))
            .collect::<Vec<_>>()
            .join(" -> ")
    }
}

fn rewrite(graph: &Pdag, facts: &FactSet, group_of: &BTreeMap<NodeId, usize>) -> Vec<Vec<Unit>> {
    let skip = conditioning(graph, facts.mode);
    let mut out: Vec<Vec<Unit>> = Vec::new();
    for p in &facts.paths {
        let mut units: Vec<Unit> = Vec::with_capacity(p.len());
        for &v in p.nodes() {
            let u = if v == graph.sensitive() {
                Unit::Sensitive
            } else if v == graph.prediction() {
                Unit::Prediction
            } else if Some(v) == skip {
                Unit::Outcome
            } else {
                Unit::Group(group_of[&v])
            };
            if units.last() != Some(&u) {
                units.push(u);
            }
        }
        if !out.contains(&units) {
            out.push(units);
        }
    }
    out
}

/// Partition the involved nodes of `facts` into groups so that the order
/// relation over groups is complete.
///
/// Repeatedly takes the unordered adjacent pair whose first group has the
/// smallest member and merges that group with every group it is adjacent to
/// but unordered with. A cycle among group predecessors is merged the same way.
pub fn group_variables(graph: &Pdag, facts: &FactSet) -> Result<GroupPartition> {
    let mut groups: Vec<BTreeSet<NodeId>> = facts
        .involved
        .iter()
        .map(|&v| BTreeSet::from([v]))
        .collect();
    loop {
        groups.sort_by_key(|g| *g.first().expect("non-empty group"));
        let group_of: BTreeMap<NodeId, usize> = groups
            .iter()
            .enumerate()
            .flat_map(|(i, g)| g.iter().map(move |&v| (v, i)))
            .collect();
        let paths = rewrite(graph, facts, &group_of);
        let seqs: Vec<Vec<Unit>> = paths
            .iter()
            .map(|p| p.iter().copied().filter(|&u| u != Unit::Outcome).collect())
            .collect();
        let units: BTreeSet<Unit> = (0..groups.len()).map(Unit::Group).collect();
        let members = |u: Unit| -> Vec<NodeId> {
            match u {
                Unit::Sensitive => vec![graph.sensitive()],
                Unit::Prediction => vec![graph.prediction()],
                Unit::Outcome => graph.outcome().into_iter().collect(),
                Unit::Group(g) => groups[g].iter().copied().collect(),
            }
        };
        let adjacent = |u: Unit, v: Unit| {
            u != v
                && members(u).iter().any(|&x| {
                    members(v)
                        .iter()
                        .any(|&y| info_adjacent(graph, facts.mode, x, y))
                })
        };

        let pairs = unordered_pairs(&seqs, Unit::Sensitive, Unit::Prediction, &units, &adjacent);
        let merge: Option<BTreeSet<usize>> = if let Some(&(Unit::Group(g), _)) = pairs.first() {
            let mut set = BTreeSet::from([g]);
            for &(u, v) in &pairs {
                match (u, v) {
                    (Unit::Group(x), Unit::Group(y)) if x == g => {
                        set.insert(y);
                    }
                    (Unit::Group(x), Unit::Group(y)) if y == g => {
                        set.insert(x);
                    }
                    _ => {}
                }
            }
            Some(set)
        } else {
            let order = order_over(
                &seqs,
                Unit::Sensitive,
                Unit::Prediction,
                &units,
                adjacent,
                facts.mode == FactMode::RelativeToY,
            );
            smallest_cycle(&order, groups.len())
        };

        match merge {
            Some(set) => {
                let mut merged = BTreeSet::new();
                for &g in &set {
                    merged.extend(groups[g].iter().copied());
                }
                let mut next: Vec<BTreeSet<NodeId>> = groups
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !set.contains(i))
                    .map(|(_, g)| g.clone())
                    .collect();
                next.push(merged);
                groups = next;
            }
            None => {
                let order = order_over(
                    &seqs,
                    Unit::Sensitive,
                    Unit::Prediction,
                    &units,
                    adjacent,
                    facts.mode == FactMode::RelativeToY,
                );
                return Ok(GroupPartition {
                    groups: groups
                        .into_iter()
                        .map(|g| g.into_iter().collect())
                        .collect(),
                    paths,
                    order,
                    mode: facts.mode,
                });
            }
        }
    }
}

/// Strongly connected component, of size > 1, containing the smallest group on a
/// predecessor cycle.
fn smallest_cycle(order: &OrderRelation<Unit>, n: usize) -> Option<BTreeSet<usize>> {
    let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (&v, pre) in &order.predecessors {
        if let Unit::Group(h) = v {
            for &u in pre {
                if let Unit::Group(g) = u {
                    succ[g].insert(h);
                }
            }
        }
    }
    let reach = |from: usize| -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = succ[from].iter().copied().collect();
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend(succ[v].iter().copied());
            }
        }
        seen
    };
    let reach_all: Vec<BTreeSet<usize>> = (0..n).map(reach).collect();
    for g in 0..n {
        if !reach_all[g].contains(&g) {
            continue;
        }
        let scc: BTreeSet<usize> = (0..n)
            .filter(|&h| h == g || (reach_all[g].contains(&h) && reach_all[h].contains(&g)))
            .collect();
        return Some(scc);
    }
    None
}
