//! Partially directed causal graphs over `{A, X1..XM, Y, Ŷ}`.
//!
//! A [`Pdag`] is immutable once built. Every feature node is a parent of the
//! prediction node; missing `X -> Ŷ` edges are filled in at construction.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Sensitive,
    Feature,
    Outcome,
    Prediction,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Sensitive => "sensitive",
            NodeKind::Feature => "feature",
            NodeKind::Outcome => "outcome",
            NodeKind::Prediction => "prediction",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "sensitive" => Ok(NodeKind::Sensitive),
            "feature" => Ok(NodeKind::Feature),
            "outcome" => Ok(NodeKind::Outcome),
            "prediction" => Ok(NodeKind::Prediction),
            other => Err(Error::UnknownNodeKind(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Orientation {
    AtoB,
    BtoA,
    Undirected,
}

/// An edge between two distinct nodes. Stored canonically with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    pub orientation: Orientation,
}

impl Edge {
    pub fn directed(from: NodeId, to: NodeId) -> Self {
        Edge {
            a: from,
            b: to,
            orientation: Orientation::AtoB,
        }
        .canonical()
    }

    pub fn undirected(a: NodeId, b: NodeId) -> Self {
        Edge {
            a,
            b,
            orientation: Orientation::Undirected,
        }
        .canonical()
    }

    fn canonical(self) -> Self {
        if self.a <= self.b {
            return self;
        }
        let orientation = match self.orientation {
            Orientation::AtoB => Orientation::BtoA,
            Orientation::BtoA => Orientation::AtoB,
            Orientation::Undirected => Orientation::Undirected,
        };
        Edge {
            a: self.b,
            b: self.a,
            orientation,
        }
    }

    pub fn is_directed(&self) -> bool {
        self.orientation != Orientation::Undirected
    }

    /// `(tail, head)` for a directed edge.
    pub fn tail_head(&self) -> Option<(NodeId, NodeId)> {
        match self.orientation {
            Orientation::AtoB => Some((self.a, self.b)),
            Orientation::BtoA => Some((self.b, self.a)),
            Orientation::Undirected => None,
        }
    }

    pub fn key(&self) -> (NodeId, NodeId) {
        (self.a, self.b)
    }
}

/// The edge between `from` and `to` as seen when walking from `from`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mark {
    /// `from -> to`
    Out,
    /// `from <- to`
    In,
    /// `from -- to`
    Undirected,
}

#[derive(Clone, Debug)]
pub struct Pdag {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(NodeId, usize)>>,
    pair_index: HashMap<(NodeId, NodeId), usize>,
    sensitive: NodeId,
    prediction: NodeId,
    outcome: Option<NodeId>,
}

impl PartialEq for Pdag {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Pdag {
    /// Validates and builds a graph, adding `X -> Ŷ` for every feature that lacks it.
    pub fn new(kinds: Vec<(String, NodeKind)>, edges: Vec<Edge>) -> Result<Self> {
        let mut nodes = Vec::with_capacity(kinds.len());
        let mut by_name = HashMap::new();
        for (i, (name, kind)) in kinds.into_iter().enumerate() {
            if by_name.insert(name.clone(), i).is_some() {
                return Err(Error::DuplicateNode(name));
            }
            nodes.push(Node {
                id: NodeId(i),
                kind,
                name,
            });
        }
        let of_kind = |k: NodeKind| -> Vec<NodeId> {
            nodes.iter().filter(|n| n.kind == k).map(|n| n.id).collect()
        };
        let sensitive = match of_kind(NodeKind::Sensitive).as_slice() {
            [s] => *s,
            [] => return Err(Error::InvalidGraph("missing sensitive node".into())),
            _ => return Err(Error::InvalidGraph("more than one sensitive node".into())),
        };
        let prediction = match of_kind(NodeKind::Prediction).as_slice() {
            [p] => *p,
            [] => return Err(Error::InvalidGraph("missing prediction node".into())),
            _ => return Err(Error::InvalidGraph("more than one prediction node".into())),
        };
        let outcome = match of_kind(NodeKind::Outcome).as_slice() {
            [] => None,
            [y] => Some(*y),
            _ => return Err(Error::InvalidGraph("more than one outcome node".into())),
        };

        let name = |id: NodeId| nodes[id.0].name.clone();
        let mut canonical: Vec<Edge> = Vec::with_capacity(edges.len());
        let mut seen = HashMap::new();
        for e in edges {
            if e.a.0 >= nodes.len() || e.b.0 >= nodes.len() {
                return Err(Error::InvalidGraph("edge references a missing node".into()));
            }
            if e.a == e.b {
                return Err(Error::SelfLoop(name(e.a)));
            }
            let e = e.canonical();
            if seen.insert(e.key(), ()).is_some() {
                return Err(Error::DuplicateEdge(name(e.a), name(e.b)));
            }
            canonical.push(e);
        }

        for e in &canonical {
            if e.a != prediction && e.b != prediction {
                continue;
            }
            let other = if e.a == prediction { e.b } else { e.a };
            match e.tail_head() {
                Some((_, head)) if head == prediction => {}
                _ => {
                    return Err(Error::InvalidGraph(format!(
                    "edge between `{}` and the prediction node must point into the prediction node",
                    name(other)
                )))
                }
            }
        }
        for n in &nodes {
            if n.kind == NodeKind::Feature
                && !seen.contains_key(&Edge::directed(n.id, prediction).key())
            {
                canonical.push(Edge::directed(n.id, prediction));
            }
        }
        canonical.sort_by_key(|e| e.key());

        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut pair_index = HashMap::new();
        for (i, e) in canonical.iter().enumerate() {
            adjacency[e.a.0].push((e.b, i));
            adjacency[e.b.0].push((e.a, i));
            pair_index.insert(e.key(), i);
        }
        for adj in &mut adjacency {
            adj.sort();
        }

        let graph = Pdag {
            nodes,
            edges: canonical,
            adjacency,
            pair_index,
            sensitive,
            prediction,
            outcome,
        };
        if let Some(v) = graph.find_directed_cycle() {
            return Err(Error::DirectedCycle(graph.name(v).to_string()));
        }
        Ok(graph)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kinds: Vec<(String, NodeKind)> = Vec::new();
        let mut index: HashMap<String, NodeId> = HashMap::new();
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let line_no = lineno + 1;
            let syntax = |message: &str| Error::GraphSyntax {
                line: line_no,
                message: message.to_string(),
            };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens[0] == "node" {
                let [_, name, kind] = tokens.as_slice() else {
                    return Err(syntax("expected `node <name> kind=<kind>`"));
                };
                let kind = kind
                    .strip_prefix("kind=")
                    .ok_or_else(|| syntax("expected `kind=<kind>`"))?;
                let kind = NodeKind::parse(kind)?;
                if index.contains_key(*name) {
                    return Err(Error::DuplicateNode(name.to_string()));
                }
                index.insert(name.to_string(), NodeId(kinds.len()));
                kinds.push((name.to_string(), kind));
                continue;
            }
            let [a, op, b] = tokens.as_slice() else {
                return Err(syntax("expected `<a> -> <b>` or `<a> -- <b>`"));
            };
            let lookup = |n: &str| {
                index
                    .get(n)
                    .copied()
                    .ok_or_else(|| Error::UnknownNode(n.to_string()))
            };
            let (a, b) = (lookup(a)?, lookup(b)?);
            let edge = match *op {
                "->" => Edge {
                    a,
                    b,
                    orientation: Orientation::AtoB,
                },
                "<-" => Edge {
                    a,
                    b,
                    orientation: Orientation::BtoA,
                },
                "--" => Edge {
                    a,
                    b,
                    orientation: Orientation::Undirected,
                },
                _ => return Err(syntax("unknown edge operator")),
            };
            edges.push(edge);
        }
        Pdag::new(kinds, edges)
    }

    /// Writes the graph in the edge-list format, including implicit `X -> Ŷ` edges.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("node {} kind={}\n", n.name, n.kind.as_str()));
        }
        for e in &self.edges {
            let line = match e.orientation {
                Orientation::AtoB => format!("{} -> {}\n", self.name(e.a), self.name(e.b)),
                Orientation::BtoA => format!("{} -> {}\n", self.name(e.b), self.name(e.a)),
                Orientation::Undirected => format!("{} -- {}\n", self.name(e.a), self.name(e.b)),
            };
            out.push_str(&line);
        }
        out
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id.0].kind
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.id)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn sensitive(&self) -> NodeId {
        self.sensitive
    }

    pub fn prediction(&self) -> NodeId {
        self.prediction
    }

    pub fn outcome(&self) -> Option<NodeId> {
        self.outcome
    }

    pub fn features(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Feature)
            .map(|n| n.id)
    }

    pub fn neighbors(&self, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency[v.0].iter().map(|&(n, _)| n)
    }

    pub fn edge_between(&self, u: NodeId, v: NodeId) -> Option<&Edge> {
        let key = if u <= v { (u, v) } else { (v, u) };
        self.pair_index.get(&key).map(|&i| &self.edges[i])
    }

    pub fn edge_index(&self, u: NodeId, v: NodeId) -> Option<usize> {
        let key = if u <= v { (u, v) } else { (v, u) };
        self.pair_index.get(&key).copied()
    }

    pub fn adjacent(&self, u: NodeId, v: NodeId) -> bool {
        self.edge_between(u, v).is_some()
    }

    /// Mark of the edge between `from` and `to`, seen from `from`.
    pub fn mark(&self, from: NodeId, to: NodeId) -> Option<Mark> {
        let e = self.edge_between(from, to)?;
        Some(match e.tail_head() {
            None => Mark::Undirected,
            Some((tail, _)) if tail == from => Mark::Out,
            Some(_) => Mark::In,
        })
    }

    pub fn parents(&self, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency[v.0]
            .iter()
            .filter(move |&&(_, e)| matches!(self.edges[e].tail_head(), Some((_, h)) if h == v))
            .map(|&(n, _)| n)
    }

    pub fn children(&self, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency[v.0]
            .iter()
            .filter(move |&&(_, e)| matches!(self.edges[e].tail_head(), Some((t, _)) if t == v))
            .map(|&(n, _)| n)
    }

    /// Both nodes are parents of `child`.
    pub fn spouses_with_child(&self, u: NodeId, v: NodeId, child: NodeId) -> bool {
        u != v && self.mark(u, child) == Some(Mark::Out) && self.mark(v, child) == Some(Mark::Out)
    }

    /// Nodes feeding the predictor, in node order.
    pub fn prediction_inputs(&self) -> Vec<NodeId> {
        let mut inputs: Vec<NodeId> = self.parents(self.prediction).collect();
        inputs.sort();
        inputs
    }

    pub fn undirected_edges(&self) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&i| !self.edges[i].is_directed())
            .collect()
    }

    pub fn is_fully_directed(&self) -> bool {
        self.edges.iter().all(Edge::is_directed)
    }

    fn find_directed_cycle(&self) -> Option<NodeId> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        for e in &self.edges {
            if let Some((_, h)) = e.tail_head() {
                indegree[h.0] += 1;
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut removed = 0;
        while let Some(v) = queue.pop_front() {
            removed += 1;
            for c in self.children(NodeId(v)) {
                indegree[c.0] -= 1;
                if indegree[c.0] == 0 {
                    queue.push_back(c.0);
                }
            }
        }
        if removed == n {
            None
        } else {
            (0..n).find(|&v| indegree[v] > 0).map(NodeId)
        }
    }

    /// Copy of this graph with the given edges replaced by new orientations.
    pub fn reoriented(&self, orientations: &[(usize, Orientation)]) -> Result<Pdag> {
        let mut g = self.clone();
        for &(i, o) in orientations {
            g.edges[i].orientation = o;
        }
        if let Some(v) = g.find_directed_cycle() {
            return Err(Error::DirectedCycle(g.name(v).to_string()));
        }
        Ok(g)
    }
}

/// A [`Pdag`] in which every edge is directed.
#[derive(Clone, Debug, PartialEq)]
pub struct Dag(Pdag);

impl Dag {
    pub fn new(graph: Pdag) -> Result<Self> {
        if let Some(e) = graph.edges.iter().find(|e| !e.is_directed()) {
            return Err(Error::UndirectedEdge(
                graph.name(e.a).to_string(),
                graph.name(e.b).to_string(),
            ));
        }
        Ok(Dag(graph))
    }

    pub fn into_inner(self) -> Pdag {
        self.0
    }
}

impl Deref for Dag {
    type Target = Pdag;

    fn deref(&self) -> &Pdag {
        &self.0
    }
}

/// A simple path: consecutive nodes adjacent, no node repeated.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path {
    nodes: Vec<NodeId>,
}

impl Path {
    pub fn new(graph: &Pdag, nodes: Vec<NodeId>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidPath("empty path".into()));
        }
        let mut seen = BTreeSet::new();
        for &v in &nodes {
            if v.0 >= graph.node_count() {
                return Err(Error::InvalidPath(format!("unknown node {v}")));
            }
            if !seen.insert(v) {
                return Err(Error::InvalidPath(format!(
                    "node `{}` repeated",
                    graph.name(v)
                )));
            }
        }
        for w in nodes.windows(2) {
            if !graph.adjacent(w[0], w[1]) {
                return Err(Error::InvalidPath(format!(
                    "`{}` and `{}` are not adjacent",
                    graph.name(w[0]),
                    graph.name(w[1])
                )));
            }
        }
        Ok(Path { nodes })
    }

    /// Builds a path from names, validating it against the graph.
    pub fn from_names(graph: &Pdag, names: &[&str]) -> Result<Self> {
        let nodes = names
            .iter()
            .map(|n| {
                graph
                    .node_by_name(n)
                    .ok_or_else(|| Error::UnknownNode(n.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Path::new(graph, nodes)
    }

    pub(crate) fn from_vec_unchecked(nodes: Vec<NodeId>) -> Self {
        Path { nodes }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn first(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn last(&self) -> NodeId {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.nodes.contains(&v)
    }

    pub fn interior(&self) -> &[NodeId] {
        if self.nodes.len() <= 2 {
            &[]
        } else {
            &self.nodes[1..self.nodes.len() - 1]
        }
    }

    /// Contiguous subpath `nodes[start..=end]`.
    pub fn subpath(&self, start: usize, end: usize) -> Path {
        Path {
            nodes: self.nodes[start..=end].to_vec(),
        }
    }

    /// Edge marks along the path: `marks[i]` is the edge `nodes[i]`–`nodes[i+1]` seen from `nodes[i]`.
    pub fn marks(&self, graph: &Pdag) -> Vec<Mark> {
        self.nodes
            .windows(2)
            .map(|w| graph.mark(w[0], w[1]).expect("path nodes adjacent"))
            .collect()
    }

    pub fn display(&self, graph: &Pdag) -> String {
        let mut s = graph.name(self.nodes[0]).to_string();
        for w in self.nodes.windows(2) {
            let arrow = match graph.mark(w[0], w[1]) {
                Some(Mark::Out) => " -> ",
                Some(Mark::In) => " <- ",
                _ => " -- ",
            };
            s.push_str(arrow);
            s.push_str(graph.name(w[1]));
        }
        s
    }

    pub fn names(&self, graph: &Pdag) -> Vec<String> {
        self.nodes
            .iter()
            .map(|&v| graph.name(v).to_string())
            .collect()
    }
}

/// Whether the node at `position` is a collider on `path`.
pub fn is_collider(graph: &Pdag, path: &Path, position: usize) -> Result<bool> {
    if position == 0 || position + 1 >= path.len() {
        return Err(Error::PositionOutOfRange {
            position,
            len: path.len(),
        });
    }
    let v = path.nodes[position];
    let prev = path.nodes[position - 1];
    let next = path.nodes[position + 1];
    let into = |u: NodeId| -> Result<bool> {
        match graph.mark(u, v) {
            Some(Mark::Out) => Ok(true),
            Some(Mark::In) => Ok(false),
            Some(Mark::Undirected) => Err(Error::UndirectedEdge(
                graph.name(u).to_string(),
                graph.name(v).to_string(),
            )),
            None => Err(Error::InvalidPath("path nodes not adjacent".into())),
        }
    };
    Ok(into(prev)? && into(next)?)
}

/// Active relative to `conditioning`: every interior non-collider is outside the set,
/// every interior collider has itself or a descendant inside it.
pub fn is_active_path(graph: &Pdag, path: &Path, conditioning: &BTreeSet<NodeId>) -> Result<bool> {
    for w in path.nodes.windows(2) {
        if graph.mark(w[0], w[1]) == Some(Mark::Undirected) {
            return Err(Error::UndirectedEdge(
                graph.name(w[0]).to_string(),
                graph.name(w[1]).to_string(),
            ));
        }
    }
    for pos in 1..path.len().saturating_sub(1) {
        let v = path.nodes[pos];
        if is_collider(graph, path, pos)? {
            let opened = conditioning.contains(&v)
                || descendants(graph, v)
                    .iter()
                    .any(|d| conditioning.contains(d));
            if !opened {
                return Ok(false);
            }
        } else if conditioning.contains(&v) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Nodes reachable from `node` along directed edges, excluding `node`.
pub fn descendants(graph: &Pdag, node: NodeId) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    let mut stack = vec![node];
    while let Some(v) = stack.pop() {
        for c in graph.children(v) {
            if out.insert(c) {
                stack.push(c);
            }
        }
    }
    out.remove(&node);
    out
}

/// Nodes with a directed path into `node`, excluding `node`.
pub fn ancestors(graph: &Pdag, node: NodeId) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    let mut stack = vec![node];
    while let Some(v) = stack.pop() {
        for p in graph.parents(v) {
            if out.insert(p) {
                stack.push(p);
            }
        }
    }
    out.remove(&node);
    out
}

/// d-separation of `x` and `y` given `given` in a DAG, by reachability over
/// (node, direction) states.
pub fn d_separated(dag: &Dag, x: NodeId, y: NodeId, given: &BTreeSet<NodeId>) -> bool {
    if x == y {
        return false;
    }
    let mut anc_of_given: BTreeSet<NodeId> = given.clone();
    for &z in given {
        anc_of_given.extend(ancestors(dag, z));
    }
    // direction: true = arrived from a child (moving up), false = arrived from a parent
    let mut visited: BTreeSet<(NodeId, bool)> = BTreeSet::new();
    let mut queue: VecDeque<(NodeId, bool)> = VecDeque::from([(x, true)]);
    while let Some((v, up)) = queue.pop_front() {
        if !visited.insert((v, up)) {
            continue;
        }
        let observed = given.contains(&v);
        if v == y && !observed {
            return false;
        }
        if up {
            if !observed {
                queue.extend(dag.parents(v).map(|p| (p, true)));
                queue.extend(dag.children(v).map(|c| (c, false)));
            }
        } else {
            if !observed {
                queue.extend(dag.children(v).map(|c| (c, false)));
            }
            if anc_of_given.contains(&v) {
                queue.extend(dag.parents(v).map(|p| (p, true)));
            }
        }
    }
    true
}

/// Lazy enumeration of acyclic orientations of a graph's undirected edges.
///
/// Orientations are produced in lexicographic order over the sorted undirected
/// edge list, `a -> b` (with `a < b`) before `b -> a`, first edge slowest.
/// After `budget` graphs, one `Err(BudgetExhausted)` is yielded if any
/// extension remains.
pub struct DagExtensions<'g> {
    graph: &'g Pdag,
    undirected: Vec<usize>,
    children: Vec<Vec<usize>>,
    stack: Vec<u8>,
    budget: usize,
    yielded: usize,
    started: bool,
    finished: bool,
}

pub fn consistent_dag_extensions(graph: &Pdag, budget: usize) -> DagExtensions<'_> {
    let mut children = vec![Vec::new(); graph.node_count()];
    for e in graph.edges() {
        if let Some((t, h)) = e.tail_head() {
            children[t.0].push(h.0);
        }
    }
    DagExtensions {
        graph,
        undirected: graph.undirected_edges(),
        children,
        stack: Vec::new(),
        budget: budget.max(1),
        yielded: 0,
        started: false,
        finished: false,
    }
}

impl DagExtensions<'_> {
    fn oriented(&self, depth: usize, choice: u8) -> (usize, usize) {
        let e = &self.graph.edges[self.undirected[depth]];
        if choice == 0 {
            (e.a.0, e.b.0)
        } else {
            (e.b.0, e.a.0)
        }
    }

    fn reaches(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.children.len()];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(self.children[v].iter().copied());
        }
        false
    }

    fn try_push(&mut self, choice: u8) -> bool {
        let (t, h) = self.oriented(self.stack.len(), choice);
        if self.reaches(h, t) {
            return false;
        }
        self.children[t].push(h);
        self.stack.push(choice);
        true
    }

    fn pop(&mut self) -> Option<u8> {
        let choice = self.stack.pop()?;
        let (t, _) = self.oriented(self.stack.len(), choice);
        self.children[t].pop();
        Some(choice)
    }

    fn fill(&mut self) -> bool {
        while self.stack.len() < self.undirected.len() {
            if self.try_push(0) || self.try_push(1) {
                continue;
            }
            if !self.backtrack() {
                return false;
            }
        }
        true
    }

    fn backtrack(&mut self) -> bool {
        loop {
            match self.pop() {
                None => return false,
                Some(0) => {
                    if self.try_push(1) {
                        return true;
                    }
                }
                Some(_) => {}
            }
        }
    }

    fn current(&self) -> Dag {
        let orientations: Vec<(usize, Orientation)> = self
            .stack
            .iter()
            .enumerate()
            .map(|(d, &c)| {
                let o = if c == 0 {
                    Orientation::AtoB
                } else {
                    Orientation::BtoA
                };
                (self.undirected[d], o)
            })
            .collect();
        let mut g = self.graph.clone();
        for (i, o) in orientations {
            g.edges[i].orientation = o;
        }
        Dag(g)
    }
}

impl Iterator for DagExtensions<'_> {
    type Item = Result<Dag>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        let found = if self.started {
            self.backtrack() && self.fill()
        } else {
            self.started = true;
            self.fill()
        };
        if !found {
            self.finished = true;
            return None;
        }
        if self.yielded == self.budget {
            self.finished = true;
            return Some(Err(Error::BudgetExhausted(self.budget)));
        }
        self.yielded += 1;
        Some(Ok(self.current()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::fixtures::G1;

    fn ids(g: &Pdag, names: &[&str]) -> BTreeSet<NodeId> {
        names.iter().map(|n| g.node_by_name(n).unwrap()).collect()
    }

    #[test]
    fn parses_g1_with_implicit_prediction_edges() {
        let g = Pdag::parse(G1).unwrap();
        assert_eq!(g.node_count(), 6);
        assert_eq!(g.edges().len(), 7);
        let yhat = g.prediction();
        for x in ["X1", "X2", "X3"] {
            assert_eq!(g.mark(g.node_by_name(x).unwrap(), yhat), Some(Mark::Out));
        }
    }

    #[test]
    fn degenerate_graph() {
        let g = Pdag::parse("node A kind=sensitive\nnode Yhat kind=prediction\n").unwrap();
        assert_eq!(g.node_count(), 2);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn rejects_invalid_documents() {
        let base = "node A kind=sensitive\nnode X1 kind=feature\nnode Yhat kind=prediction\n";
        assert!(matches!(
            Pdag::parse(&format!("{base}X1 -> X1\n")),
            Err(Error::SelfLoop(_))
        ));
        assert!(matches!(
            Pdag::parse(&format!("{base}A -> X1\nX1 -- A\n")),
            Err(Error::DuplicateEdge(..))
        ));
        assert!(matches!(
            Pdag::parse("node A kind=sensitive\nnode B kind=wizard\n"),
            Err(Error::UnknownNodeKind(_))
        ));
        assert!(matches!(
            Pdag::parse("node X1 kind=feature\nnode Yhat kind=prediction\n"),
            Err(Error::InvalidGraph(_))
        ));
        assert!(matches!(
            Pdag::parse("node A kind=sensitive\nnode X1 kind=feature\n"),
            Err(Error::InvalidGraph(_))
        ));
        assert!(matches!(
            Pdag::parse(&format!(
                "{base}node X2 kind=feature\nA -> X1\nX1 -> X2\nX2 -> A\n"
            )),
            Err(Error::DirectedCycle(_))
        ));
        assert!(matches!(
            Pdag::parse(&format!("{base}Yhat -> X1\n")),
            Err(Error::InvalidGraph(_))
        ));
        assert!(matches!(
            Pdag::parse(&format!("{base}A -> Q\n")),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn collider_examples() {
        let g = Pdag::parse(
            "node A kind=sensitive\nnode X3 kind=feature\nnode X4 kind=feature\nnode X1 kind=feature\nnode X2 kind=feature\nnode Yhat kind=prediction\nA -> X3\nX4 -> X3\nX1 -> X2\n",
        )
        .unwrap();
        let p = Path::from_names(&g, &["A", "X3", "X4"]).unwrap();
        assert!(is_collider(&g, &p, 1).unwrap());
        let p = Path::from_names(&g, &["A", "X3", "Yhat"]).unwrap();
        assert!(!is_collider(&g, &p, 1).unwrap());
        let p = Path::from_names(&g, &["X1", "X2", "Yhat"]).unwrap();
        assert!(!is_collider(&g, &p, 1).unwrap());
        assert!(matches!(
            is_collider(&g, &p, 0),
            Err(Error::PositionOutOfRange { .. })
        ));
        assert!(matches!(
            is_collider(&g, &p, 2),
            Err(Error::PositionOutOfRange { .. })
        ));
    }

    #[test]
    fn collider_on_undirected_edge_is_an_error() {
        let g = Pdag::parse(
            "node A kind=sensitive\nnode X1 kind=feature\nnode Yhat kind=prediction\nA -- X1\n",
        )
        .unwrap();
        let p = Path::from_names(&g, &["A", "X1", "Yhat"]).unwrap();
        assert!(matches!(
            is_collider(&g, &p, 1),
            Err(Error::UndirectedEdge(..))
        ));
        assert!(matches!(
            is_active_path(&g, &p, &BTreeSet::new()),
            Err(Error::UndirectedEdge(..))
        ));
    }

    #[test]
    fn active_path_examples() {
        let g = Pdag::parse(
            "node A kind=sensitive\nnode X3 kind=feature\nnode X4 kind=feature\nnode X1 kind=feature\nnode Yhat kind=prediction\nA -> X3\nX4 -> X3\nA -> X1\n",
        )
        .unwrap();
        let p = Path::from_names(&g, &["A", "X3", "X4"]).unwrap();
        assert!(!is_active_path(&g, &p, &BTreeSet::new()).unwrap());
        assert!(is_active_path(&g, &p, &ids(&g, &["X3"])).unwrap());
        // collider opened by a conditioned descendant
        assert!(is_active_path(&g, &p, &ids(&g, &["Yhat"])).unwrap());
        let p = Path::from_names(&g, &["A", "X1"]).unwrap();
        assert!(is_active_path(&g, &p, &BTreeSet::new()).unwrap());
        let p = Path::from_names(&g, &["A", "X3", "Yhat"]).unwrap();
        assert!(!is_active_path(&g, &p, &ids(&g, &["X3"])).unwrap());
    }

    #[test]
    fn extensions_of_g2_and_triangle() {
        let g2 = Pdag::parse(
            "node A kind=sensitive\nnode X1 kind=feature\nnode X2 kind=feature\nnode Yhat kind=prediction\nA -- X1\nX1 -> X2\n",
        )
        .unwrap();
        let exts: Vec<Dag> = consistent_dag_extensions(&g2, 100)
            .map(|d| d.unwrap())
            .collect();
        assert_eq!(exts.len(), 2);
        let (a, x1) = (g2.sensitive(), g2.node_by_name("X1").unwrap());
        assert_eq!(exts[0].mark(a, x1), Some(Mark::Out));
        assert_eq!(exts[1].mark(a, x1), Some(Mark::In));

        let tri = Pdag::parse(
            "node A kind=sensitive\nnode X1 kind=feature\nnode X2 kind=feature\nnode X3 kind=feature\nnode Yhat kind=prediction\nX1 -- X2\nX2 -- X3\nX3 -- X1\n",
        )
        .unwrap();
        assert_eq!(consistent_dag_extensions(&tri, 100).count(), 6);
    }

    #[test]
    fn fully_directed_graph_extends_to_itself() {
        let g = Pdag::parse(G1).unwrap();
        let exts: Vec<Dag> = consistent_dag_extensions(&g, 1)
            .map(|d| d.unwrap())
            .collect();
        assert_eq!(exts.len(), 1);
        assert_eq!(&*exts[0], &g);
    }

    #[test]
    fn budget_exhaustion_is_distinct() {
        let tri = Pdag::parse(
            "node A kind=sensitive\nnode X1 kind=feature\nnode X2 kind=feature\nnode X3 kind=feature\nnode Yhat kind=prediction\nX1 -- X2\nX2 -- X3\nX3 -- X1\n",
        )
        .unwrap();
        let items: Vec<_> = consistent_dag_extensions(&tri, 4).collect();
        assert_eq!(items.len(), 5);
        assert!(items[..4].iter().all(|r| r.is_ok()));
        assert!(matches!(items[4], Err(Error::BudgetExhausted(4))));
        // exact budget: no error item
        let items: Vec<_> = consistent_dag_extensions(&tri, 6).collect();
        assert_eq!(items.len(), 6);
        assert!(items.iter().all(|r| r.is_ok()));
    }

    #[test]
    fn descendants_in_g1() {
        let g = Pdag::parse(G1).unwrap();
        let d = descendants(&g, g.sensitive());
        assert_eq!(d, ids(&g, &["X1", "X2", "Yhat"]));
        assert!(descendants(&g, g.prediction()).is_empty());
    }

    #[test]
    fn text_round_trip() {
        let g = Pdag::parse(G1).unwrap();
        let again = Pdag::parse(&g.to_text()).unwrap();
        assert_eq!(g, again);
    }
}
