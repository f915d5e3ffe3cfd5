//! Undirected graph storage, symmetric normalization and receptive fields.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Deref;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub type NodeId = usize;

/// An unordered node pair, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    lo: NodeId,
    hi: NodeId,
}

impl Edge {
    /// Panics on a self-loop; use [`Edge::try_new`] for untrusted input.
    pub fn new(a: NodeId, b: NodeId) -> Self {
        Edge::try_new(a, b).expect("self-loop edge")
    }

    pub fn try_new(a: NodeId, b: NodeId) -> Option<Self> {
        match a.cmp(&b) {
            core::cmp::Ordering::Less => Some(Edge { lo: a, hi: b }),
            core::cmp::Ordering::Greater => Some(Edge { lo: b, hi: a }),
            core::cmp::Ordering::Equal => None,
        }
    }

    pub fn lo(&self) -> NodeId {
        self.lo
    }

    pub fn hi(&self) -> NodeId {
        self.hi
    }

    pub fn touches(&self, node: NodeId) -> bool {
        self.lo == node || self.hi == node
    }

    /// The endpoint that is not `node`.
    pub fn other(&self, node: NodeId) -> NodeId {
        if self.lo == node {
            self.hi
        } else {
            self.lo
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

/// A set of undirected edges in canonical (sorted) order.
///
/// Edge sets compare lexicographically over their sorted edges, which is the
/// canonical order used for deterministic tie-breaking.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeSubset(BTreeSet<Edge>);

impl EdgeSubset {
    pub fn new() -> Self {
        EdgeSubset(BTreeSet::new())
    }

    pub fn insert(&mut self, edge: Edge) -> bool {
        self.0.insert(edge)
    }

    pub fn remove(&mut self, edge: &Edge) -> bool {
        self.0.remove(edge)
    }

    pub fn intersection_len(&self, other: &EdgeSubset) -> usize {
        self.0.intersection(&other.0).count()
    }

    pub fn as_set(&self) -> &BTreeSet<Edge> {
        &self.0
    }

    /// Nodes touched by at least one edge, sorted.
    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.0.iter().flat_map(|e| [e.lo, e.hi]).collect()
    }
}

impl Deref for EdgeSubset {
    type Target = BTreeSet<Edge>;

    fn deref(&self) -> &BTreeSet<Edge> {
        &self.0
    }
}

impl FromIterator<Edge> for EdgeSubset {
    fn from_iter<I: IntoIterator<Item = Edge>>(iter: I) -> Self {
        EdgeSubset(iter.into_iter().collect())
    }
}

impl Extend<Edge> for EdgeSubset {
    fn extend<I: IntoIterator<Item = Edge>>(&mut self, iter: I) {
        self.0.extend(iter)
    }
}

impl<'a> IntoIterator for &'a EdgeSubset {
    type Item = &'a Edge;
    type IntoIter = alloc::collections::btree_set::Iter<'a, Edge>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl IntoIterator for EdgeSubset {
    type Item = Edge;
    type IntoIter = alloc::collections::btree_set::IntoIter<Edge>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

/// Semantic role of a node in the synthetic benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Base,
    Top,
    Shoulder,
    Bottom,
    Tree,
    Cycle,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Base,
        Role::Top,
        Role::Shoulder,
        Role::Bottom,
        Role::Tree,
        Role::Cycle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Base => "base",
            Role::Top => "top",
            Role::Shoulder => "shoulder",
            Role::Bottom => "bottom",
            Role::Tree => "tree",
            Role::Cycle => "cycle",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.as_str() == s)
    }

    pub fn is_motif(&self) -> bool {
        matches!(self, Role::Top | Role::Shoulder | Role::Bottom | Role::Cycle)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Node-classification graph with optional role tags and ground-truth
/// explanation edge sets. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: EdgeSubset,
    features: Matrix,
    labels: Vec<usize>,
    roles: Option<Vec<Role>>,
    gt_explanations: BTreeMap<NodeId, EdgeSubset>,
    neighbors: Vec<Vec<NodeId>>,
}

impl Graph {
    pub fn new(
        num_nodes: usize,
        edges: EdgeSubset,
        features: Matrix,
        labels: Vec<usize>,
        roles: Option<Vec<Role>>,
        gt_explanations: BTreeMap<NodeId, EdgeSubset>,
    ) -> Result<Self> {
        if let Some(e) = edges.iter().find(|e| e.hi >= num_nodes) {
            return Err(Error::domain(format!("edge {e} references a node >= {num_nodes}")));
        }
        if features.rows() != num_nodes {
            return Err(Error::DimensionMismatch {
                expected: (num_nodes, features.cols()),
                found: features.shape(),
            });
        }
        if labels.len() != num_nodes {
            return Err(Error::domain("one label per node required"));
        }
        if roles.as_ref().is_some_and(|r| r.len() != num_nodes) {
            return Err(Error::domain("one role per node required"));
        }
        for (&node, gt) in &gt_explanations {
            if node >= num_nodes {
                return Err(Error::domain(format!("ground truth for unknown node {node}")));
            }
            if !gt.is_subset(&edges) {
                return Err(Error::domain(format!(
                    "ground truth of node {node} is not a subset of the edges"
                )));
            }
        }
        let mut neighbors = vec![Vec::new(); num_nodes];
        for e in &edges {
            neighbors[e.lo].push(e.hi);
            neighbors[e.hi].push(e.lo);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Ok(Graph {
            num_nodes,
            edges,
            features,
            labels,
            roles,
            gt_explanations,
            neighbors,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &EdgeSubset {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Number of classes, taken as `max(label) + 1`.
    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn roles(&self) -> Option<&[Role]> {
        self.roles.as_deref()
    }

    pub fn role(&self, node: NodeId) -> Option<Role> {
        self.roles.as_ref().map(|r| r[node])
    }

    pub fn gt_explanations(&self) -> &BTreeMap<NodeId, EdgeSubset> {
        &self.gt_explanations
    }

    pub fn gt_explanation(&self, node: NodeId) -> Option<&EdgeSubset> {
        self.gt_explanations.get(&node)
    }

    /// Same graph with the ground-truth map replaced.
    pub fn with_gt_explanations(&self, gt: BTreeMap<NodeId, EdgeSubset>) -> Result<Graph> {
        Graph::new(
            self.num_nodes,
            self.edges.clone(),
            self.features.clone(),
            self.labels.clone(),
            self.roles.clone(),
            gt,
        )
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.neighbors[node].len()
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        Edge::try_new(a, b).is_some_and(|e| self.edges.contains(&e))
    }

    pub(crate) fn check_node(&self, node: NodeId) -> Result<()> {
        if node < self.num_nodes {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "node {node} out of range (graph has {} nodes)",
                self.num_nodes
            )))
        }
    }

    /// Shortest-path distances from `source`, up to `max_hops`.
    pub fn distances(&self, source: NodeId, max_hops: usize) -> BTreeMap<NodeId, usize> {
        bfs(source, max_hops, |v| self.neighbors[v].iter().copied())
    }

    /// Dense `D^-1/2 (A + I) D^-1/2`, optionally with per-edge weights in [0, 1]
    /// scaling the off-diagonal entries before the self-loops are added.
    pub fn normalized_adjacency(&self, weights: Option<&BTreeMap<Edge, f64>>) -> Result<Matrix> {
        if let Some(w) = weights {
            for (e, &v) in w {
                if !self.edges.contains(e) {
                    return Err(Error::domain(format!("weight given for non-edge {e}")));
                }
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::domain(format!("weight {v} of edge {e} outside [0, 1]")));
                }
            }
        }
        let n = self.num_nodes;
        let mut a = Matrix::identity(n);
        for e in &self.edges {
            let w = weights.and_then(|w| w.get(e).copied()).unwrap_or(1.0);
            a[(e.lo, e.hi)] = w;
            a[(e.hi, e.lo)] = w;
        }
        let degree: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum::<f64>()).collect();
        for i in 0..n {
            for j in 0..n {
                let v = a[(i, j)];
                if v != 0.0 {
                    a[(i, j)] = v / libm::sqrt(degree[i] * degree[j]);
                }
            }
        }
        Ok(a)
    }

    /// The `hops`-hop neighborhood of `node` and the edges it induces.
    pub fn receptive_field(&self, node: NodeId, hops: usize) -> Result<Field> {
        self.check_node(node)?;
        let dist = self.distances(node, hops);
        let edges = dist
            .keys()
            .flat_map(|&u| {
                self.neighbors[u]
                    .iter()
                    .filter(move |&&v| v > u)
                    .map(move |&v| (u, v))
            })
            .filter(|(_, v)| dist.contains_key(v))
            .map(|(u, v)| Edge::new(u, v))
            .collect();
        Ok(Field {
            target: node,
            nodes: dist.keys().copied().collect(),
            edges,
        })
    }
}

/// A target node's receptive field: nodes within the hop radius and the
/// edges among them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub target: NodeId,
    pub nodes: Vec<NodeId>,
    pub edges: EdgeSubset,
}

pub(crate) fn bfs<I, F>(source: NodeId, max_hops: usize, mut neighbors: F) -> BTreeMap<NodeId, usize>
where
    F: FnMut(NodeId) -> I,
    I: Iterator<Item = NodeId>,
{
    let mut dist = BTreeMap::new();
    dist.insert(source, 0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        if d == max_hops {
            continue;
        }
        for v in neighbors(u) {
            if let alloc::collections::btree_map::Entry::Vacant(slot) = dist.entry(v) {
                slot.insert(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}
