//! Seeded generators for the BA-Shapes and Tree-Cycles node-classification
//! benchmarks.
//!
//! Both generators plant motifs (houses or cycles) on a base graph, attach
//! each motif with a single bridging edge, then sprinkle `floor(f * N)` noise
//! edges between distinct, non-adjacent node pairs. Every motif node gets its
//! own motif's edges as ground-truth explanation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeSubset, Graph, NodeId, Role};
use crate::linalg::Matrix;

pub const LABEL_BASE: usize = 0;
pub const LABEL_TOP: usize = 1;
pub const LABEL_SHOULDER: usize = 2;
pub const LABEL_BOTTOM: usize = 3;
pub const LABEL_TREE: usize = 0;
pub const LABEL_CYCLE: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BaShapesParams {
    pub base_nodes: usize,
    pub num_motifs: usize,
    /// Edges added per new node in the preferential-attachment base graph.
    pub ba_attachment: usize,
    pub noise_fraction: f64,
    pub feature_dim: usize,
    /// Restrict the house side of the bridging edge to bottom nodes.
    pub attach_bottom_only: bool,
    pub seed: u64,
}

impl Default for BaShapesParams {
    fn default() -> Self {
        BaShapesParams {
            base_nodes: 300,
            num_motifs: 80,
            ba_attachment: 5,
            noise_fraction: 0.1,
            feature_dim: 10,
            attach_bottom_only: false,
            seed: 0,
        }
    }
}

impl BaShapesParams {
    pub fn validate(&self) -> Result<()> {
        if self.ba_attachment < 1 {
            return Err(Error::domain("ba_attachment must be >= 1"));
        }
        if self.base_nodes < self.ba_attachment + 1 {
            return Err(Error::domain("base_nodes must be >= ba_attachment + 1"));
        }
        check_common(self.noise_fraction, self.feature_dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeCyclesParams {
    /// Levels below the root; the tree has `2^(levels+1) - 1` nodes.
    pub tree_levels: usize,
    pub num_motifs: usize,
    pub cycle_size: usize,
    pub noise_fraction: f64,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for TreeCyclesParams {
    fn default() -> Self {
        TreeCyclesParams {
            tree_levels: 8,
            num_motifs: 80,
            cycle_size: 6,
            noise_fraction: 0.1,
            feature_dim: 10,
            seed: 0,
        }
    }
}

impl TreeCyclesParams {
    pub fn validate(&self) -> Result<()> {
        if self.tree_levels < 1 {
            return Err(Error::domain("tree_levels must be >= 1"));
        }
        if self.tree_levels >= 30 {
            return Err(Error::domain("tree_levels too large"));
        }
        if self.cycle_size < 3 {
            return Err(Error::domain("cycle_size must be >= 3"));
        }
        check_common(self.noise_fraction, self.feature_dim)
    }
}

fn check_common(noise_fraction: f64, feature_dim: usize) -> Result<()> {
    if !(noise_fraction >= 0.0 && noise_fraction.is_finite()) {
        return Err(Error::domain(format!("noise_fraction {noise_fraction} must be finite and >= 0")));
    }
    if feature_dim == 0 {
        return Err(Error::domain("feature_dim must be >= 1"));
    }
    Ok(())
}

/// A generated benchmark together with construction bookkeeping that the
/// graph alone does not retain.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub graph: Graph,
    /// Node ids of each planted motif, in planting order.
    pub motifs: Vec<Vec<NodeId>>,
    /// One bridging edge per motif.
    pub attachment_edges: Vec<Edge>,
    pub noise_edges: EdgeSubset,
}

struct Builder {
    edges: EdgeSubset,
    labels: Vec<usize>,
    roles: Vec<Role>,
    gt: BTreeMap<NodeId, EdgeSubset>,
    motifs: Vec<Vec<NodeId>>,
    attachment_edges: Vec<Edge>,
}

impl Builder {
    fn add_node(&mut self, label: usize, role: Role) -> NodeId {
        self.labels.push(label);
        self.roles.push(role);
        self.labels.len() - 1
    }

    fn plant(&mut self, nodes: Vec<NodeId>, motif_edges: EdgeSubset, bridge: Edge) {
        for &v in &nodes {
            self.gt.insert(v, motif_edges.clone());
        }
        self.edges.extend(motif_edges.iter().copied());
        self.edges.insert(bridge);
        self.attachment_edges.push(bridge);
        self.motifs.push(nodes);
    }

    fn add_noise(&mut self, fraction: f64, rng: &mut ChaCha8Rng) -> EdgeSubset {
        let n = self.labels.len();
        let wanted = libm::floor(fraction * n as f64) as usize;
        let capacity = n * n.saturating_sub(1) / 2 - self.edges.len();
        let wanted = wanted.min(capacity);
        let mut noise = EdgeSubset::new();
        while noise.len() < wanted {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            let Some(e) = Edge::try_new(a, b) else { continue };
            if self.edges.insert(e) {
                noise.insert(e);
            }
        }
        noise
    }

    fn finish(self, feature_dim: usize, noise_edges: EdgeSubset) -> Result<Benchmark> {
        let n = self.labels.len();
        let graph = Graph::new(
            n,
            self.edges,
            Matrix::filled(n, feature_dim, 1.0),
            self.labels,
            Some(self.roles),
            self.gt,
        )?;
        Ok(Benchmark {
            graph,
            motifs: self.motifs,
            attachment_edges: self.attachment_edges,
            noise_edges,
        })
    }
}

/// Barabási–Albert graph on `n` nodes: a star on the first `m + 1` nodes,
/// then every new node links to `m` distinct existing nodes drawn with
/// probability proportional to degree.
pub fn barabasi_albert(n: usize, m: usize, rng: &mut ChaCha8Rng) -> EdgeSubset {
    let mut edges = EdgeSubset::new();
    if n == 0 || m == 0 {
        return edges;
    }
    // every endpoint occurrence, so uniform draws are degree-proportional
    let mut endpoints: Vec<NodeId> = Vec::new();
    for leaf in 1..=m.min(n - 1) {
        edges.insert(Edge::new(0, leaf));
        endpoints.extend([0, leaf]);
    }
    for v in (m + 1)..n {
        let mut targets: Vec<NodeId> = Vec::with_capacity(m);
        while targets.len() < m {
            let t = *endpoints.choose(rng).expect("seed star has edges");
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for t in targets {
            edges.insert(Edge::new(v, t));
            endpoints.extend([v, t]);
        }
    }
    edges
}

/// BA-Shapes: a preferential-attachment base graph with five-node houses.
///
/// Labels: 0 base, 1 roof apex (top), 2 square-top (shoulder),
/// 3 square-bottom (bottom).
pub fn generate_ba_shapes(params: &BaShapesParams) -> Result<Benchmark> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let base = barabasi_albert(params.base_nodes, params.ba_attachment, &mut rng);
    let mut b = Builder {
        edges: base,
        labels: vec![LABEL_BASE; params.base_nodes],
        roles: vec![Role::Base; params.base_nodes],
        gt: BTreeMap::new(),
        motifs: Vec::new(),
        attachment_edges: Vec::new(),
    };
    for _ in 0..params.num_motifs {
        let top = b.add_node(LABEL_TOP, Role::Top);
        let shoulder_l = b.add_node(LABEL_SHOULDER, Role::Shoulder);
        let shoulder_r = b.add_node(LABEL_SHOULDER, Role::Shoulder);
        let bottom_l = b.add_node(LABEL_BOTTOM, Role::Bottom);
        let bottom_r = b.add_node(LABEL_BOTTOM, Role::Bottom);
        let house: EdgeSubset = [
            Edge::new(top, shoulder_l),
            Edge::new(top, shoulder_r),
            Edge::new(shoulder_l, shoulder_r),
            Edge::new(shoulder_l, bottom_l),
            Edge::new(shoulder_r, bottom_r),
            Edge::new(bottom_l, bottom_r),
        ]
        .into_iter()
        .collect();
        let nodes = vec![top, shoulder_l, shoulder_r, bottom_l, bottom_r];
        let anchor = if params.attach_bottom_only {
            *[bottom_l, bottom_r].choose(&mut rng).expect("two bottoms")
        } else {
            *nodes.choose(&mut rng).expect("five house nodes")
        };
        let base_node = rng.gen_range(0..params.base_nodes);
        b.plant(nodes, house, Edge::new(anchor, base_node));
    }
    let noise = b.add_noise(params.noise_fraction, &mut rng);
    b.finish(params.feature_dim, noise)
}

/// Tree-Cycles: a balanced binary tree with planted simple cycles.
///
/// Labels: 0 tree node, 1 cycle node.
pub fn generate_tree_cycles(params: &TreeCyclesParams) -> Result<Benchmark> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let tree_nodes = (1usize << (params.tree_levels + 1)) - 1;
    let tree: EdgeSubset = (1..tree_nodes).map(|c| Edge::new((c - 1) / 2, c)).collect();
    let mut b = Builder {
        edges: tree,
        labels: vec![LABEL_TREE; tree_nodes],
        roles: vec![Role::Tree; tree_nodes],
        gt: BTreeMap::new(),
        motifs: Vec::new(),
        attachment_edges: Vec::new(),
    };
    for _ in 0..params.num_motifs {
        let nodes: Vec<NodeId> = (0..params.cycle_size)
            .map(|_| b.add_node(LABEL_CYCLE, Role::Cycle))
            .collect();
        let cycle: EdgeSubset = (0..nodes.len())
            .map(|i| Edge::new(nodes[i], nodes[(i + 1) % nodes.len()]))
            .collect();
        let anchor = *nodes.choose(&mut rng).expect("nonempty cycle");
        let tree_node = rng.gen_range(0..tree_nodes);
        b.plant(nodes, cycle, Edge::new(anchor, tree_node));
    }
    let noise = b.add_noise(params.noise_fraction, &mut rng);
    b.finish(params.feature_dim, noise)
}
