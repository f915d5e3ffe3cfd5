//! Sparse message passing for the GCN with hand-written reverse mode.
//!
//! A [`LocalGraph`] orders its nodes by hop distance from a target, so the
//! rows needed at layer `l` of an `L`-layer model (nodes within `L - l` hops)
//! form a prefix. Full-graph passes use the same code with every prefix equal
//! to the node count.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::gcn::GcnModel;
use crate::graph::{bfs, Edge, EdgeSubset, Graph, NodeId};
use crate::linalg::{dot, Matrix};

pub(crate) struct LocalGraph {
    /// Local index to global node id.
    pub nodes: Vec<NodeId>,
    /// `ring_ends[k]` is the number of local nodes within `k` hops.
    pub ring_ends: Vec<usize>,
    /// Local endpoints of each edge.
    pub pairs: Vec<(usize, usize)>,
    /// Global edge for each local edge.
    pub edges: Vec<Edge>,
    /// Per node: (neighbor, edge index).
    pub incident: Vec<Vec<(usize, usize)>>,
}

impl LocalGraph {
    /// Every node and edge of `graph`, in global order.
    pub fn full(graph: &Graph, layers: usize) -> Self {
        let n = graph.num_nodes();
        let edges: Vec<Edge> = graph.edges().iter().copied().collect();
        let pairs = edges.iter().map(|e| (e.lo(), e.hi())).collect();
        let mut lg = LocalGraph {
            nodes: (0..n).collect(),
            ring_ends: vec![n; layers + 2],
            pairs,
            edges,
            incident: Vec::new(),
        };
        lg.index_incidence();
        lg
    }

    /// The part of `edges` that can influence `target` under a `layers`-deep
    /// model: nodes within `layers + 1` hops (the outermost ring only
    /// contributes to degrees) and every edge touching the inner `layers`
    /// hops.
    pub fn around(target: NodeId, edges: &EdgeSubset, layers: usize) -> Self {
        let mut adjacency: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for e in edges {
            adjacency.entry(e.lo()).or_default().push(e.hi());
            adjacency.entry(e.hi()).or_default().push(e.lo());
        }
        let dist = bfs(target, layers + 1, |v| {
            adjacency.get(&v).into_iter().flatten().copied()
        });
        let mut order: Vec<(usize, NodeId)> = dist.iter().map(|(&v, &d)| (d, v)).collect();
        order.sort_unstable();
        let mut ring_ends = vec![0; layers + 2];
        for &(d, _) in &order {
            for end in ring_ends.iter_mut().skip(d) {
                *end += 1;
            }
        }
        let local: BTreeMap<NodeId, usize> =
            order.iter().enumerate().map(|(i, &(_, v))| (v, i)).collect();
        let mut kept = Vec::new();
        let mut pairs = Vec::new();
        for e in edges {
            let (Some(&a), Some(&b)) = (local.get(&e.lo()), local.get(&e.hi())) else {
                continue;
            };
            if dist[&e.lo()] > layers && dist[&e.hi()] > layers {
                continue;
            }
            kept.push(*e);
            pairs.push((a, b));
        }
        let mut lg = LocalGraph {
            nodes: order.into_iter().map(|(_, v)| v).collect(),
            ring_ends,
            pairs,
            edges: kept,
            incident: Vec::new(),
        };
        lg.index_incidence();
        lg
    }

    fn index_incidence(&mut self) {
        let mut incident = vec![Vec::new(); self.nodes.len()];
        for (k, &(a, b)) in self.pairs.iter().enumerate() {
            incident[a].push((b, k));
            incident[b].push((a, k));
        }
        for list in &mut incident {
            list.sort_unstable();
        }
        self.incident = incident;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Rows computed by layer `l` (1-based) of an `layers`-deep model.
    pub fn rows(&self, layers: usize, l: usize) -> usize {
        self.ring_ends[layers - l]
    }

    pub fn features(&self, graph: &Graph) -> Matrix {
        let x = graph.features();
        let mut out = Matrix::zeros(self.len(), x.cols());
        for (i, &v) in self.nodes.iter().enumerate() {
            out.row_mut(i).copy_from_slice(x.row(v));
        }
        out
    }

    /// Symmetric normalization coefficients for the given edge weights.
    pub fn normalize(&self, weights: &[f64]) -> Norm {
        let mut degree = vec![1.0; self.len()];
        for (&(a, b), &w) in self.pairs.iter().zip(weights) {
            degree[a] += w;
            degree[b] += w;
        }
        let self_coef = degree.iter().map(|d| 1.0 / d).collect();
        let edge_coef = self
            .pairs
            .iter()
            .zip(weights)
            .map(|(&(a, b), &w)| w / libm::sqrt(degree[a] * degree[b]))
            .collect();
        Norm {
            degree,
            self_coef,
            edge_coef,
        }
    }

    fn aggregate(&self, norm: &Norm, h: &Matrix, rows: usize) -> Matrix {
        let mut out = Matrix::zeros(rows, h.cols());
        for i in 0..rows {
            let o = out.row_mut(i);
            let c = norm.self_coef[i];
            for (oj, &hj) in o.iter_mut().zip(h.row(i)) {
                *oj = c * hj;
            }
            for &(j, e) in &self.incident[i] {
                let c = norm.edge_coef[e];
                if c == 0.0 {
                    continue;
                }
                for (oj, &hj) in o.iter_mut().zip(h.row(j)) {
                    *oj += c * hj;
                }
            }
        }
        out
    }
}

pub(crate) struct Norm {
    pub degree: Vec<f64>,
    pub self_coef: Vec<f64>,
    pub edge_coef: Vec<f64>,
}

/// Intermediate values of one forward pass.
pub(crate) struct Trace {
    /// `acts[0]` is the input; `acts[l]` the output of layer `l`.
    pub acts: Vec<Matrix>,
    /// Aggregated inputs `Â H^(l-1)` of each layer.
    pub aggs: Vec<Matrix>,
    pub pre: Vec<Matrix>,
    pub logits: Matrix,
}

pub(crate) fn forward(model: &GcnModel, lg: &LocalGraph, norm: &Norm, x: Matrix) -> Trace {
    let layers = model.num_layers();
    let mut acts = Vec::with_capacity(layers + 1);
    let mut aggs = Vec::with_capacity(layers);
    let mut pre = Vec::with_capacity(layers);
    acts.push(x);
    for (l, (w, b)) in model.layer_weights().iter().zip(model.layer_biases()).enumerate() {
        let rows = lg.rows(layers, l + 1);
        let agg = lg.aggregate(norm, &acts[l], rows);
        let mut s = agg.matmul_rows(w, rows);
        add_bias(&mut s, b);
        let mut h = s.clone();
        for v in h.as_mut_slice() {
            *v = v.max(0.0);
        }
        aggs.push(agg);
        pre.push(s);
        acts.push(h);
    }
    let top = &acts[layers];
    let mut logits = top.matmul_rows(model.classifier(), top.rows());
    add_bias(&mut logits, model.classifier_bias());
    Trace {
        acts,
        aggs,
        pre,
        logits,
    }
}

fn add_bias(m: &mut Matrix, bias: &[f64]) {
    for i in 0..m.rows() {
        for (v, b) in m.row_mut(i).iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut sums = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (s, v) in sums.iter_mut().zip(m.row(i)) {
            *s += v;
        }
    }
    sums
}

pub(crate) struct Grads {
    pub layers: Vec<Matrix>,
    pub layer_biases: Vec<Vec<f64>>,
    pub classifier: Matrix,
    pub classifier_bias: Vec<f64>,
    /// Gradient w.r.t. each edge's normalized coefficient (shared by both
    /// directions) and each self-loop coefficient.
    pub edge_coef: Vec<f64>,
    pub self_coef: Vec<f64>,
}

pub(crate) fn backward(
    model: &GcnModel,
    lg: &LocalGraph,
    norm: &Norm,
    trace: &Trace,
    dlogits: &Matrix,
    want_weights: bool,
    want_coefs: bool,
) -> Grads {
    let layers = model.num_layers();
    let weights = model.layer_weights();
    let classifier = if want_weights {
        trace.acts[layers].t_matmul_rows(dlogits, dlogits.rows())
    } else {
        Matrix::zeros(0, 0)
    };
    let classifier_bias = if want_weights { column_sums(dlogits) } else { Vec::new() };
    let mut d_layers = vec![Matrix::zeros(0, 0); layers];
    let mut d_biases = vec![Vec::new(); layers];
    let mut g_edge = vec![0.0; if want_coefs { lg.pairs.len() } else { 0 }];
    let mut g_self = vec![0.0; if want_coefs { lg.len() } else { 0 }];

    let mut dh = dlogits.matmul_t(model.classifier());
    for l in (1..=layers).rev() {
        let rows = lg.rows(layers, l);
        let mut ds = dh;
        for (d, &s) in ds.as_mut_slice().iter_mut().zip(trace.pre[l - 1].as_slice()) {
            if s <= 0.0 {
                *d = 0.0;
            }
        }
        if want_weights {
            d_layers[l - 1] = trace.aggs[l - 1].t_matmul_rows(&ds, rows);
            d_biases[l - 1] = column_sums(&ds);
        }
        if !want_coefs && l == 1 {
            break;
        }
        let dp = ds.matmul_t(&weights[l - 1]);
        let input = &trace.acts[l - 1];
        if want_coefs {
            for i in 0..rows {
                let dpi = dp.row(i);
                g_self[i] += dot(dpi, input.row(i));
                for &(j, e) in &lg.incident[i] {
                    g_edge[e] += dot(dpi, input.row(j));
                }
            }
        }
        if l == 1 {
            break;
        }
        let mut prev = Matrix::zeros(lg.rows(layers, l - 1), dp.cols());
        for i in 0..rows {
            let dpi = dp.row(i);
            let c = norm.self_coef[i];
            for (p, &g) in prev.row_mut(i).iter_mut().zip(dpi) {
                *p += c * g;
            }
            for &(j, e) in &lg.incident[i] {
                let c = norm.edge_coef[e];
                for (p, &g) in prev.row_mut(j).iter_mut().zip(dpi) {
                    *p += c * g;
                }
            }
        }
        dh = prev;
    }
    Grads {
        layers: d_layers,
        layer_biases: d_biases,
        classifier,
        classifier_bias,
        edge_coef: g_edge,
        self_coef: g_self,
    }
}

impl Grads {
    /// Same order as `GcnModel::parameters`.
    pub fn flat(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .map(Matrix::as_slice)
            .chain(self.layer_biases.iter().map(Vec::as_slice))
            .chain([self.classifier.as_slice(), self.classifier_bias.as_slice()])
    }
}

/// Chain rule from normalized coefficients back to raw edge weights, through
/// the weighted degrees.
pub(crate) fn edge_weight_grads(lg: &LocalGraph, norm: &Norm, grads: &Grads) -> Vec<f64> {
    let mut d_degree: Vec<f64> = (0..lg.len())
        .map(|i| -grads.self_coef[i] * norm.self_coef[i] / norm.degree[i])
        .collect();
    for (e, &(a, b)) in lg.pairs.iter().enumerate() {
        let g = grads.edge_coef[e] * norm.edge_coef[e];
        d_degree[a] -= 0.5 * g / norm.degree[a];
        d_degree[b] -= 0.5 * g / norm.degree[b];
    }
    lg.pairs
        .iter()
        .enumerate()
        .map(|(e, &(a, b))| {
            grads.edge_coef[e] / libm::sqrt(norm.degree[a] * norm.degree[b])
                + d_degree[a]
                + d_degree[b]
        })
        .collect()
}
