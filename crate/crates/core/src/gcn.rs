//! Vanilla graph convolutional network for node classification.
//!
//! Each layer computes `relu(D^-1/2 (A + I) D^-1/2 H W)` and a linear
//! classifier maps the last layer's node states to class logits. Gradients
//! are hand-derived: with respect to the weights for training, and with
//! respect to per-edge mask logits for the explainer.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeSubset, Graph, NodeId};
use crate::linalg::{argmax, sigmoid, softmax, Matrix};
use crate::optim;
pub use crate::optim::Optimizer;
use crate::propagate::{self, LocalGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    layer_weights: Vec<Matrix>,
    layer_biases: Vec<Vec<f64>>,
    classifier: Matrix,
    classifier_bias: Vec<f64>,
}

impl GcnModel {
    /// Checks that the layer shapes chain into the classifier and that every
    /// bias matches its layer's output width.
    pub fn new(
        layer_weights: Vec<Matrix>,
        layer_biases: Vec<Vec<f64>>,
        classifier: Matrix,
        classifier_bias: Vec<f64>,
    ) -> Result<Self> {
        if layer_weights.is_empty() {
            return Err(Error::domain("a GCN needs at least one layer"));
        }
        if layer_biases.len() != layer_weights.len()
            || layer_biases.iter().zip(&layer_weights).any(|(b, w)| b.len() != w.cols())
            || classifier_bias.len() != classifier.cols()
        {
            return Err(Error::domain("bias widths must match layer outputs"));
        }
        for pair in layer_weights.windows(2) {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::DimensionMismatch {
                    expected: (pair[0].cols(), pair[1].cols()),
                    found: pair[1].shape(),
                });
            }
        }
        let last = layer_weights.last().expect("nonempty").cols();
        if classifier.rows() != last {
            return Err(Error::DimensionMismatch {
                expected: (last, classifier.cols()),
                found: classifier.shape(),
            });
        }
        if classifier.cols() == 0 {
            return Err(Error::domain("a GCN needs at least one class"));
        }
        Ok(GcnModel {
            layer_weights,
            layer_biases,
            classifier,
            classifier_bias,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(dims: &[usize], class_count: usize, rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::domain("need an input and at least one layer width"));
        }
        let mut glorot = |rows: usize, cols: usize| {
            let bound = libm::sqrt(6.0 / (rows + cols) as f64);
            let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
            Matrix::from_vec(rows, cols, data).expect("sized")
        };
        let layers = dims.windows(2).map(|w| glorot(w[0], w[1])).collect();
        let classifier = glorot(*dims.last().expect("len >= 2"), class_count);
        let biases = dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        GcnModel::new(layers, biases, classifier, vec![0.0; class_count])
    }

    /// All weights and biases zero; predicts the uniform distribution.
    pub fn zeros(dims: &[usize], class_count: usize) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::domain("need an input and at least one layer width"));
        }
        let layers = dims.windows(2).map(|w| Matrix::zeros(w[0], w[1])).collect();
        let biases = dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        let last = *dims.last().expect("len >= 2");
        GcnModel::new(layers, biases, Matrix::zeros(last, class_count), vec![0.0; class_count])
    }

    pub fn num_layers(&self) -> usize {
        self.layer_weights.len()
    }

    pub fn class_count(&self) -> usize {
        self.classifier.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_weights[0].rows()
    }

    /// Input width followed by each layer's output width.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layer_weights.iter().map(Matrix::cols));
        dims
    }

    pub fn layer_weights(&self) -> &[Matrix] {
        &self.layer_weights
    }

    pub fn layer_biases(&self) -> &[Vec<f64>] {
        &self.layer_biases
    }

    pub fn classifier(&self) -> &Matrix {
        &self.classifier
    }

    pub fn classifier_bias(&self) -> &[f64] {
        &self.classifier_bias
    }

    fn check_input(&self, graph: &Graph) -> Result<()> {
        if graph.feature_dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: (graph.num_nodes(), self.input_dim()),
                found: graph.features().shape(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub probs: Matrix,
    pub logits: Matrix,
}

/// Dense forward pass over a precomputed normalized adjacency.
pub fn forward(model: &GcnModel, adj_norm: &Matrix, features: &Matrix) -> Result<Output> {
    let n = features.rows();
    if adj_norm.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: (n, n),
            found: adj_norm.shape(),
        });
    }
    let mut h = features.clone();
    for (w, b) in model.layer_weights.iter().zip(&model.layer_biases) {
        h = adj_norm.matmul(&h)?.matmul(w)?;
        for i in 0..h.rows() {
            for (v, bj) in h.row_mut(i).iter_mut().zip(b) {
                *v = (*v + bj).max(0.0);
            }
        }
    }
    let mut logits = h.matmul(&model.classifier)?;
    for i in 0..logits.rows() {
        for (v, bj) in logits.row_mut(i).iter_mut().zip(&model.classifier_bias) {
            *v += bj;
        }
    }
    Ok(Output {
        probs: softmax_rows(&logits),
        logits,
    })
}

/// Sparse forward pass over the whole graph.
pub fn forward_graph(model: &GcnModel, graph: &Graph) -> Result<Output> {
    model.check_input(graph)?;
    let lg = LocalGraph::full(graph, model.num_layers());
    let norm = lg.normalize(&vec![1.0; lg.pairs.len()]);
    let trace = propagate::forward(model, &lg, &norm, graph.features().clone());
    Ok(Output {
        probs: softmax_rows(&trace.logits),
        logits: trace.logits,
    })
}

fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut probs = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        probs.row_mut(i).copy_from_slice(&softmax(logits.row(i)));
    }
    probs
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probs: Vec<f64>,
}

/// Prediction for `node` when only `kept_edges` are present (self-loops are
/// always kept).
pub fn predict_on_subset(
    model: &GcnModel,
    graph: &Graph,
    node: NodeId,
    kept_edges: &EdgeSubset,
) -> Result<Prediction> {
    graph.check_node(node)?;
    model.check_input(graph)?;
    if let Some(e) = kept_edges.iter().find(|e| !graph.edges().contains(e)) {
        return Err(Error::domain(format!("kept edge {e} is not in the graph")));
    }
    let lg = LocalGraph::around(node, kept_edges, model.num_layers());
    let norm = lg.normalize(&vec![1.0; lg.pairs.len()]);
    let trace = propagate::forward(model, &lg, &norm, lg.features(graph));
    let probs = softmax(trace.logits.row(0));
    Ok(Prediction {
        class: argmax(&probs),
        probs,
    })
}

/// Which class the mask objective keeps, and the regularizer weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskLoss {
    pub target_class: usize,
    /// Weight of `sum sigmoid(m_e)`.
    pub size_coeff: f64,
    /// Weight of `sum H(sigmoid(m_e))`, the binary entropy of each mask value.
    pub entropy_coeff: f64,
}

/// Explainer objective over the mask logits of a fixed edge field:
///
/// `-ln p(target_class | masked field) + size * sum s_e + ent * sum H(s_e)`
/// with `s_e = sigmoid(m_e)` weighting edge `e` on both directions.
pub struct MaskProblem<'a> {
    model: &'a GcnModel,
    loss: MaskLoss,
    field: Vec<Edge>,
    lg: LocalGraph,
    /// Position in `field` of each local edge.
    field_index: Vec<usize>,
    x: Matrix,
}

impl<'a> MaskProblem<'a> {
    pub fn new(
        model: &'a GcnModel,
        graph: &Graph,
        node: NodeId,
        field: &EdgeSubset,
        loss: MaskLoss,
    ) -> Result<Self> {
        graph.check_node(node)?;
        model.check_input(graph)?;
        if loss.target_class >= model.class_count() {
            return Err(Error::domain(format!("class {} out of range", loss.target_class)));
        }
        if let Some(e) = field.iter().find(|e| !graph.edges().contains(e)) {
            return Err(Error::domain(format!("field edge {e} is not in the graph")));
        }
        let lg = LocalGraph::around(node, field, model.num_layers());
        let order: BTreeMap<Edge, usize> = field.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let field_index = lg.edges.iter().map(|e| order[e]).collect();
        let x = lg.features(graph);
        Ok(MaskProblem {
            model,
            loss,
            field: field.iter().copied().collect(),
            lg,
            field_index,
            x,
        })
    }

    /// Field edges in canonical order; logits are indexed the same way.
    pub fn edges(&self) -> &[Edge] {
        &self.field
    }

    fn local_weights(&self, logits: &[f64]) -> Vec<f64> {
        self.field_index.iter().map(|&k| sigmoid(logits[k])).collect()
    }

    fn regularizer(&self, logits: &[f64]) -> f64 {
        logits
            .iter()
            .map(|&m| {
                self.loss.size_coeff * sigmoid(m) + self.loss.entropy_coeff * binary_entropy(m)
            })
            .sum()
    }

    /// Class probabilities of the target under the soft mask.
    pub fn probs(&self, logits: &[f64]) -> Vec<f64> {
        let norm = self.lg.normalize(&self.local_weights(logits));
        let trace = propagate::forward(self.model, &self.lg, &norm, self.x.clone());
        softmax(trace.logits.row(0))
    }

    pub fn objective(&self, logits: &[f64]) -> f64 {
        let probs = self.probs(logits);
        -libm::log(probs[self.loss.target_class]) + self.regularizer(logits)
    }

    /// Objective value and its gradient with respect to every field logit.
    pub fn value_and_gradient(&self, logits: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(logits.len(), self.field.len(), "one logit per field edge");
        let weights = self.local_weights(logits);
        let norm = self.lg.normalize(&weights);
        let trace = propagate::forward(self.model, &self.lg, &norm, self.x.clone());
        let row = trace.logits.row(0);
        let probs = softmax(row);
        let c = self.loss.target_class;
        let value = log_sum_exp(row) - row[c] + self.regularizer(logits);

        let mut dlogits = Matrix::zeros(1, probs.len());
        for (k, &p) in probs.iter().enumerate() {
            dlogits[(0, k)] = p - if k == c { 1.0 } else { 0.0 };
        }
        let grads = propagate::backward(self.model, &self.lg, &norm, &trace, &dlogits, false, true);
        let dw = propagate::edge_weight_grads(&self.lg, &norm, &grads);

        let mut grad: Vec<f64> = logits
            .iter()
            .map(|&m| {
                let s = sigmoid(m);
                let ds = s * (1.0 - s);
                self.loss.size_coeff * ds - self.loss.entropy_coeff * m * ds
            })
            .collect();
        for (local, &k) in self.field_index.iter().enumerate() {
            let s = weights[local];
            grad[k] += dw[local] * s * (1.0 - s);
        }
        (value, grad)
    }
}

/// Binary entropy (nats) of `sigmoid(m)`, computed from the logit.
fn binary_entropy(m: f64) -> f64 {
    let p = sigmoid(m);
    p * softplus(-m) + (1.0 - p) * softplus(m)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-libm::fabs(x)))
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(row.iter().map(|&z| libm::exp(z - max)).sum::<f64>())
}

/// Gradient of the mask objective at `mask_logits`, which must be defined on
/// exactly the `field` edges.
pub fn mask_gradient(
    model: &GcnModel,
    graph: &Graph,
    node: NodeId,
    field: &EdgeSubset,
    mask_logits: &BTreeMap<Edge, f64>,
    loss: MaskLoss,
) -> Result<BTreeMap<Edge, f64>> {
    if let Some(e) = mask_logits.keys().find(|e| !field.contains(e)) {
        return Err(Error::domain(format!("mask logit for edge {e} outside the field")));
    }
    if mask_logits.len() != field.len() {
        return Err(Error::domain("every field edge needs a mask logit"));
    }
    let problem = MaskProblem::new(model, graph, node, field, loss)?;
    let logits: Vec<f64> = mask_logits.values().copied().collect();
    let (_, grad) = problem.value_and_gradient(&logits);
    Ok(problem.edges().iter().copied().zip(grad).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub train_fraction: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}


impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dim: 20,
            num_layers: 3,
            epochs: 2000,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            train_fraction: 0.8,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The split `train` draws for these labels.
    pub fn split(&self, labels: &[usize]) -> Split {
        self.split_with_rng(labels).0
    }

    fn split_with_rng(&self, labels: &[usize]) -> (Split, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let split = Split::stratified(labels, self.train_fraction, &mut rng);
        (split, rng)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.num_layers == 0 {
            return Err(Error::domain("hidden_dim and num_layers must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("learning_rate must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::domain("weight_decay must be >= 0"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::domain("train_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<NodeId>,
    pub test: Vec<NodeId>,
}

impl Split {
    /// Seeded split that keeps `fraction` of each class (at least one node)
    /// for training. Both lists are sorted.
    pub fn stratified(labels: &[usize], fraction: f64, rng: &mut impl Rng) -> Split {
        let mut by_class: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
        for (v, &l) in labels.iter().enumerate() {
            by_class.entry(l).or_default().push(v);
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (_, mut nodes) in by_class {
            nodes.shuffle(rng);
            let k = (libm::round(fraction * nodes.len() as f64) as usize).clamp(1, nodes.len());
            train.extend_from_slice(&nodes[..k]);
            test.extend_from_slice(&nodes[k..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Split { train, test }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: GcnModel,
    pub split: Split,
    /// Loss and accuracy seen by each epoch's forward pass, before its update.
    pub history: Vec<EpochStats>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// Full-batch supervised training on the labelled graph.
pub fn train(graph: &Graph, config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    let k = graph.class_count();
    if k == 0 {
        return Err(Error::domain("graph has no labelled nodes"));
    }
    let (split, mut rng) = config.split_with_rng(graph.labels());
    let mut dims = vec![graph.feature_dim()];
    dims.extend(core::iter::repeat_n(config.hidden_dim, config.num_layers));
    let mut model = GcnModel::init(&dims, k, &mut rng)?;

    let lg = LocalGraph::full(graph, model.num_layers());
    let norm = lg.normalize(&vec![1.0; lg.pairs.len()]);
    let mut opt = optim::State::new(config.optimizer, model.parameters().map(<[f64]>::len));
    let mut history = Vec::with_capacity(config.epochs);
    let scale = 1.0 / split.train.len() as f64;

    for epoch in 0..config.epochs {
        let trace = propagate::forward(&model, &lg, &norm, graph.features().clone());
        let mut dlogits = Matrix::zeros(graph.num_nodes(), k);
        let mut loss = 0.0;
        let mut correct = 0usize;
        for &v in &split.train {
            let row = trace.logits.row(v);
            let y = graph.labels()[v];
            loss += log_sum_exp(row) - row[y];
            let probs = softmax(row);
            if argmax(&probs) == y {
                correct += 1;
            }
            for (c, p) in probs.into_iter().enumerate() {
                dlogits[(v, c)] = scale * (p - if c == y { 1.0 } else { 0.0 });
            }
        }
        loss *= scale;
        loss += 0.5 * config.weight_decay * squared_norm(&model);
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(EpochStats {
            loss,
            train_accuracy: correct as f64 * scale,
        });
        let grads = propagate::backward(&model, &lg, &norm, &trace, &dlogits, true, false);
        apply_step(&mut opt, &mut model, grads, config);
    }

    let out = forward_graph(&model, graph)?;
    let accuracy = |nodes: &[NodeId]| {
        let hits = nodes
            .iter()
            .filter(|&&v| argmax(out.probs.row(v)) == graph.labels()[v])
            .count();
        hits as f64 / nodes.len() as f64
    };
    let train_accuracy = accuracy(&split.train);
    let test_accuracy = (!split.test.is_empty()).then(|| accuracy(&split.test));
    Ok(Trained {
        model,
        split,
        history,
        train_accuracy,
        test_accuracy,
    })
}

fn squared_norm(model: &GcnModel) -> f64 {
    model
        .layer_weights
        .iter()
        .chain([&model.classifier])
        .flat_map(|m| m.iter())
        .map(|w| w * w)
        .sum()
}

impl GcnModel {
    /// Weight matrices, then layer biases, then classifier weights and bias.
    fn parameters(&self) -> impl Iterator<Item = &[f64]> {
        self.layer_weights
            .iter()
            .map(Matrix::as_slice)
            .chain(self.layer_biases.iter().map(Vec::as_slice))
            .chain([self.classifier.as_slice(), self.classifier_bias.as_slice()])
    }

    fn parameters_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layer_weights
            .iter_mut()
            .map(Matrix::as_mut_slice)
            .chain(self.layer_biases.iter_mut().map(Vec::as_mut_slice))
            .chain([self.classifier.as_mut_slice(), self.classifier_bias.as_mut_slice()])
    }
}

/// Weight decay applies to weight matrices only, not biases.
fn apply_step(state: &mut optim::State, model: &mut GcnModel, grads: propagate::Grads, config: &TrainConfig) {
    let lr = config.learning_rate;
    state.advance();
    let layers = model.layer_weights.len();
    for (k, (w, g)) in model.parameters_mut().zip(grads.flat()).enumerate() {
        let decay = if k < layers || k == 2 * layers { config.weight_decay } else { 0.0 };
        let decayed = g.iter().zip(w.iter()).map(|(&gi, &wi)| gi + decay * wi).collect::<Vec<_>>();
        state.update(k, w, decayed.into_iter(), lr);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    fn small_graph() -> Graph {
        let pairs = [(0, 1), (1, 2), (2, 3), (3, 0), (2, 4), (4, 5), (5, 6), (1, 6)];
        let edges = pairs.iter().map(|&(a, b)| Edge::new(a, b)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let feats: Vec<f64> = (0..7 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Graph::new(
            7,
            edges,
            Matrix::from_vec(7, 3, feats).unwrap(),
            vec![0, 1, 2, 0, 1, 2, 0],
            None,
            BTreeMap::new(),
        )
        .unwrap()
    }

    fn random_model(rng: &mut ChaCha8Rng) -> GcnModel {
        let mut m = GcnModel::init(&[3, 4, 4], 3, rng).unwrap();
        for p in m.parameters_mut() {
            for w in p {
                *w = rng.gen_range(-1.0..1.0);
            }
        }
        m
    }

    fn loss(model: &GcnModel, graph: &Graph) -> f64 {
        let out = forward_graph(model, graph).unwrap();
        (0..graph.num_nodes())
            .map(|v| {
                let row = out.logits.row(v);
                log_sum_exp(row) - row[graph.labels()[v]]
            })
            .sum()
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let graph = small_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = random_model(&mut rng);
        let lg = LocalGraph::full(&graph, model.num_layers());
        let norm = lg.normalize(&vec![1.0; lg.pairs.len()]);
        let trace = propagate::forward(&model, &lg, &norm, graph.features().clone());
        let mut dlogits = Matrix::zeros(graph.num_nodes(), 3);
        for v in 0..graph.num_nodes() {
            let probs = softmax(trace.logits.row(v));
            for (c, p) in probs.into_iter().enumerate() {
                dlogits[(v, c)] = p - if c == graph.labels()[v] { 1.0 } else { 0.0 };
            }
        }
        let grads = propagate::backward(&model, &lg, &norm, &trace, &dlogits, true, false);
        let analytic: Vec<f64> = grads.flat().flat_map(|g| g.to_vec()).collect();

        let h = 1e-6;
        let mut k = 0;
        let blocks: Vec<usize> = model.parameters().map(<[f64]>::len).collect();
        for (b, &len) in blocks.iter().enumerate() {
            for i in 0..len {
                let mut plus = model.clone();
                plus.parameters_mut().nth(b).unwrap()[i] += h;
                let mut minus = model.clone();
                minus.parameters_mut().nth(b).unwrap()[i] -= h;
                let fd = (loss(&plus, &graph) - loss(&minus, &graph)) / (2.0 * h);
                let err = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-6);
                assert!(err < 1e-5, "block {b} index {i}: fd {fd} analytic {}", analytic[k]);
                k += 1;
            }
        }
    }
}
