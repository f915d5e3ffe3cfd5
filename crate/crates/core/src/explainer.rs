//! Soft edge-mask explanations and the trivial baselines they are compared
//! against.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gcn::{predict_on_subset, GcnModel, MaskLoss, MaskProblem};
use crate::graph::{Edge, EdgeSubset, Graph, NodeId};
use crate::linalg::sigmoid;
use crate::optim::{self, Optimizer};

/// Importance scores in [0, 1] over a target node's receptive-field edges.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMask {
    pub target: NodeId,
    pub scores: BTreeMap<Edge, f64>,
}

impl EdgeMask {
    pub fn new(target: NodeId, scores: BTreeMap<Edge, f64>) -> Result<Self> {
        if let Some((e, s)) = scores.iter().find(|(_, s)| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Domain(alloc::format!("score {s} of edge {e} outside [0, 1]")));
        }
        Ok(EdgeMask { target, scores })
    }

    pub fn field(&self) -> EdgeSubset {
        self.scores.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Field edges from most to least important; ties keep canonical edge
    /// order.
    pub fn ranked(&self) -> Vec<Edge> {
        let mut edges: Vec<(Edge, f64)> = self.scores.iter().map(|(&e, &s)| (e, s)).collect();
        // stable sort keeps canonical order among equal scores
        edges.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(core::cmp::Ordering::Equal));
        edges.into_iter().map(|(e, _)| e).collect()
    }
}

/// Anything that maps a (model, graph, node) triple to an edge mask.
pub trait Explainer {
    fn name(&self) -> &str;

    fn explain(&self, model: &GcnModel, graph: &Graph, node: NodeId) -> Result<EdgeMask>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight of the mask-size penalty `sum s_e`.
    pub size_coeff: f64,
    /// Weight of the per-edge binary-entropy penalty `sum H(s_e)`.
    pub entropy_coeff: f64,
    pub init_logit: f64,
    /// Half-width of the uniform noise added to `init_logit`.
    pub init_noise: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            epochs: 300,
            learning_rate: 0.01,
            size_coeff: 0.01,
            entropy_coeff: 0.01,
            init_logit: 0.0,
            init_noise: 0.1,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.size_coeff >= 0.0 && self.entropy_coeff >= 0.0) {
            return Err(Error::domain("regularization coefficients must be >= 0"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("learning_rate must be finite and >= 0"));
        }
        if !(self.init_noise >= 0.0 && self.init_logit.is_finite()) {
            return Err(Error::domain("bad mask initialization"));
        }
        Ok(())
    }
}

/// Mask optimization result with the objective seen at each epoch.
#[derive(Debug, Clone)]
pub struct Explanation {
    pub mask: EdgeMask,
    /// Class the mask is optimized to preserve (the full-field prediction).
    pub target_class: usize,
    pub objective: Vec<f64>,
}

/// Gradient-based edge-mask explainer.
///
/// Minimizes cross-entropy of the model's own full-field prediction under the
/// sigmoid-weighted field, plus size and entropy penalties on the mask.
pub fn explain(
    model: &GcnModel,
    graph: &Graph,
    node: NodeId,
    config: &ExplainConfig,
) -> Result<Explanation> {
    config.validate()?;
    let field = graph.receptive_field(node, model.num_layers())?;
    if field.edges.is_empty() {
        return Err(Error::EmptyField(node));
    }
    let target_class = predict_on_subset(model, graph, node, &field.edges)?.class;
    let loss = MaskLoss {
        target_class,
        size_coeff: config.size_coeff,
        entropy_coeff: config.entropy_coeff,
    };
    let problem = MaskProblem::new(model, graph, node, &field.edges, loss)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(node as u64);
    let mut logits: Vec<f64> = problem
        .edges()
        .iter()
        .map(|_| {
            let noise = if config.init_noise > 0.0 {
                rng.gen_range(-config.init_noise..=config.init_noise)
            } else {
                0.0
            };
            config.init_logit + noise
        })
        .collect();

    let mut state = optim::State::new(config.optimizer, [logits.len()]);
    let mut objective = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let (value, grad) = problem.value_and_gradient(&logits);
        objective.push(value);
        state.advance();
        state.update(0, &mut logits, grad.into_iter(), config.learning_rate);
    }

    let scores = problem
        .edges()
        .iter()
        .zip(&logits)
        .map(|(&e, &m)| (e, sigmoid(m)))
        .collect();
    Ok(Explanation {
        mask: EdgeMask { target: node, scores },
        target_class,
        objective,
    })
}

#[derive(Debug, Clone, Default)]
pub struct SoftMaskExplainer {
    pub config: ExplainConfig,
}

impl Explainer for SoftMaskExplainer {
    fn name(&self) -> &str {
        "soft-mask"
    }

    fn explain(&self, model: &GcnModel, graph: &Graph, node: NodeId) -> Result<EdgeMask> {
        explain(model, graph, node, &self.config).map(|x| x.mask)
    }
}

/// Every receptive-field edge scored 1.
pub fn baseline_full_field(graph: &Graph, node: NodeId, hops: usize) -> Result<EdgeMask> {
    let field = graph.receptive_field(node, hops)?;
    Ok(EdgeMask {
        target: node,
        scores: field.edges.iter().map(|&e| (e, 1.0)).collect(),
    })
}

/// Ground-truth edges scored 1 and the rest of the receptive field 0.
pub fn baseline_ground_truth(graph: &Graph, node: NodeId, hops: usize) -> Result<EdgeMask> {
    let field = graph.receptive_field(node, hops)?;
    let gt = graph
        .gt_explanation(node)
        .ok_or_else(|| Error::Domain(alloc::format!("node {node} has no ground-truth explanation")))?;
    let mut scores: BTreeMap<Edge, f64> = field.edges.iter().map(|&e| (e, 0.0)).collect();
    for &e in gt {
        scores.insert(e, 1.0);
    }
    Ok(EdgeMask { target: node, scores })
}

#[derive(Debug, Clone, Copy)]
pub struct FullFieldBaseline;

impl Explainer for FullFieldBaseline {
    fn name(&self) -> &str {
        "receptive-field"
    }

    fn explain(&self, model: &GcnModel, graph: &Graph, node: NodeId) -> Result<EdgeMask> {
        baseline_full_field(graph, node, model.num_layers())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GroundTruthBaseline;

impl Explainer for GroundTruthBaseline {
    fn name(&self) -> &str {
        "ground-truth"
    }

    fn explain(&self, model: &GcnModel, graph: &Graph, node: NodeId) -> Result<EdgeMask> {
        baseline_ground_truth(graph, node, model.num_layers())
    }
}
