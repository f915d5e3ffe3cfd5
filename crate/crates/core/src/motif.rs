//! Motif search for ground-truth explanations.
//!
//! A planted motif is not necessarily what the model relies on. Candidate
//! edge sets around a target node are scored by the entropy of the model's
//! prediction on them and by whether they preserve the full-field
//! prediction; the lowest-entropy preserving candidate becomes the ground
//! truth.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::gcn::{predict_on_subset, GcnModel};
use crate::graph::{Edge, EdgeSubset, Graph, NodeId, Role};
use crate::metrics::{aggregate, entropy, MetricSummary};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    /// A named sub-structure of the node's own motif.
    Named(String),
    Enumerated,
    /// Fallback when no candidate preserves the prediction.
    ReceptiveField,
}

impl Origin {
    pub fn label(&self) -> &str {
        match self {
            Origin::Named(name) => name,
            Origin::Enumerated => "enumerated",
            Origin::ReceptiveField => "receptive-field",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotifCandidate {
    pub edges: EdgeSubset,
    pub origin: Origin,
}

impl MotifCandidate {
    fn named(name: impl Into<String>, edges: EdgeSubset) -> Self {
        MotifCandidate {
            edges,
            origin: Origin::Named(name.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub entropy: f64,
    pub predicted_class: usize,
    /// Prediction under the candidate equals the full-field prediction.
    pub prediction_correct: bool,
    pub size: usize,
}

/// Named sub-motifs of `node`'s planted motif: the whole motif, the roof
/// triangle and base square of a house when they touch the target, one
/// zero-edge candidate per other motif node of a house, and the target alone.
/// Nodes without a motif get no candidates.
pub fn named_candidates(graph: &Graph, node: NodeId) -> Result<Vec<MotifCandidate>> {
    graph.check_node(node)?;
    let Some(gt) = graph.gt_explanation(node) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    match graph.role(node) {
        Some(Role::Top | Role::Shoulder | Role::Bottom) => {
            let role_of = |v: NodeId| graph.role(v).unwrap_or(Role::Base);
            let part = |roles: &[Role]| -> EdgeSubset {
                gt.iter()
                    .filter(|e| roles.contains(&role_of(e.lo())) && roles.contains(&role_of(e.hi())))
                    .copied()
                    .collect()
            };
            out.push(MotifCandidate::named("house", gt.clone()));
            let triangle = part(&[Role::Top, Role::Shoulder]);
            if triangle.iter().any(|e| e.touches(node)) {
                out.push(MotifCandidate::named("triangle", triangle));
            }
            let square = part(&[Role::Shoulder, Role::Bottom]);
            if square.iter().any(|e| e.touches(node)) {
                out.push(MotifCandidate::named("square", square));
            }
            for v in gt.nodes() {
                if v != node {
                    let name = format!("node-{}-{}", role_of(v), v);
                    out.push(MotifCandidate::named(name, EdgeSubset::new()));
                }
            }
        }
        Some(Role::Cycle) => out.push(MotifCandidate::named("cycle", gt.clone())),
        _ => out.push(MotifCandidate::named("motif", gt.clone())),
    }
    out.push(MotifCandidate::named("target", EdgeSubset::new()));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationLimits {
    pub max_edges: usize,
    pub cap: usize,
    /// Keep the first `cap` candidates in canonical order instead of failing.
    pub allow_truncation: bool,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        EnumerationLimits {
            max_edges: 6,
            cap: 10_000,
            allow_truncation: true,
        }
    }
}

/// Every connected edge set of the `hops`-hop field that touches `node` and
/// has at most `max_edges` edges, plus the empty target-only set.
///
/// Candidates come out ordered by size, then canonical edge order; when more
/// than `cap` exist, that order decides which are kept.
pub fn enumerate_candidates(
    graph: &Graph,
    node: NodeId,
    hops: usize,
    limits: EnumerationLimits,
) -> Result<Vec<MotifCandidate>> {
    let field = graph.receptive_field(node, hops)?;
    let mut incident: BTreeMap<NodeId, Vec<Edge>> = BTreeMap::new();
    for &e in &field.edges {
        incident.entry(e.lo()).or_default().push(e);
        incident.entry(e.hi()).or_default().push(e);
    }
    let mut out = alloc::vec![EdgeSubset::new()];
    let mut level: Vec<EdgeSubset> = alloc::vec![EdgeSubset::new()];
    for _ in 0..limits.max_edges {
        if out.len() >= limits.cap {
            break;
        }
        let room = limits.cap - out.len();
        let mut next: BTreeSet<EdgeSubset> = BTreeSet::new();
        let mut overflowed = false;
        for set in &level {
            let mut touched = set.nodes();
            touched.insert(node);
            for v in touched {
                for &e in incident.get(&v).into_iter().flatten() {
                    if set.contains(&e) {
                        continue;
                    }
                    let mut grown = set.clone();
                    grown.insert(e);
                    if next.contains(&grown) {
                        continue;
                    }
                    if next.len() == room && next.last().is_some_and(|last| &grown >= last) {
                        overflowed = true;
                        continue;
                    }
                    if next.insert(grown) && next.len() > room {
                        next.pop_last();
                        overflowed = true;
                    }
                }
            }
        }
        if overflowed && !limits.allow_truncation {
            return Err(Error::Capacity { cap: limits.cap });
        }
        if next.is_empty() {
            break;
        }
        level = next.into_iter().collect();
        out.extend(level.iter().cloned());
    }
    Ok(out
        .into_iter()
        .map(|edges| MotifCandidate {
            edges,
            origin: Origin::Enumerated,
        })
        .collect())
}

/// Entropy of the prediction on `cand` and whether it matches
/// `reference_class`.
pub fn score_candidate(
    model: &GcnModel,
    graph: &Graph,
    node: NodeId,
    cand: &MotifCandidate,
    reference_class: usize,
) -> Result<CandidateScore> {
    let pred = predict_on_subset(model, graph, node, &cand.edges)?;
    Ok(CandidateScore {
        entropy: entropy(&pred.probs)?,
        predicted_class: pred.class,
        prediction_correct: pred.class == reference_class,
        size: cand.edges.len(),
    })
}

pub fn score_candidates(
    model: &GcnModel,
    graph: &Graph,
    node: NodeId,
    candidates: &[MotifCandidate],
) -> Result<Vec<CandidateScore>> {
    let field = graph.receptive_field(node, model.num_layers())?;
    let reference = predict_on_subset(model, graph, node, &field.edges)?.class;
    candidates
        .iter()
        .map(|c| score_candidate(model, graph, node, c, reference))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub candidate: MotifCandidate,
    pub score: Option<CandidateScore>,
    /// False when no candidate preserved the prediction and the receptive
    /// field was returned instead.
    pub found: bool,
}

fn preference(a: &(&MotifCandidate, &CandidateScore), b: &(&MotifCandidate, &CandidateScore)) -> Ordering {
    a.1.entropy
        .total_cmp(&b.1.entropy)
        .then(a.1.size.cmp(&b.1.size))
        .then_with(|| a.0.edges.cmp(&b.0.edges))
        .then_with(|| a.0.origin.cmp(&b.0.origin))
}

/// Lowest-entropy prediction-preserving candidate; ties go to fewer edges,
/// then canonical edge order. Independent of the input order.
pub fn select_from_scored(
    candidates: &[MotifCandidate],
    scores: &[CandidateScore],
    field: &EdgeSubset,
) -> Selection {
    let best = candidates
        .iter()
        .zip(scores)
        .filter(|(_, s)| s.prediction_correct)
        .min_by(preference);
    match best {
        Some((c, s)) => Selection {
            candidate: c.clone(),
            score: Some(*s),
            found: true,
        },
        None => Selection {
            candidate: MotifCandidate {
                edges: field.clone(),
                origin: Origin::ReceptiveField,
            },
            score: None,
            found: false,
        },
    }
}

pub fn select_ground_truth(
    model: &GcnModel,
    graph: &Graph,
    node: NodeId,
    candidates: &[MotifCandidate],
) -> Result<Selection> {
    let scores = score_candidates(model, graph, node, candidates)?;
    let field = graph.receptive_field(node, model.num_layers())?;
    Ok(select_from_scored(candidates, &scores, &field.edges))
}

/// Mean prediction entropy of one node class under the three trivial
/// explanations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineEntropies {
    pub ground_truth: MetricSummary,
    pub receptive_field: MetricSummary,
    pub target_node: MetricSummary,
}

/// Per-role baseline entropies over every node that has a ground-truth
/// explanation. Roles with no such node are omitted.
pub fn baseline_entropy_table(
    model: &GcnModel,
    graph: &Graph,
    class_filter: Option<&[Role]>,
) -> Result<BTreeMap<Role, BaselineEntropies>> {
    let mut values: BTreeMap<Role, [Vec<f64>; 3]> = BTreeMap::new();
    for (&node, gt) in graph.gt_explanations() {
        let Some(role) = graph.role(node) else { continue };
        if class_filter.is_some_and(|f| !f.contains(&role)) {
            continue;
        }
        let field = graph.receptive_field(node, model.num_layers())?;
        let slot = values.entry(role).or_default();
        for (k, edges) in [gt, &field.edges, &EdgeSubset::new()].into_iter().enumerate() {
            let pred = predict_on_subset(model, graph, node, edges)?;
            slot[k].push(entropy(&pred.probs)?);
        }
    }
    values
        .into_iter()
        .map(|(role, [gt, field, target])| {
            Ok((
                role,
                BaselineEntropies {
                    ground_truth: aggregate(&gt)?,
                    receptive_field: aggregate(&field)?,
                    target_node: aggregate(&target)?,
                },
            ))
        })
        .collect()
}
