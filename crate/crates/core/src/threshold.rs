//! From soft masks to final subgraphs: top-T thresholding, label-flip
//! detection, flip repair and a ground-truth-free threshold search.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::explainer::EdgeMask;
use crate::gcn::{predict_on_subset, GcnModel};
use crate::graph::{EdgeSubset, Graph, NodeId};

#[derive(Debug, Clone, PartialEq)]
pub struct FinalExplanation {
    pub target: NodeId,
    pub final_edges: EdgeSubset,
    pub threshold: usize,
    /// Whether the final edges change the prediction (always false after
    /// repair).
    pub flipped: bool,
    /// Whether the raw top-T set flipped before any repair.
    pub initially_flipped: bool,
    pub repaired: bool,
    pub repair_steps: usize,
}

/// The `t` highest-scored edges; ties resolved by canonical edge order.
pub fn apply_threshold(mask: &EdgeMask, t: usize) -> EdgeSubset {
    mask.ranked().into_iter().take(t).collect()
}

/// Class predicted for `node` on its full receptive field.
pub fn reference_class(model: &GcnModel, graph: &Graph, node: NodeId) -> Result<usize> {
    let field = graph.receptive_field(node, model.num_layers())?;
    Ok(predict_on_subset(model, graph, node, &field.edges)?.class)
}

/// True when `final_edges` make the model predict a different class than
/// the full receptive field does.
pub fn detect_label_flip(
    model: &GcnModel,
    graph: &Graph,
    node: NodeId,
    final_edges: &EdgeSubset,
) -> Result<bool> {
    let reference = reference_class(model, graph, node)?;
    Ok(predict_on_subset(model, graph, node, final_edges)?.class != reference)
}

fn mask_reference(model: &GcnModel, graph: &Graph, mask: &EdgeMask) -> Result<usize> {
    Ok(predict_on_subset(model, graph, mask.target, &mask.field())?.class)
}

/// Top-T subgraph, grown one edge at a time in score order until the
/// prediction matches the one on the whole mask field. The whole field is a
/// fixed point, so the loop ends after at most `|field| - T` steps.
pub fn repair_explanation(
    model: &GcnModel,
    graph: &Graph,
    mask: &EdgeMask,
    t: usize,
) -> Result<FinalExplanation> {
    let reference = mask_reference(model, graph, mask)?;
    let ranked = mask.ranked();
    let mut kept = t.min(ranked.len());
    let mut edges: EdgeSubset = ranked[..kept].iter().copied().collect();
    let flips = |edges: &EdgeSubset| -> Result<bool> {
        Ok(predict_on_subset(model, graph, mask.target, edges)?.class != reference)
    };
    let initially_flipped = flips(&edges)?;
    let mut flipped = initially_flipped;
    while flipped && kept < ranked.len() {
        edges.insert(ranked[kept]);
        kept += 1;
        flipped = flips(&edges)?;
    }
    let repair_steps = kept - t.min(ranked.len());
    Ok(FinalExplanation {
        target: mask.target,
        final_edges: edges,
        threshold: t,
        flipped,
        initially_flipped,
        repaired: repair_steps > 0,
        repair_steps,
    })
}

/// Fraction of masks whose raw top-T subgraph flips the prediction.
pub fn flip_rate(model: &GcnModel, graph: &Graph, masks: &[EdgeMask], t: usize) -> Result<f64> {
    if masks.is_empty() {
        return Err(Error::domain("flip rate over an empty mask list"));
    }
    let mut flips = 0usize;
    for mask in masks {
        let reference = mask_reference(model, graph, mask)?;
        let top = apply_threshold(mask, t);
        if predict_on_subset(model, graph, mask.target, &top)?.class != reference {
            flips += 1;
        }
    }
    Ok(flips as f64 / masks.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub threshold: usize,
    pub fidelity: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch {
    pub best: usize,
    pub median_field_size: f64,
    pub points: Vec<GridPoint>,
}

/// Median of the mask sizes (mean of the middle pair for even counts).
pub fn median_field_size(masks: &[EdgeMask]) -> f64 {
    let mut sizes: Vec<usize> = masks.iter().map(EdgeMask::len).collect();
    sizes.sort_unstable();
    match sizes.len() {
        0 => 0.0,
        n if n % 2 == 1 => sizes[n / 2] as f64,
        n => (sizes[n / 2 - 1] + sizes[n / 2]) as f64 / 2.0,
    }
}

/// Picks `T* = argmax_T [(1 - flip_rate(T)) - gamma * T / median_field_size]`
/// over `grid`, smallest T on ties. Only model predictions are consulted;
/// ground-truth explanations never enter.
pub fn grid_search_threshold(
    model: &GcnModel,
    graph: &Graph,
    masks: &[EdgeMask],
    grid: &[usize],
    gamma: f64,
) -> Result<GridSearch> {
    if grid.is_empty() {
        return Err(Error::domain("threshold grid is empty"));
    }
    let median = median_field_size(masks);
    let scale = if median > 0.0 { median } else { 1.0 };
    let mut sorted = grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut points = Vec::with_capacity(sorted.len());
    for &t in &sorted {
        let fidelity = 1.0 - flip_rate(model, graph, masks, t)?;
        points.push(GridPoint {
            threshold: t,
            fidelity,
            objective: fidelity - gamma * t as f64 / scale,
        });
    }
    let mut best = points[0];
    for p in &points[1..] {
        if p.objective > best.objective {
            best = *p;
        }
    }
    Ok(GridSearch {
        best: best.threshold,
        median_field_size: median,
        points,
    })
}
