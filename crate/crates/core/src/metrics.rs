//! Explanation metrics: prediction entropy, ranking AUCs over edge scores,
//! threshold recall/precision and per-class aggregation.
//!
//! For the AUCs, ground-truth edges are positives, the remaining scored
//! edges are negatives, and mask scores act as classifier outputs.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeSubset};

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> Result<f64> {
    if probs.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::domain("probabilities must be nonnegative"));
    }
    let total: f64 = probs.iter().sum();
    if libm::fabs(total - 1.0) > 1e-6 {
        return Err(Error::domain("probabilities must sum to 1"));
    }
    Ok(-probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * libm::log(p))
        .sum::<f64>())
}

/// Edge scores paired with ground-truth membership for one explanation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredEdges {
    items: Vec<(f64, bool)>,
}

impl ScoredEdges {
    pub fn new(items: Vec<(f64, bool)>) -> Result<Self> {
        if items.iter().any(|(s, _)| s.is_nan()) {
            return Err(Error::domain("edge scores must not be NaN"));
        }
        Ok(ScoredEdges { items })
    }

    /// Every scored edge, labelled by membership in `gt`.
    pub fn from_scores(scores: &BTreeMap<Edge, f64>, gt: &EdgeSubset) -> Result<Self> {
        ScoredEdges::new(scores.iter().map(|(e, &s)| (s, gt.contains(e))).collect())
    }

    pub fn items(&self) -> &[(f64, bool)] {
        &self.items
    }

    pub fn positives(&self) -> usize {
        self.items.iter().filter(|(_, p)| *p).count()
    }

    pub fn negatives(&self) -> usize {
        self.items.len() - self.positives()
    }

    fn sorted_desc(&self) -> Vec<(f64, bool)> {
        let mut v = self.items.clone();
        v.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
        v
    }
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half (Mann–Whitney U / (P * N)).
pub fn roc_auc(scored: &ScoredEdges) -> Result<f64> {
    let pos = scored.positives();
    let neg = scored.negatives();
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("ROC AUC needs a positive and a negative edge"));
    }
    let sorted = scored.sorted_desc();
    // walk tie groups from the top, counting negatives ranked strictly above
    let mut wins = 0.0;
    let mut neg_above = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut p, mut n) = (0usize, 0usize);
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        let below = neg - neg_above - n;
        wins += p as f64 * (below as f64 + 0.5 * n as f64);
        neg_above += n;
        i = j;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// Area under the precision–recall step curve (average precision).
///
/// Each distinct score is one threshold; tied edges enter together. The area
/// is `sum_k (R_k - R_{k-1}) * P_k` with `R_0 = 0`, so the segment from recall
/// zero takes the precision of the first step.
pub fn pr_auc(scored: &ScoredEdges) -> Result<f64> {
    let pos = scored.positives();
    if pos == 0 {
        return Err(Error::UndefinedMetric("PR AUC needs a positive edge"));
    }
    let sorted = scored.sorted_desc();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(area)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallPrecision {
    pub recall: f64,
    pub precision: f64,
    /// Set when the final subgraph is empty and precision was defined as 0.
    pub empty_final: bool,
}

/// Recall and precision of a final subgraph against a ground-truth edge set.
pub fn recall_precision(final_edges: &EdgeSubset, gt: &EdgeSubset) -> Result<RecallPrecision> {
    if gt.is_empty() {
        return Err(Error::UndefinedMetric("recall needs a nonempty ground truth"));
    }
    let hits = final_edges.intersection_len(gt) as f64;
    let empty_final = final_edges.is_empty();
    Ok(RecallPrecision {
        recall: hits / gt.len() as f64,
        precision: if empty_final {
            0.0
        } else {
            hits / final_edges.len() as f64
        },
        empty_final,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub count: usize,
}

pub fn aggregate(values: &[f64]) -> Result<MetricSummary> {
    if values.is_empty() {
        return Err(Error::domain("cannot aggregate an empty list"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(MetricSummary {
        mean,
        sd: libm::sqrt(var),
        count: values.len(),
    })
}
