//! Evaluation report and its JSON / CSV emitters.
//!
//! CSV tables use long format; their headers are the field names of the row
//! structs below. Both emitters are deterministic: the same report always
//! yields the same bytes.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gnnx_core::metrics::MetricSummary;
use serde::Serialize;

use crate::config::GtMode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

impl From<MetricSummary> for Summary {
    fn from(s: MetricSummary) -> Self {
        Summary {
            mean: s.mean,
            sd: s.sd,
            count: s.count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// Mean prediction entropy under the three trivial explanations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRow {
    pub class: String,
    pub ground_truth: Summary,
    pub receptive_field: Summary,
    pub target_node: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: String,
    pub nodes: usize,
    /// `None` when no node of the class had both positive and negative edges.
    pub roc_auc: Option<Summary>,
    pub pr_auc: Option<Summary>,
    pub recall: Option<Summary>,
    pub precision: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallRow {
    pub class: String,
    pub threshold: usize,
    pub recall: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlipRow {
    /// A node class, or `all`.
    pub class: String,
    pub threshold: usize,
    pub nodes: usize,
    pub raw: f64,
    pub repaired: f64,
    pub mean_repair_steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub threshold: usize,
    pub fidelity: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    /// `test` when the held-out motif nodes were used, `all` otherwise.
    pub cohort: String,
    pub nodes: usize,
    pub gamma: f64,
    pub median_field_size: f64,
    pub points: Vec<GridRow>,
    pub best: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeThreshold {
    pub threshold: usize,
    pub recall: f64,
    pub precision: Option<f64>,
    /// Raw top-T flip.
    pub flipped: bool,
    pub flipped_after_repair: bool,
    pub repair_steps: usize,
    pub repaired_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeRecord {
    pub node: usize,
    pub class: String,
    pub label: usize,
    pub predicted: usize,
    pub field_edges: usize,
    pub gt_edges: usize,
    pub gt_origin: String,
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    pub thresholds: Vec<NodeThreshold>,
}

/// One named candidate of one node: the data behind an entropy-per-motif
/// plot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateRecord {
    pub node: usize,
    pub class: String,
    pub candidate: String,
    pub size: usize,
    pub entropy: f64,
    pub predicted: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub dataset: String,
    pub seed: u64,
    pub gt_mode: GtMode,
    pub training: Option<TrainingSummary>,
    pub warnings: Vec<String>,
    pub baseline_entropies: Vec<BaselineRow>,
    pub table_threshold: usize,
    pub metrics: Vec<ClassMetrics>,
    pub recall_by_threshold: Vec<RecallRow>,
    pub flip_rates: Vec<FlipRow>,
    pub grid_search: Option<GridReport>,
    pub nodes: Vec<NodeRecord>,
    pub candidates: Vec<CandidateRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

pub const JSON_FILE: &str = "report.json";
pub const TABLE_BASELINES: &str = "table1_baseline_entropy.csv";
pub const TABLE_METRICS: &str = "table2_metrics.csv";
pub const TABLE_RECALL: &str = "table3_recall.csv";
pub const TABLE_FLIPS: &str = "flip_rates.csv";
pub const TABLE_GRID: &str = "grid_search.csv";
pub const TABLE_NODES: &str = "nodes.csv";
pub const TABLE_NODE_THRESHOLDS: &str = "node_thresholds.csv";
pub const TABLE_CANDIDATES: &str = "candidate_entropy.csv";

#[derive(Serialize)]
struct SummaryRow<'a> {
    class: &'a str,
    name: &'a str,
    mean: f64,
    sd: f64,
    count: usize,
}

#[derive(Serialize)]
struct Table3Row<'a> {
    class: &'a str,
    threshold: usize,
    mean: f64,
    sd: f64,
    count: usize,
}

#[derive(Serialize)]
struct NodeRow<'a> {
    node: usize,
    class: &'a str,
    label: usize,
    predicted: usize,
    field_edges: usize,
    gt_edges: usize,
    gt_origin: &'a str,
    roc_auc: Option<f64>,
    pr_auc: Option<f64>,
}

#[derive(Serialize)]
struct NodeThresholdRow {
    node: usize,
    threshold: usize,
    recall: f64,
    precision: Option<f64>,
    flipped: bool,
    flipped_after_repair: bool,
    repair_steps: usize,
    repaired_size: usize,
}

fn csv_file<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().context("flushing csv")?;
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

const SUMMARY_HEADER: &[&str] = &["class", "name", "mean", "sd", "count"];

/// Writes the report into `dir` and returns the files written.
pub fn emit_report(report: &EvalReport, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    match format {
        Format::Json => {
            let path = dir.join(JSON_FILE);
            let mut text = serde_json::to_string_pretty(report)?;
            text.push('\n');
            crate::io::write(&path, &text)?;
            Ok(vec![path])
        }
        Format::Csv => emit_csv(report, dir),
    }
}

fn emit_csv(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut path = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };

    let baselines = report.baseline_entropies.iter().flat_map(|row| {
        [
            ("ground_truth", row.ground_truth),
            ("receptive_field", row.receptive_field),
            ("target_node", row.target_node),
        ]
        .map(|(name, s)| SummaryRow {
            class: &row.class,
            name,
            mean: s.mean,
            sd: s.sd,
            count: s.count,
        })
    });
    csv_file(&path(TABLE_BASELINES), SUMMARY_HEADER, baselines)?;

    let metrics = report.metrics.iter().flat_map(|row| {
        [
            ("roc_auc", row.roc_auc),
            ("pr_auc", row.pr_auc),
            ("recall", row.recall),
            ("precision", row.precision),
        ]
        .into_iter()
        .filter_map(|(name, s)| {
            s.map(|s| SummaryRow {
                class: &row.class,
                name,
                mean: s.mean,
                sd: s.sd,
                count: s.count,
            })
        })
    });
    csv_file(&path(TABLE_METRICS), SUMMARY_HEADER, metrics)?;

    let recall = report.recall_by_threshold.iter().map(|r| Table3Row {
        class: &r.class,
        threshold: r.threshold,
        mean: r.recall.mean,
        sd: r.recall.sd,
        count: r.recall.count,
    });
    csv_file(&path(TABLE_RECALL), &["class", "threshold", "mean", "sd", "count"], recall)?;

    csv_file(
        &path(TABLE_FLIPS),
        &["class", "threshold", "nodes", "raw", "repaired", "mean_repair_steps"],
        &report.flip_rates,
    )?;

    let grid = report.grid_search.iter().flat_map(|g| &g.points);
    csv_file(&path(TABLE_GRID), &["threshold", "fidelity", "objective"], grid)?;

    let nodes = report.nodes.iter().map(|n| NodeRow {
        node: n.node,
        class: &n.class,
        label: n.label,
        predicted: n.predicted,
        field_edges: n.field_edges,
        gt_edges: n.gt_edges,
        gt_origin: &n.gt_origin,
        roc_auc: n.roc_auc,
        pr_auc: n.pr_auc,
    });
    csv_file(
        &path(TABLE_NODES),
        &["node", "class", "label", "predicted", "field_edges", "gt_edges", "gt_origin", "roc_auc", "pr_auc"],
        nodes,
    )?;

    let per_t = report.nodes.iter().flat_map(|n| {
        n.thresholds.iter().map(move |t| NodeThresholdRow {
            node: n.node,
            threshold: t.threshold,
            recall: t.recall,
            precision: t.precision,
            flipped: t.flipped,
            flipped_after_repair: t.flipped_after_repair,
            repair_steps: t.repair_steps,
            repaired_size: t.repaired_size,
        })
    });
    csv_file(
        &path(TABLE_NODE_THRESHOLDS),
        &["node", "threshold", "recall", "precision", "flipped", "flipped_after_repair", "repair_steps", "repaired_size"],
        per_t,
    )?;

    csv_file(
        &path(TABLE_CANDIDATES),
        &["node", "class", "candidate", "size", "entropy", "predicted", "correct"],
        &report.candidates,
    )?;
    Ok(written)
}
