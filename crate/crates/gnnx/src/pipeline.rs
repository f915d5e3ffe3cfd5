//! Stages of a full run and the evaluation that turns masks into a report.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use gnnx_core::explainer::{explain, ExplainConfig};
use gnnx_core::gcn::{predict_on_subset, train, Trained};
use gnnx_core::metrics::{aggregate, pr_auc, recall_precision, roc_auc, ScoredEdges};
use gnnx_core::motif::{
    baseline_entropy_table, enumerate_candidates, named_candidates, score_candidates, select_from_scored,
};
use gnnx_core::synth::{generate_ba_shapes, generate_tree_cycles, Benchmark};
use gnnx_core::threshold::{apply_threshold, grid_search_threshold, repair_explanation};
use gnnx_core::{EdgeMask, EdgeSubset, Error as CoreError, GcnModel, Graph, NodeId, Role};
use serde::Serialize;

use crate::config::{Dataset, EvalSection, GtMode, RunConfig};
use crate::io::{self, GtSelection};
use crate::report::{
    BaselineRow, CandidateRecord, ClassMetrics, EvalReport, FlipRow, Format, GridReport, GridRow, NodeRecord,
    NodeThreshold, RecallRow, Summary, TrainingSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Generate,
    Train,
    GroundTruth,
    Explain,
    Threshold,
    Evaluate,
    Report,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Generate => "generate",
            Stage::Train => "train",
            Stage::GroundTruth => "ground-truth",
            Stage::Explain => "explain",
            Stage::Threshold => "threshold",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    /// Process exit status for a failure in this stage.
    pub fn exit_code(self) -> i32 {
        10 + self as i32
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source:#}")]
pub struct StageError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

pub trait StageContext<T> {
    fn stage(self, stage: Stage) -> Result<T, StageError>;
}

impl<T, E: Into<anyhow::Error>> StageContext<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|e| StageError {
            stage,
            source: e.into(),
        })
    }
}

pub const GRAPH_FILE: &str = "graph.json";
pub const MODEL_FILE: &str = "model.txt";
pub const GT_FILE: &str = "ground_truth.json";
pub const MASK_DIR: &str = "masks";
pub const CONFIG_ECHO: &str = "config.toml";

pub fn generate(config: &RunConfig) -> Result<Benchmark> {
    Ok(match config.dataset {
        Dataset::BaShapes => generate_ba_shapes(&config.ba_shapes())?,
        Dataset::TreeCycles => generate_tree_cycles(&config.tree_cycles())?,
    })
}

#[derive(Serialize)]
struct GraphMeta<'a> {
    dataset: Dataset,
    seed: u64,
    num_nodes: usize,
    num_edges: usize,
    label_counts: BTreeMap<usize, usize>,
    motifs: &'a [Vec<NodeId>],
    attachment_edges: Vec<[NodeId; 2]>,
    noise_edges: Vec<[NodeId; 2]>,
}

/// Writes the graph file plus `<stem>.meta.json` with the construction
/// bookkeeping.
pub fn save_benchmark(graph_path: &Path, config: &RunConfig, bench: &Benchmark) -> Result<()> {
    io::save_graph(graph_path, &bench.graph)?;
    let mut label_counts = BTreeMap::new();
    for &l in bench.graph.labels() {
        *label_counts.entry(l).or_insert(0) += 1;
    }
    let meta = GraphMeta {
        dataset: config.dataset,
        seed: config.seed,
        num_nodes: bench.graph.num_nodes(),
        num_edges: bench.graph.edges().len(),
        label_counts,
        motifs: &bench.motifs,
        attachment_edges: bench.attachment_edges.iter().map(|e| [e.lo(), e.hi()]).collect(),
        noise_edges: bench.noise_edges.iter().map(|e| [e.lo(), e.hi()]).collect(),
    };
    io::write(&sidecar_path(graph_path), &(serde_json::to_string_pretty(&meta)? + "\n"))
}

#[derive(Serialize, serde::Deserialize)]
pub struct ModelMeta {
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub train_nodes: Vec<NodeId>,
    pub test_nodes: Vec<NodeId>,
}

impl ModelMeta {
    pub fn from_trained(t: &Trained) -> Self {
        ModelMeta {
            epochs: t.history.len(),
            final_loss: t.history.last().map(|h| h.loss),
            train_accuracy: t.train_accuracy,
            test_accuracy: t.test_accuracy,
            train_nodes: t.split.train.clone(),
            test_nodes: t.split.test.clone(),
        }
    }

    pub fn summary(&self) -> TrainingSummary {
        TrainingSummary {
            epochs: self.epochs,
            final_loss: self.final_loss,
            train_accuracy: self.train_accuracy,
            test_accuracy: self.test_accuracy,
        }
    }
}

/// Writes the model and, next to it, `<stem>.meta.json` with the split and
/// accuracies.
pub fn save_trained(model_path: &Path, trained: &Trained) -> Result<()> {
    io::save_model(model_path, &trained.model)?;
    let meta = serde_json::to_string_pretty(&ModelMeta::from_trained(trained))? + "\n";
    io::write(&sidecar_path(model_path), &meta)
}

/// `dir/name.ext` becomes `dir/name.meta.json`.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("meta.json")
}

pub fn load_model_meta(model_path: &Path) -> Result<Option<ModelMeta>> {
    let path = sidecar_path(model_path);
    if !path.exists() {
        return Ok(None);
    }
    let text = io::read(&path)?;
    Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?))
}

/// Nodes whose explanations are evaluated: motif members with a planted
/// ground truth, in id order.
pub fn cohort(graph: &Graph) -> Vec<NodeId> {
    graph
        .gt_explanations()
        .keys()
        .copied()
        .filter(|&v| graph.role(v).is_some_and(|r| r.is_motif()))
        .collect()
}

fn class_name(graph: &Graph, node: NodeId) -> String {
    graph.role(node).map_or_else(|| format!("label-{}", graph.labels()[node]), |r| r.as_str().into())
}

/// Ground truth used for scoring, with where each entry came from.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub edges: BTreeMap<NodeId, EdgeSubset>,
    pub selections: Vec<GtSelection>,
}

impl GroundTruth {
    pub fn annotated(graph: &Graph, nodes: &[NodeId]) -> Self {
        let mut gt = GroundTruth::default();
        for &v in nodes {
            if let Some(edges) = graph.gt_explanation(v) {
                gt.edges.insert(v, edges.clone());
                gt.selections.push(GtSelection {
                    node: v,
                    origin: "annotated".into(),
                    found: true,
                    entropy: None,
                });
            }
        }
        gt
    }

    pub fn origin(&self, node: NodeId) -> &str {
        self.selections
            .iter()
            .find(|s| s.node == node)
            .map_or("annotated", |s| s.origin.as_str())
    }
}

/// Motif search per node. When no candidate keeps the prediction, or the
/// winner has no edges to score against, the planted motif is kept instead.
pub fn search_ground_truth(
    model: &GcnModel,
    graph: &Graph,
    nodes: &[NodeId],
    mode: GtMode,
    eval: &EvalSection,
) -> Result<GroundTruth> {
    if mode == GtMode::Annotated {
        return Ok(GroundTruth::annotated(graph, nodes));
    }
    let mut gt = GroundTruth::default();
    for &v in nodes {
        let mut candidates = named_candidates(graph, v)?;
        if mode == GtMode::Enumerate {
            candidates.extend(enumerate_candidates(graph, v, model.num_layers(), eval.limits())?);
        }
        if candidates.is_empty() {
            continue;
        }
        let scores = score_candidates(model, graph, v, &candidates)?;
        let field = graph.receptive_field(v, model.num_layers())?;
        let sel = select_from_scored(&candidates, &scores, &field.edges);
        let annotated = graph.gt_explanation(v);
        let (edges, origin) = match annotated {
            Some(a) if !sel.found || sel.candidate.edges.is_empty() => {
                (a.clone(), format!("annotated-fallback:{}", sel.candidate.origin.label()))
            }
            _ => (sel.candidate.edges.clone(), sel.candidate.origin.label().to_string()),
        };
        gt.edges.insert(v, edges);
        gt.selections.push(GtSelection {
            node: v,
            origin,
            found: sel.found,
            entropy: sel.score.map(|s| s.entropy),
        });
    }
    Ok(gt)
}

/// Explains each node; nodes with an empty receptive field are skipped and
/// reported in the second list.
pub fn explain_nodes(
    model: &GcnModel,
    graph: &Graph,
    nodes: &[NodeId],
    config: &ExplainConfig,
) -> Result<(Vec<EdgeMask>, Vec<NodeId>)> {
    let mut masks = Vec::with_capacity(nodes.len());
    let mut skipped = Vec::new();
    for &v in nodes {
        match explain(model, graph, v, config) {
            Ok(x) => masks.push(x.mask),
            Err(CoreError::EmptyField(_)) => skipped.push(v),
            Err(e) => return Err(anyhow!(e).context(format!("explaining node {v}"))),
        }
    }
    Ok((masks, skipped))
}

/// Named candidates of every node, scored against the full-field prediction.
pub fn candidate_entropies(model: &GcnModel, graph: &Graph, nodes: &[NodeId]) -> Result<Vec<CandidateRecord>> {
    let mut out = Vec::new();
    for &v in nodes {
        let candidates = named_candidates(graph, v)?;
        if candidates.is_empty() {
            continue;
        }
        let scores = score_candidates(model, graph, v, &candidates)?;
        for (c, s) in candidates.iter().zip(scores) {
            out.push(CandidateRecord {
                node: v,
                class: class_name(graph, v),
                candidate: c.origin.label().to_string(),
                size: s.size,
                entropy: s.entropy,
                predicted: s.predicted_class,
                correct: s.prediction_correct,
            });
        }
    }
    Ok(out)
}

pub struct EvalInputs<'a> {
    pub dataset: String,
    pub seed: u64,
    pub model: &'a GcnModel,
    /// Graph with the planted ground truth.
    pub graph: &'a Graph,
    pub gt: &'a GroundTruth,
    pub gt_mode: GtMode,
    pub masks: &'a [EdgeMask],
    /// Held-out nodes for the threshold search; `None` uses every mask.
    pub test_nodes: Option<&'a [NodeId]>,
    pub training: Option<TrainingSummary>,
    pub warnings: Vec<String>,
}

fn summary(values: &[f64]) -> Option<Summary> {
    aggregate(values).ok().map(Summary::from)
}

fn all_thresholds(eval: &EvalSection) -> Vec<usize> {
    let mut ts: Vec<usize> = eval.thresholds.iter().chain([&eval.table_threshold]).copied().collect();
    ts.sort_unstable();
    ts.dedup();
    ts
}

pub fn evaluate(inputs: EvalInputs<'_>, eval: &EvalSection) -> Result<EvalReport> {
    let EvalInputs {
        model,
        graph,
        gt,
        masks,
        ..
    } = inputs;
    let mut warnings = inputs.warnings;
    let hops = model.num_layers();
    let thresholds = all_thresholds(eval);

    let mut nodes = Vec::with_capacity(masks.len());
    for mask in masks {
        let v = mask.target;
        let Some(truth) = gt.edges.get(&v) else {
            warnings.push(format!("node {v} has a mask but no ground truth; skipped"));
            continue;
        };
        let field = graph.receptive_field(v, hops)?;
        let predicted = predict_on_subset(model, graph, v, &field.edges)?.class;
        let scored = ScoredEdges::from_scores(&mask.scores, truth)?;
        let mut per_t = Vec::with_capacity(thresholds.len());
        for &t in &thresholds {
            let top = apply_threshold(mask, t);
            let rp = recall_precision(&top, truth)?;
            let fixed = repair_explanation(model, graph, mask, t)?;
            per_t.push(NodeThreshold {
                threshold: t,
                recall: rp.recall,
                precision: (!rp.empty_final).then_some(rp.precision),
                flipped: fixed.initially_flipped,
                flipped_after_repair: fixed.flipped,
                repair_steps: fixed.repair_steps,
                repaired_size: fixed.final_edges.len(),
            });
            if fixed.flipped {
                warnings.push(format!("node {v}: repair at T={t} did not restore the prediction"));
            }
        }
        nodes.push(NodeRecord {
            node: v,
            class: class_name(graph, v),
            label: graph.labels()[v],
            predicted,
            field_edges: field.edges.len(),
            gt_edges: truth.len(),
            gt_origin: gt.origin(v).to_string(),
            roc_auc: roc_auc(&scored).ok(),
            pr_auc: pr_auc(&scored).ok(),
            thresholds: per_t,
        });
    }

    let classes: Vec<String> = Role::ALL
        .iter()
        .map(|r| r.as_str().to_string())
        .filter(|c| nodes.iter().any(|n| &n.class == c))
        .collect();
    fn of_class<'a>(nodes: &'a [NodeRecord], c: &'a str) -> impl Iterator<Item = &'a NodeRecord> {
        nodes.iter().filter(move |n| n.class == c)
    }

    let mut metrics = Vec::new();
    let mut recall_by_threshold = Vec::new();
    for c in &classes {
        let collect = |f: &dyn Fn(&NodeRecord) -> Option<f64>| -> Vec<f64> { of_class(&nodes, c).filter_map(f).collect() };
        let at = |n: &NodeRecord, t: usize| n.thresholds.iter().find(|x| x.threshold == t).cloned();
        let table_t = eval.table_threshold;
        metrics.push(ClassMetrics {
            class: c.clone(),
            nodes: of_class(&nodes, c).count(),
            roc_auc: summary(&collect(&|n| n.roc_auc)),
            pr_auc: summary(&collect(&|n| n.pr_auc)),
            recall: summary(&collect(&|n| at(n, table_t).map(|x| x.recall))),
            precision: summary(&collect(&|n| at(n, table_t).and_then(|x| x.precision))),
        });
        for &t in &eval.thresholds {
            if let Some(recall) = summary(&collect(&|n| at(n, t).map(|x| x.recall))) {
                recall_by_threshold.push(RecallRow {
                    class: c.clone(),
                    threshold: t,
                    recall,
                });
            }
        }
    }

    let mut flip_rates = Vec::new();
    for &t in &thresholds {
        for c in std::iter::once("all").chain(classes.iter().map(String::as_str)) {
            let rows: Vec<&NodeThreshold> = nodes
                .iter()
                .filter(|n| c == "all" || n.class == c)
                .filter_map(|n| n.thresholds.iter().find(|x| x.threshold == t))
                .collect();
            if rows.is_empty() {
                continue;
            }
            let n = rows.len() as f64;
            flip_rates.push(FlipRow {
                class: c.to_string(),
                threshold: t,
                nodes: rows.len(),
                raw: rows.iter().filter(|x| x.flipped).count() as f64 / n,
                repaired: rows.iter().filter(|x| x.flipped_after_repair).count() as f64 / n,
                mean_repair_steps: rows.iter().map(|x| x.repair_steps as f64).sum::<f64>() / n,
            });
        }
    }

    let grid_search = if masks.is_empty() {
        warnings.push("no masks to evaluate: the evaluation cohort is empty".into());
        None
    } else {
        let held_out: Vec<EdgeMask> = match inputs.test_nodes {
            Some(test) => masks.iter().filter(|m| test.binary_search(&m.target).is_ok()).cloned().collect(),
            None => Vec::new(),
        };
        let (cohort, chosen) = if held_out.is_empty() {
            if inputs.test_nodes.is_some() {
                warnings.push("no held-out motif node has a mask; threshold search uses every mask".into());
            }
            ("all", masks.to_vec())
        } else {
            ("test", held_out)
        };
        let g = grid_search_threshold(model, graph, &chosen, &eval.grid, eval.gamma)?;
        Some(GridReport {
            cohort: cohort.into(),
            nodes: chosen.len(),
            gamma: eval.gamma,
            median_field_size: g.median_field_size,
            points: g
                .points
                .iter()
                .map(|p| GridRow {
                    threshold: p.threshold,
                    fidelity: p.fidelity,
                    objective: p.objective,
                })
                .collect(),
            best: g.best,
        })
    };

    let cohort_nodes: Vec<NodeId> = nodes.iter().map(|n| n.node).collect();
    let baseline_entropies = if cohort_nodes.is_empty() {
        Vec::new()
    } else {
        let planted = graph.with_gt_explanations(
            cohort_nodes
                .iter()
                .filter_map(|&v| graph.gt_explanation(v).map(|e| (v, e.clone())))
                .collect(),
        )?;
        baseline_entropy_table(model, &planted, None)?
            .into_iter()
            .map(|(role, b)| BaselineRow {
                class: role.as_str().into(),
                ground_truth: b.ground_truth.into(),
                receptive_field: b.receptive_field.into(),
                target_node: b.target_node.into(),
            })
            .collect()
    };
    let candidates = candidate_entropies(model, graph, &cohort_nodes)?;

    Ok(EvalReport {
        dataset: inputs.dataset,
        seed: inputs.seed,
        gt_mode: inputs.gt_mode,
        training: inputs.training,
        warnings,
        baseline_entropies,
        table_threshold: eval.table_threshold,
        metrics,
        recall_by_threshold,
        flip_rates,
        grid_search,
        nodes,
        candidates,
    })
}

pub fn dataset_name(d: Dataset) -> &'static str {
    match d {
        Dataset::BaShapes => "ba-shapes",
        Dataset::TreeCycles => "tree-cycles",
    }
}

/// Observer for stage progress.
pub trait Progress {
    fn stage(&mut self, _stage: Stage, _detail: &str) {}
}

impl Progress for () {}

/// Runs every stage and writes all artifacts under `out`. Artifacts of
/// completed stages are kept when a later stage fails.
pub fn run_pipeline(config: &RunConfig, out: &Path, progress: &mut dyn Progress) -> Result<EvalReport, StageError> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .stage(Stage::Config)?;
    io::write(&out.join(CONFIG_ECHO), &config.to_toml().stage(Stage::Config)?).stage(Stage::Config)?;

    progress.stage(Stage::Generate, dataset_name(config.dataset));
    let bench = generate(config).stage(Stage::Generate)?;
    save_benchmark(&out.join(GRAPH_FILE), config, &bench).stage(Stage::Generate)?;
    let graph = &bench.graph;
    let mut warnings = Vec::new();
    let nodes = cohort(graph);
    if nodes.is_empty() {
        warnings.push("the graph has no motif nodes: the evaluation cohort is empty".to_string());
    }

    let train_config = config.train_config().stage(Stage::Config)?;
    progress.stage(Stage::Train, &format!("{} epochs", train_config.epochs));
    let trained = train(graph, &train_config).stage(Stage::Train)?;
    save_trained(&out.join(MODEL_FILE), &trained).stage(Stage::Train)?;
    let model = &trained.model;

    progress.stage(Stage::GroundTruth, &format!("{:?}", config.eval.gt_mode));
    let gt = search_ground_truth(model, graph, &nodes, config.eval.gt_mode, &config.eval).stage(Stage::GroundTruth)?;
    io::save_gt(&out.join(GT_FILE), &gt.edges, &gt.selections).stage(Stage::GroundTruth)?;

    let explain_config = config.explain_config().stage(Stage::Config)?;
    progress.stage(Stage::Explain, &format!("{} nodes", nodes.len()));
    let (masks, skipped) = explain_nodes(model, graph, &nodes, &explain_config).stage(Stage::Explain)?;
    for v in skipped {
        warnings.push(format!("node {v} has an empty receptive field; not explained"));
    }
    io::save_masks(&out.join(MASK_DIR), &masks).stage(Stage::Explain)?;

    progress.stage(Stage::Evaluate, "");
    let report = evaluate(
        EvalInputs {
            dataset: dataset_name(config.dataset).into(),
            seed: config.seed,
            model,
            graph,
            gt: &gt,
            gt_mode: config.eval.gt_mode,
            masks: &masks,
            test_nodes: Some(&trained.split.test),
            training: Some(ModelMeta::from_trained(&trained).summary()),
            warnings,
        },
        &config.eval,
    )
    .stage(Stage::Evaluate)?;

    progress.stage(Stage::Report, "");
    for format in [Format::Json, Format::Csv] {
        crate::report::emit_report(&report, out, format).stage(Stage::Report)?;
    }
    Ok(report)
}
