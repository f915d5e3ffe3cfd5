//! On-disk formats.
//!
//! * graph: JSON with a fixed layout (one edge, feature row or ground-truth
//!   entry per line) so that load-then-save reproduces the file byte for byte;
//! * model: line-oriented text, weights in row-major order with 17 significant
//!   digits;
//! * masks: one `node_<id>.txt` per explained node, `lo hi score` per line in
//!   canonical edge order;
//! * ground truth: the graph's `gt_explanations` block on its own, optionally
//!   followed by selection metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use gnnx_core::{Edge, EdgeMask, EdgeSubset, GcnModel, Graph, Matrix, NodeId, Role};
use serde::Deserialize;

pub const GRAPH_FORMAT: &str = "gnnx-graph/1";
pub const GT_FORMAT: &str = "gnnx-gt/1";
const MODEL_HEADER: &str = "gnnx-model 1";

fn num(x: f64) -> Result<String> {
    ensure!(x.is_finite(), "non-finite value {x} cannot be stored");
    Ok(serde_json::to_string(&x)?)
}

fn edge_json(e: &Edge) -> String {
    format!("[{}, {}]", e.lo(), e.hi())
}

fn write_gt_entries(out: &mut String, gt: &BTreeMap<NodeId, EdgeSubset>) {
    if gt.is_empty() {
        out.push_str("[]");
        return;
    }
    out.push_str("[\n");
    for (i, (node, edges)) in gt.iter().enumerate() {
        let list: Vec<String> = edges.iter().map(edge_json).collect();
        let sep = if i + 1 < gt.len() { "," } else { "" };
        let _ = writeln!(out, "    {{\"node\": {node}, \"edges\": [{}]}}{sep}", list.join(", "));
    }
    out.push_str("  ]");
}

fn write_lines(out: &mut String, lines: &[String]) {
    if lines.is_empty() {
        out.push_str("[]");
        return;
    }
    out.push_str("[\n");
    for (i, line) in lines.iter().enumerate() {
        let sep = if i + 1 < lines.len() { "," } else { "" };
        let _ = writeln!(out, "    {line}{sep}");
    }
    out.push_str("  ]");
}

pub fn graph_to_string(graph: &Graph) -> Result<String> {
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"format\": \"{GRAPH_FORMAT}\",");
    let _ = writeln!(out, "  \"num_nodes\": {},", graph.num_nodes());
    let _ = writeln!(out, "  \"feature_dim\": {},", graph.feature_dim());
    out.push_str("  \"edges\": ");
    write_lines(&mut out, &graph.edges().iter().map(edge_json).collect::<Vec<_>>());
    out.push_str(",\n  \"features\": ");
    let rows = (0..graph.num_nodes())
        .map(|v| {
            let row = graph.features().row(v).iter().map(|&x| num(x)).collect::<Result<Vec<_>>>()?;
            Ok(format!("[{}]", row.join(", ")))
        })
        .collect::<Result<Vec<_>>>()?;
    write_lines(&mut out, &rows);
    let labels: Vec<String> = graph.labels().iter().map(ToString::to_string).collect();
    let _ = write!(out, ",\n  \"labels\": [{}],\n", labels.join(", "));
    match graph.roles() {
        Some(roles) => {
            let names: Vec<String> = roles.iter().map(|r| format!("\"{}\"", r.as_str())).collect();
            let _ = writeln!(out, "  \"roles\": [{}],", names.join(", "));
        }
        None => out.push_str("  \"roles\": null,\n"),
    }
    out.push_str("  \"gt_explanations\": ");
    write_gt_entries(&mut out, graph.gt_explanations());
    out.push_str("\n}\n");
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    format: String,
    num_nodes: usize,
    feature_dim: usize,
    edges: Vec<(NodeId, NodeId)>,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    roles: Option<Vec<String>>,
    gt_explanations: Vec<GtEntry>,
}

#[derive(Deserialize)]
struct GtEntry {
    node: NodeId,
    edges: Vec<(NodeId, NodeId)>,
}

fn edge_set(pairs: &[(NodeId, NodeId)]) -> Result<EdgeSubset> {
    let mut set = EdgeSubset::new();
    for &(a, b) in pairs {
        let e = Edge::try_new(a, b).ok_or_else(|| anyhow!("self-loop ({a}, {b}) is not allowed"))?;
        ensure!(set.insert(e), "duplicate edge {e}");
    }
    Ok(set)
}

fn gt_map(entries: &[GtEntry]) -> Result<BTreeMap<NodeId, EdgeSubset>> {
    let mut gt = BTreeMap::new();
    for entry in entries {
        ensure!(
            gt.insert(entry.node, edge_set(&entry.edges)?).is_none(),
            "duplicate ground truth for node {}",
            entry.node
        );
    }
    Ok(gt)
}

pub fn graph_from_str(text: &str) -> Result<Graph> {
    let file: GraphFile = serde_json::from_str(text)?;
    ensure!(file.format == GRAPH_FORMAT, "unsupported graph format {:?}", file.format);
    ensure!(file.features.len() == file.num_nodes, "expected one feature row per node");
    let mut data = Vec::with_capacity(file.num_nodes * file.feature_dim);
    for (v, row) in file.features.iter().enumerate() {
        ensure!(row.len() == file.feature_dim, "feature row {v} has {} values", row.len());
        data.extend_from_slice(row);
    }
    let features = Matrix::from_vec(file.num_nodes, file.feature_dim, data)?;
    let roles = file
        .roles
        .map(|names| {
            names
                .iter()
                .map(|n| Role::parse(n).ok_or_else(|| anyhow!("unknown role {n:?}")))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    Ok(Graph::new(
        file.num_nodes,
        edge_set(&file.edges)?,
        features,
        file.labels,
        roles,
        gt_map(&file.gt_explanations)?,
    )?)
}

pub fn save_graph(path: &Path, graph: &Graph) -> Result<()> {
    write(path, &graph_to_string(graph)?)
}

pub fn load_graph(path: &Path) -> Result<Graph> {
    graph_from_str(&read(path)?).with_context(|| format!("parsing graph {}", path.display()))
}

/// Per-node metadata written after the ground-truth entries.
#[derive(Debug, Clone, PartialEq)]
pub struct GtSelection {
    pub node: NodeId,
    pub origin: String,
    pub found: bool,
    pub entropy: Option<f64>,
}

pub fn gt_to_string(gt: &BTreeMap<NodeId, EdgeSubset>, selections: &[GtSelection]) -> Result<String> {
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"format\": \"{GT_FORMAT}\",");
    out.push_str("  \"gt_explanations\": ");
    write_gt_entries(&mut out, gt);
    if !selections.is_empty() {
        out.push_str(",\n  \"selections\": ");
        let lines = selections
            .iter()
            .map(|s| {
                let entropy = s.entropy.map(num).transpose()?.unwrap_or_else(|| "null".into());
                Ok(format!(
                    "{{\"node\": {}, \"origin\": {}, \"found\": {}, \"entropy\": {entropy}}}",
                    s.node,
                    serde_json::to_string(&s.origin)?,
                    s.found
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        write_lines(&mut out, &lines);
    }
    out.push_str("\n}\n");
    Ok(out)
}

#[derive(Deserialize)]
struct GtFile {
    format: String,
    gt_explanations: Vec<GtEntry>,
}

pub fn gt_from_str(text: &str) -> Result<BTreeMap<NodeId, EdgeSubset>> {
    let file: GtFile = serde_json::from_str(text)?;
    ensure!(file.format == GT_FORMAT, "unsupported ground-truth format {:?}", file.format);
    gt_map(&file.gt_explanations)
}

pub fn save_gt(path: &Path, gt: &BTreeMap<NodeId, EdgeSubset>, selections: &[GtSelection]) -> Result<()> {
    write(path, &gt_to_string(gt, selections)?)
}

pub fn load_gt(path: &Path) -> Result<BTreeMap<NodeId, EdgeSubset>> {
    gt_from_str(&read(path)?).with_context(|| format!("parsing ground truth {}", path.display()))
}

fn push_values(out: &mut String, values: &[f64]) {
    let cells: Vec<String> = values.iter().map(|x| format!("{x:.16e}")).collect();
    out.push_str(&cells.join(" "));
    out.push('\n');
}

fn push_matrix(out: &mut String, m: &Matrix) {
    for i in 0..m.rows() {
        push_values(out, m.row(i));
    }
}

pub fn model_to_string(model: &GcnModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_HEADER}");
    let dims: Vec<String> = model.dims().iter().map(ToString::to_string).collect();
    let _ = writeln!(out, "dims {}", dims.join(" "));
    let _ = writeln!(out, "classes {}", model.class_count());
    for (k, (w, b)) in model.layer_weights().iter().zip(model.layer_biases()).enumerate() {
        let _ = writeln!(out, "layer {k} weights {} {}", w.rows(), w.cols());
        push_matrix(&mut out, w);
        let _ = writeln!(out, "layer {k} bias {}", b.len());
        push_values(&mut out, b);
    }
    let c = model.classifier();
    let _ = writeln!(out, "classifier weights {} {}", c.rows(), c.cols());
    push_matrix(&mut out, c);
    let _ = writeln!(out, "classifier bias {}", model.classifier_bias().len());
    push_values(&mut out, model.classifier_bias());
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| anyhow!("unexpected end of model file"))
    }

    fn header(&mut self, prefix: &str) -> Result<Vec<usize>> {
        let (n, line) = self.next()?;
        let rest = line
            .strip_prefix(prefix)
            .ok_or_else(|| anyhow!("line {n}: expected {prefix:?}, found {line:?}"))?;
        rest.split_whitespace()
            .map(|t| t.parse().with_context(|| format!("line {n}: bad count {t:?}")))
            .collect()
    }

    fn values(&mut self, len: usize) -> Result<Vec<f64>> {
        let (n, line) = self.next()?;
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().with_context(|| format!("line {n}: bad number {t:?}")))
            .collect::<Result<Vec<_>>>()?;
        ensure!(row.len() == len, "line {n}: expected {len} values, found {}", row.len());
        Ok(row)
    }

    fn matrix(&mut self, prefix: &str) -> Result<Matrix> {
        let shape = self.header(prefix)?;
        let [rows, cols] = shape[..] else {
            bail!("{prefix:?} needs a row and a column count");
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.values(cols)?);
        }
        Ok(Matrix::from_vec(rows, cols, data)?)
    }

    fn vector(&mut self, prefix: &str) -> Result<Vec<f64>> {
        let len = self.header(prefix)?;
        let [len] = len[..] else {
            bail!("{prefix:?} needs a length");
        };
        self.values(len)
    }
}

pub fn model_from_str(text: &str) -> Result<GcnModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (_, first) = lines.next()?;
    ensure!(first == MODEL_HEADER, "not a model file (header {first:?})");
    let dims = lines.header("dims ")?;
    ensure!(dims.len() >= 2, "dims needs an input width and at least one layer");
    let classes = lines.header("classes ")?;
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for k in 0..dims.len() - 1 {
        weights.push(lines.matrix(&format!("layer {k} weights "))?);
        biases.push(lines.vector(&format!("layer {k} bias "))?);
    }
    let classifier = lines.matrix("classifier weights ")?;
    let bias = lines.vector("classifier bias ")?;
    if let Ok((n, extra)) = lines.next() {
        bail!("line {n}: trailing content {extra:?}");
    }
    let model = GcnModel::new(weights, biases, classifier, bias)?;
    ensure!(model.dims() == dims, "declared dims {dims:?} disagree with the weights");
    ensure!(classes == [model.class_count()], "declared class count disagrees with the weights");
    Ok(model)
}

pub fn save_model(path: &Path, model: &GcnModel) -> Result<()> {
    write(path, &model_to_string(model))
}

pub fn load_model(path: &Path) -> Result<GcnModel> {
    model_from_str(&read(path)?).with_context(|| format!("parsing model {}", path.display()))
}

pub fn mask_to_string(mask: &EdgeMask) -> String {
    let mut out = String::new();
    for (e, s) in &mask.scores {
        let _ = writeln!(out, "{} {} {s:.16e}", e.lo(), e.hi());
    }
    out
}

pub fn mask_from_str(target: NodeId, text: &str) -> Result<EdgeMask> {
    let mut scores = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [a, b, s] = parts[..] else {
            bail!("line {}: expected `lo hi score`", i + 1);
        };
        let e = Edge::try_new(a.parse()?, b.parse()?).ok_or_else(|| anyhow!("line {}: self-loop", i + 1))?;
        ensure!(scores.insert(e, s.parse::<f64>()?).is_none(), "line {}: duplicate edge {e}", i + 1);
    }
    Ok(EdgeMask::new(target, scores)?)
}

pub fn mask_path(dir: &Path, node: NodeId) -> PathBuf {
    dir.join(format!("node_{node}.txt"))
}

pub fn save_masks(dir: &Path, masks: &[EdgeMask]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for mask in masks {
        write(&mask_path(dir, mask.target), &mask_to_string(mask))?;
    }
    Ok(())
}

/// Every `node_<id>.txt` in `dir`, sorted by node id.
pub fn load_masks(dir: &Path) -> Result<Vec<EdgeMask>> {
    let mut found = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(id) = name.strip_prefix("node_").and_then(|n| n.strip_suffix(".txt")) else {
            continue;
        };
        let node: NodeId = id.parse().with_context(|| format!("bad mask file name {name}"))?;
        found.insert(node, path);
    }
    found
        .into_iter()
        .map(|(node, path)| {
            mask_from_str(node, &read(&path)?).with_context(|| format!("parsing mask {}", path.display()))
        })
        .collect()
}

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
