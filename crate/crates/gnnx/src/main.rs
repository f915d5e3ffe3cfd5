use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gnnx::config::{Dataset, GtMode, RunConfig};
use gnnx::io;
use gnnx::pipeline::{self, EvalInputs, GroundTruth, Stage, StageContext, StageError};
use gnnx::report::{emit_report, Format};
use gnnx_core::gcn::train;
use gnnx_core::threshold::{apply_threshold, detect_label_flip, grid_search_threshold, repair_explanation};
use gnnx_core::{EdgeMask, NodeId};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "gnnx", version, about = "Generate, train, explain and evaluate GNN edge-mask explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Seed for every random stage; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Config override, e.g. `--set train.epochs=500`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self, extra: &[String]) -> Result<RunConfig> {
        let mut overrides = self.overrides.clone();
        overrides.extend_from_slice(extra);
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark graph.
    Generate {
        #[arg(long, value_enum)]
        dataset: Option<DatasetArg>,
        /// Graph file; the metadata sidecar goes next to it.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train the GCN on a graph file.
    Train {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_name = "MODEL")]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Write one soft edge mask per node.
    Explain {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// `all` (every motif node) or a comma-separated list of node ids.
        #[arg(long, default_value = "all")]
        nodes: String,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Select ground-truth explanations by motif search.
    GroundTruth {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "named")]
        mode: GtModeArg,
        #[arg(long)]
        max_edges: Option<usize>,
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Threshold masks into final explanations.
    Threshold {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_name = "DIR")]
        masks: PathBuf,
        /// Keep the top-T edges.
        #[arg(long = "T", value_name = "N", conflicts_with = "grid")]
        t: Option<usize>,
        /// Grid-search T over these values, e.g. `4,6,8,12,20`.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, value_enum, default_value = "on")]
        repair: Switch,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score masks and write the report tables.
    Evaluate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_name = "DIR")]
        masks: PathBuf,
        /// Ground-truth file replacing the planted motifs.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Full pipeline: generate, train, search ground truth, explain, evaluate.
    Run {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetArg {
    BaShapes,
    TreeCycles,
}

#[derive(Clone, Copy, ValueEnum)]
enum GtModeArg {
    Annotated,
    Named,
    Enumerate,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {:#}", e.stage, e.source);
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}

struct Log;

impl pipeline::Progress for Log {
    fn stage(&mut self, stage: Stage, detail: &str) {
        eprintln!("[{stage}] {detail}");
    }
}

fn dispatch(command: Command) -> Result<(), StageError> {
    match command {
        Command::Generate { dataset, out, common } => {
            let extra: Vec<String> = dataset
                .map(|d| match d {
                    DatasetArg::BaShapes => "dataset=ba-shapes".into(),
                    DatasetArg::TreeCycles => "dataset=tree-cycles".into(),
                })
                .into_iter()
                .collect();
            let config = common.load(&extra).stage(Stage::Config)?;
            let bench = pipeline::generate(&config).stage(Stage::Generate)?;
            pipeline::save_benchmark(&out, &config, &bench).stage(Stage::Generate)?;
            eprintln!(
                "wrote {} ({} nodes, {} edges)",
                out.display(),
                bench.graph.num_nodes(),
                bench.graph.edges().len()
            );
        }
        Command::Train { graph, out, epochs, common } => {
            let extra: Vec<String> = epochs.map(|e| format!("train.epochs={e}")).into_iter().collect();
            let config = common.load(&extra).stage(Stage::Config)?;
            let train_config = config.train_config().stage(Stage::Config)?;
            let graph = io::load_graph(&graph).stage(Stage::Train)?;
            let trained = train(&graph, &train_config).stage(Stage::Train)?;
            pipeline::save_trained(&out, &trained).stage(Stage::Train)?;
            eprintln!(
                "train accuracy {:.4}, test accuracy {}",
                trained.train_accuracy,
                trained.test_accuracy.map_or("n/a".into(), |a| format!("{a:.4}"))
            );
        }
        Command::Explain { graph, model, nodes, out, common } => {
            let config = common.load(&[]).stage(Stage::Config)?;
            let explain_config = config.explain_config().stage(Stage::Config)?;
            let graph = io::load_graph(&graph).stage(Stage::Explain)?;
            let model = io::load_model(&model).stage(Stage::Explain)?;
            let targets = parse_nodes(&nodes, &graph).stage(Stage::Config)?;
            let (masks, skipped) =
                pipeline::explain_nodes(&model, &graph, &targets, &explain_config).stage(Stage::Explain)?;
            for v in skipped {
                eprintln!("warning: node {v} has an empty receptive field; not explained");
            }
            io::save_masks(&out, &masks).stage(Stage::Explain)?;
            eprintln!("wrote {} masks to {}", masks.len(), out.display());
        }
        Command::GroundTruth { graph, model, mode, max_edges, cap, out, common } => {
            let mut extra = Vec::new();
            extra.extend(max_edges.map(|m| format!("eval.max_edges={m}")));
            extra.extend(cap.map(|c| format!("eval.cap={c}")));
            let config = common.load(&extra).stage(Stage::Config)?;
            let graph = io::load_graph(&graph).stage(Stage::GroundTruth)?;
            let model = io::load_model(&model).stage(Stage::GroundTruth)?;
            let mode = match mode {
                GtModeArg::Annotated => GtMode::Annotated,
                GtModeArg::Named => GtMode::Named,
                GtModeArg::Enumerate => GtMode::Enumerate,
            };
            let nodes = pipeline::cohort(&graph);
            let gt = pipeline::search_ground_truth(&model, &graph, &nodes, mode, &config.eval)
                .stage(Stage::GroundTruth)?;
            io::save_gt(&out, &gt.edges, &gt.selections).stage(Stage::GroundTruth)?;
            eprintln!("wrote ground truth for {} nodes to {}", gt.edges.len(), out.display());
        }
        Command::Threshold { graph, model, masks, t, grid, gamma, repair, out, common } => {
            let config = common.load(&[]).stage(Stage::Config)?;
            let graph = io::load_graph(&graph).stage(Stage::Threshold)?;
            let model = io::load_model(&model).stage(Stage::Threshold)?;
            let masks = io::load_masks(&masks).stage(Stage::Threshold)?;
            let gamma = gamma.unwrap_or(config.eval.gamma);
            let doc = threshold(&model, &graph, &masks, t, grid, gamma, repair == Switch::On)
                .stage(Stage::Threshold)?;
            let text = serde_json::to_string_pretty(&doc).stage(Stage::Threshold)? + "\n";
            io::write(&out, &text).stage(Stage::Threshold)?;
            eprintln!("T = {}; wrote {}", doc.threshold, out.display());
        }
        Command::Evaluate { graph, model, masks, gt, out, common } => {
            let config = common.load(&[]).stage(Stage::Config)?;
            evaluate(&config, &graph, &model, &masks, gt.as_deref(), &out)?;
        }
        Command::Run { out, common } => {
            let config = common.load(&[]).stage(Stage::Config)?;
            let report = pipeline::run_pipeline(&config, &out, &mut Log)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("wrote report to {}", out.display());
        }
    }
    Ok(())
}

fn parse_nodes(list: &str, graph: &gnnx_core::Graph) -> Result<Vec<NodeId>> {
    if list.trim() == "all" {
        return Ok(pipeline::cohort(graph));
    }
    let mut nodes = list
        .split(',')
        .map(|s| s.trim().parse::<NodeId>().with_context(|| format!("bad node id {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    nodes.sort_unstable();
    nodes.dedup();
    if let Some(&v) = nodes.iter().find(|&&v| v >= graph.num_nodes()) {
        bail!("node {v} is out of range (graph has {} nodes)", graph.num_nodes());
    }
    Ok(nodes)
}

#[derive(Serialize)]
struct ThresholdDoc {
    threshold: usize,
    repair: bool,
    grid: Option<Vec<GridPointDoc>>,
    explanations: Vec<FinalDoc>,
}

#[derive(Serialize)]
struct GridPointDoc {
    threshold: usize,
    fidelity: f64,
    objective: f64,
}

#[derive(Serialize)]
struct FinalDoc {
    node: NodeId,
    edges: Vec<[NodeId; 2]>,
    flipped: bool,
    initially_flipped: bool,
    repair_steps: usize,
}

fn threshold(
    model: &gnnx_core::GcnModel,
    graph: &gnnx_core::Graph,
    masks: &[EdgeMask],
    t: Option<usize>,
    grid: Option<Vec<usize>>,
    gamma: f64,
    repair: bool,
) -> Result<ThresholdDoc> {
    let (t, grid) = match (t, grid) {
        (Some(t), None) => (t, None),
        (None, Some(grid)) => {
            let g = grid_search_threshold(model, graph, masks, &grid, gamma)?;
            let points = g
                .points
                .iter()
                .map(|p| GridPointDoc {
                    threshold: p.threshold,
                    fidelity: p.fidelity,
                    objective: p.objective,
                })
                .collect();
            (g.best, Some(points))
        }
        _ => bail!("pass exactly one of --T and --grid"),
    };
    let mut explanations = Vec::with_capacity(masks.len());
    for mask in masks {
        let doc = if repair {
            let f = repair_explanation(model, graph, mask, t)?;
            FinalDoc {
                node: f.target,
                edges: f.final_edges.iter().map(|e| [e.lo(), e.hi()]).collect(),
                flipped: f.flipped,
                initially_flipped: f.initially_flipped,
                repair_steps: f.repair_steps,
            }
        } else {
            let top = apply_threshold(mask, t);
            let flipped = detect_label_flip(model, graph, mask.target, &top)?;
            FinalDoc {
                node: mask.target,
                edges: top.iter().map(|e| [e.lo(), e.hi()]).collect(),
                flipped,
                initially_flipped: flipped,
                repair_steps: 0,
            }
        };
        explanations.push(doc);
    }
    Ok(ThresholdDoc {
        threshold: t,
        repair,
        grid,
        explanations,
    })
}

fn evaluate(
    config: &RunConfig,
    graph_path: &Path,
    model_path: &Path,
    masks_dir: &Path,
    gt_path: Option<&Path>,
    out: &Path,
) -> Result<(), StageError> {
    let graph = io::load_graph(graph_path).stage(Stage::Evaluate)?;
    let model = io::load_model(model_path).stage(Stage::Evaluate)?;
    let masks = io::load_masks(masks_dir).stage(Stage::Evaluate)?;
    let meta = pipeline::load_model_meta(model_path).stage(Stage::Evaluate)?;
    let nodes = pipeline::cohort(&graph);
    let (gt, gt_mode) = match gt_path {
        Some(p) => {
            let edges = io::load_gt(p).stage(Stage::Evaluate)?;
            let mut gt = GroundTruth::default();
            for (&v, e) in &edges {
                gt.selections.push(gnnx::io::GtSelection {
                    node: v,
                    origin: "file".into(),
                    found: true,
                    entropy: None,
                });
                gt.edges.insert(v, e.clone());
            }
            (gt, config.eval.gt_mode)
        }
        None => (GroundTruth::annotated(&graph, &nodes), GtMode::Annotated),
    };
    let dataset = match config.dataset {
        Dataset::BaShapes if graph.roles().is_some_and(|r| r.contains(&gnnx_core::Role::Cycle)) => "tree-cycles",
        d => pipeline::dataset_name(d),
    };
    let report = pipeline::evaluate(
        EvalInputs {
            dataset: dataset.into(),
            seed: config.seed,
            model: &model,
            graph: &graph,
            gt: &gt,
            gt_mode,
            masks: &masks,
            test_nodes: meta.as_ref().map(|m| m.test_nodes.as_slice()),
            training: meta.as_ref().map(|m| m.summary()),
            warnings: Vec::new(),
        },
        &config.eval,
    )
    .stage(Stage::Evaluate)?;
    for format in [Format::Json, Format::Csv] {
        emit_report(&report, out, format).stage(Stage::Report)?;
    }
    eprintln!("evaluated {} nodes; wrote report to {}", report.nodes.len(), out.display());
    Ok(())
}
