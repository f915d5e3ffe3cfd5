use std::path::Path;
use std::process::{Command, Output};

use gnnx::io;

fn gnnx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnnx")).args(args).output().expect("spawn gnnx")
}

fn ok(args: &[&str]) -> Output {
    let out = gnnx(args);
    assert!(
        out.status.success(),
        "gnnx {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: [&str; 6] = [
    "--set",
    "ba_shapes.num_motifs=6",
    "--set",
    "ba_shapes.base_nodes=40",
    "--set",
    "explain.epochs=30",
];

#[test]
fn stage_by_stage_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let graph = d.join("g.json");
    let model = d.join("m.txt");
    let masks = d.join("masks");

    let mut args = vec!["generate", "--out", p(&graph), "--seed", "3"];
    args.extend(SMALL);
    ok(&args);
    assert!(d.join("g.meta.json").exists());
    let text = std::fs::read_to_string(&graph).unwrap();
    assert_eq!(io::graph_to_string(&io::load_graph(&graph).unwrap()).unwrap(), text);

    ok(&["train", "--graph", p(&graph), "--out", p(&model), "--seed", "3", "--epochs", "40"]);
    let meta = std::fs::read_to_string(d.join("m.meta.json")).unwrap();
    assert!(meta.contains("\"epochs\": 40"));

    ok(&["explain", "--graph", p(&graph), "--model", p(&model), "--nodes", "40,41,45", "--out", p(&masks)]);
    let names: Vec<String> = std::fs::read_dir(&masks)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.len(), 3);
    assert!(masks.join("node_45.txt").exists());
    let mut all_args = vec!["explain", "--graph", p(&graph), "--model", p(&model), "--out", p(&masks)];
    all_args.extend(SMALL);
    ok(&all_args);
    assert_eq!(std::fs::read_dir(&masks).unwrap().count(), 30);

    let gt = d.join("gt.json");
    ok(&["ground-truth", "--graph", p(&graph), "--model", p(&model), "--mode", "enumerate", "--max-edges", "3", "--out", p(&gt)]);
    assert_eq!(io::load_gt(&gt).unwrap().len(), 30);

    let fixed = d.join("t.json");
    ok(&["threshold", "--graph", p(&graph), "--model", p(&model), "--masks", p(&masks), "--T", "6", "--repair", "on", "--out", p(&fixed)]);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&fixed).unwrap()).unwrap();
    assert_eq!(doc["threshold"], 6);
    let items = doc["explanations"].as_array().unwrap();
    assert_eq!(items.len(), 30);
    assert!(items.iter().all(|x| x["flipped"] == false));

    ok(&["threshold", "--graph", p(&graph), "--model", p(&model), "--masks", p(&masks), "--grid", "4,6,8", "--repair", "off", "--out", p(&fixed)]);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&fixed).unwrap()).unwrap();
    assert_eq!(doc["grid"].as_array().unwrap().len(), 3);
    assert!([4, 6, 8].contains(&doc["threshold"].as_u64().unwrap()));

    let report = d.join("report");
    ok(&["evaluate", "--graph", p(&graph), "--model", p(&model), "--masks", p(&masks), "--gt", p(&gt), "--out", p(&report)]);
    for f in ["report.json", "table1_baseline_entropy.csv", "table2_metrics.csv", "table3_recall.csv", "candidate_entropy.csv"] {
        assert!(report.join(f).exists(), "{f}");
    }
}

#[test]
fn failures_carry_a_stage_tag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = gnnx(&["run", "--out", p(d), "--set", "train.epoch=5"]);
    assert_eq!(out.status.code(), Some(10));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[config]"));

    let out = gnnx(&["train", "--graph", p(&d.join("missing.json")), "--out", p(&d.join("m.txt"))]);
    assert_eq!(out.status.code(), Some(12));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[train]"));

    let out = gnnx(&["generate", "--out", p(&d.join("g.json")), "--set", "ba_shapes.ba_attachment=0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[config]"));

    let out = gnnx(&["frobnicate"]);
    assert!(!out.status.success());
}

#[test]
fn config_file_and_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 1\ndataset = \"tree-cycles\"\n[tree_cycles]\ntree_levels = 4\nnum_motifs = 3\n",
    )
    .unwrap();
    let a = d.join("a.json");
    let b = d.join("b.json");
    ok(&["generate", "--config", p(&cfg), "--out", p(&a)]);
    ok(&["generate", "--config", p(&cfg), "--seed", "2", "--out", p(&b)]);
    let ga = io::load_graph(&a).unwrap();
    assert_eq!(ga.num_nodes(), 31 + 18);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn run_with_no_motifs_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "run",
        "--out",
        p(dir.path()),
        "--set",
        "ba_shapes.num_motifs=0",
        "--set",
        "ba_shapes.base_nodes=20",
        "--set",
        "train.epochs=5",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cohort is empty"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["nodes"].as_array().unwrap().is_empty());
    assert!(report["grid_search"].is_null());
}

#[test]
fn evaluate_reproduces_the_run_report_from_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let mut args = vec!["run", "--out", p(&run), "--set", "train.epochs=60"];
    args.extend(SMALL);
    ok(&args);
    let again = dir.path().join("again");
    let [graph, model, masks, config] = ["graph.json", "model.txt", "masks", "config.toml"].map(|f| run.join(f));
    let mut args = vec![
        "evaluate",
        "--graph",
        p(&graph),
        "--model",
        p(&model),
        "--masks",
        p(&masks),
        "--config",
        p(&config),
        "--out",
        p(&again),
    ];
    args.extend(SMALL);
    ok(&args);
    for f in ["report.json", "table2_metrics.csv", "nodes.csv", "node_thresholds.csv", "grid_search.csv"] {
        assert_eq!(
            std::fs::read(run.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap(),
            "{f} differs"
        );
    }
}
