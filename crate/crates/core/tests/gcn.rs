mod common;

use std::collections::BTreeMap;

use common::{random_graph, random_model, rng, set};
use gnnx_core::gcn::{
    forward, forward_graph, mask_gradient, predict_on_subset, train, MaskLoss, Optimizer,
};
use gnnx_core::linalg::sigmoid;
use gnnx_core::{Edge, EdgeSubset, GcnModel, Graph, Matrix, TrainConfig};
use rand::Rng;

/// Normalized adjacency built entry by entry from an edge-weight list.
fn oracle_adjacency(n: usize, weighted: &[(Edge, f64)]) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for &(e, w) in weighted {
        a[e.lo()][e.hi()] = w;
        a[e.hi()][e.lo()] = w;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            a[i][j] /= (deg[i] * deg[j]).sqrt();
        }
    }
    a
}

/// Logits of every node, by explicit triple loops.
fn oracle_logits(model: &GcnModel, adj: &[Vec<f64>], x: &Matrix) -> Vec<Vec<f64>> {
    let n = adj.len();
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).to_vec()).collect();
    for (w, b) in model.layer_weights().iter().zip(model.layer_biases()) {
        let mut agg = vec![vec![0.0; h[0].len()]; n];
        for i in 0..n {
            for j in 0..n {
                for f in 0..h[0].len() {
                    agg[i][f] += adj[i][j] * h[j][f];
                }
            }
        }
        let mut next = vec![vec![0.0; w.cols()]; n];
        for i in 0..n {
            for o in 0..w.cols() {
                let mut s = b[o];
                for f in 0..w.rows() {
                    s += agg[i][f] * w[(f, o)];
                }
                next[i][o] = s.max(0.0);
            }
        }
        h = next;
    }
    let c = model.classifier();
    (0..n)
        .map(|i| {
            (0..c.cols())
                .map(|k| model.classifier_bias()[k] + (0..c.rows()).map(|f| h[i][f] * c[(f, k)]).sum::<f64>())
                .collect()
        })
        .collect()
}

fn oracle_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn unit_weights(edges: &EdgeSubset) -> Vec<(Edge, f64)> {
    edges.iter().map(|&e| (e, 1.0)).collect()
}

#[test]
fn forward_matches_matrix_oracle() {
    let mut r = rng(1);
    for _ in 0..20 {
        let g = random_graph(&mut r, 10, 6, 4, 3);
        let model = random_model(&mut r, &[4, 5, 5, 5], 3, 1.0);
        let expected = oracle_logits(&model, &oracle_adjacency(10, &unit_weights(g.edges())), g.features());
        let dense = forward(&model, &g.normalized_adjacency(None).unwrap(), g.features()).unwrap();
        let sparse = forward_graph(&model, &g).unwrap();
        for i in 0..10 {
            let probs = oracle_softmax(&expected[i]);
            for k in 0..3 {
                assert!((dense.logits[(i, k)] - expected[i][k]).abs() < 1e-9);
                assert!((sparse.logits[(i, k)] - expected[i][k]).abs() < 1e-9);
                assert!((dense.probs[(i, k)] - probs[k]).abs() < 1e-9);
            }
            let total: f64 = dense.probs.row(i).iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn zero_model_is_uniform() {
    let mut r = rng(2);
    let g = random_graph(&mut r, 12, 4, 3, 4);
    let model = GcnModel::zeros(&[3, 6, 6, 6], 4).unwrap();
    let out = forward_graph(&model, &g).unwrap();
    assert!(out.probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
}

#[test]
fn identity_model_on_isolated_node() {
    let g = Graph::new(
        1,
        EdgeSubset::new(),
        Matrix::from_rows(&[vec![0.2, 1.5, 0.7]]).unwrap(),
        vec![0],
        None,
        BTreeMap::new(),
    )
    .unwrap();
    let model = GcnModel::new(
        vec![Matrix::identity(3)],
        vec![vec![0.0; 3]],
        Matrix::identity(3),
        vec![0.0; 3],
    )
    .unwrap();
    let out = forward_graph(&model, &g).unwrap();
    let expected = oracle_softmax(&[0.2, 1.5, 0.7]);
    for k in 0..3 {
        assert!((out.probs[(0, k)] - expected[k]).abs() < 1e-15);
    }
}

#[test]
fn forward_rejects_bad_shapes() {
    let mut r = rng(3);
    let g = random_graph(&mut r, 5, 1, 3, 2);
    let model = random_model(&mut r, &[4, 4], 2, 1.0);
    assert!(forward_graph(&model, &g).is_err());
    assert!(forward(&model, &Matrix::identity(4), g.features()).is_err());
    assert!(GcnModel::new(vec![Matrix::zeros(3, 4)], vec![vec![0.0; 4]], Matrix::zeros(5, 2), vec![0.0; 2]).is_err());
}

#[test]
fn subset_prediction_with_all_edges_equals_full_forward() {
    let mut r = rng(4);
    for _ in 0..10 {
        let g = random_graph(&mut r, 25, 15, 3, 3);
        let model = random_model(&mut r, &[3, 6, 6, 6], 3, 1.0);
        let full = forward_graph(&model, &g).unwrap();
        for node in [0, 7, 24] {
            let p = predict_on_subset(&model, &g, node, g.edges()).unwrap();
            for k in 0..3 {
                assert!((p.probs[k] - full.probs[(node, k)]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn subset_prediction_uses_only_kept_edges() {
    let mut r = rng(5);
    let g = random_graph(&mut r, 20, 10, 3, 3);
    let model = random_model(&mut r, &[3, 5, 5, 5], 3, 1.0);
    for node in [0, 5, 13] {
        let field = g.receptive_field(node, 3).unwrap();
        let p = predict_on_subset(&model, &g, node, &field.edges).unwrap();
        let expected = oracle_logits(&model, &oracle_adjacency(20, &unit_weights(&field.edges)), g.features());
        let probs = oracle_softmax(&expected[node]);
        for k in 0..3 {
            assert!((p.probs[k] - probs[k]).abs() < 1e-12);
        }

        let alone = predict_on_subset(&model, &g, node, &EdgeSubset::new()).unwrap();
        let expected = oracle_logits(&model, &oracle_adjacency(20, &[]), g.features());
        let probs = oracle_softmax(&expected[node]);
        for k in 0..3 {
            assert!((alone.probs[k] - probs[k]).abs() < 1e-12);
        }
    }
    assert!(predict_on_subset(&model, &g, 20, &EdgeSubset::new()).is_err());
    let foreign = set(&[(0, 19)]);
    if !g.edges().contains(&Edge::new(0, 19)) {
        assert!(predict_on_subset(&model, &g, 0, &foreign).is_err());
    }
}

/// Mask objective evaluated through the dense oracle path.
fn oracle_objective(
    model: &GcnModel,
    g: &Graph,
    node: usize,
    field: &[Edge],
    logits: &[f64],
    loss: MaskLoss,
) -> f64 {
    let weighted: Vec<(Edge, f64)> = field.iter().zip(logits).map(|(&e, &m)| (e, sigmoid(m))).collect();
    let z = oracle_logits(model, &oracle_adjacency(g.num_nodes(), &weighted), g.features());
    let probs = oracle_softmax(&z[node]);
    let reg: f64 = logits
        .iter()
        .map(|&m| {
            let s = sigmoid(m);
            let h = -(s * s.ln() + (1.0 - s) * (1.0 - s).ln());
            loss.size_coeff * s + loss.entropy_coeff * h
        })
        .sum();
    -probs[loss.target_class].ln() + reg
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn mask_gradient_matches_central_differences() {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    for instance in 0..100 {
        let n = r.gen_range(6..=15);
        let extra = r.gen_range(0..n);
        let g = random_graph(&mut r, n, extra, 3, 3);
        let model = random_model(&mut r, &[3, 4, 4, 4], 3, 1.0);
        let node = r.gen_range(0..n);
        let field = g.receptive_field(node, 3).unwrap();
        assert!(field.nodes.len() <= 15);
        let edges: Vec<Edge> = field.edges.iter().copied().collect();
        let logits: Vec<f64> = edges.iter().map(|_| r.gen_range(-3.0..3.0)).collect();
        let loss = MaskLoss {
            target_class: r.gen_range(0..3),
            size_coeff: r.gen_range(0.0..0.5),
            entropy_coeff: r.gen_range(0.0..1.0),
        };
        let map: BTreeMap<Edge, f64> = edges.iter().copied().zip(logits.iter().copied()).collect();
        let grad = mask_gradient(&model, &g, node, &field.edges, &map, loss).unwrap();
        let h = 1e-5;
        for (i, e) in edges.iter().enumerate() {
            let mut plus = logits.clone();
            plus[i] += h;
            let mut minus = logits.clone();
            minus[i] -= h;
            let fd = (oracle_objective(&model, &g, node, &edges, &plus, loss)
                - oracle_objective(&model, &g, node, &edges, &minus, loss))
                / (2.0 * h);
            let err = relative_error(grad[e], fd);
            assert!(err <= 1e-4, "instance {instance} edge {e}: analytic {} fd {fd}", grad[e]);
            worst = worst.max(err);
        }
    }
    println!("worst relative error {worst:e}");
}

#[test]
fn size_only_gradient_has_closed_form() {
    let mut r = rng(7);
    let g = random_graph(&mut r, 10, 5, 3, 2);
    // zero weights make the prediction independent of the mask
    let model = GcnModel::zeros(&[3, 4, 4, 4], 2).unwrap();
    let field = g.receptive_field(0, 3).unwrap();
    let logits: BTreeMap<Edge, f64> = field.edges.iter().map(|&e| (e, r.gen_range(-4.0..4.0))).collect();
    let loss = MaskLoss {
        target_class: 0,
        size_coeff: 0.7,
        entropy_coeff: 0.0,
    };
    let grad = mask_gradient(&model, &g, 0, &field.edges, &logits, loss).unwrap();
    for (e, &m) in &logits {
        let s = sigmoid(m);
        assert!((grad[e] - 0.7 * s * (1.0 - s)).abs() < 1e-15);
    }
}

#[test]
fn saturated_mask_gradient_is_cross_entropy_only() {
    let mut r = rng(8);
    let g = random_graph(&mut r, 12, 6, 3, 3);
    let model = random_model(&mut r, &[3, 4, 4, 4], 3, 1.0);
    let field = g.receptive_field(3, 3).unwrap();
    let edges: Vec<Edge> = field.edges.iter().copied().collect();
    let logits = vec![30.0; edges.len()];
    let loss = MaskLoss {
        target_class: 1,
        size_coeff: 0.0,
        entropy_coeff: 0.0,
    };
    let map: BTreeMap<Edge, f64> = edges.iter().map(|&e| (e, 30.0)).collect();
    let grad = mask_gradient(&model, &g, 3, &field.edges, &map, loss).unwrap();
    let h = 1e-5;
    for (i, e) in edges.iter().enumerate() {
        let mut plus = logits.clone();
        plus[i] += h;
        let mut minus = logits.clone();
        minus[i] -= h;
        let fd = (oracle_objective(&model, &g, 3, &edges, &plus, loss)
            - oracle_objective(&model, &g, 3, &edges, &minus, loss))
            / (2.0 * h);
        assert!((grad[e] - fd).abs() <= 1e-4 * fd.abs().max(1e-9) + 1e-12);
    }
}

#[test]
fn mask_gradient_rejects_foreign_edges() {
    let mut r = rng(9);
    let g = random_graph(&mut r, 10, 3, 3, 2);
    let model = random_model(&mut r, &[3, 4], 2, 1.0);
    let field = g.receptive_field(0, 1).unwrap();
    let mut logits: BTreeMap<Edge, f64> = field.edges.iter().map(|&e| (e, 0.0)).collect();
    let outside = g.edges().iter().find(|e| !field.edges.contains(e)).copied().unwrap();
    logits.insert(outside, 0.0);
    let loss = MaskLoss {
        target_class: 0,
        size_coeff: 0.0,
        entropy_coeff: 0.0,
    };
    assert!(mask_gradient(&model, &g, 0, &field.edges, &logits, loss).is_err());
}

#[test]
fn single_label_graph_is_learned_immediately() {
    let mut r = rng(10);
    let base = random_graph(&mut r, 15, 5, 3, 1);
    let cfg = TrainConfig {
        epochs: 1,
        seed: 1,
        ..Default::default()
    };
    let trained = train(&base, &cfg).unwrap();
    assert_eq!(trained.history[0].train_accuracy, 1.0);
    assert_eq!(trained.train_accuracy, 1.0);
}

fn two_clusters() -> Graph {
    let mut edges = EdgeSubset::new();
    for c in 0..2 {
        let off = 10 * c;
        for i in 0..10 {
            for j in (i + 1)..10 {
                if (i + j) % 3 != 0 {
                    edges.insert(Edge::new(off + i, off + j));
                }
            }
        }
    }
    edges.insert(Edge::new(0, 10));
    let feats: Vec<Vec<f64>> = (0..20).map(|v| vec![if v < 10 { 1.0 } else { -1.0 }, 0.5]).collect();
    let labels = (0..20).map(|v| v / 10).collect();
    Graph::new(20, edges, Matrix::from_rows(&feats).unwrap(), labels, None, BTreeMap::new()).unwrap()
}

#[test]
fn toy_loss_decreases_early() {
    let g = two_clusters();
    for optimizer in [Optimizer::Adam, Optimizer::GradientDescent] {
        let cfg = TrainConfig {
            epochs: 10,
            learning_rate: 0.001,
            optimizer,
            seed: 3,
            ..Default::default()
        };
        let t = train(&g, &cfg).unwrap();
        for w in t.history.windows(2) {
            assert!(w[1].loss < w[0].loss, "{optimizer:?}: {} then {}", w[0].loss, w[1].loss);
        }
    }
}

#[test]
fn training_is_deterministic() {
    let g = two_clusters();
    let cfg = TrainConfig {
        epochs: 50,
        seed: 5,
        ..Default::default()
    };
    let a = train(&g, &cfg).unwrap();
    let b = train(&g, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.split, b.split);
    let c = train(&g, &TrainConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn split_is_stratified() {
    let g = two_clusters();
    let t = train(&g, &TrainConfig { epochs: 1, ..Default::default() }).unwrap();
    let per_class = |nodes: &[usize], c: usize| nodes.iter().filter(|&&v| g.labels()[v] == c).count();
    assert_eq!(per_class(&t.split.train, 0), 8);
    assert_eq!(per_class(&t.split.train, 1), 8);
    assert_eq!(t.split.test.len(), 4);
    assert_eq!(TrainConfig::default().split(g.labels()), t.split);
}

#[test]
fn bad_config_is_rejected() {
    let g = two_clusters();
    for cfg in [
        TrainConfig { train_fraction: 0.0, ..Default::default() },
        TrainConfig { train_fraction: 1.5, ..Default::default() },
        TrainConfig { learning_rate: -1.0, ..Default::default() },
        TrainConfig { num_layers: 0, ..Default::default() },
    ] {
        assert!(train(&g, &cfg).is_err());
    }
}

#[test]
fn divergence_is_reported_with_epoch() {
    let g = two_clusters();
    let cfg = TrainConfig {
        epochs: 200,
        learning_rate: 1e300,
        optimizer: Optimizer::GradientDescent,
        ..Default::default()
    };
    match train(&g, &cfg) {
        Err(gnnx_core::Error::TrainingDiverged { epoch }) => assert!(epoch < 200),
        other => panic!("expected divergence, got {other:?}"),
    }
}
