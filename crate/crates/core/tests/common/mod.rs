#![allow(dead_code)]

use std::collections::BTreeMap;

use gnnx_core::{Edge, EdgeSubset, GcnModel, Graph, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random connected graph: a random spanning tree plus `extra` chords.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, extra: usize, d_in: usize, k: usize) -> Graph {
    let mut edges = EdgeSubset::new();
    for v in 1..n {
        edges.insert(Edge::new(v, rng.gen_range(0..v)));
    }
    let mut tries = 0;
    while edges.len() < n - 1 + extra && tries < 10 * extra + 10 {
        tries += 1;
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if let Some(e) = Edge::try_new(a, b) {
            edges.insert(e);
        }
    }
    let feats = (0..n * d_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let labels = (0..n).map(|v| v % k).collect();
    Graph::new(
        n,
        edges,
        Matrix::from_vec(n, d_in, feats).unwrap(),
        labels,
        None,
        BTreeMap::new(),
    )
    .unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Model with every weight and bias drawn uniformly from (-scale, scale).
pub fn random_model(rng: &mut ChaCha8Rng, dims: &[usize], k: usize, scale: f64) -> GcnModel {
    let weights = dims.windows(2).map(|w| random_matrix(rng, w[0], w[1], scale)).collect();
    let biases = dims[1..]
        .iter()
        .map(|&d| (0..d).map(|_| rng.gen_range(-scale..scale)).collect())
        .collect();
    let last = *dims.last().unwrap();
    let classifier = random_matrix(rng, last, k, scale);
    let cbias = (0..k).map(|_| rng.gen_range(-scale..scale)).collect();
    GcnModel::new(weights, biases, classifier, cbias).unwrap()
}

pub fn set(pairs: &[(usize, usize)]) -> EdgeSubset {
    pairs.iter().map(|&(a, b)| Edge::new(a, b)).collect()
}

/// A small BA-Shapes instance and a model trained on it.
pub fn trained_small(seed: u64) -> (gnnx_core::synth::Benchmark, gnnx_core::gcn::Trained) {
    use gnnx_core::synth::{generate_ba_shapes, BaShapesParams};
    let bench = generate_ba_shapes(&BaShapesParams {
        base_nodes: 60,
        num_motifs: 12,
        ba_attachment: 3,
        seed,
        ..Default::default()
    })
    .unwrap();
    let trained = gnnx_core::gcn::train(
        &bench.graph,
        &gnnx_core::TrainConfig {
            epochs: 400,
            seed,
            ..Default::default()
        },
    )
    .unwrap();
    (bench, trained)
}
