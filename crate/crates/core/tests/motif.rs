mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{random_graph, rng, set, trained_small};
use gnnx_core::motif::{
    baseline_entropy_table, enumerate_candidates, named_candidates, score_candidate,
    score_candidates, select_from_scored, select_ground_truth, CandidateScore, EnumerationLimits,
    MotifCandidate, Origin,
};
use gnnx_core::synth::{generate_tree_cycles, TreeCyclesParams};
use gnnx_core::{Edge, EdgeSubset, Error, GcnModel, Graph, Matrix, Role};
use proptest::prelude::*;

fn limits(max_edges: usize) -> EnumerationLimits {
    EnumerationLimits {
        max_edges,
        ..Default::default()
    }
}

fn triangle() -> Graph {
    Graph::new(3, set(&[(0, 1), (1, 2), (0, 2)]), Matrix::filled(3, 1, 1.0), vec![0; 3], None, BTreeMap::new()).unwrap()
}

/// Connected through `node`: every edge reachable from `node` inside the set.
fn connected_through(edges: &EdgeSubset, node: usize) -> bool {
    if edges.is_empty() {
        return true;
    }
    let mut seen = BTreeSet::from([node]);
    let mut changed = true;
    while changed {
        changed = false;
        for e in edges.iter() {
            if seen.contains(&e.lo()) != seen.contains(&e.hi()) {
                seen.insert(e.lo());
                seen.insert(e.hi());
                changed = true;
            }
        }
    }
    edges.iter().all(|e| seen.contains(&e.lo()))
}

/// Every subset of the field, filtered by size and connectivity.
fn brute_force(g: &Graph, node: usize, hops: usize, max_edges: usize) -> BTreeSet<EdgeSubset> {
    let field: Vec<Edge> = g.receptive_field(node, hops).unwrap().edges.iter().copied().collect();
    assert!(field.len() <= 16);
    (0u32..1 << field.len())
        .map(|bits| {
            field
                .iter()
                .enumerate()
                .filter(|(i, _)| bits >> i & 1 == 1)
                .map(|(_, &e)| e)
                .collect::<EdgeSubset>()
        })
        .filter(|s| s.len() <= max_edges && connected_through(s, node))
        .collect()
}

#[test]
fn zero_edges_gives_only_the_target() {
    let c = enumerate_candidates(&triangle(), 0, 2, limits(0)).unwrap();
    assert_eq!(c.len(), 1);
    assert!(c[0].edges.is_empty());
}

#[test]
fn triangle_enumeration() {
    for node in 0..3 {
        let c = enumerate_candidates(&triangle(), node, 2, limits(3)).unwrap();
        let sizes: Vec<usize> = c.iter().map(|c| c.edges.len()).collect();
        // the empty target-only candidate plus 2 + 3 + 1 edge sets
        assert_eq!(sizes, vec![0, 1, 1, 2, 2, 2, 3]);
        assert!(c.iter().all(|c| c.origin == Origin::Enumerated));
    }
}

#[test]
fn enumeration_matches_brute_force() {
    let mut r = rng(30);
    for _ in 0..25 {
        let g = random_graph(&mut r, 9, 3, 1, 2);
        for node in [0, 4, 8] {
            if g.receptive_field(node, 2).unwrap().edges.len() > 14 {
                continue;
            }
            for k in 0..=4 {
                let got: Vec<EdgeSubset> =
                    enumerate_candidates(&g, node, 2, limits(k)).unwrap().into_iter().map(|c| c.edges).collect();
                let unique: BTreeSet<EdgeSubset> = got.iter().cloned().collect();
                assert_eq!(unique.len(), got.len(), "duplicates");
                assert_eq!(unique, brute_force(&g, node, 2, k));
                let again: Vec<EdgeSubset> =
                    enumerate_candidates(&g, node, 2, limits(k)).unwrap().into_iter().map(|c| c.edges).collect();
                assert_eq!(got, again);
            }
        }
    }
}

#[test]
fn cap_truncates_or_fails() {
    let mut r = rng(31);
    let g = random_graph(&mut r, 12, 10, 1, 2);
    let all = enumerate_candidates(&g, 0, 3, limits(4)).unwrap();
    assert!(all.len() > 20);
    let capped = enumerate_candidates(
        &g,
        0,
        3,
        EnumerationLimits {
            max_edges: 4,
            cap: 20,
            allow_truncation: true,
        },
    )
    .unwrap();
    assert_eq!(capped.len(), 20);
    assert_eq!(&all[..20], &capped[..]);
    let strict = EnumerationLimits {
        max_edges: 4,
        cap: 20,
        allow_truncation: false,
    };
    assert!(matches!(enumerate_candidates(&g, 0, 3, strict), Err(Error::Capacity { cap: 20 })));
}

#[test]
fn house_enumeration_contains_the_square() {
    let (bench, _) = trained_small(1);
    let g = &bench.graph;
    let node = (0..g.num_nodes()).find(|&v| g.role(v) == Some(Role::Shoulder)).unwrap();
    let gt = g.gt_explanation(node).unwrap();
    let square: EdgeSubset = gt
        .iter()
        .filter(|e| g.role(e.lo()) != Some(Role::Top) && g.role(e.hi()) != Some(Role::Top))
        .copied()
        .collect();
    assert_eq!(square.len(), 4);
    let c = enumerate_candidates(g, node, 3, limits(4)).unwrap();
    assert!(c.iter().any(|c| c.edges == square));
}

#[test]
fn named_candidates_per_role() {
    let (bench, _) = trained_small(2);
    let g = &bench.graph;
    let find = |role| (0..g.num_nodes()).find(|&v| g.role(v) == Some(role)).unwrap();
    let shoulder = named_candidates(g, find(Role::Shoulder)).unwrap();
    let names: Vec<&str> = shoulder.iter().map(|c| c.origin.label()).collect();
    let size_of = |name: &str| shoulder.iter().find(|c| c.origin.label() == name).unwrap().edges.len();
    assert_eq!(size_of("house"), 6);
    assert_eq!(size_of("triangle"), 3);
    assert_eq!(size_of("square"), 4);
    assert_eq!(size_of("target"), 0);
    assert_eq!(names.iter().filter(|n| n.starts_with("node-")).count(), 4);

    let top = named_candidates(g, find(Role::Top)).unwrap();
    assert!(top.iter().any(|c| c.origin.label() == "triangle"));
    assert!(!top.iter().any(|c| c.origin.label() == "square"));

    assert!(named_candidates(g, find(Role::Base)).unwrap().is_empty());
    assert!(named_candidates(g, g.num_nodes()).is_err());

    let tc = generate_tree_cycles(&TreeCyclesParams {
        tree_levels: 3,
        num_motifs: 2,
        ..Default::default()
    })
    .unwrap();
    let cycle_node = *tc.graph.gt_explanations().keys().next().unwrap();
    let c = named_candidates(&tc.graph, cycle_node).unwrap();
    let got: Vec<(&str, usize)> = c.iter().map(|c| (c.origin.label(), c.edges.len())).collect();
    assert_eq!(got, vec![("cycle", 6), ("target", 0)]);
}

#[test]
fn zero_model_scores_are_uniform() {
    let (bench, _) = trained_small(3);
    let g = &bench.graph;
    let model = GcnModel::zeros(&[10, 4, 4, 4], 4).unwrap();
    let node = *g.gt_explanations().keys().next().unwrap();
    let cands = named_candidates(g, node).unwrap();
    for s in score_candidates(&model, g, node, &cands).unwrap() {
        assert!((s.entropy - 4f64.ln()).abs() < 1e-12);
        assert!(s.prediction_correct);
    }
    let table = baseline_entropy_table(&model, g, None).unwrap();
    assert_eq!(table.keys().copied().collect::<Vec<_>>(), vec![Role::Top, Role::Shoulder, Role::Bottom]);
    for row in table.values() {
        for cell in [row.ground_truth, row.receptive_field, row.target_node] {
            assert!((cell.mean - 4f64.ln()).abs() < 1e-12);
        }
    }
    let only_top = baseline_entropy_table(&model, g, Some(&[Role::Top])).unwrap();
    assert_eq!(only_top.len(), 1);
    assert_eq!(only_top[&Role::Top].ground_truth.count, 12);
}

#[test]
fn field_candidate_matches_field_prediction() {
    let (bench, trained) = trained_small(4);
    let g = &bench.graph;
    let node = *g.gt_explanations().keys().nth(2).unwrap();
    let field = g.receptive_field(node, 3).unwrap();
    let reference = gnnx_core::threshold::reference_class(&trained.model, g, node).unwrap();
    let cand = MotifCandidate {
        edges: field.edges.clone(),
        origin: Origin::ReceptiveField,
    };
    let s = score_candidate(&trained.model, g, node, &cand, reference).unwrap();
    assert!(s.prediction_correct);
    assert_eq!(s.size, field.edges.len());
}

fn score(entropy: f64, correct: bool, size: usize) -> CandidateScore {
    CandidateScore {
        entropy,
        predicted_class: if correct { 1 } else { 0 },
        prediction_correct: correct,
        size,
    }
}

fn named(name: &str, edges: EdgeSubset) -> MotifCandidate {
    MotifCandidate {
        edges,
        origin: Origin::Named(name.into()),
    }
}

#[test]
fn selection_examples() {
    let house = named("house", set(&[(0, 1), (0, 2), (1, 2), (1, 3), (2, 4), (3, 4)]));
    let tri = named("triangle", set(&[(0, 1), (0, 2), (1, 2)]));
    let square = named("square", set(&[(1, 2), (1, 3), (2, 4), (3, 4)]));
    let field = set(&[(0, 1), (0, 2), (1, 2), (1, 3), (2, 4), (3, 4), (4, 5)]);
    let cands = vec![house.clone(), tri.clone(), square];
    let scores = vec![score(0.3, true, 6), score(0.2, true, 3), score(0.25, true, 4)];
    let sel = select_from_scored(&cands, &scores, &field);
    assert!(sel.found);
    assert_eq!(sel.candidate, tri);

    let sel = select_from_scored(&cands[..1], &scores[..1], &field);
    assert_eq!(sel.candidate, house);

    let flipping = vec![score(0.1, false, 6), score(0.1, false, 3), score(0.1, false, 4)];
    let sel = select_from_scored(&cands, &flipping, &field);
    assert!(!sel.found);
    assert_eq!(sel.candidate.edges, field);
    assert_eq!(sel.candidate.origin, Origin::ReceptiveField);

    // equal entropy: fewer edges wins
    let tied = vec![score(0.2, true, 6), score(0.2, true, 3), score(0.2, true, 4)];
    assert_eq!(select_from_scored(&cands, &tied, &field).candidate, tri);
}

#[test]
fn selection_on_trained_model_is_minimal() {
    let (bench, trained) = trained_small(5);
    let g = &bench.graph;
    for &node in g.gt_explanations().keys() {
        let cands = named_candidates(g, node).unwrap();
        let scores = score_candidates(&trained.model, g, node, &cands).unwrap();
        let sel = select_ground_truth(&trained.model, g, node, &cands).unwrap();
        if let Some(best) = sel.score {
            assert!(best.prediction_correct);
            for s in scores.iter().filter(|s| s.prediction_correct) {
                assert!(best.entropy <= s.entropy);
            }
        } else {
            assert!(scores.iter().all(|s| !s.prediction_correct));
        }
    }
}

proptest! {
    #[test]
    fn selection_ignores_candidate_order(
        raw in prop::collection::vec((0u8..4, any::<bool>(), prop::collection::btree_set((0usize..4, 4usize..8), 0..4)), 1..12),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let cands: Vec<MotifCandidate> = raw
            .iter()
            .map(|(_, _, e)| MotifCandidate { edges: e.iter().map(|&(a, b)| Edge::new(a, b)).collect(), origin: Origin::Enumerated })
            .collect();
        let scores: Vec<CandidateScore> = raw
            .iter()
            .zip(&cands)
            .map(|((h, ok, _), c)| score(*h as f64 / 4.0, *ok, c.edges.len()))
            .collect();
        let field = EdgeSubset::new();
        let a = select_from_scored(&cands, &scores, &field);
        let mut idx: Vec<usize> = (0..cands.len()).collect();
        idx.shuffle(&mut rng(seed));
        let c2: Vec<MotifCandidate> = idx.iter().map(|&i| cands[i].clone()).collect();
        let s2: Vec<CandidateScore> = idx.iter().map(|&i| scores[i]).collect();
        let b = select_from_scored(&c2, &s2, &field);
        prop_assert_eq!(&a, &b);
        if a.found {
            let best = a.score.unwrap();
            for s in scores.iter().filter(|s| s.prediction_correct) {
                prop_assert!(best.entropy <= s.entropy);
            }
        }
    }
}
