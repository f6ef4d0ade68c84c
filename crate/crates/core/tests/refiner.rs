mod common;

use std::collections::BTreeMap;

use combnode::graph::symmetrize_dedup;
use combnode::refiner::{
    argmax_rows, compute_lambda, forward, gate, normalized_adjacency, train_refiner, Injection,
    InjectionConfig, RefinerConfig, RefinerParams, Strategy,
};
use combnode::{Graph, StatsConfig, TrainStats};
use common::refiner_oracle::{dense_logits, gradient_check};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_cliques(seed: u64) -> Graph {
    let mut edges = Vec::new();
    for base in [0, 4] {
        for u in base..base + 4 {
            for v in u + 1..base + 4 {
                edges.push((u, v));
            }
        }
    }
    edges.push((3, 4));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((8, 3), |(u, j)| {
        let signal = if (u < 4) == (j == 0) { 1.0 } else { 0.0 };
        signal + 0.1 * rng.random_range(-1.0..1.0)
    });
    let labels = (0..8).map(|u| Some(usize::from(u >= 4))).collect();
    Graph::new(symmetrize_dedup(&edges, 8).unwrap(), x, labels, 2).unwrap()
}

fn small_cfg() -> RefinerConfig {
    RefinerConfig {
        hidden1: 8,
        hidden2: 8,
        hidden3: 4,
        ..RefinerConfig::default()
    }
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..20 {
        let check = gradient_check(seed);
        assert!(check.loss_gap < 1e-10, "seed {seed}: loss gap {}", check.loss_gap);
        assert!(check.max_rel_error <= 1e-4, "seed {seed}: rel error {}", check.max_rel_error);
    }
}

#[test]
fn forward_matches_dense_reference() {
    let g = two_cliques(3);
    let params = RefinerParams::init(3, 2, &small_cfg());
    let sparse = forward(&params, &normalized_adjacency(&g), g.features(), None).unwrap();
    let dense = dense_logits(&params, &g, g.features());
    assert!((&sparse - &dense).iter().all(|d| d.abs() < 1e-12));
}

#[test]
fn fits_two_cliques() {
    let g = two_cliques(1);
    let train = [0, 1, 6, 7];
    let cfg = small_cfg();
    let init = RefinerParams::init(3, 2, &cfg);
    let trained = train_refiner(&g, g.features(), &train, init, &cfg, None).unwrap();
    let first = trained.loss_history[0];
    let last = *trained.loss_history.last().unwrap();
    assert_eq!(trained.loss_history.len(), cfg.epochs);
    assert!(last <= first);
    assert!(last < 0.1, "final loss {last}");
    let logits = forward(&trained.params, &normalized_adjacency(&g), g.features(), None).unwrap();
    let pred = argmax_rows(&logits, &[2, 5]);
    assert_eq!(pred[&2], 0);
    assert_eq!(pred[&5], 1);
}

#[test]
fn training_ignores_non_train_labels_and_injection() {
    let g = two_cliques(2);
    let train = [0, 7];
    let cfg = small_cfg();
    let init = RefinerParams::init(3, 2, &cfg);
    let plain = train_refiner(&g, g.features(), &train, init.clone(), &cfg, None).unwrap();
    let mut labels = g.labels().to_vec();
    labels[2] = Some(1);
    labels[5] = None;
    let preds: BTreeMap<usize, usize> = [(2, 1), (5, 0)].into();
    let injection = Injection {
        predictions: &preds,
        lambda: 1.5,
    };
    let other = g.with_labels(labels).unwrap();
    let injected = train_refiner(&other, other.features(), &train, init, &cfg, Some(&injection)).unwrap();
    assert_eq!(plain.params, injected.params);
}

#[test]
fn relabeling_nodes_permutes_logits() {
    let g = two_cliques(4);
    let perm = [5, 2, 7, 0, 3, 6, 1, 4];
    let mut edges = Vec::new();
    for (u, v) in g.adjacency().edges() {
        edges.push((perm[u], perm[v]));
    }
    let mut x = Array2::zeros((8, 3));
    let mut labels = vec![None; 8];
    for u in 0..8 {
        x.row_mut(perm[u]).assign(&g.features().row(u));
        labels[perm[u]] = g.label(u);
    }
    let h = Graph::new(symmetrize_dedup(&edges, 8).unwrap(), x, labels, 2).unwrap();
    let params = RefinerParams::init(3, 2, &small_cfg());
    let a = forward(&params, &normalized_adjacency(&g), g.features(), None).unwrap();
    let b = forward(&params, &normalized_adjacency(&h), h.features(), None).unwrap();
    for u in 0..8 {
        for c in 0..2 {
            assert!((a[[u, c]] - b[[perm[u], c]]).abs() < 1e-12);
        }
    }
}

#[test]
fn huge_lambda_reproduces_injected_labels() {
    let g = two_cliques(5);
    let params = RefinerParams::init(3, 2, &small_cfg());
    let preds: BTreeMap<usize, usize> = [(1, 1), (2, 1), (5, 0)].into();
    let injection = Injection {
        predictions: &preds,
        lambda: 1e6,
    };
    let adj = normalized_adjacency(&g);
    let logits = forward(&params, &adj, g.features(), Some(&injection)).unwrap();
    let plain = forward(&params, &adj, g.features(), None).unwrap();
    let nodes: Vec<usize> = preds.keys().copied().collect();
    assert_eq!(argmax_rows(&logits, &nodes), preds);
    for u in [0, 3, 4, 6, 7] {
        assert_eq!(logits.row(u), plain.row(u));
    }
}

fn stats_with(h: f64, m: usize, classes: usize) -> TrainStats {
    let adj = symmetrize_dedup(&[(0, 1)], 2).unwrap();
    let g = Graph::new(adj, Array2::zeros((2, 1)), vec![Some(0), Some(1)], classes).unwrap();
    let mut s = TrainStats::build(&g, &[0, 1], StatsConfig::default()).unwrap();
    s.h = h;
    s.m = m;
    s
}

#[test]
fn lambda_grows_with_evidence_and_distance_from_baseline() {
    let cfg = InjectionConfig::default();
    let mut last = -1.0;
    for m in [0, 1, 10, 100, 1000] {
        let l = compute_lambda(&stats_with(0.9, m, 2), &cfg);
        assert!(l >= last && (0.0..=cfg.lambda_max).contains(&l));
        last = l;
    }
    let mut last = -1.0;
    for h in [0.5, 0.6, 0.8, 1.0] {
        let l = compute_lambda(&stats_with(h, 100, 2), &cfg);
        assert!(l >= last);
        last = l;
    }
    // Symmetric around the baseline.
    let lo = compute_lambda(&stats_with(0.1, 100, 2), &cfg);
    let hi = compute_lambda(&stats_with(0.9, 100, 2), &cfg);
    assert!((lo - hi).abs() < 1e-12);
    assert_eq!(compute_lambda(&stats_with(0.5, 100, 2), &cfg), 0.0);
}

proptest! {
    #[test]
    fn gate_picks_hybrid_exactly_when_it_clears_the_margin(
        comb in 0.0f64..=1.0,
        hybrid in 0.0f64..=1.0,
        margin in 0.0f64..0.2,
    ) {
        let d = gate(comb, hybrid, margin);
        prop_assert_eq!(d.chosen == Strategy::Hybrid, hybrid >= comb + margin);
        prop_assert_eq!(gate(comb, hybrid, f64::INFINITY).chosen, Strategy::Combinatorial);
        prop_assert_eq!(d.val_acc_comb, comb);
        prop_assert_eq!(d.val_acc_hybrid, hybrid);
    }
}
