#![allow(dead_code)]

pub mod reference;
pub mod refiner_oracle;

use combnode::graph::symmetrize_dedup;
use combnode::{Graph, HyperParams};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

/// A small random labeled graph with a train/target partition.
pub struct Instance {
    pub graph: Graph,
    pub train: Vec<usize>,
    pub target: Vec<usize>,
}

pub fn random_instance(rng: &mut impl Rng, max_n: usize) -> Instance {
    let n = rng.random_range(2..=max_n);
    let classes = rng.random_range(2..=4);
    let dim = rng.random_range(1..=4);
    let p = rng.random_range(0.1..0.6);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let adjacency = symmetrize_dedup(&edges, n).unwrap();
    let features = Array2::from_shape_fn((n, dim), |_| {
        // Occasional exact zeros exercise the zero-norm similarity rule.
        if rng.random_bool(0.1) {
            0.0
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    let labels = (0..n).map(|_| Some(rng.random_range(0..classes))).collect();
    let graph = Graph::new(adjacency, features, labels, classes).unwrap();

    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let n_train = rng.random_range(1..n);
    let mut train = nodes[..n_train].to_vec();
    let mut target: Vec<usize> = nodes[n_train..]
        .iter()
        .copied()
        .filter(|_| rng.random_bool(0.85))
        .collect();
    train.sort_unstable();
    target.shuffle(rng);
    Instance {
        graph,
        train,
        target,
    }
}

pub fn random_hyperparams(rng: &mut impl Rng) -> HyperParams {
    let mut signed = |r: f64| rng.random_range(-r..r);
    HyperParams {
        a1: signed(2.0),
        a2: signed(2.0),
        a3: signed(2.0),
        a8: signed(2.0),
        a9: signed(1.0),
        a7: rng.random_range(0.0..=1.0),
        b1: rng.random_range(0.0..2.0),
        b2: rng.random_range(0.0..2.0),
        b3: rng.random_range(0.0..2.0),
        k0: *[1u32, 2, 3, 5].get(rng.random_range(0..4)).unwrap(),
        tau_defer: *[0.0, 0.01, 0.05, 0.3].get(rng.random_range(0..4)).unwrap(),
        use_two_hop: rng.random_bool(0.5),
        adapt_a2: rng.random_bool(0.7),
        adapt_a8: rng.random_bool(0.7),
        standardize: false,
        seed: 0,
    }
}

/// Fraction of `nodes` carrying the most common label among them.
pub fn majority_rate(graph: &Graph, nodes: &[usize]) -> f64 {
    let mut counts = vec![0usize; graph.num_classes()];
    for &u in nodes {
        counts[graph.label(u).unwrap()] += 1;
    }
    *counts.iter().max().unwrap() as f64 / nodes.len() as f64
}
