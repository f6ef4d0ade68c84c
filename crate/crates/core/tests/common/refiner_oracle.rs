//! Dense, loop-based forward pass and finite-difference gradients.

use combnode::refiner::{loss_and_gradients, RefinerConfig, RefinerParams};
use combnode::Graph;
use combnode::graph::symmetrize_dedup;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense_norm_adj(graph: &Graph) -> Array2<f64> {
    let n = graph.node_count();
    let mut a = Array2::<f64>::eye(n);
    for u in 0..n {
        for &v in graph.neighbors(u) {
            a[[u, v]] = 1.0;
        }
    }
    let deg: Vec<f64> = (0..n).map(|u| a.row(u).sum()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (deg[i].sqrt() * deg[j].sqrt()))
}

fn affine(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), w.ncols()));
    for i in 0..x.nrows() {
        for j in 0..w.ncols() {
            let mut acc = b[j];
            for k in 0..x.ncols() {
                acc += x[[i, k]] * w[[k, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    affine(a, b, &Array1::zeros(b.ncols()))
}

pub fn dense_logits(params: &RefinerParams, graph: &Graph, x: &Array2<f64>) -> Array2<f64> {
    let a = dense_norm_adj(graph);
    let h1 = affine(&matmul(&a, x), &params.w1, &params.b1).mapv(|v| v.max(0.0));
    let h2 = affine(&matmul(&a, &h1), &params.w2, &params.b2);
    let h3 = affine(&h2, &params.w3, &params.b3).mapv(|v| v.max(0.0));
    affine(&h3, &params.w4, &params.b4)
}

pub fn dense_loss(params: &RefinerParams, graph: &Graph, x: &Array2<f64>, train: &[usize]) -> f64 {
    let z = dense_logits(params, graph, x);
    let mut total = 0.0;
    for &u in train {
        let y = graph.label(u).unwrap();
        let row = z.row(u);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / train.len() as f64
}

pub struct GradCheck {
    /// Worst per-block ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖).
    pub max_rel_error: f64,
    /// |library loss − dense loss|.
    pub loss_gap: f64,
}

/// A random 6-node instance with small layers, checked block by block.
pub fn gradient_check(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 6;
    let classes = 3;
    let dim = 4;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(0.4) {
                edges.push((u, v));
            }
        }
    }
    let adj = symmetrize_dedup(&edges, n).unwrap();
    let x = Array2::from_shape_fn((n, dim), |_| rng.random_range(-1.0..1.0));
    let labels = (0..n).map(|_| Some(rng.random_range(0..classes))).collect();
    let graph = Graph::new(adj, x.clone(), labels, classes).unwrap();
    let train: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.6)).collect();
    let train = if train.is_empty() { vec![0] } else { train };
    let cfg = RefinerConfig {
        hidden1: 5,
        hidden2: 4,
        hidden3: 4,
        seed: seed ^ 0xABCD,
        ..RefinerConfig::default()
    };
    let mut params = RefinerParams::init(dim, classes, &cfg);
    // Nonzero biases so every block carries gradient signal.
    for block in params.blocks_mut() {
        for v in block.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }

    let (loss, grads) = loss_and_gradients(&params, &graph, &x, &train).unwrap();
    let loss_gap = (loss - dense_loss(&params, &graph, &x, &train)).abs();

    let h = 1e-6;
    let analytic: Vec<Vec<f64>> = grads.blocks().iter().map(|b| b.to_vec()).collect();
    let mut max_rel_error: f64 = 0.0;
    for (bi, a_block) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; a_block.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let mut plus = params.clone();
            plus.blocks_mut()[bi][i] += h;
            let mut minus = params.clone();
            minus.blocks_mut()[bi][i] -= h;
            *slot = (dense_loss(&plus, &graph, &x, &train) - dense_loss(&minus, &graph, &x, &train)) / (2.0 * h);
        }
        let diff: f64 = a_block.iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let na = a_block.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = na.max(nn);
        let rel = if scale < 1e-12 { diff } else { diff / scale };
        max_rel_error = max_rel_error.max(rel);
    }
    GradCheck {
        max_rel_error,
        loss_gap,
    }
}
