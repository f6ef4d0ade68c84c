//! Shallow graph-convolutional refiner with hand-derived gradients, logit
//! injection of combinatorial predictions, and the validation gate.
//!
//! ```text
//! H1 = relu(Â X W1 + b1)
//! H2 = Â H1 W2 + b2
//! H3 = relu(H2 W3 + b3)
//! Z  = H3 W4 + b4
//! ```
//!
//! `Â = D̃^{-1/2} (A + I) D̃^{-1/2}`. The loss is the mean softmax negative
//! log-likelihood over training nodes; parameters are updated with Adam and
//! L2 weight decay.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::stats::TrainStats;

/// Symmetrically normalized adjacency with self-loops, in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormAdjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

pub fn normalized_adjacency(graph: &Graph) -> NormAdjacency {
    let n = graph.node_count();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|u| 1.0 / ((graph.degree(u) + 1) as f64).sqrt())
        .collect();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut targets = Vec::with_capacity(2 * graph.edge_count() + n);
    let mut weights = Vec::with_capacity(targets.capacity());
    offsets.push(0);
    for u in 0..n {
        let mut row: Vec<usize> = graph.neighbors(u).to_vec();
        let pos = row.partition_point(|&v| v < u);
        row.insert(pos, u);
        for v in row {
            targets.push(v);
            weights.push(inv_sqrt[u] * inv_sqrt[v]);
        }
        offsets.push(targets.len());
    }
    NormAdjacency {
        offsets,
        targets,
        weights,
    }
}

impl NormAdjacency {
    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `Â · m`.
    pub fn apply(&self, m: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((self.node_count(), m.ncols()));
        for (u, mut row) in out.rows_mut().into_iter().enumerate() {
            for k in self.offsets[u]..self.offsets[u + 1] {
                row.scaled_add(self.weights[k], &m.row(self.targets[k]));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.node_count();
        let mut out = Array2::zeros((n, n));
        for u in 0..n {
            for k in self.offsets[u]..self.offsets[u + 1] {
                out[[u, self.targets[k]]] = self.weights[k];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinerConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub hidden3: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        RefinerConfig {
            hidden1: 64,
            hidden2: 64,
            hidden3: 32,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            epochs: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinerParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
    pub w4: Array2<f64>,
    pub b4: Array1<f64>,
}

impl RefinerParams {
    pub fn zeros(dim: usize, classes: usize, cfg: &RefinerConfig) -> Self {
        RefinerParams {
            w1: Array2::zeros((dim, cfg.hidden1)),
            b1: Array1::zeros(cfg.hidden1),
            w2: Array2::zeros((cfg.hidden1, cfg.hidden2)),
            b2: Array1::zeros(cfg.hidden2),
            w3: Array2::zeros((cfg.hidden2, cfg.hidden3)),
            b3: Array1::zeros(cfg.hidden3),
            w4: Array2::zeros((cfg.hidden3, classes)),
            b4: Array1::zeros(classes),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(dim: usize, classes: usize, cfg: &RefinerConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut glorot = |rows: usize, cols: usize| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
        };
        let mut p = RefinerParams::zeros(dim, classes, cfg);
        p.w1 = glorot(dim, cfg.hidden1);
        p.w2 = glorot(cfg.hidden1, cfg.hidden2);
        p.w3 = glorot(cfg.hidden2, cfg.hidden3);
        p.w4 = glorot(cfg.hidden3, classes);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn classes(&self) -> usize {
        self.w4.ncols()
    }

    /// Parameter blocks in a fixed order: w1, b1, w2, b2, w3, b3, w4, b4.
    pub fn blocks(&self) -> [&[f64]; 8] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
            self.w3.as_slice().unwrap(),
            self.b3.as_slice().unwrap(),
            self.w4.as_slice().unwrap(),
            self.b4.as_slice().unwrap(),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
            self.w3.as_slice_mut().unwrap(),
            self.b3.as_slice_mut().unwrap(),
            self.w4.as_slice_mut().unwrap(),
            self.b4.as_slice_mut().unwrap(),
        ]
    }

    fn zeros_like(&self) -> Self {
        RefinerParams {
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.raw_dim()),
            w3: Array2::zeros(self.w3.raw_dim()),
            b3: Array1::zeros(self.b3.raw_dim()),
            w4: Array2::zeros(self.w4.raw_dim()),
            b4: Array1::zeros(self.b4.raw_dim()),
        }
    }

    fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }
}

/// One-hot logit prior `λ · e_ŷ` on the nodes of `predictions`.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection<'a> {
    pub predictions: &'a BTreeMap<usize, usize>,
    pub lambda: f64,
}

/// `ℓ_u += λ e_{ŷ_u}` for every `u` in `predictions`; other rows untouched.
pub fn inject(logits: &mut Array2<f64>, predictions: &BTreeMap<usize, usize>, lambda: f64) {
    if lambda == 0.0 {
        return;
    }
    for (&u, &c) in predictions {
        logits[[u, c]] += lambda;
    }
}

/// Intermediate activations kept for the backward pass.
struct Activations {
    h1: Array2<f64>,
    p1: Array2<f64>,
    h2: Array2<f64>,
    h3: Array2<f64>,
    logits: Array2<f64>,
}

fn add_bias(m: &mut Array2<f64>, b: &Array1<f64>) {
    m.rows_mut().into_iter().for_each(|mut r| r += b);
}

fn relu(m: &mut Array2<f64>) {
    m.mapv_inplace(|x| x.max(0.0));
}

fn forward_cached(params: &RefinerParams, adj: &NormAdjacency, ax: &Array2<f64>) -> Activations {
    let mut h1 = ax.dot(&params.w1);
    add_bias(&mut h1, &params.b1);
    relu(&mut h1);
    let p1 = adj.apply(&h1);
    let mut h2 = p1.dot(&params.w2);
    add_bias(&mut h2, &params.b2);
    let mut h3 = h2.dot(&params.w3);
    add_bias(&mut h3, &params.b3);
    relu(&mut h3);
    let mut logits = h3.dot(&params.w4);
    add_bias(&mut logits, &params.b4);
    Activations {
        h1,
        p1,
        h2,
        h3,
        logits,
    }
}

/// Full-graph logits, with the optional prior added on its nodes.
pub fn forward(
    params: &RefinerParams,
    adj: &NormAdjacency,
    features: &Array2<f64>,
    injection: Option<&Injection<'_>>,
) -> Result<Array2<f64>> {
    check_dims(params, adj, features)?;
    let ax = adj.apply(features);
    let mut logits = forward_cached(params, adj, &ax).logits;
    if let Some(inj) = injection {
        inject(&mut logits, inj.predictions, inj.lambda);
    }
    Ok(logits)
}

fn check_dims(params: &RefinerParams, adj: &NormAdjacency, features: &Array2<f64>) -> Result<()> {
    if features.ncols() != params.input_dim() {
        return Err(Error::Contract(format!(
            "feature dimension {} does not match first layer input {}",
            features.ncols(),
            params.input_dim()
        )));
    }
    if features.nrows() != adj.node_count() {
        return Err(Error::Contract("feature rows do not match node count".into()));
    }
    Ok(())
}

/// Mean NLL over `train` and its gradient. `ax` is `Â X`.
fn loss_and_grad(
    params: &RefinerParams,
    adj: &NormAdjacency,
    ax: &Array2<f64>,
    train: &[(usize, usize)],
    injection: Option<&Injection<'_>>,
) -> (f64, RefinerParams) {
    let mut act = forward_cached(params, adj, ax);
    if let Some(inj) = injection {
        inject(&mut act.logits, inj.predictions, inj.lambda);
    }
    let n = act.logits.nrows();
    let scale = 1.0 / train.len() as f64;

    // dZ = (softmax - onehot) / |T| on training rows.
    let mut dz = Array2::<f64>::zeros((n, params.classes()));
    let mut loss = 0.0;
    for &(u, y) in train {
        let row = act.logits.row(u);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_norm = max + sum.ln();
        loss += log_norm - row[y];
        for (c, g) in dz.row_mut(u).iter_mut().enumerate() {
            *g = (row[c] - log_norm).exp() * scale;
        }
        dz[[u, y]] -= scale;
    }
    loss *= scale;

    let mut grad = params.zeros_like();
    grad.w4 = act.h3.t().dot(&dz);
    grad.b4 = dz.sum_axis(Axis(0));
    let mut da3 = dz.dot(&params.w4.t());
    ndarray::Zip::from(&mut da3)
        .and(&act.h3)
        .for_each(|g, &h| {
            if h <= 0.0 {
                *g = 0.0
            }
        });
    grad.w3 = act.h2.t().dot(&da3);
    grad.b3 = da3.sum_axis(Axis(0));
    let dh2 = da3.dot(&params.w3.t());
    grad.w2 = act.p1.t().dot(&dh2);
    grad.b2 = dh2.sum_axis(Axis(0));
    let dp1 = dh2.dot(&params.w2.t());
    // Â is symmetric, so Âᵀ dP1 = Â dP1.
    let mut da1 = adj.apply(&dp1);
    ndarray::Zip::from(&mut da1)
        .and(&act.h1)
        .for_each(|g, &h| {
            if h <= 0.0 {
                *g = 0.0
            }
        });
    grad.w1 = ax.t().dot(&da1);
    grad.b1 = da1.sum_axis(Axis(0));
    (loss, grad)
}

/// Training NLL and analytic gradients for `params` (no weight decay term).
pub fn loss_and_gradients(
    params: &RefinerParams,
    graph: &Graph,
    features: &Array2<f64>,
    train: &[usize],
) -> Result<(f64, RefinerParams)> {
    let adj = normalized_adjacency(graph);
    check_dims(params, &adj, features)?;
    let pairs = labeled_train(graph, train)?;
    let ax = adj.apply(features);
    Ok(loss_and_grad(params, &adj, &ax, &pairs, None))
}

/// Training NLL only.
pub fn training_loss(
    params: &RefinerParams,
    graph: &Graph,
    features: &Array2<f64>,
    train: &[usize],
) -> Result<f64> {
    Ok(loss_and_gradients(params, graph, features, train)?.0)
}

fn labeled_train(graph: &Graph, train: &[usize]) -> Result<Vec<(usize, usize)>> {
    if train.is_empty() {
        return Err(Error::Contract("refiner needs at least one training node".into()));
    }
    train
        .iter()
        .map(|&u| {
            graph
                .label(u)
                .map(|y| (u, y))
                .ok_or_else(|| Error::Contract(format!("training node {u} is unlabeled")))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainedRefiner {
    pub params: RefinerParams,
    /// Training loss observed at each epoch, before that epoch's update.
    pub loss_history: Vec<f64>,
}

/// Runs `cfg.epochs` full-graph Adam steps on the training NLL. Only labels of
/// `train` are read.
pub fn train_refiner(
    graph: &Graph,
    features: &Array2<f64>,
    train: &[usize],
    init: RefinerParams,
    cfg: &RefinerConfig,
    injection: Option<&Injection<'_>>,
) -> Result<TrainedRefiner> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    let adj = normalized_adjacency(graph);
    check_dims(&init, &adj, features)?;
    let pairs = labeled_train(graph, train)?;
    let ax = adj.apply(features);

    let mut params = init;
    let mut m = params.zeros_like();
    let mut v = params.zeros_like();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (loss, grad) = loss_and_grad(&params, &adj, &ax, &pairs, injection);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss {loss} at epoch {epoch}")));
        }
        history.push(loss);
        let bc1 = 1.0 - BETA1.powi(epoch as i32);
        let bc2 = 1.0 - BETA2.powi(epoch as i32);
        let blocks = params.blocks_mut();
        let grads = grad.blocks();
        let ms = m.blocks_mut();
        let vs = v.blocks_mut();
        for (((p, g), mb), vb) in blocks.into_iter().zip(grads).zip(ms).zip(vs) {
            for i in 0..p.len() {
                let gi = g[i] + cfg.weight_decay * p[i];
                mb[i] = BETA1 * mb[i] + (1.0 - BETA1) * gi;
                vb[i] = BETA2 * vb[i] + (1.0 - BETA2) * gi * gi;
                let mhat = mb[i] / bc1;
                let vhat = vb[i] / bc2;
                p[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + EPS);
            }
        }
        if !params.is_finite() {
            return Err(Error::NonFinite(format!("parameters diverged at epoch {epoch}")));
        }
    }
    Ok(TrainedRefiner {
        params,
        loss_history: history,
    })
}

/// Row-wise argmax (lowest index wins ties) for the listed nodes.
pub fn argmax_rows(logits: &Array2<f64>, nodes: &[usize]) -> BTreeMap<usize, usize> {
    nodes
        .iter()
        .map(|&u| {
            let row = logits.row(u);
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            (u, best)
        })
        .collect()
}

/// Controls the strength of the injected combinatorial prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionConfig {
    pub lambda_max: f64,
    pub gamma_lambda: f64,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        InjectionConfig {
            lambda_max: 2.0,
            gamma_lambda: 50.0,
        }
    }
}

/// `λ = λ_max · m / (m + γ_λ) · |h − 1/C| / (1 − 1/C)`, clamped to
/// `[0, λ_max]`. Zero without train–train edges or with a single class.
pub fn compute_lambda(stats: &TrainStats, cfg: &InjectionConfig) -> f64 {
    if stats.m == 0 || stats.c_used < 2 {
        return 0.0;
    }
    let baseline = 1.0 / stats.c_used as f64;
    let evidence = stats.m as f64 / (stats.m as f64 + cfg.gamma_lambda);
    let strength = (stats.h - baseline).abs() / (1.0 - baseline);
    (cfg.lambda_max * evidence * strength).clamp(0.0, cfg.lambda_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Combinatorial,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub chosen: Strategy,
    pub val_acc_comb: f64,
    pub val_acc_hybrid: f64,
    pub margin: f64,
}

/// Picks the hybrid only if it beats the combinatorial validation accuracy by
/// at least `margin`.
pub fn gate(val_acc_comb: f64, val_acc_hybrid: f64, margin: f64) -> GateDecision {
    let chosen = if val_acc_hybrid >= val_acc_comb + margin {
        Strategy::Hybrid
    } else {
        Strategy::Combinatorial
    };
    GateDecision {
        chosen,
        val_acc_comb,
        val_acc_hybrid,
        margin,
    }
}
