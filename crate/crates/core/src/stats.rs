//! Quantities estimated from the training labels only: smoothed class priors,
//! the label compatibility matrix, shrunk edge homophily and feature-space
//! class prototypes.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Smoothing and shrinkage constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    /// Laplace constant for class priors.
    pub alpha: f64,
    /// Laplace constant for compatibility rows.
    pub beta: f64,
    /// Pseudo-edge count pulling homophily toward `1/C`.
    pub gamma: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            alpha: 1.0,
            beta: 1.0,
            gamma: 20.0,
        }
    }
}

/// Where a node's label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Train,
    Propagated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homophily {
    pub h_raw: f64,
    pub h: f64,
    /// Undirected train–train edge count.
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub priors: Vec<f64>,
    /// Row-stochastic; `compat[[from, to]] ≈ P(y_u = to | y_v = from)`.
    pub compat: Array2<f64>,
    pub h_raw: f64,
    pub h: f64,
    pub m: usize,
    pub c_used: usize,
    /// Plain class means of the training features.
    pub prototypes: Array2<f64>,
    pub config: StatsConfig,
}

impl TrainStats {
    /// Estimates every statistic from `train`. Labels of any other node are
    /// never read.
    pub fn build(graph: &Graph, train: &[usize], config: StatsConfig) -> Result<Self> {
        let c_used = graph.num_classes();
        let train_labels = train
            .iter()
            .map(|&u| {
                graph
                    .label(u)
                    .ok_or_else(|| Error::Contract(format!("training node {u} is unlabeled")))
            })
            .collect::<Result<Vec<_>>>()?;
        let priors = class_priors(&train_labels, c_used, config.alpha)?;
        let compat = compatibility_matrix(graph, train, config.beta);
        let Homophily { h_raw, h, m } = shrunk_homophily(graph, train, c_used, config.gamma);
        let labeled = train
            .iter()
            .zip(&train_labels)
            .map(|(&u, &c)| (u, c, Origin::Train));
        // Equal weights cancel in the mean; 0.5 keeps them nonzero.
        let prototypes = prototypes(graph.features(), c_used, 0.5, labeled);
        Ok(TrainStats {
            priors,
            compat,
            h_raw,
            h,
            m,
            c_used,
            prototypes,
            config,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.priors.len()
    }
}

/// `π_c = (n_c + α) / (|T| + αC)`.
pub fn class_priors(train_labels: &[usize], num_classes: usize, alpha: f64) -> Result<Vec<f64>> {
    if train_labels.is_empty() {
        return Err(Error::Contract("class priors need at least one training label".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::Contract("prior smoothing must be positive".into()));
    }
    let mut counts = vec![0usize; num_classes];
    for &c in train_labels {
        counts[c] += 1;
    }
    let denom = train_labels.len() as f64 + alpha * num_classes as f64;
    Ok(counts.iter().map(|&n| (n as f64 + alpha) / denom).collect())
}

/// Label compatibility from train–train edges, counting both orientations of
/// each undirected edge, with add-`beta` smoothing per row.
pub fn compatibility_matrix(graph: &Graph, train: &[usize], beta: f64) -> Array2<f64> {
    let c = graph.num_classes();
    let mut counts = Array2::<f64>::zeros((c, c));
    for_each_train_edge(graph, train, |a, b| {
        counts[[a, b]] += 1.0;
        counts[[b, a]] += 1.0;
    });
    for mut row in counts.rows_mut() {
        let total = row.sum() + beta * c as f64;
        row.mapv_inplace(|x| (x + beta) / total);
    }
    counts
}

/// Train-only edge homophily, shrunk toward `1/c_used` with strength `gamma`.
pub fn shrunk_homophily(graph: &Graph, train: &[usize], c_used: usize, gamma: f64) -> Homophily {
    let mut m = 0usize;
    let mut same = 0usize;
    for_each_train_edge(graph, train, |a, b| {
        m += 1;
        same += usize::from(a == b);
    });
    let h_raw = if m == 0 { 0.0 } else { same as f64 / m as f64 };
    let baseline = 1.0 / c_used as f64;
    let h = if m == 0 {
        baseline
    } else {
        (m as f64 * h_raw + gamma * baseline) / (m as f64 + gamma)
    };
    Homophily { h_raw, h, m }
}

/// Calls `f(label_u, label_v)` once per undirected edge with both endpoints in
/// `train`.
fn for_each_train_edge(graph: &Graph, train: &[usize], mut f: impl FnMut(usize, usize)) {
    let mut in_train = vec![false; graph.node_count()];
    for &u in train {
        in_train[u] = true;
    }
    for (u, v) in graph.adjacency().edges() {
        if in_train[u] && in_train[v] {
            if let (Some(a), Some(b)) = (graph.label(u), graph.label(v)) {
                f(a, b);
            }
        }
    }
}

/// Weighted class centroids: training nodes weigh `1 - a7`, propagated nodes
/// `a7`. Classes without weight get a zero prototype. Accumulation follows the
/// iteration order of `labeled`.
pub fn prototypes(
    features: &Array2<f64>,
    num_classes: usize,
    a7: f64,
    labeled: impl IntoIterator<Item = (usize, usize, Origin)>,
) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((num_classes, features.ncols()));
    let mut weights = vec![0.0f64; num_classes];
    for (u, c, origin) in labeled {
        let w = match origin {
            Origin::Train => 1.0 - a7,
            Origin::Propagated => a7,
        };
        if w == 0.0 {
            continue;
        }
        weights[c] += w;
        sums.row_mut(c).scaled_add(w, &features.row(u));
    }
    for (c, mut row) in sums.rows_mut().into_iter().enumerate() {
        if weights[c] > 0.0 {
            row.mapv_inplace(|x| x / weights[c]);
        } else {
            row.fill(0.0);
        }
    }
    sums
}

/// Cosine similarity rescaled to `[0, 1]`; 0.5 if either vector is zero.
pub fn feature_similarity(x: ArrayView1<'_, f64>, mu: ArrayView1<'_, f64>) -> f64 {
    let nx = x.dot(&x).sqrt();
    let nm = mu.dot(&mu).sqrt();
    if nx == 0.0 || nm == 0.0 {
        return 0.5;
    }
    let cos = (x.dot(&mu) / (nx * nm)).clamp(-1.0, 1.0);
    (1.0 + cos) / 2.0
}

/// Row norms, used to share the norm computation across classes.
pub(crate) fn row_norms(m: &Array2<f64>) -> Array1<f64> {
    m.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect()
}

/// [`feature_similarity`] with precomputed norms. Produces the same value as
/// the plain form for the same inputs.
pub(crate) fn similarity_with_norms(
    x: ArrayView1<'_, f64>,
    nx: f64,
    mu: ArrayView1<'_, f64>,
    nm: f64,
) -> f64 {
    if nx == 0.0 || nm == 0.0 {
        return 0.5;
    }
    let cos = (x.dot(&mu) / (nx * nm)).clamp(-1.0, 1.0);
    (1.0 + cos) / 2.0
}
