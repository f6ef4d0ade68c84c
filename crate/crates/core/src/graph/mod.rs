//! Graph representation and preprocessing.
//!
//! A [`Graph`] is an undirected simple graph stored in CSR form together with a
//! dense feature matrix and optional per-node labels. It is immutable once
//! built; derived graphs (masked labels, standardized features) share the
//! adjacency through an `Arc`.

mod io;
mod synth;

use std::collections::BTreeSet;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_dataset, load_splits, write_dataset, write_splits, DatasetPaths};
pub use synth::{generate_synthetic, stratified_split, FeatureModel, SynthConfig};

/// Symmetric, duplicate-free, self-loop-free neighbor lists in CSR layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Adjacency {
    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    /// Undirected edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    fn from_sorted_lists(lists: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut targets = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for list in lists {
            targets.extend_from_slice(&list);
            offsets.push(targets.len());
        }
        Adjacency { offsets, targets }
    }
}

/// Turns an arbitrary (possibly directed, duplicated, self-looped) edge list
/// into undirected simple-graph adjacency. The result does not depend on the
/// order of `raw_edges`.
pub fn symmetrize_dedup(raw_edges: &[(usize, usize)], n: usize) -> Result<Adjacency> {
    let mut lists: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(u, v) in raw_edges {
        if u >= n || v >= n {
            return Err(Error::Invalid(format!(
                "edge ({u}, {v}) has an endpoint outside [0, {n})"
            )));
        }
        if u == v {
            continue;
        }
        lists[u].insert(v);
        lists[v].insert(u);
    }
    Ok(Adjacency::from_sorted_lists(
        lists.into_iter().map(|s| s.into_iter().collect()).collect(),
    ))
}

/// Z-scores every feature column over all nodes using the population standard
/// deviation. Constant columns become all-zero.
pub fn standardize_features(features: &Array2<f64>) -> Array2<f64> {
    let n = features.nrows();
    let mut out = features.clone();
    if n == 0 {
        return out;
    }
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std <= 1e-12 * mean.abs().max(1.0) {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|x| (x - mean) / std);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Graph {
    adjacency: Arc<Adjacency>,
    features: Arc<Array2<f64>>,
    labels: Arc<Vec<Option<usize>>>,
    num_classes: usize,
}

impl Graph {
    pub fn new(
        adjacency: Adjacency,
        features: Array2<f64>,
        labels: Vec<Option<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        let g = Graph {
            adjacency: Arc::new(adjacency),
            features: Arc::new(features),
            labels: Arc::new(labels),
            num_classes,
        };
        g.validate()?;
        Ok(g)
    }

    /// Checks every structural invariant. Constructors call this; it is public
    /// so property tests can assert it on arbitrary graphs.
    pub fn validate(&self) -> Result<()> {
        let n = self.adjacency.node_count();
        if self.features.nrows() != n {
            return Err(Error::Invalid(format!(
                "feature matrix has {} rows for {n} nodes",
                self.features.nrows()
            )));
        }
        if self.labels.len() != n {
            return Err(Error::Invalid(format!(
                "label vector has {} entries for {n} nodes",
                self.labels.len()
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::Invalid("class count must be positive".into()));
        }
        for u in 0..n {
            let nb = self.adjacency.neighbors(u);
            for w in nb.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Invalid(format!(
                        "neighbor list of {u} is not strictly increasing"
                    )));
                }
            }
            for &v in nb {
                if v >= n || v == u {
                    return Err(Error::Invalid(format!("bad neighbor {v} of node {u}")));
                }
                if self.adjacency.neighbors(v).binary_search(&u).is_err() {
                    return Err(Error::Invalid(format!("edge ({u}, {v}) is not symmetric")));
                }
            }
            if let Some(c) = self.labels[u] {
                if c >= self.num_classes {
                    return Err(Error::Invalid(format!(
                        "node {u} has label {c} outside [0, {})",
                        self.num_classes
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.node_count()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        self.adjacency.neighbors(u)
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency.degree(u)
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.node_count()).map(|u| self.degree(u)).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.edge_count()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn label(&self, u: usize) -> Option<usize> {
        self.labels[u]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    /// Same structure and labels with a replaced feature matrix.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.node_count() {
            return Err(Error::Invalid(format!(
                "feature matrix has {} rows for {} nodes",
                features.nrows(),
                self.node_count()
            )));
        }
        Ok(Graph {
            features: Arc::new(features),
            ..self.clone()
        })
    }

    /// Same structure and features with a replaced label vector.
    pub fn with_labels(&self, labels: Vec<Option<usize>>) -> Result<Self> {
        let g = Graph {
            labels: Arc::new(labels),
            ..self.clone()
        };
        if g.labels.len() != g.node_count() || g.labels.iter().flatten().any(|&c| c >= g.num_classes) {
            return Err(Error::Invalid("replacement labels do not fit the graph".into()));
        }
        Ok(g)
    }

    /// Copy in which only the labels of `keep` survive; all other nodes become
    /// unlabeled. Used to hand later stages a view that cannot leak held-out
    /// labels.
    pub fn mask_labels(&self, keep: &[usize]) -> Self {
        let mut labels = vec![None; self.node_count()];
        for &u in keep {
            labels[u] = self.labels[u];
        }
        Graph {
            labels: Arc::new(labels),
            ..self.clone()
        }
    }

    /// Graph with standardized features (see [`standardize_features`]).
    pub fn standardized(&self) -> Self {
        Graph {
            features: Arc::new(standardize_features(&self.features)),
            ..self.clone()
        }
    }

    /// Fraction of edges, among those with both endpoints labeled, whose
    /// endpoints share a label. `None` when no such edge exists.
    pub fn edge_homophily(&self) -> Option<f64> {
        let mut same = 0usize;
        let mut total = 0usize;
        for (u, v) in self.adjacency.edges() {
            if let (Some(a), Some(b)) = (self.labels[u], self.labels[v]) {
                total += 1;
                same += usize::from(a == b);
            }
        }
        (total > 0).then(|| same as f64 / total as f64)
    }
}

/// Disjoint train / validation / test node sets for one experimental split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::Invalid("training set is empty".into()));
        }
        let mut owner: Vec<Option<&'static str>> = vec![None; n];
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &u in set {
                if u >= n {
                    return Err(Error::Invalid(format!(
                        "{name} index {u} is outside [0, {n})"
                    )));
                }
                if let Some(prev) = owner[u] {
                    return Err(Error::Invalid(format!(
                        "index {u} appears in both {prev} and {name}"
                    )));
                }
                owner[u] = Some(name);
            }
        }
        Ok(())
    }
}
