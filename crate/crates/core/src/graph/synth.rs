//! Stochastic-block graphs with class-dependent features.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{symmetrize_dedup, Graph, SplitSpec};
use crate::error::{Error, Result};

/// Parameters of the synthetic block-model generator.
///
/// Node `i` belongs to class `i % num_classes`. Each feature row is the
/// one-hot vector of its class (padded with zeros up to `dim`) plus isotropic
/// Gaussian noise of standard deviation `feature_noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub num_classes: usize,
    pub dim: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_noise: f64,
    pub seed: u64,
    #[serde(default)]
    pub features: FeatureModel,
}

/// How node features are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureModel {
    /// One-hot class indicator plus Gaussian noise of std `feature_noise`.
    #[default]
    Gaussian,
    /// Sparse binary word indicators. Each column has a base rate drawn
    /// log-uniformly from [0.002, 0.5]; in the first half of the columns,
    /// column `j` is a marker of class `j % C` and fires with probability
    /// `base + signal` for that class. `feature_noise` is unused.
    BagOfWords { signal: f64 },
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_in) || !prob(self.p_out) {
            return Err(Error::Invalid("edge probabilities must lie in [0, 1]".into()));
        }
        if self.num_classes < 2 || self.n < self.num_classes {
            return Err(Error::Invalid("need n >= classes >= 2".into()));
        }
        if self.dim < self.num_classes {
            return Err(Error::Invalid("feature dimension must be at least the class count".into()));
        }
        if let FeatureModel::BagOfWords { signal } = self.features {
            if !(0.0..=1.0).contains(&signal) {
                return Err(Error::Invalid("word signal must lie in [0, 1]".into()));
            }
        }
        if !(self.feature_noise >= 0.0) {
            return Err(Error::Invalid("feature noise must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Samples a graph and a stratified 48/32/20 split. Identical configs give
/// bit-identical output.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(Graph, SplitSpec)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels: Vec<Option<usize>> = (0..cfg.n).map(|i| Some(i % cfg.num_classes)).collect();

    let mut edges = Vec::new();
    for u in 0..cfg.n {
        for v in (u + 1)..cfg.n {
            let p = if labels[u] == labels[v] { cfg.p_in } else { cfg.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let adjacency = symmetrize_dedup(&edges, cfg.n)?;

    let mut features = Array2::<f64>::zeros((cfg.n, cfg.dim));
    match cfg.features {
        FeatureModel::Gaussian => {
            for (u, mut row) in features.rows_mut().into_iter().enumerate() {
                let c = labels[u].unwrap();
                for (j, x) in row.iter_mut().enumerate() {
                    let noise: f64 = rng.sample(StandardNormal);
                    *x = f64::from(u8::from(j == c)) + cfg.feature_noise * noise;
                }
            }
        }
        FeatureModel::BagOfWords { signal } => {
            let (lo, hi) = (0.002f64.ln(), 0.5f64.ln());
            let base: Vec<f64> = (0..cfg.dim).map(|_| rng.random_range(lo..hi).exp()).collect();
            for (u, mut row) in features.rows_mut().into_iter().enumerate() {
                let c = labels[u].unwrap();
                for (j, x) in row.iter_mut().enumerate() {
                    let marker = j < cfg.dim / 2 && j % cfg.num_classes == c;
                    let p = if marker { (base[j] + signal).min(1.0) } else { base[j] };
                    *x = f64::from(u8::from(rng.random::<f64>() < p));
                }
            }
        }
    }

    let graph = Graph::new(adjacency, features, labels, cfg.num_classes)?;
    let split = stratified_split(graph.labels(), cfg.num_classes, rng.random());
    Ok((graph, split))
}

/// Random per-class 48/32/20 split over labeled nodes. Every class with at
/// least one member contributes at least one training node.
pub fn stratified_split(labels: &[Option<usize>], num_classes: usize, seed: u64) -> SplitSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = SplitSpec {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for c in 0..num_classes {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(c))
            .map(|(u, _)| u)
            .collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let m = members.len();
        let n_train = ((0.48 * m as f64).round() as usize).clamp(1, m);
        let n_val = ((0.32 * m as f64).round() as usize).min(m - n_train);
        split.train.extend_from_slice(&members[..n_train]);
        split.val.extend_from_slice(&members[n_train..n_train + n_val]);
        split.test.extend_from_slice(&members[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}
