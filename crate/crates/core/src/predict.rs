//! Confidence-ordered greedy labeling.
//!
//! Target nodes are popped from a priority queue one at a time and assigned
//! the class with the highest additive score
//!
//! ```text
//! score(u, c) = a1·π_c + a2·g·p_u(c) + a3·D(u, c) + a8·g·s_u(c) [+ a9·p2_u(c)]
//! ```
//!
//! where `p_u` is the degree-normalized labeled-neighbor distribution, `D` the
//! rescaled cosine similarity to the class prototype, `s_u` the compatibility
//! support and `g = min(1, L_u / k0)` the attenuation for nodes with few
//! labeled neighbors. Newly assigned labels update neighbor counts at once;
//! prototypes, similarities and priorities are refreshed every
//! `max(n / 5, 1)` assignments, at which point the queue is rebuilt.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::stats::{self, Origin, TrainStats};

/// Absolute score gap under which two classes count as tied.
pub const EPS_TIE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Class prior weight.
    pub a1: f64,
    /// Neighbor agreement weight; negative values penalize agreement.
    pub a2: f64,
    /// Feature similarity weight.
    pub a3: f64,
    /// Weight of propagated labels in the prototypes, in `[0, 1]`.
    pub a7: f64,
    /// Compatibility support weight.
    pub a8: f64,
    /// Two-hop weight, used only with `use_two_hop`.
    pub a9: f64,
    /// Priority weight of the train-labeled neighbor fraction.
    pub b1: f64,
    /// Priority weight of the propagated neighbor fraction.
    pub b2: f64,
    /// Priority weight of the best feature similarity.
    pub b3: f64,
    /// Labeled-neighbor count at which attenuation stops.
    pub k0: u32,
    /// Nodes with a top-two margin below this are deferred once.
    pub tau_defer: f64,
    pub use_two_hop: bool,
    pub adapt_a2: bool,
    pub adapt_a8: bool,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            a1: 0.5,
            a2: 1.0,
            a3: 1.0,
            a7: 0.5,
            a8: 1.0,
            a9: 0.2,
            b1: 1.0,
            b2: 0.5,
            b3: 0.3,
            k0: 2,
            tau_defer: 0.0,
            use_two_hop: false,
            adapt_a2: true,
            adapt_a8: true,
            standardize: true,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.a1, self.a2, self.a3, self.a7, self.a8, self.a9, self.b1, self.b2, self.b3,
            self.tau_defer,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Contract("hyperparameters must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.a7) {
            return Err(Error::Contract(format!("a7 = {} outside [0, 1]", self.a7)));
        }
        if self.k0 < 1 {
            return Err(Error::Contract("k0 must be at least 1".into()));
        }
        if self.tau_defer < 0.0 || self.b1 < 0.0 || self.b2 < 0.0 || self.b3 < 0.0 {
            return Err(Error::Contract("tau_defer and priority weights must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Fraction of assignments whose top two scores are within [`EPS_TIE`].
    pub tie_rate: f64,
    /// Mean gap between the best and second-best score.
    pub mean_margin: f64,
    pub deferral_count: usize,
    pub refresh_count: usize,
}

/// Scores seen when a node was assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub node: usize,
    pub scores: Vec<f64>,
    pub chosen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub predicted: BTreeMap<usize, usize>,
    pub assignment_order: Vec<usize>,
    pub diagnostics: Diagnostics,
    pub steps: Vec<StepTrace>,
}

impl PredictionResult {
    /// Fraction of predicted nodes whose label in `graph` matches; unlabeled
    /// nodes count as misses. Zero for an empty prediction.
    pub fn accuracy(&self, graph: &Graph) -> f64 {
        accuracy(self.predicted.iter().map(|(&u, &c)| (u, c)), graph)
    }
}

pub fn accuracy(pairs: impl IntoIterator<Item = (usize, usize)>, graph: &Graph) -> f64 {
    let mut total = 0usize;
    let mut hits = 0usize;
    for (u, c) in pairs {
        total += 1;
        hits += usize::from(graph.label(u) == Some(c));
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// `p_u(c) = cnt(u, c) / deg(u)`, all zeros for isolated nodes.
pub fn neighbor_distribution(counts: &[usize], degree: usize) -> Vec<f64> {
    if degree == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&k| k as f64 / degree as f64).collect()
}

/// Labeled-neighbor class distribution `w_u = cnt / L_u` (zeros if `L_u = 0`).
pub fn labeled_distribution(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&k| k as f64 / total as f64).collect()
}

/// `s_u(c) = Σ_cn w_u(cn) · compat[cn, c]`.
pub fn compatibility_support(w: &[f64], compat: &Array2<f64>) -> Vec<f64> {
    let c = compat.ncols();
    let mut s = vec![0.0; c];
    for (from, &wf) in w.iter().enumerate() {
        if wf == 0.0 {
            continue;
        }
        for (to, out) in s.iter_mut().enumerate() {
            *out += wf * compat[[from, to]];
        }
    }
    s
}

/// `g(L) = min(1, L / k0)`.
pub fn attenuation(labeled_neighbors: usize, k0: u32) -> f64 {
    (labeled_neighbors as f64 / f64::from(k0)).min(1.0)
}

/// Per-node evidence for one scoring step.
#[derive(Debug, Clone, Copy)]
pub struct Evidence<'a> {
    pub p: &'a [f64],
    pub d: &'a [f64],
    pub s: &'a [f64],
    pub p2: Option<&'a [f64]>,
    pub labeled_neighbors: usize,
}

pub fn score(class: usize, priors: &[f64], ev: &Evidence<'_>, hp: &HyperParams) -> f64 {
    let g = attenuation(ev.labeled_neighbors, hp.k0);
    let g2 = if hp.adapt_a2 { g } else { 1.0 };
    let g8 = if hp.adapt_a8 { g } else { 1.0 };
    let mut total = hp.a1 * priors[class]
        + hp.a2 * g2 * ev.p[class]
        + hp.a3 * ev.d[class]
        + hp.a8 * g8 * ev.s[class];
    if hp.use_two_hop {
        if let Some(p2) = ev.p2 {
            total += hp.a9 * p2[class];
        }
    }
    total
}

pub fn priority(
    train_neighbors: usize,
    propagated_neighbors: usize,
    degree: usize,
    d: &[f64],
    hp: &HyperParams,
) -> f64 {
    let (ft, fp) = if degree == 0 {
        (0.0, 0.0)
    } else {
        (
            train_neighbors as f64 / degree as f64,
            propagated_neighbors as f64 / degree as f64,
        )
    };
    let best_d = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_d = if best_d.is_finite() { best_d } else { 0.0 };
    hp.b1 * ft + hp.b2 * fp + hp.b3 * best_d
}

/// Class distribution of labeled nodes at exactly distance two from `node`.
pub fn two_hop_distribution(node: usize, labels: &[Option<usize>], graph: &Graph) -> Vec<f64> {
    let mut mark = vec![false; graph.node_count()];
    mark[node] = true;
    for &v in graph.neighbors(node) {
        mark[v] = true;
    }
    let mut shell = Vec::new();
    for &v in graph.neighbors(node) {
        for &w in graph.neighbors(v) {
            if !mark[w] {
                mark[w] = true;
                shell.push(w);
            }
        }
    }
    let mut dist = vec![0.0; graph.num_classes()];
    if shell.is_empty() {
        return dist;
    }
    for &w in &shell {
        if let Some(c) = labels[w] {
            dist[c] += 1.0;
        }
    }
    let size = shell.len() as f64;
    dist.iter_mut().for_each(|x| *x /= size);
    dist
}

/// Picks the winning class among those within [`EPS_TIE`] of the best score,
/// preferring larger `(p, D, π)` and then the smaller index. Returns the
/// class and the gap between the two highest scores.
pub fn choose_class(scores: &[f64], p: &[f64], d: &[f64], priors: &[f64]) -> (usize, f64) {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut chosen = None::<usize>;
    for c in 0..scores.len() {
        if best - scores[c] > EPS_TIE {
            continue;
        }
        chosen = Some(match chosen {
            None => c,
            Some(k) => {
                let key = |i: usize| (p[i], d[i], priors[i]);
                let (a, b) = (key(c), key(k));
                if a.partial_cmp(&b) == Some(Ordering::Greater) {
                    c
                } else {
                    k
                }
            }
        });
    }
    (chosen.unwrap_or(0), top_two_gap(scores))
}

/// Difference between the two largest entries; zero with fewer than two.
pub fn top_two_gap(scores: &[f64]) -> f64 {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &s in scores {
        if s > first {
            second = first;
            first = s;
        } else if s > second {
            second = s;
        }
    }
    if second.is_finite() {
        first - second
    } else {
        0.0
    }
}

/// Number of assignments between refreshes for an `n`-node graph.
pub fn refresh_interval(n: usize) -> usize {
    (n / 5).max(1)
}

#[derive(Debug, Clone, Copy)]
struct QueueEntry {
    priority: f64,
    node: usize,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    // Max-heap: higher priority first, then lower node index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Mutable labeling state of one `predict` call.
struct Labeling<'a> {
    graph: &'a Graph,
    stats: &'a TrainStats,
    hp: &'a HyperParams,
    classes: usize,
    labels: Vec<Option<usize>>,
    origin: Vec<Option<Origin>>,
    /// Flattened `n × C` labeled-neighbor counts.
    counts: Vec<usize>,
    train_neighbors: Vec<usize>,
    propagated_neighbors: Vec<usize>,
    feature_norms: Array1<f64>,
    prototypes: Array2<f64>,
    prototype_norms: Array1<f64>,
    /// Flattened `n × C` similarities, valid for unassigned target nodes.
    similarity: Vec<f64>,
}

impl<'a> Labeling<'a> {
    fn counts(&self, u: usize) -> &[usize] {
        &self.counts[u * self.classes..(u + 1) * self.classes]
    }

    fn label(&mut self, u: usize, c: usize, origin: Origin) {
        self.labels[u] = Some(c);
        self.origin[u] = Some(origin);
        for &v in self.graph.neighbors(u) {
            self.counts[v * self.classes + c] += 1;
            match origin {
                Origin::Train => self.train_neighbors[v] += 1,
                Origin::Propagated => self.propagated_neighbors[v] += 1,
            }
        }
    }

    fn refresh_prototypes(&mut self) {
        let labeled = (0..self.labels.len())
            .filter_map(|u| Some((u, self.labels[u]?, self.origin[u]?)));
        self.prototypes = stats::prototypes(
            self.graph.features(),
            self.classes,
            self.hp.a7,
            labeled,
        );
        self.prototype_norms = stats::row_norms(&self.prototypes);
    }

    fn refresh_similarity(&mut self, nodes: &[usize]) {
        let x = self.graph.features();
        for &u in nodes {
            for c in 0..self.classes {
                self.similarity[u * self.classes + c] = stats::similarity_with_norms(
                    x.row(u),
                    self.feature_norms[u],
                    self.prototypes.row(c),
                    self.prototype_norms[c],
                );
            }
        }
    }

    fn similarity(&self, u: usize) -> &[f64] {
        &self.similarity[u * self.classes..(u + 1) * self.classes]
    }

    fn priority(&self, u: usize) -> f64 {
        priority(
            self.train_neighbors[u],
            self.propagated_neighbors[u],
            self.graph.degree(u),
            self.similarity(u),
            self.hp,
        )
    }

    fn build_queue(&self, remaining: &[usize]) -> BinaryHeap<QueueEntry> {
        remaining
            .iter()
            .map(|&u| QueueEntry {
                priority: self.priority(u),
                node: u,
            })
            .collect()
    }

    /// Scores, chosen class and top-two margin for `u` in the current state.
    fn evaluate(&self, u: usize) -> (Vec<f64>, usize, f64) {
        let counts = self.counts(u);
        let labeled_neighbors: usize = counts.iter().sum();
        let p = neighbor_distribution(counts, self.graph.degree(u));
        let w = labeled_distribution(counts);
        let s = compatibility_support(&w, &self.stats.compat);
        let d = self.similarity(u);
        let p2 = self
            .hp
            .use_two_hop
            .then(|| two_hop_distribution(u, &self.labels, self.graph));
        let ev = Evidence {
            p: &p,
            d,
            s: &s,
            p2: p2.as_deref(),
            labeled_neighbors,
        };
        let scores: Vec<f64> = (0..self.classes)
            .map(|c| score(c, &self.stats.priors, &ev, self.hp))
            .collect();
        let (chosen, margin) = choose_class(&scores, &p, d, &self.stats.priors);
        (scores, chosen, margin)
    }
}

fn check_inputs(
    graph: &Graph,
    train: &[usize],
    target: &[usize],
    hp: &HyperParams,
    stats: &TrainStats,
) -> Result<()> {
    hp.validate()?;
    let n = graph.node_count();
    if stats.num_classes() != graph.num_classes() || stats.compat.nrows() != graph.num_classes() {
        return Err(Error::Contract("statistics do not match the graph's class count".into()));
    }
    if stats.prototypes.ncols() != graph.feature_dim() {
        return Err(Error::Contract("statistics do not match the feature dimension".into()));
    }
    let mut role = vec![0u8; n];
    for &t in train {
        if t >= n {
            return Err(Error::Contract(format!("training node {t} out of range")));
        }
        if graph.label(t).is_none() {
            return Err(Error::Contract(format!("training node {t} is unlabeled")));
        }
        role[t] = 1;
    }
    for &u in target {
        if u >= n {
            return Err(Error::Contract(format!("target node {u} out of range")));
        }
        match role[u] {
            1 => return Err(Error::Contract(format!("target node {u} is also a training node"))),
            2 => return Err(Error::Contract(format!("target node {u} listed twice"))),
            _ => role[u] = 2,
        }
    }
    Ok(())
}

/// Labels every node of `target` greedily. Only the labels of `train` nodes
/// are read from `graph`; the result is a pure function of the arguments.
pub fn predict(
    graph: &Graph,
    train: &[usize],
    target: &[usize],
    hp: &HyperParams,
    stats: &TrainStats,
) -> Result<PredictionResult> {
    check_inputs(graph, train, target, hp, stats)?;
    let n = graph.node_count();
    let classes = graph.num_classes();

    let mut state = Labeling {
        graph,
        stats,
        hp,
        classes,
        labels: vec![None; n],
        origin: vec![None; n],
        counts: vec![0; n * classes],
        train_neighbors: vec![0; n],
        propagated_neighbors: vec![0; n],
        feature_norms: stats::row_norms(graph.features()),
        prototypes: Array2::zeros((classes, graph.feature_dim())),
        prototype_norms: Array1::zeros(classes),
        similarity: vec![0.0; n * classes],
    };
    for &t in train {
        let c = graph.label(t).expect("checked above");
        state.label(t, c, Origin::Train);
    }

    let mut remaining: Vec<usize> = target.to_vec();
    let mut assigned = vec![false; n];
    let mut deferred = vec![false; n];
    state.refresh_prototypes();
    state.refresh_similarity(&remaining);
    let mut queue = state.build_queue(&remaining);

    let interval = refresh_interval(n);
    let mut since_refresh = 0usize;
    let mut predicted = BTreeMap::new();
    let mut order = Vec::with_capacity(target.len());
    let mut steps = Vec::with_capacity(target.len());
    let mut diagnostics = Diagnostics::default();
    let mut ties = 0usize;
    let mut margin_sum = 0.0;

    while let Some(entry) = queue.pop() {
        let u = entry.node;
        let (scores, chosen, margin) = state.evaluate(u);
        if margin < hp.tau_defer && !deferred[u] {
            deferred[u] = true;
            diagnostics.deferral_count += 1;
            queue.push(QueueEntry {
                priority: entry.priority / 2.0,
                node: u,
            });
            continue;
        }

        state.label(u, chosen, Origin::Propagated);
        assigned[u] = true;
        predicted.insert(u, chosen);
        order.push(u);
        if classes >= 2 && margin <= EPS_TIE {
            ties += 1;
        }
        margin_sum += margin;
        steps.push(StepTrace {
            node: u,
            scores,
            chosen,
        });

        since_refresh += 1;
        if since_refresh == interval && !queue.is_empty() {
            since_refresh = 0;
            diagnostics.refresh_count += 1;
            remaining.retain(|&v| !assigned[v]);
            state.refresh_prototypes();
            state.refresh_similarity(&remaining);
            queue = state.build_queue(&remaining);
        }
    }

    if !target.is_empty() {
        diagnostics.tie_rate = ties as f64 / target.len() as f64;
        diagnostics.mean_margin = margin_sum / target.len() as f64;
    }
    Ok(PredictionResult {
        predicted,
        assignment_order: order,
        diagnostics,
        steps,
    })
}
