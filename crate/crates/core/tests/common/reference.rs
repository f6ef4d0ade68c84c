//! Brute-force greedy labeler: no incremental counts and no heap. Every step
//! rescans the neighborhood of every candidate and picks the best pending
//! entry by linear search.

use combnode::predict::EPS_TIE;
use combnode::stats::feature_similarity;
use combnode::{Graph, HyperParams, TrainStats};

pub struct ReferenceRun {
    pub predicted: Vec<(usize, usize)>,
    pub order: Vec<usize>,
    pub deferrals: usize,
    pub refreshes: usize,
    pub margins: Vec<f64>,
}

struct Pending {
    node: usize,
    priority: f64,
}

pub fn reference_predict(
    graph: &Graph,
    train: &[usize],
    target: &[usize],
    hp: &HyperParams,
    stats: &TrainStats,
) -> ReferenceRun {
    let n = graph.node_count();
    let classes = graph.num_classes();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut from_train = vec![false; n];
    for &t in train {
        labels[t] = graph.label(t);
        from_train[t] = true;
    }

    let prototypes = |labels: &[Option<usize>]| -> Vec<Vec<f64>> {
        let dim = graph.feature_dim();
        let x = graph.features();
        let mut sums = vec![vec![0.0; dim]; classes];
        let mut weights = vec![0.0; classes];
        for u in 0..n {
            let Some(c) = labels[u] else { continue };
            let w = if from_train[u] { 1.0 - hp.a7 } else { hp.a7 };
            if w == 0.0 {
                continue;
            }
            weights[c] += w;
            for j in 0..dim {
                sums[c][j] += w * x[[u, j]];
            }
        }
        for c in 0..classes {
            for j in 0..dim {
                sums[c][j] = if weights[c] > 0.0 { sums[c][j] / weights[c] } else { 0.0 };
            }
        }
        sums
    };
    let similarity = |u: usize, protos: &[Vec<f64>]| -> Vec<f64> {
        protos
            .iter()
            .map(|mu| feature_similarity(graph.features().row(u), ndarray::ArrayView1::from(&mu[..])))
            .collect()
    };
    let priority = |u: usize, labels: &[Option<usize>], d: &[f64]| -> f64 {
        let deg = graph.degree(u);
        let mut t = 0usize;
        let mut p = 0usize;
        for &v in graph.neighbors(u) {
            if labels[v].is_some() {
                if from_train[v] {
                    t += 1;
                } else {
                    p += 1;
                }
            }
        }
        let (ft, fp) = if deg == 0 { (0.0, 0.0) } else { (t as f64 / deg as f64, p as f64 / deg as f64) };
        let best = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hp.b1 * ft + hp.b2 * fp + hp.b3 * best
    };

    let mut protos = prototypes(&labels);
    let mut sims: Vec<Vec<f64>> = (0..n).map(|u| similarity(u, &protos)).collect();
    let mut pending: Vec<Pending> = target
        .iter()
        .map(|&u| Pending { node: u, priority: priority(u, &labels, &sims[u]) })
        .collect();
    let mut deferred = vec![false; n];
    let interval = (n / 5).max(1);
    let mut since = 0;
    let mut run = ReferenceRun {
        predicted: Vec::new(),
        order: Vec::new(),
        deferrals: 0,
        refreshes: 0,
        margins: Vec::new(),
    };

    while !pending.is_empty() {
        let mut best = 0;
        for i in 1..pending.len() {
            let (a, b) = (&pending[i], &pending[best]);
            if a.priority > b.priority || (a.priority == b.priority && a.node < b.node) {
                best = i;
            }
        }
        let u = pending[best].node;

        let deg = graph.degree(u);
        let mut cnt = vec![0usize; classes];
        for &v in graph.neighbors(u) {
            if let Some(c) = labels[v] {
                cnt[c] += 1;
            }
        }
        let l: usize = cnt.iter().sum();
        let p: Vec<f64> = cnt.iter().map(|&k| if deg == 0 { 0.0 } else { k as f64 / deg as f64 }).collect();
        let w: Vec<f64> = cnt.iter().map(|&k| if l == 0 { 0.0 } else { k as f64 / l as f64 }).collect();
        let s: Vec<f64> = (0..classes)
            .map(|c| {
                let mut acc = 0.0;
                for cn in 0..classes {
                    if w[cn] != 0.0 {
                        acc += w[cn] * stats.compat[[cn, c]];
                    }
                }
                acc
            })
            .collect();
        let p2 = hp.use_two_hop.then(|| {
            let mut dist2 = Vec::new();
            for v in 0..n {
                let adjacent = graph.neighbors(u).contains(&v);
                if v == u || adjacent {
                    continue;
                }
                if graph.neighbors(v).iter().any(|x| graph.neighbors(u).contains(x)) {
                    dist2.push(v);
                }
            }
            let mut out = vec![0.0; classes];
            for &v in &dist2 {
                if let Some(c) = labels[v] {
                    out[c] += 1.0;
                }
            }
            if !dist2.is_empty() {
                for x in out.iter_mut() {
                    *x /= dist2.len() as f64;
                }
            }
            out
        });
        let g = (l as f64 / f64::from(hp.k0)).min(1.0);
        let g2 = if hp.adapt_a2 { g } else { 1.0 };
        let g8 = if hp.adapt_a8 { g } else { 1.0 };
        let d = &sims[u];
        let scores: Vec<f64> = (0..classes)
            .map(|c| {
                let mut total =
                    hp.a1 * stats.priors[c] + hp.a2 * g2 * p[c] + hp.a3 * d[c] + hp.a8 * g8 * s[c];
                if let Some(p2) = &p2 {
                    total += hp.a9 * p2[c];
                }
                total
            })
            .collect();

        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let margin = if classes < 2 { 0.0 } else { sorted[0] - sorted[1] };
        let top = sorted[0];
        let mut chosen = usize::MAX;
        for c in 0..classes {
            if top - scores[c] > EPS_TIE {
                continue;
            }
            if chosen == usize::MAX {
                chosen = c;
                continue;
            }
            let k = chosen;
            let better = (p[c], d[c], stats.priors[c]) > (p[k], d[k], stats.priors[k]);
            if better {
                chosen = c;
            }
        }

        if margin < hp.tau_defer && !deferred[u] {
            deferred[u] = true;
            run.deferrals += 1;
            pending[best].priority /= 2.0;
            continue;
        }
        pending.remove(best);
        labels[u] = Some(chosen);
        run.predicted.push((u, chosen));
        run.order.push(u);
        run.margins.push(margin);

        since += 1;
        if since == interval && !pending.is_empty() {
            since = 0;
            run.refreshes += 1;
            protos = prototypes(&labels);
            sims = (0..n).map(|v| similarity(v, &protos)).collect();
            for entry in pending.iter_mut() {
                entry.priority = priority(entry.node, &labels, &sims[entry.node]);
            }
        }
    }
    run.predicted.sort_unstable();
    run
}
