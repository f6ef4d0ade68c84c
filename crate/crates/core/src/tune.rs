//! Training-only hyperparameter search.
//!
//! Candidates are drawn uniformly from a [`SearchSpace`] whose sign range for
//! the neighbor-agreement weight `a2` is fixed by the shrunk train-only
//! homophily: clearly above the `1/C` baseline only `a2 >= 0` is admissible,
//! clearly below only `a2 <= 0`. Each candidate is scored by stratified k-fold
//! cross-validation over the training nodes, with statistics recomputed from
//! each fold's reduced training set.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::par::Execution;
use crate::predict::{predict, HyperParams};
use crate::stats::{shrunk_homophily, StatsConfig, TrainStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        ParamRange { lo, hi }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Deferral margins the tuner may pick from when deferral is enabled.
pub const DEFER_MARGINS: [f64; 2] = [0.01, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub a1: ParamRange,
    /// Largest `|a2|`; the sign is decided by the homophily estimate.
    pub a2_magnitude: f64,
    pub a3: ParamRange,
    pub a7: ParamRange,
    pub a8: ParamRange,
    pub b1: ParamRange,
    pub b2: ParamRange,
    pub b3: ParamRange,
    pub k0: Vec<u32>,
    pub tau_defer: Vec<f64>,
    /// Dead band around `1/C` inside which `a2` keeps both signs.
    pub delta_h: f64,
    pub budget: usize,
    pub folds: usize,
    pub seed: u64,
    /// Values for everything not searched (flags, `a9`).
    pub base: HyperParams,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            a1: ParamRange::new(0.0, 2.0),
            a2_magnitude: 2.0,
            a3: ParamRange::new(0.0, 2.0),
            a7: ParamRange::new(0.0, 1.0),
            a8: ParamRange::new(0.0, 2.0),
            b1: ParamRange::new(0.0, 2.0),
            b2: ParamRange::new(0.0, 2.0),
            b3: ParamRange::new(0.0, 2.0),
            k0: vec![1, 2, 3, 5],
            tau_defer: vec![0.0],
            delta_h: 0.05,
            budget: 200,
            folds: 3,
            seed: 0,
            base: HyperParams::default(),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let ranges = [self.a1, self.a3, self.a7, self.a8, self.b1, self.b2, self.b3];
        if ranges.iter().any(|r| !(r.lo <= r.hi)) || !(self.a2_magnitude >= 0.0) {
            return Err(Error::Usage("search ranges must be nonempty".into()));
        }
        if self.a7.lo < 0.0 || self.a7.hi > 1.0 {
            return Err(Error::Usage("a7 range must lie in [0, 1]".into()));
        }
        if [self.b1, self.b2, self.b3].iter().any(|r| r.lo < 0.0) {
            return Err(Error::Usage("priority weights must be nonnegative".into()));
        }
        if self.k0.is_empty() || self.k0.contains(&0) {
            return Err(Error::Usage("k0 choices must be nonempty and positive".into()));
        }
        if self.tau_defer.is_empty() || self.tau_defer.iter().any(|&t| !(t >= 0.0)) {
            return Err(Error::Usage("deferral margins must be nonempty and nonnegative".into()));
        }
        if self.budget < 1 {
            return Err(Error::Usage("budget must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Usage("at least two folds are required".into()));
        }
        Ok(())
    }

    /// Admissible `a2` interval for shrunk homophily `h` over `c_used` classes.
    pub fn a2_range(&self, h: f64, c_used: usize) -> ParamRange {
        let baseline = 1.0 / c_used as f64;
        let mag = self.a2_magnitude;
        if h > baseline + self.delta_h {
            ParamRange::new(0.0, mag)
        } else if h < baseline - self.delta_h {
            ParamRange::new(-mag, 0.0)
        } else {
            ParamRange::new(-mag, mag)
        }
    }

    fn sample(&self, a2: ParamRange, rng: &mut impl Rng) -> HyperParams {
        HyperParams {
            a1: self.a1.sample(rng),
            a2: a2.sample(rng),
            a3: self.a3.sample(rng),
            a7: self.a7.sample(rng),
            a8: self.a8.sample(rng),
            b1: self.b1.sample(rng),
            b2: self.b2.sample(rng),
            b3: self.b3.sample(rng),
            k0: *self.k0.choose(rng).unwrap(),
            tau_defer: *self.tau_defer.choose(rng).unwrap(),
            seed: self.seed,
            ..self.base.clone()
        }
    }
}

/// Splits `train` into `k` folds, dealing each class's shuffled members round
/// robin so per-class fold sizes differ by at most one.
pub fn stratified_folds(
    train: &[usize],
    labels: &[Option<usize>],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > train.len() {
        return Err(Error::Contract(format!(
            "cannot make {k} folds from {} training nodes",
            train.len()
        )));
    }
    let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for &u in train {
        let c = labels[u].ok_or_else(|| Error::Contract(format!("training node {u} is unlabeled")))?;
        by_class.entry(c).or_default().push(u);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for members in by_class.values_mut() {
        members.sort_unstable();
        members.shuffle(&mut rng);
        for &u in members.iter() {
            folds[next % k].push(u);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLog {
    pub params: HyperParams,
    pub cv_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: HyperParams,
    pub cv_mean_accuracy: f64,
    pub per_candidate_log: Vec<CandidateLog>,
    /// Shrunk train-only homophily that fixed the `a2` sign range.
    pub homophily: f64,
    pub a2_range: ParamRange,
    pub warnings: Vec<String>,
}

pub fn tune(
    graph: &Graph,
    train: &[usize],
    space: &SearchSpace,
    stats_cfg: StatsConfig,
) -> Result<TuneResult> {
    tune_with(graph, train, space, stats_cfg, Execution::default())
}

/// [`tune`] with an explicit scheduling mode. The result does not depend on
/// `exec`.
pub fn tune_with(
    graph: &Graph,
    train: &[usize],
    space: &SearchSpace,
    stats_cfg: StatsConfig,
    exec: Execution,
) -> Result<TuneResult> {
    space.validate()?;
    if train.is_empty() {
        return Err(Error::Contract("tuning needs a nonempty training set".into()));
    }
    // Nothing downstream can see a label outside the training set.
    let graph = graph.mask_labels(train);
    let c_used = graph.num_classes();
    let homophily = shrunk_homophily(&graph, train, c_used, stats_cfg.gamma).h;
    let a2_range = space.a2_range(homophily, c_used);

    let mut rng = ChaCha8Rng::seed_from_u64(space.seed);
    let candidates: Vec<HyperParams> = (0..space.budget)
        .map(|_| space.sample(a2_range, &mut rng))
        .collect();

    let mut warnings = Vec::new();
    let folds_wanted = space.folds.min(train.len());
    if folds_wanted < space.folds {
        warnings.push(format!(
            "only {} training nodes; using {folds_wanted} folds instead of {}",
            train.len(),
            space.folds
        ));
    }
    if folds_wanted < 2 {
        warnings.push("too few training nodes to cross-validate; returning the first candidate".into());
        let per_candidate_log = candidates
            .iter()
            .map(|p| CandidateLog {
                params: p.clone(),
                cv_accuracy: 0.0,
            })
            .collect();
        return Ok(TuneResult {
            best: candidates[0].clone(),
            cv_mean_accuracy: 0.0,
            per_candidate_log,
            homophily,
            a2_range,
            warnings,
        });
    }

    let folds = stratified_folds(train, graph.labels(), folds_wanted, space.seed)?;
    let prepared = folds
        .into_iter()
        .filter(|f| !f.is_empty())
        .map(|held_out| {
            let mut in_fold = vec![false; graph.node_count()];
            held_out.iter().for_each(|&u| in_fold[u] = true);
            let fit: Vec<usize> = train.iter().copied().filter(|&u| !in_fold[u]).collect();
            let stats = TrainStats::build(&graph, &fit, stats_cfg)?;
            Ok((fit, held_out, stats))
        })
        .collect::<Result<Vec<_>>>()?;

    let scores = exec.map(&candidates, |hp| -> Result<f64> {
        let mut total = 0.0;
        for (fit, held_out, stats) in &prepared {
            total += predict(&graph, fit, held_out, hp, stats)?.accuracy(&graph);
        }
        Ok(total / prepared.len() as f64)
    });
    let scores = scores.into_iter().collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let per_candidate_log = candidates
        .iter()
        .zip(&scores)
        .map(|(p, &s)| CandidateLog {
            params: p.clone(),
            cv_accuracy: s,
        })
        .collect();
    Ok(TuneResult {
        best: candidates[best].clone(),
        cv_mean_accuracy: scores[best],
        per_candidate_log,
        homophily,
        a2_range,
        warnings,
    })
}
