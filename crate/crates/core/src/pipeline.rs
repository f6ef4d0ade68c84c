//! Per-split orchestration: tune → statistics → combinatorial prediction →
//! refiner with injected priors → validation gate → test scoring.
//!
//! Every stage before final scoring works on a copy of the graph in which only
//! training labels survive, so validation and test labels cannot influence
//! tuning, statistics, predictions or the refiner. Validation labels are read
//! only to compute the two gate accuracies; test labels only for the reported
//! test accuracy.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, generate_synthetic, stratified_split, Graph, SplitSpec, SynthConfig};
use crate::par::Execution;
use crate::predict::{self, predict, Diagnostics, HyperParams, PredictionResult};
use crate::refiner::{
    self, compute_lambda, gate, GateDecision, Injection, InjectionConfig, RefinerConfig,
    RefinerParams, Strategy,
};
use crate::stats::{StatsConfig, TrainStats};
use crate::tune::{tune_with, SearchSpace, TuneResult, DEFER_MARGINS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "FULL")]
    Full,
    #[serde(rename = "NO_STD")]
    NoStd,
    #[serde(rename = "NO_ADAPT_A2")]
    NoAdaptA2,
    #[serde(rename = "NO_ADAPT_A8")]
    NoAdaptA8,
    #[serde(rename = "TWO_HOP")]
    TwoHop,
    #[serde(rename = "DEFER")]
    Defer,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoStd,
        Variant::NoAdaptA2,
        Variant::NoAdaptA8,
        Variant::TwoHop,
        Variant::Defer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "FULL",
            Variant::NoStd => "NO_STD",
            Variant::NoAdaptA2 => "NO_ADAPT_A2",
            Variant::NoAdaptA8 => "NO_ADAPT_A8",
            Variant::TwoHop => "TWO_HOP",
            Variant::Defer => "DEFER",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Usage(format!("unknown variant {s:?}")))
    }
}

/// Applies an ablation to a search space: FULL keeps standardization and both
/// attenuation flags on with two-hop and deferral off; each other variant
/// changes exactly one of those.
pub fn apply_ablation(variant: Variant, space: &SearchSpace) -> SearchSpace {
    let mut out = space.clone();
    let base = &mut out.base;
    base.standardize = true;
    base.adapt_a2 = true;
    base.adapt_a8 = true;
    base.use_two_hop = false;
    out.tau_defer = vec![0.0];
    match variant {
        Variant::Full => {}
        Variant::NoStd => base.standardize = false,
        Variant::NoAdaptA2 => base.adapt_a2 = false,
        Variant::NoAdaptA8 => base.adapt_a8 = false,
        Variant::TwoHop => base.use_two_hop = true,
        Variant::Defer => out.tau_defer = DEFER_MARGINS.to_vec(),
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files { dataset: PathBuf, splits: PathBuf },
    Synthetic { config: SynthConfig, splits: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_name: String,
    pub source: DataSource,
    pub variant: Variant,
    /// Search space before the variant is applied.
    pub space: SearchSpace,
    pub stats: StatsConfig,
    pub gate_margin: f64,
    pub refiner: RefinerConfig,
    pub injection: InjectionConfig,
    pub seed: u64,
    pub exec: Execution,
}

impl RunConfig {
    pub fn new(dataset_name: impl Into<String>, source: DataSource) -> Self {
        RunConfig {
            dataset_name: dataset_name.into(),
            source,
            variant: Variant::Full,
            space: SearchSpace::default(),
            stats: StatsConfig::default(),
            gate_margin: 0.005,
            refiner: RefinerConfig::default(),
            injection: InjectionConfig::default(),
            seed: 0,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub chosen: Strategy,
    pub val_acc_comb: f64,
    pub val_acc_hybrid: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub tie_rate: f64,
    pub mean_margin: f64,
    pub deferral_count: usize,
}

impl From<&Diagnostics> for DiagnosticsReport {
    fn from(d: &Diagnostics) -> Self {
        DiagnosticsReport {
            tie_rate: d.tie_rate,
            mean_margin: d.mean_margin,
            deferral_count: d.deferral_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub tune_s: f64,
    pub infer_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub index: usize,
    pub hyperparams: HyperParams,
    pub gate: GateReport,
    pub test_accuracy: f64,
    pub diagnostics: DiagnosticsReport,
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub variant: Variant,
    pub splits: Vec<SplitReport>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub refinement_selected_count: usize,
}

impl ExperimentReport {
    pub fn from_splits(dataset: String, variant: Variant, splits: Vec<SplitReport>) -> Self {
        let accs: Vec<f64> = splits.iter().map(|s| s.test_accuracy).collect();
        let (mean_accuracy, std_accuracy) = mean_and_sample_std(&accs);
        let refinement_selected_count = splits
            .iter()
            .filter(|s| s.gate.chosen == Strategy::Hybrid)
            .count();
        ExperimentReport {
            dataset,
            variant,
            splits,
            mean_accuracy,
            std_accuracy,
            refinement_selected_count,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text summary.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset {}  variant {}", self.dataset, self.variant);
        let _ = writeln!(
            out,
            "{:>5}  {:>8}  {:>13}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}",
            "split", "test", "chosen", "val_comb", "val_hyb", "ties", "margin", "tune_s", "total_s"
        );
        for s in &self.splits {
            let chosen = match s.gate.chosen {
                Strategy::Combinatorial => "combinatorial",
                Strategy::Hybrid => "hybrid",
            };
            let _ = writeln!(
                out,
                "{:>5}  {:>8.4}  {:>13}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.2}  {:>8.2}",
                s.index,
                s.test_accuracy,
                chosen,
                s.gate.val_acc_comb,
                s.gate.val_acc_hybrid,
                s.diagnostics.tie_rate,
                s.diagnostics.mean_margin,
                s.timings.tune_s,
                s.timings.total_s
            );
        }
        let _ = writeln!(
            out,
            "mean {:.2} ± {:.2} %   refinement selected {}/{}",
            100.0 * self.mean_accuracy,
            100.0 * self.std_accuracy,
            self.refinement_selected_count,
            self.splits.len()
        );
        out
    }
}

/// Mean and (n−1) standard deviation; the deviation of fewer than two values
/// is zero.
pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Everything a split produced, for inspection beyond the JSON report.
#[derive(Debug, Clone)]
pub struct SplitRun {
    pub report: SplitReport,
    pub tune: TuneResult,
    pub stats: TrainStats,
    pub comb_val: PredictionResult,
    pub comb_test: PredictionResult,
    pub hybrid_val: BTreeMap<usize, usize>,
    pub hybrid_test: BTreeMap<usize, usize>,
    pub lambda: f64,
    pub gate: GateDecision,
    /// Test predictions of the strategy the gate chose.
    pub test_predictions: BTreeMap<usize, usize>,
}

/// Runs one split. `index` is only used for reporting and seeding (the
/// split's seed is `cfg.seed + index`).
pub fn run_split(graph: &Graph, split: &SplitSpec, index: usize, cfg: &RunConfig) -> Result<SplitRun> {
    let started = Instant::now();
    split.validate(graph.node_count())?;
    let split_seed = cfg.seed.wrapping_add(index as u64);

    let mut space = apply_ablation(cfg.variant, &cfg.space);
    space.seed = split_seed;
    space.base.seed = split_seed;

    let working = if space.base.standardize {
        graph.standardized()
    } else {
        graph.clone()
    };
    let visible = working.mask_labels(&split.train);

    let tune_started = Instant::now();
    let tuned = tune_with(&visible, &split.train, &space, cfg.stats, cfg.exec)?;
    let tune_s = tune_started.elapsed().as_secs_f64();
    let hp = tuned.best.clone();

    let stats = TrainStats::build(&visible, &split.train, cfg.stats)?;
    let infer_started = Instant::now();
    let comb_test = predict(&visible, &split.train, &split.test, &hp, &stats)?;
    let infer_s = infer_started.elapsed().as_secs_f64();
    let comb_val = predict(&visible, &split.train, &split.val, &hp, &stats)?;

    let lambda = compute_lambda(&stats, &cfg.injection);
    let mut priors = comb_val.predicted.clone();
    priors.extend(comb_test.predicted.iter().map(|(&u, &c)| (u, c)));
    let injection = Injection {
        predictions: &priors,
        lambda,
    };
    let refiner_cfg = RefinerConfig {
        seed: split_seed,
        ..cfg.refiner.clone()
    };
    let init = RefinerParams::init(visible.feature_dim(), visible.num_classes(), &refiner_cfg);
    let trained = refiner::train_refiner(
        &visible,
        visible.features(),
        &split.train,
        init,
        &refiner_cfg,
        Some(&injection),
    )?;
    let logits = refiner::forward(
        &trained.params,
        &refiner::normalized_adjacency(&visible),
        visible.features(),
        Some(&injection),
    )?;
    let hybrid_val = refiner::argmax_rows(&logits, &split.val);
    let hybrid_test = refiner::argmax_rows(&logits, &split.test);

    // Validation labels are read here, and only here.
    let val_acc_comb = comb_val.accuracy(graph);
    let val_acc_hybrid = predict::accuracy(hybrid_val.iter().map(|(&u, &c)| (u, c)), graph);
    let decision = gate(val_acc_comb, val_acc_hybrid, cfg.gate_margin);

    let test_predictions = match decision.chosen {
        Strategy::Combinatorial => comb_test.predicted.clone(),
        Strategy::Hybrid => hybrid_test.clone(),
    };
    // Test labels are read here, and only here.
    let test_accuracy = predict::accuracy(test_predictions.iter().map(|(&u, &c)| (u, c)), graph);

    let total_s = started.elapsed().as_secs_f64();
    let report = SplitReport {
        index,
        hyperparams: hp,
        gate: GateReport {
            chosen: decision.chosen,
            val_acc_comb,
            val_acc_hybrid,
        },
        test_accuracy,
        diagnostics: DiagnosticsReport::from(&comb_test.diagnostics),
        timings: Timings {
            tune_s,
            infer_s,
            total_s,
        },
    };
    Ok(SplitRun {
        report,
        tune: tuned,
        stats,
        comb_val,
        comb_test,
        hybrid_val,
        hybrid_test,
        lambda,
        gate: decision,
        test_predictions,
    })
}

/// Loads the graph and splits named by `cfg.source`.
pub fn load_source(source: &DataSource) -> Result<(Graph, Vec<SplitSpec>)> {
    match source {
        DataSource::Files { dataset, splits } => {
            let graph = graph::load_dataset(&graph::DatasetPaths::in_dir(dataset))?;
            let splits = graph::load_splits(splits, graph.node_count())?;
            Ok((graph, splits))
        }
        DataSource::Synthetic { config, splits } => {
            let (graph, first) = generate_synthetic(config)?;
            let mut all = vec![first];
            for i in 1..*splits {
                all.push(stratified_split(
                    graph.labels(),
                    graph.num_classes(),
                    config.seed.wrapping_add(i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                ));
            }
            all.truncate((*splits).max(1));
            Ok((graph, all))
        }
    }
}

/// Runs every split in order. `on_split` sees each report as soon as it is
/// ready, so callers can persist partial progress.
pub fn run_on(
    graph: &Graph,
    splits: &[SplitSpec],
    cfg: &RunConfig,
    mut on_split: impl FnMut(&SplitRun),
) -> Result<ExperimentReport> {
    if splits.is_empty() {
        return Err(Error::Invalid("no splits to run".into()));
    }
    let mut reports = Vec::with_capacity(splits.len());
    for (i, split) in splits.iter().enumerate() {
        let run = run_split(graph, split, i, cfg)?;
        on_split(&run);
        reports.push(run.report);
    }
    Ok(ExperimentReport::from_splits(
        cfg.dataset_name.clone(),
        cfg.variant,
        reports,
    ))
}

pub fn run_experiment(cfg: &RunConfig, on_split: impl FnMut(&SplitRun)) -> Result<ExperimentReport> {
    let (graph, splits) = load_source(&cfg.source)?;
    run_on(&graph, &splits, cfg, on_split)
}

/// Runs all six variants on the same data.
pub fn run_ablation(cfg: &RunConfig) -> Result<Vec<ExperimentReport>> {
    let (graph, splits) = load_source(&cfg.source)?;
    Variant::ALL
        .into_iter()
        .map(|variant| {
            let cfg = RunConfig {
                variant,
                ..cfg.clone()
            };
            run_on(&graph, &splits, &cfg, |_| {})
        })
        .collect()
}

/// Leakage-audit hook: returns a copy of `graph` in which the labels of
/// `nodes` are replaced by uniformly random classes.
pub fn scramble_labels(graph: &Graph, nodes: &[usize], seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = graph.labels().to_vec();
    for &u in nodes {
        labels[u] = Some(rng.random_range(0..graph.num_classes()));
    }
    graph.with_labels(labels).expect("scrambled labels stay in range")
}
