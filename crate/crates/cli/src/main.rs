use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use combnode::graph::{self, DatasetPaths};
use combnode::pipeline::{self, DataSource, RunConfig, Variant};
use combnode::tune::tune;
use combnode::{Error, FeatureModel, Result, StatsConfig, SynthConfig};

#[derive(Parser)]
#[command(name = "combnode", version, about = "Combinatorial node classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SearchArgs {
    /// Number of sampled configurations per split.
    #[arg(long, default_value_t = 200)]
    budget: usize,
    /// Cross-validation folds drawn from the training nodes.
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on every split and write a JSON report.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        splits: PathBuf,
        #[arg(long, default_value = "FULL")]
        variant: String,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long, default_value_t = 0.005)]
        gate_margin: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune on one split and emit the per-candidate log.
    Tune {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        split_index: usize,
        /// Defaults to DATASET/splits.json.
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long, default_value = "FULL")]
        variant: String,
        #[command(flatten)]
        search: SearchArgs,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a two-block synthetic dataset with splits.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        p_in: f64,
        #[arg(long)]
        p_out: f64,
        #[arg(long)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Feature dimension; defaults to the class count.
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, default_value_t = 10)]
        num_splits: usize,
        /// Draw sparse binary word features with this marker strength
        /// instead of one-hot plus Gaussian noise.
        #[arg(long)]
        words: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all six variants and write one report per variant.
    Ablate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        splits: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long, default_value_t = 0.005)]
        gate_margin: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dataset_name(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn run_config(dataset: &Path, splits: &Path, variant: Variant, search: &SearchArgs, gate_margin: f64) -> Result<RunConfig> {
    if gate_margin.is_nan() {
        return Err(Error::Usage("gate margin must be a number".into()));
    }
    let mut cfg = RunConfig::new(
        dataset_name(dataset),
        DataSource::Files {
            dataset: dataset.to_path_buf(),
            splits: splits.to_path_buf(),
        },
    );
    cfg.variant = variant;
    cfg.space.budget = search.budget;
    cfg.space.folds = search.folds;
    cfg.space.validate()?;
    cfg.gate_margin = gate_margin;
    cfg.seed = search.seed;
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn partial_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    out.with_file_name(name)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            dataset,
            splits,
            variant,
            search,
            gate_margin,
            out,
        } => {
            let cfg = run_config(&dataset, &splits, variant.parse()?, &search, gate_margin)?;
            // Finished splits are appended here so a failure keeps them.
            let partial = partial_path(&out);
            let mut done = Vec::new();
            let result = pipeline::run_experiment(&cfg, |run| {
                done.push(run.report.clone());
                let _ = write_file(&partial, &serde_json::to_string_pretty(&done).expect("serializes"));
            });
            let report = result?;
            write_file(&out, &report.to_json())?;
            let _ = fs::remove_file(&partial);
            print!("{}", report.render_table());
            Ok(())
        }
        Command::Tune {
            dataset,
            split_index,
            splits,
            variant,
            search,
            out,
        } => {
            let variant: Variant = variant.parse()?;
            let splits = splits.unwrap_or_else(|| dataset.join("splits.json"));
            let full = graph::load_dataset(&DatasetPaths::in_dir(&dataset))?;
            let all = graph::load_splits(&splits, full.node_count())?;
            let split = all.get(split_index).ok_or_else(|| {
                Error::Usage(format!("split index {split_index} out of range ({} splits)", all.len()))
            })?;
            let mut cfg = run_config(&dataset, &splits, variant, &search, 0.0)?;
            cfg.space = pipeline::apply_ablation(variant, &cfg.space);
            cfg.space.seed = search.seed.wrapping_add(split_index as u64);
            let g = if cfg.space.base.standardize { full.standardized() } else { full };
            let result = tune(&g.mask_labels(&split.train), &split.train, &cfg.space, StatsConfig::default())?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            let log = serde_json::to_string_pretty(&result.per_candidate_log).expect("serializes");
            match out {
                Some(path) => write_file(&path, &log),
                None => {
                    println!("{log}");
                    Ok(())
                }
            }
        }
        Command::Synth {
            n,
            classes,
            p_in,
            p_out,
            noise,
            seed,
            dim,
            num_splits,
            words,
            out,
        } => {
            if num_splits == 0 {
                return Err(Error::Usage("need at least one split".into()));
            }
            let config = SynthConfig {
                n,
                num_classes: classes,
                dim: dim.unwrap_or(classes),
                p_in,
                p_out,
                feature_noise: noise,
                seed,
                features: match words {
                    Some(signal) => FeatureModel::BagOfWords { signal },
                    None => FeatureModel::Gaussian,
                },
            };
            config.validate().map_err(|e| Error::Usage(e.to_string()))?;
            let (g, splits) = pipeline::load_source(&DataSource::Synthetic {
                config,
                splits: num_splits,
            })?;
            graph::write_dataset(&out, &g, &splits)?;
            println!(
                "wrote {} nodes, {} edges, {} splits to {}",
                g.node_count(),
                g.edge_count(),
                splits.len(),
                out.display()
            );
            Ok(())
        }
        Command::Ablate {
            dataset,
            splits,
            search,
            gate_margin,
            out,
        } => {
            let cfg = run_config(&dataset, &splits, Variant::Full, &search, gate_margin)?;
            let reports = pipeline::run_ablation(&cfg)?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for report in &reports {
                write_file(&out.join(format!("{}.json", report.variant)), &report.to_json())?;
                print!("{}", report.render_table());
            }
            println!("{:<12} {:>8} {:>8}", "variant", "mean", "std");
            for r in &reports {
                println!(
                    "{:<12} {:>8.2} {:>8.2}",
                    r.variant.name(),
                    100.0 * r.mean_accuracy,
                    100.0 * r.std_accuracy
                );
            }
            Ok(())
        }
    }
}
