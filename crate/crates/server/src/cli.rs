//! The `refine` command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use refine_core::data::{self, split_dataset_with, write_manifest, DatasetSplit, TestSelection};
use refine_core::export::{export_class_dataset, export_pairs};
use refine_core::groups::{read_events, GroupStore};
use refine_core::pca::{clamp_components, fit_pca, DEFAULT_COMPONENTS};
use refine_core::session::{SessionConfig, WeightMode};
use refine_core::sim::{
    self, ExperimentReport, SamplingOptions, SyntheticConfig, DEFAULT_FRACTIONS,
};
use refine_core::{Dataset, FeatureMatrix};

use crate::api::{self, ServerConfig};

#[derive(Parser, Debug)]
#[command(
    name = "refine",
    version,
    about = "Relevance-feedback retrieval over feature vectors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Prepare datasets: split, reduce, synthesise.
    #[command(subcommand)]
    Data(DataCommand),
    /// Run simulated-user experiments.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Export training data from logged feedback and group memory.
    #[command(subcommand)]
    Export(ExportCommand),
    /// Inspect a persisted group store.
    #[command(subcommand)]
    Groups(GroupsCommand),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Subcommand, Debug)]
pub enum DataCommand {
    /// Split a dataset into test queries, validation queries and the retrieval database.
    Split {
        #[arg(long, env = "REFINE_MANIFEST")]
        manifest: PathBuf,
        /// Needed only for `--select lowest-rf0`.
        #[arg(long, env = "REFINE_FEATURES")]
        features: Option<PathBuf>,
        #[arg(long, env = "REFINE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        test_per_label: usize,
        #[arg(long, default_value_t = 1000)]
        validation: usize,
        #[arg(long, value_enum, default_value_t = Select::Uniform)]
        select: Select,
        /// Scope for `--select lowest-rf0`.
        #[arg(long, default_value_t = 20)]
        scope: usize,
        /// Directory receiving `split.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reduce a feature file with principal component analysis.
    Pca {
        #[arg(long, env = "REFINE_FEATURES")]
        features: PathBuf,
        #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
        k: usize,
        /// Reduced feature file.
        #[arg(long)]
        out: PathBuf,
        /// Where to store the fitted model (default: `<out>.pca`).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write a synthetic Gaussian-cluster dataset.
    Synth {
        #[arg(long, default_value_t = 10)]
        labels: usize,
        #[arg(long, default_value_t = 100)]
        per_label: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 4.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, env = "REFINE_SEED", default_value_t = 0)]
        seed: u64,
        /// Directory receiving `items.jsonl` and `features.fvec`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Select {
    Uniform,
    LowestRf0,
}

#[derive(Args, Debug, Clone)]
pub struct SimArgs {
    #[arg(long, env = "REFINE_MANIFEST")]
    pub manifest: PathBuf,
    #[arg(long, env = "REFINE_FEATURES")]
    pub features: PathBuf,
    #[arg(long, env = "REFINE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// JSON report path.
    #[arg(long)]
    pub report: PathBuf,
    /// CSV table path (default: the report path with a `.csv` extension).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, env = "REFINE_SCOPE", default_value_t = 20)]
    pub scope: usize,
    #[arg(long, default_value_t = 6)]
    pub max_iterations: usize,
    #[arg(long, env = "REFINE_DELTA", default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = Mode::Discriminant)]
    pub weight_mode: Mode,
    /// Record wall-clock time in the report (reports are then no longer
    /// byte-identical across runs).
    #[arg(long)]
    pub timing: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    SigmaRatio,
    Discriminant,
}

impl From<Mode> for WeightMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::SigmaRatio => WeightMode::SigmaRatio,
            Mode::Discriminant => WeightMode::Discriminant,
        }
    }
}

impl SimArgs {
    fn config(&self) -> SessionConfig {
        SessionConfig {
            scope: self.scope,
            max_iterations: self.max_iterations,
            delta: self.delta,
            weight_mode: self.weight_mode.into(),
            grouping_enabled: false,
            rng_seed: self.seed,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum SimCommand {
    /// Feature re-weighting without group memory.
    Baseline {
        #[command(flatten)]
        common: SimArgs,
        /// Use the split's test queries against its retrieval database;
        /// otherwise every item queries the whole dataset.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Group memory built from validation queries, evaluated at checkpoints.
    Grouping {
        #[command(flatten)]
        common: SimArgs,
        /// Split file; when absent one is drawn with `--test-per-label` and `--validation`.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        test_per_label: usize,
        #[arg(long, default_value_t = 1000)]
        validation: usize,
        #[arg(long, default_value_t = 5)]
        checkpoints: usize,
    },
    /// Sampled feedback queries, pair export and precision per sample fraction.
    Sampling {
        #[command(flatten)]
        common: SimArgs,
        /// Comma-separated fractions in [0, 1].
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        /// Feature file per fraction (repeat in fraction order); `-` keeps the original features.
        #[arg(long = "swap")]
        swaps: Vec<String>,
        /// Directory for the per-fraction pair files.
        #[arg(long)]
        pairs_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum ExportCommand {
    /// Similar/dissimilar pairs from a feedback log.
    Pairs {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Manifest used to write a `<out>.thumbnails.csv` sidecar.
        #[arg(long, env = "REFINE_MANIFEST")]
        manifest: Option<PathBuf>,
    },
    /// Class dataset from group memory.
    Classes {
        #[arg(long, env = "REFINE_GROUPS")]
        groups: PathBuf,
        #[arg(long, default_value_t = 10)]
        min_size: usize,
        #[arg(long, default_value_t = 0.2)]
        val_fraction: f64,
        #[arg(long, env = "REFINE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum GroupsCommand {
    /// Write the group store's membership to a file.
    Export {
        #[arg(long, env = "REFINE_GROUPS")]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print group count and size histogram as JSON.
    Stats {
        #[arg(long, env = "REFINE_GROUPS")]
        store: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, env = "REFINE_MANIFEST")]
    pub manifest: PathBuf,
    #[arg(long, env = "REFINE_FEATURES")]
    pub features: PathBuf,
    #[arg(long, env = "REFINE_DATA_DIR", default_value = "refine-data")]
    pub data_dir: PathBuf,
    #[arg(long, env = "REFINE_BIND", default_value = "127.0.0.1:8080")]
    pub bind: String,
    #[arg(long, env = "REFINE_STATIC_ROOT")]
    pub static_root: Option<PathBuf>,
    #[arg(long, env = "REFINE_SCOPE", default_value_t = 20)]
    pub scope: usize,
    #[arg(long, env = "REFINE_DELTA", default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, env = "REFINE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Enable group memory for sessions that do not say otherwise.
    #[arg(long, env = "REFINE_GROUPING")]
    pub grouping: bool,
    /// Counter-based session ids and timestamps.
    #[arg(long, env = "REFINE_LOGICAL_CLOCK")]
    pub logical_clock: bool,
}

impl ServeArgs {
    pub fn server_config(&self) -> ServerConfig {
        ServerConfig {
            manifest: self.manifest.clone(),
            features: self.features.clone(),
            data_dir: self.data_dir.clone(),
            static_root: self.static_root.clone(),
            defaults: SessionConfig {
                scope: self.scope,
                delta: self.delta,
                rng_seed: self.seed,
                grouping_enabled: self.grouping,
                ..SessionConfig::default()
            },
            logical_clock: self.logical_clock,
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Data(cmd) => run_data(cmd),
        Command::Sim(cmd) => run_sim(cmd),
        Command::Export(cmd) => run_export(cmd),
        Command::Groups(cmd) => run_groups(cmd),
        Command::Serve(args) => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(api::serve(&args.server_config(), &args.bind))
        }
    }
}

fn run_data(cmd: DataCommand) -> anyhow::Result<()> {
    match cmd {
        DataCommand::Split {
            manifest,
            features,
            seed,
            test_per_label,
            validation,
            select,
            scope,
            out,
        } => {
            let mut dataset = data::load_manifest(&manifest)?;
            let selection = match select {
                Select::Uniform => TestSelection::Uniform,
                Select::LowestRf0 => {
                    let Some(features) = features else {
                        bail!("--select lowest-rf0 needs --features");
                    };
                    dataset = data::load_features(&features, dataset)?;
                    TestSelection::LowestRf0Precision { scope }
                }
            };
            let split = split_dataset_with(&dataset, seed, test_per_label, validation, selection)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            split.write(out.join("split.json"))?;
            println!(
                "{} test, {} validation, {} retrieval",
                split.test.len(),
                split.validation.len(),
                split.retrieval_db.len()
            );
        }
        DataCommand::Pca {
            features,
            k,
            out,
            model,
        } => {
            let matrix = FeatureMatrix::read(&features)?;
            let k_used = clamp_components(k, matrix.rows(), matrix.cols());
            if k_used != k {
                log::warn!(
                    "k = {k} exceeds what a {}x{} matrix supports; using {k_used}",
                    matrix.rows(),
                    matrix.cols()
                );
            }
            let fitted = fit_pca(&matrix, k_used)?;
            parent_dir(&out)?;
            fitted.transform(&matrix)?.write(&out)?;
            let model = model.unwrap_or_else(|| with_suffix(&out, ".pca"));
            parent_dir(&model)?;
            fitted.write(&model)?;
            println!(
                "{} rows reduced from {} to {} dims",
                matrix.rows(),
                matrix.cols(),
                k_used
            );
        }
        DataCommand::Synth {
            labels,
            per_label,
            dim,
            separation,
            noise,
            seed,
            out,
        } => {
            let dataset = sim::generate_synthetic(&SyntheticConfig {
                labels,
                per_label,
                dim,
                separation,
                noise,
                seed,
            })?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write_manifest(out.join("items.jsonl"), dataset.items())?;
            dataset.features()?.write(out.join("features.fvec"))?;
            println!("{} items, {} labels, dim {dim}", dataset.len(), labels);
        }
    }
    Ok(())
}

/// Creates the directory `path` will be written into.
fn parent_dir(path: &Path) -> anyhow::Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
        }
        _ => Ok(()),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load(common: &SimArgs) -> anyhow::Result<Dataset> {
    Ok(data::load_dataset(&common.manifest, &common.features)?)
}

fn run_sim(cmd: SimCommand) -> anyhow::Result<()> {
    let start = std::time::Instant::now();
    let (common, mut report) = match cmd {
        SimCommand::Baseline { common, split } => {
            let dataset = load(&common)?;
            let report = match split {
                Some(path) => {
                    let split = DatasetSplit::read(path)?;
                    sim::check_split(&split)?;
                    sim::run_baseline(&dataset, &split.retrieval_db, &split.test, &common.config())?
                }
                None => {
                    let ids: Vec<&str> = dataset.items().iter().map(|i| i.id.as_str()).collect();
                    sim::run_baseline(&dataset, &ids, &ids, &common.config())?
                }
            };
            (common, report)
        }
        SimCommand::Grouping {
            common,
            split,
            test_per_label,
            validation,
            checkpoints,
        } => {
            let dataset = load(&common)?;
            let split = match split {
                Some(path) => DatasetSplit::read(path)?,
                None => data::split_dataset(&dataset, common.seed, test_per_label, validation)?,
            };
            sim::check_split(&split)?;
            let report =
                sim::run_grouping_experiment(&dataset, &split, checkpoints, &common.config())?;
            (common, report)
        }
        SimCommand::Sampling {
            common,
            fractions,
            swaps,
            pairs_dir,
        } => {
            let dataset = load(&common)?;
            let fractions = fractions.unwrap_or_else(|| DEFAULT_FRACTIONS.to_vec());
            if swaps.len() > fractions.len() {
                bail!(
                    "{} swap files for {} fractions",
                    swaps.len(),
                    fractions.len()
                );
            }
            if let Some(dir) = &pairs_dir {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
            }
            let options = SamplingOptions {
                fractions,
                encoder_swaps: swaps
                    .into_iter()
                    .map(|s| (s != "-").then(|| PathBuf::from(s)))
                    .collect(),
                pairs_dir,
            };
            let report = sim::run_sampling_protocol(&dataset, &options, &common.config())?;
            (common, report)
        }
    };
    if common.timing {
        report.wall_clock_ms = Some(start.elapsed().as_millis() as u64);
    }
    write_outputs(&common, &report)?;
    report
        .check_invariants()
        .context("report violates its invariants")?;
    Ok(())
}

fn write_outputs(common: &SimArgs, report: &ExperimentReport) -> anyhow::Result<()> {
    parent_dir(&common.report)?;
    sim::write_report(report, &common.report)?;
    let csv = common
        .csv
        .clone()
        .unwrap_or_else(|| common.report.with_extension("csv"));
    parent_dir(&csv)?;
    let file =
        std::fs::File::create(&csv).with_context(|| format!("creating {}", csv.display()))?;
    report.write_csv(std::io::BufWriter::new(file))?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    println!(
        "report written to {} and {}",
        common.report.display(),
        csv.display()
    );
    Ok(())
}

fn run_export(cmd: ExportCommand) -> anyhow::Result<()> {
    match cmd {
        ExportCommand::Pairs {
            events,
            out,
            manifest,
        } => {
            let events = read_events(&events)?;
            let export = export_pairs(&events)?;
            parent_dir(&out)?;
            export.write_csv_file(&out)?;
            println!(
                "{} pairs ({} similar, {} dissimilar, {} flagged) from {} events",
                export.pairs.len(),
                export.similar(),
                export.dissimilar(),
                export.flagged(),
                events.len()
            );
            if let Some(manifest) = manifest {
                let dataset = data::load_manifest(&manifest)?;
                let path = with_suffix(&out, ".thumbnails.csv");
                let file = std::fs::File::create(&path)
                    .with_context(|| format!("creating {}", path.display()))?;
                let n = export.write_thumbnails(&dataset, std::io::BufWriter::new(file))?;
                println!("{n} thumbnails listed in {}", path.display());
            }
        }
        ExportCommand::Classes {
            groups,
            min_size,
            val_fraction,
            seed,
            out,
        } => {
            let store = GroupStore::load(&groups)?;
            let manifest = export_class_dataset(&store, min_size, val_fraction, seed)?;
            parent_dir(&out)?;
            manifest.write(&out)?;
            println!(
                "{} classes kept, {} groups below {min_size} pruned",
                manifest.groups.len(),
                manifest.pruned_groups.len()
            );
        }
    }
    Ok(())
}

fn run_groups(cmd: GroupsCommand) -> anyhow::Result<()> {
    match cmd {
        GroupsCommand::Export { store, out } => {
            let store = GroupStore::load(&store)?;
            parent_dir(&out)?;
            store.save(&out)?;
            println!(
                "{} groups over {} items",
                store.group_count(),
                store.grouped_items()
            );
        }
        GroupsCommand::Stats { store } => {
            let store = GroupStore::load(&store)?;
            println!("{}", serde_json::to_string_pretty(&store.stats())?);
        }
    }
    Ok(())
}
