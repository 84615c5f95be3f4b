//! Simulated user and experiment drivers.
//!
//! The simulated user marks an item relevant exactly when its ground-truth
//! label equals the query's. Every experiment is a pure function of the
//! dataset, the configuration and the seeds, so reports are reproducible
//! byte for byte.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetSplit, FeatureMatrix, ItemRecord};
use crate::error::{Error, Result};
use crate::export::{export_pairs, PairExport};
use crate::groups::{FeedbackEvent, GroupStore};
use crate::metrics::{mean, SessionMetrics};
use crate::retrieval::{self, WeightVector};
use crate::rng;
use crate::session::{Query, Session, SessionConfig};

/// Fractions of the database sampled as feedback queries by default.
pub const DEFAULT_FRACTIONS: [f64; 8] = [0.0, 0.05, 0.10, 0.30, 0.50, 0.70, 0.90, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub labels: usize,
    pub per_label: usize,
    pub dim: usize,
    /// Minimum Euclidean distance between any two class centroids.
    pub separation: f64,
    /// Per-coordinate standard deviation of points around their centroid.
    pub noise: f64,
    pub seed: u64,
}

/// Gaussian clusters, one per label.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.labels == 0 || cfg.per_label == 0 || cfg.dim == 0 {
        return Err(Error::Parameter(
            "labels, per_label and dim must be at least 1".into(),
        ));
    }
    if !(cfg.separation > 0.0 && cfg.noise > 0.0) {
        return Err(Error::Parameter(
            "separation and noise must be positive".into(),
        ));
    }
    let mut rng = rng::stream(cfg.seed, 0);
    let mut centroids: Vec<Vec<f64>> = (0..cfg.labels)
        .map(|_| {
            (0..cfg.dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect();
    let mut min_dist = f64::INFINITY;
    for a in 0..cfg.labels {
        for b in a + 1..cfg.labels {
            let d: f64 = centroids[a]
                .iter()
                .zip(&centroids[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            min_dist = min_dist.min(d);
        }
    }
    let scale = if min_dist.is_finite() && min_dist > 0.0 {
        cfg.separation / min_dist
    } else {
        1.0
    };
    for c in &mut centroids {
        for v in c.iter_mut() {
            *v *= scale;
        }
    }

    let label_width = digits(cfg.labels - 1);
    let item_width = digits(cfg.per_label - 1);
    let mut items = Vec::with_capacity(cfg.labels * cfg.per_label);
    let mut values = Vec::with_capacity(cfg.labels * cfg.per_label * cfg.dim);
    for (l, centroid) in centroids.iter().enumerate() {
        let label = format!("class{l:0label_width$}");
        for i in 0..cfg.per_label {
            items.push(ItemRecord::new(
                format!("{label}_{i:0item_width$}"),
                label.clone(),
            ));
            for c in centroid {
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push(c + cfg.noise * z);
            }
        }
    }
    let features = FeatureMatrix::new(items.len(), cfg.dim, values)?;
    Dataset::new(items, features)
}

fn digits(n: usize) -> usize {
    n.to_string().len()
}

/// The ids of `batch` sharing `query_label`.
pub fn oracle_feedback<S: AsRef<str>>(
    batch: &[S],
    query_label: &str,
    db: &Dataset,
) -> Result<Vec<String>> {
    let mut relevant = Vec::new();
    for id in batch {
        let id = id.as_ref();
        let label = db
            .label_of(id)
            .ok_or_else(|| Error::Validation(format!("unknown item id {id:?}")))?;
        if label == query_label {
            relevant.push(id.to_string());
        }
    }
    Ok(relevant)
}

/// Runs a session to completion with the simulated user answering.
pub fn run_oracle_session(
    db: &Dataset,
    query: Query,
    query_label: &str,
    cfg: &SessionConfig,
    groups: Option<&GroupStore>,
) -> Result<Session> {
    let mut session = Session::start(query, db, cfg.clone())?;
    while !session.is_complete() {
        let relevant = oracle_feedback(&session.current_batch().ids(), query_label, db)?;
        session.submit_feedback(&relevant, db, groups)?;
    }
    Ok(session)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub items: usize,
    pub labels: usize,
    pub dim: usize,
}

impl DatasetSummary {
    fn of(ds: &Dataset) -> Self {
        Self {
            items: ds.len(),
            labels: ds.labels().len(),
            dim: ds.dim(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    pub rf0_precision: Option<f64>,
    pub final_accuracy: f64,
    pub rf_iteration_number: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub queries: usize,
    pub mean_rf0_precision: Option<f64>,
    pub mean_accuracy: Option<f64>,
    pub mean_rf_iteration_number: Option<f64>,
    /// Mean retrieval accuracy at each iteration, sessions that finished early
    /// carrying their final accuracy forward.
    pub mean_accuracy_by_iteration: Vec<f64>,
    pub per_query: Vec<QueryResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Validation queries streamed through the group memory so far.
    pub validation_queries: usize,
    pub group_count: usize,
    pub mean_accuracy: Option<f64>,
    pub mean_rf_iteration_number: Option<f64>,
    pub mean_rf0_precision: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingRow {
    pub fraction: f64,
    pub sampled_queries: usize,
    pub overall_precision: f64,
    /// Absent when nothing was sampled.
    pub in_sample_precision: Option<f64>,
    /// Absent when everything was sampled.
    pub out_of_sample_precision: Option<f64>,
    pub similar_pairs: usize,
    pub dissimilar_pairs: usize,
    /// `None` when the original features were used.
    pub swapped_features: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Baseline,
    Grouping,
    Sampling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub protocol: Protocol,
    pub config: SessionConfig,
    pub seed: u64,
    pub dataset: DatasetSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Evaluation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<Checkpoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sampling: Vec<SamplingRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Filled in by callers that want timing; left out of library reports so
    /// they stay reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<u64>,
}

impl ExperimentReport {
    fn new(protocol: Protocol, cfg: &SessionConfig, dataset: &Dataset) -> Self {
        Self {
            protocol,
            config: cfg.clone(),
            seed: cfg.rng_seed,
            dataset: DatasetSummary::of(dataset),
            baseline: None,
            checkpoints: Vec::new(),
            sampling: Vec::new(),
            warnings: Vec::new(),
            wall_clock_ms: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Checks the report's structural invariants: strictly increasing
    /// checkpoints and every mean inside its range.
    pub fn check_invariants(&self) -> Result<()> {
        let max_it = self.config.max_iterations as f64;
        let unit = |what: &str, v: Option<f64>| -> Result<()> {
            match v {
                Some(v) if !(0.0..=1.0).contains(&v) => {
                    Err(Error::Validation(format!("{what} = {v} is outside [0, 1]")))
                }
                _ => Ok(()),
            }
        };
        let iters = |what: &str, v: Option<f64>| -> Result<()> {
            match v {
                Some(v) if !(0.0..=max_it).contains(&v) => Err(Error::Validation(format!(
                    "{what} = {v} is outside [0, {max_it}]"
                ))),
                _ => Ok(()),
            }
        };
        if let Some(b) = &self.baseline {
            unit("baseline mean accuracy", b.mean_accuracy)?;
            unit("baseline mean RF0 precision", b.mean_rf0_precision)?;
            iters(
                "baseline mean RF iteration number",
                b.mean_rf_iteration_number,
            )?;
            for w in b.mean_accuracy_by_iteration.windows(2) {
                if w[1] < w[0] {
                    return Err(Error::Validation(
                        "mean accuracy decreases across iterations".into(),
                    ));
                }
            }
        }
        for w in self.checkpoints.windows(2) {
            if w[1].validation_queries <= w[0].validation_queries {
                return Err(Error::Validation(
                    "checkpoints are not strictly increasing".into(),
                ));
            }
        }
        for c in &self.checkpoints {
            unit("checkpoint mean accuracy", c.mean_accuracy)?;
            iters(
                "checkpoint mean RF iteration number",
                c.mean_rf_iteration_number,
            )?;
        }
        for r in &self.sampling {
            unit("overall precision", Some(r.overall_precision))?;
            unit("in-sample precision", r.in_sample_precision)?;
            unit("out-of-sample precision", r.out_of_sample_precision)?;
        }
        Ok(())
    }

    /// Tabular view of the report: the accuracy curve for baselines, the
    /// checkpoint trajectory for grouping runs, and the sample-fraction table
    /// for sampling runs.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v}"));
        let pct =
            |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", v * 100.0));
        match self.protocol {
            Protocol::Baseline => {
                w.write_record(["iteration", "mean_accuracy"])?;
                if let Some(b) = &self.baseline {
                    for (t, a) in b.mean_accuracy_by_iteration.iter().enumerate() {
                        w.write_record([t.to_string(), a.to_string()])?;
                    }
                }
            }
            Protocol::Grouping => {
                w.write_record([
                    "validation_queries",
                    "group_count",
                    "mean_accuracy",
                    "mean_rf_iteration_number",
                ])?;
                for c in &self.checkpoints {
                    w.write_record([
                        c.validation_queries.to_string(),
                        c.group_count.to_string(),
                        opt(c.mean_accuracy),
                        opt(c.mean_rf_iteration_number),
                    ])?;
                }
            }
            Protocol::Sampling => {
                w.write_record(["Sample %", "Overall", "In Sample", "Out of Sample"])?;
                for r in &self.sampling {
                    w.write_record([
                        format!("{}", (r.fraction * 100.0).round()),
                        pct(Some(r.overall_precision)),
                        pct(r.in_sample_precision),
                        pct(r.out_of_sample_precision),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<report csv>", e))?;
        Ok(())
    }
}

/// Session query for `id`: the item itself when it is part of `db`, otherwise
/// its feature vector taken from `source`.
fn query_for(id: &str, db: &Dataset, source: &Dataset) -> Result<Query> {
    if db.index_of(id).is_some() {
        Ok(Query::Item(id.to_string()))
    } else {
        Ok(Query::Vector(source.vector(id)?.to_vec()))
    }
}

fn label_for<'a>(id: &str, source: &'a Dataset) -> Result<&'a str> {
    source
        .label_of(id)
        .ok_or_else(|| Error::Validation(format!("unknown query id {id:?}")))
}

/// Runs one oracle session per query against `db` and aggregates.
fn evaluate(
    source: &Dataset,
    db: &Dataset,
    query_ids: &[String],
    cfg: &SessionConfig,
    groups: Option<&GroupStore>,
    seed_stream: u64,
) -> Result<Evaluation> {
    let per_query: Vec<(QueryResult, SessionMetrics)> = query_ids
        .par_iter()
        .enumerate()
        .map(|(q, id)| {
            let mut cfg = cfg.clone();
            cfg.rng_seed = rng::derive_seed(rng::derive_seed(cfg.rng_seed, seed_stream), q as u64);
            let session = run_oracle_session(
                db,
                query_for(id, db, source)?,
                label_for(id, source)?,
                &cfg,
                groups,
            )?;
            let metrics = SessionMetrics::from_session(&session);
            Ok((
                QueryResult {
                    query_id: id.clone(),
                    rf0_precision: metrics.precision.first().copied().flatten(),
                    final_accuracy: metrics.final_accuracy(),
                    rf_iteration_number: metrics.rf_iteration_number,
                },
                metrics,
            ))
        })
        .collect::<Result<_>>()?;

    let mean_accuracy_by_iteration = (0..cfg.max_iterations)
        .map(|t| mean(per_query.iter().map(|(_, m)| m.accuracy_at(t))).unwrap_or(0.0))
        .collect();
    Ok(Evaluation {
        queries: per_query.len(),
        mean_rf0_precision: mean(per_query.iter().filter_map(|(r, _)| r.rf0_precision)),
        mean_accuracy: mean(per_query.iter().map(|(r, _)| r.final_accuracy)),
        mean_rf_iteration_number: mean(per_query.iter().map(|(r, _)| r.rf_iteration_number as f64)),
        mean_accuracy_by_iteration,
        per_query: per_query.into_iter().map(|(r, _)| r).collect(),
    })
}

/// Plain feature re-weighting over `db_ids` for every query, without group
/// memory. Queries inside the database are excluded from their own results.
pub fn run_baseline<S: AsRef<str>>(
    dataset: &Dataset,
    db_ids: &[S],
    query_ids: &[S],
    cfg: &SessionConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let db = dataset.subset(db_ids)?;
    let queries: Vec<String> = query_ids.iter().map(|s| s.as_ref().to_string()).collect();
    let mut cfg = cfg.clone();
    cfg.grouping_enabled = false;
    let mut report = ExperimentReport::new(Protocol::Baseline, &cfg, dataset);
    report.baseline = Some(evaluate(dataset, &db, &queries, &cfg, None, 0)?);
    Ok(report)
}

/// Streams the validation queries through group-aware sessions, recording each
/// completed session into the group memory. Before any validation query and
/// after each of `checkpoints` equal intervals, the test queries are evaluated
/// against the frozen memory.
pub fn run_grouping_experiment(
    dataset: &Dataset,
    split: &DatasetSplit,
    checkpoints: usize,
    cfg: &SessionConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if checkpoints == 0 {
        return Err(Error::Parameter("at least one checkpoint is needed".into()));
    }
    let db = dataset.subset(&split.retrieval_db)?;
    let mut cfg = cfg.clone();
    cfg.grouping_enabled = true;
    let mut report = ExperimentReport::new(Protocol::Grouping, &cfg, dataset);

    let mut store = GroupStore::new();
    let baseline = evaluate(dataset, &db, &split.test, &cfg, Some(&store), 0)?;
    report.checkpoints.push(checkpoint(0, &store, &baseline));
    report.baseline = Some(baseline);

    let total = split.validation.len();
    let mut boundaries: Vec<usize> = (1..=checkpoints)
        .map(|c| ((c * total) as f64 / checkpoints as f64).round() as usize)
        .filter(|&b| b > 0)
        .collect();
    boundaries.dedup();
    let mut next = boundaries.iter().peekable();

    for (i, id) in split.validation.iter().enumerate() {
        let mut session_cfg = cfg.clone();
        session_cfg.rng_seed = rng::derive_seed(rng::derive_seed(cfg.rng_seed, 1), i as u64);
        let session = run_oracle_session(
            &db,
            query_for(id, &db, dataset)?,
            label_for(id, dataset)?,
            &session_cfg,
            Some(&store),
        )?;
        store.record_session(session.relevant(), session.matched_roots());

        if next.peek() == Some(&&(i + 1)) {
            next.next();
            let eval = evaluate(dataset, &db, &split.test, &cfg, Some(&store), 0)?;
            report.checkpoints.push(checkpoint(i + 1, &store, &eval));
        }
    }
    Ok(report)
}

fn checkpoint(processed: usize, store: &GroupStore, eval: &Evaluation) -> Checkpoint {
    Checkpoint {
        validation_queries: processed,
        group_count: store.group_count(),
        mean_accuracy: eval.mean_accuracy,
        mean_rf_iteration_number: eval.mean_rf_iteration_number,
        mean_rf0_precision: eval.mean_rf0_precision,
    }
}

#[derive(Clone, Debug, Default)]
pub struct SamplingOptions {
    pub fractions: Vec<f64>,
    /// Feature file to use for precision at each fraction (same order as
    /// `fractions`); missing entries mean the original features.
    pub encoder_swaps: Vec<Option<PathBuf>>,
    /// When set, the pairs exported at each fraction are written here as
    /// `pairs_<percent>.csv`.
    pub pairs_dir: Option<PathBuf>,
}

/// Initial-retrieval precision of every item used as a query against the rest
/// of the dataset.
pub fn rf0_precisions(dataset: &Dataset, scope: usize) -> Result<Vec<f64>> {
    let features = dataset.features()?;
    let weights = WeightVector::uniform(features.cols());
    let items = dataset.items();
    (0..dataset.len())
        .into_par_iter()
        .map(|q| {
            let ranked =
                retrieval::rank_where(features.row(q), dataset, &weights, |i| i == q, scope)?;
            if ranked.is_empty() {
                return Ok(0.0);
            }
            let hits = ranked
                .entries
                .iter()
                .filter(|e| dataset.label_of(&e.id) == Some(items[q].label.as_str()))
                .count();
            Ok(hits as f64 / ranked.len() as f64)
        })
        .collect()
}

/// For each fraction `x`, samples `x·|db|` queries, logs their initial
/// retrieval with simulated feedback, exports the resulting pairs and reports
/// in-sample, out-of-sample and overall initial-retrieval precision under the
/// fraction's (possibly swapped) features.
pub fn run_sampling_protocol(
    dataset: &Dataset,
    options: &SamplingOptions,
    cfg: &SessionConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if let Some(x) = options.fractions.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Parameter(format!(
            "sample fraction {x} is outside [0, 1]"
        )));
    }
    let mut report = ExperimentReport::new(Protocol::Sampling, cfg, dataset);
    let n = dataset.len();
    let original = rf0_precisions(dataset, cfg.scope)?;
    let features = dataset.features()?;
    let weights = WeightVector::uniform(features.cols());

    for (f, &x) in options.fractions.iter().enumerate() {
        let count = ((x * n as f64).round() as usize).min(n);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(cfg.rng_seed, 100 + f as u64));
        let mut sampled = vec![false; n];
        for &i in &order[..count] {
            sampled[i] = true;
        }

        let events: Vec<FeedbackEvent> = order[..count]
            .par_iter()
            .enumerate()
            .map(|(k, &q)| {
                let item = &dataset.items()[q];
                let ranked = retrieval::rank_where(
                    features.row(q),
                    dataset,
                    &weights,
                    |i| i == q,
                    cfg.scope,
                )?;
                let shown = ranked.ids();
                let relevant = oracle_feedback(&shown, &item.label, dataset)?;
                Ok(FeedbackEvent {
                    session_id: format!("sample{f}-{k}"),
                    query_id: Some(item.id.clone()),
                    iteration: 0,
                    shown,
                    relevant,
                    timestamp: k as u64,
                })
            })
            .collect::<Result<_>>()?;
        let pairs = export_pairs(&events)?;
        if let Some(dir) = &options.pairs_dir {
            let name = format!("pairs_{}.csv", (x * 100.0).round());
            pairs.write_csv_file(dir.join(name))?;
        }

        let swap = options.encoder_swaps.get(f).cloned().flatten();
        let (precisions, swapped_features) = match swap {
            Some(path) if path.exists() => {
                let swapped = dataset.clone().with_features(FeatureMatrix::read(&path)?)?;
                (
                    rf0_precisions(&swapped, cfg.scope)?,
                    Some(path.display().to_string()),
                )
            }
            Some(path) => {
                let msg = format!(
                    "encoder swap {} for fraction {x} not found, using original features",
                    path.display()
                );
                log::warn!("{msg}");
                report.warnings.push(msg);
                (original.clone(), None)
            }
            None => (original.clone(), None),
        };

        report.sampling.push(sampling_row(
            x,
            &sampled,
            &precisions,
            &pairs,
            swapped_features,
        ));
    }
    Ok(report)
}

fn sampling_row(
    fraction: f64,
    sampled: &[bool],
    precisions: &[f64],
    pairs: &PairExport,
    swapped_features: Option<String>,
) -> SamplingRow {
    let pick = |want: bool| {
        mean(
            precisions
                .iter()
                .zip(sampled)
                .filter(|(_, &s)| s == want)
                .map(|(p, _)| *p),
        )
    };
    SamplingRow {
        fraction,
        sampled_queries: sampled.iter().filter(|&&s| s).count(),
        overall_precision: mean(precisions.iter().copied()).unwrap_or(0.0),
        in_sample_precision: pick(true),
        out_of_sample_precision: pick(false),
        similar_pairs: pairs.raw_similar,
        dissimilar_pairs: pairs.raw_dissimilar,
        swapped_features,
    }
}

/// Writes an experiment report as JSON.
pub fn write_report(report: &ExperimentReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, report.to_json()?).map_err(|e| Error::io(path, e))
}

/// Ids in `split.test` and `split.validation` must not be retrievable.
pub fn check_split(split: &DatasetSplit) -> Result<()> {
    let db: HashSet<&String> = split.retrieval_db.iter().collect();
    if let Some(id) = split
        .test
        .iter()
        .chain(&split.validation)
        .find(|id| db.contains(id))
    {
        return Err(Error::Split(format!(
            "query {id:?} is also in the retrieval database"
        )));
    }
    Ok(())
}
