//! One relevance-feedback session.
//!
//! A session starts with an unweighted retrieval of `scope` items. Each round
//! of feedback splits the current batch into relevant and non-relevant items,
//! which are added to the cumulative sets `R` and `N`. Feature weights are then
//! recomputed from the spread of each feature over `R ∪ N` versus over `R`,
//! and the next batch of `scope - |R|` previously unseen items is retrieved.
//! The session completes once `|R| = scope` or after `max_iterations` rounds
//! of feedback.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::groups::{FeedbackEvent, GroupStore};
use crate::retrieval::{self, RankedList, WeightVector};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WeightMode {
    /// `w_j = σ_j / max(σ_rel,j, Δ)`
    SigmaRatio,
    /// `w_j = δ_j · σ_j / max(σ_rel,j, Δ)`
    #[default]
    Discriminant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Number of relevant items the user is after; also the size of the first batch.
    pub scope: usize,
    pub max_iterations: usize,
    /// Floor for the relevant-set standard deviation in the weight denominator.
    pub delta: f64,
    pub weight_mode: WeightMode,
    pub grouping_enabled: bool,
    pub rng_seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            scope: 20,
            max_iterations: 6,
            delta: 1e-6,
            weight_mode: WeightMode::Discriminant,
            grouping_enabled: false,
            rng_seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scope == 0 {
            return Err(Error::Parameter("scope must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Parameter("max_iterations must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Parameter(format!(
                "delta must be a small positive number, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Query {
    /// An item of the database; it never appears in its own results.
    Item(String),
    /// An external feature vector.
    Vector(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionStatus {
    AwaitingFeedback,
    Complete,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSource {
    Retrieved,
    GroupFill,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub id: String,
    /// Weighted L1 distance to the query under the weights in force when the
    /// batch was built.
    pub distance: f64,
    pub source: BatchSource,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub iteration: usize,
    pub entries: Vec<BatchEntry>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }
}

/// What the user said about one batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationFeedback {
    pub iteration: usize,
    pub shown: Vec<String>,
    pub relevant: Vec<String>,
    /// `|R|` after this round.
    pub cumulative_relevant: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Session {
    config: SessionConfig,
    query: Query,
    #[serde(skip)]
    query_vector: Vec<f64>,
    iteration: usize,
    batches: Vec<Batch>,
    /// Cumulative relevant ids in the order they were confirmed.
    relevant: Vec<String>,
    nonrelevant: Vec<String>,
    weights: WeightVector,
    status: SessionStatus,
    feedback: Vec<IterationFeedback>,
    matched_roots: BTreeSet<String>,
    warnings: Vec<String>,
}

impl Session {
    pub fn start(query: Query, db: &Dataset, config: SessionConfig) -> Result<Self> {
        config.validate()?;
        if db.is_empty() {
            return Err(Error::Session("cannot search an empty database".into()));
        }
        let features = db.features()?;
        let query_vector = match &query {
            Query::Item(id) => db.vector(id)?.to_vec(),
            Query::Vector(v) => {
                if v.len() != features.cols() {
                    return Err(Error::Shape(format!(
                        "query vector has {} dims, database has {}",
                        v.len(),
                        features.cols()
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Validation(
                        "query vector has non-finite values".into(),
                    ));
                }
                v.clone()
            }
        };

        let mut session = Self {
            weights: WeightVector::uniform(features.cols()),
            config,
            query,
            query_vector,
            iteration: 0,
            batches: Vec::new(),
            relevant: Vec::new(),
            nonrelevant: Vec::new(),
            status: SessionStatus::AwaitingFeedback,
            feedback: Vec::new(),
            matched_roots: BTreeSet::new(),
            warnings: Vec::new(),
        };
        let first = session.retrieve(db, session.config.scope, &HashSet::new())?;
        session.push_batch(first.entries.into_iter().map(|e| BatchEntry {
            id: e.id,
            distance: e.distance,
            source: BatchSource::Retrieved,
        }));
        Ok(session)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn query(&self) -> &Query {
        &self.query
    }

    pub fn query_vector(&self) -> &[f64] {
        &self.query_vector
    }

    /// Index of the current batch.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn is_complete(&self) -> bool {
        self.status == SessionStatus::Complete
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    /// The batch awaiting feedback (the last batch shown once complete).
    pub fn current_batch(&self) -> &Batch {
        self.batches
            .last()
            .expect("a session always has its first batch")
    }

    pub fn relevant(&self) -> &[String] {
        &self.relevant
    }

    pub fn nonrelevant(&self) -> &[String] {
        &self.nonrelevant
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn feedback(&self) -> &[IterationFeedback] {
        &self.feedback
    }

    /// Group roots that contributed fill items during the session.
    pub fn matched_roots(&self) -> &BTreeSet<String> {
        &self.matched_roots
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// One feedback event per answered batch.
    pub fn feedback_events(&self, session_id: &str, timestamp: u64) -> Vec<FeedbackEvent> {
        let query_id = match &self.query {
            Query::Item(id) => Some(id.clone()),
            Query::Vector(_) => None,
        };
        self.feedback
            .iter()
            .map(|f| FeedbackEvent {
                session_id: session_id.to_string(),
                query_id: query_id.clone(),
                iteration: f.iteration,
                shown: f.shown.clone(),
                relevant: f.relevant.clone(),
                timestamp,
            })
            .collect()
    }

    /// Marks `relevant_ids` of the current batch as relevant and the rest as
    /// non-relevant, then either completes the session or builds the next
    /// batch. With grouping enabled and a store given, members of groups that
    /// share items with `R` take the leading positions of the next batch.
    pub fn submit_feedback<S: AsRef<str>>(
        &mut self,
        relevant_ids: &[S],
        db: &Dataset,
        groups: Option<&GroupStore>,
    ) -> Result<SessionStatus> {
        if self.is_complete() {
            return Err(Error::State("session is already complete".into()));
        }
        let batch = self.current_batch();
        let mut marked = HashSet::new();
        for id in relevant_ids {
            let id = id.as_ref();
            if !batch.contains(id) {
                return Err(Error::Feedback(format!(
                    "item {id:?} is not in the current batch"
                )));
            }
            marked.insert(id.to_string());
        }

        let shown = batch.ids();
        let mut relevant_now = Vec::new();
        for id in &shown {
            if marked.contains(id) {
                relevant_now.push(id.clone());
            } else {
                self.nonrelevant.push(id.clone());
            }
        }
        self.relevant.extend(relevant_now.iter().cloned());
        self.feedback.push(IterationFeedback {
            iteration: self.iteration,
            shown,
            relevant: relevant_now,
            cumulative_relevant: self.relevant.len(),
        });

        if self.relevant.len() >= self.config.scope
            || self.iteration + 1 >= self.config.max_iterations
        {
            self.status = SessionStatus::Complete;
            return Ok(self.status);
        }

        if !self.relevant.is_empty() {
            self.weights = weights_for_ids(&self.relevant, &self.nonrelevant, db, &self.config)?;
        }

        let needed = self.config.scope - self.relevant.len();
        let mut exclude: HashSet<String> = self
            .batches
            .iter()
            .flat_map(|b| b.entries.iter().map(|e| e.id.clone()))
            .collect();

        let mut entries = Vec::with_capacity(needed);
        if let (true, Some(store)) = (self.config.grouping_enabled, groups) {
            let roots = store.match_groups(&self.relevant);
            if !roots.is_empty() {
                let seed = rng::derive_seed(self.config.rng_seed, self.iteration as u64 + 1);
                let query_id = self.query_item_id();
                let fill = store.group_fill_where(
                    &roots,
                    needed,
                    |id| !exclude.contains(id) && Some(id) != query_id && db.index_of(id).is_some(),
                    seed,
                );
                if !fill.is_empty() {
                    self.matched_roots.extend(roots);
                }
                for id in fill {
                    let distance = retrieval::weighted_l1_unchecked(
                        &self.query_vector,
                        db.vector(&id)?,
                        self.weights.as_slice(),
                    );
                    exclude.insert(id.clone());
                    entries.push(BatchEntry {
                        id,
                        distance,
                        source: BatchSource::GroupFill,
                    });
                }
            }
        }

        let ranked = self.retrieve(db, needed - entries.len(), &exclude)?;
        entries.extend(ranked.entries.into_iter().map(|e| BatchEntry {
            id: e.id,
            distance: e.distance,
            source: BatchSource::Retrieved,
        }));

        if entries.is_empty() {
            self.warnings.push(format!(
                "no unseen candidates left after iteration {}",
                self.iteration
            ));
            self.status = SessionStatus::Complete;
            return Ok(self.status);
        }
        self.iteration += 1;
        self.push_batch(entries.into_iter());
        Ok(self.status)
    }

    fn query_item_id(&self) -> Option<&str> {
        match &self.query {
            Query::Item(id) => Some(id.as_str()),
            Query::Vector(_) => None,
        }
    }

    fn retrieve(
        &self,
        db: &Dataset,
        limit: usize,
        exclude: &HashSet<String>,
    ) -> Result<RankedList> {
        let items = db.items();
        let query_idx = self.query_item_id().and_then(|id| db.index_of(id));
        retrieval::rank_where(
            &self.query_vector,
            db,
            &self.weights,
            |i| Some(i) == query_idx || exclude.contains(&items[i].id),
            limit,
        )
    }

    fn push_batch(&mut self, entries: impl Iterator<Item = BatchEntry>) {
        let batch = Batch {
            iteration: self.iteration,
            entries: entries.collect(),
        };
        let wanted = self.config.scope - self.relevant.len();
        if batch.len() < wanted {
            self.warnings.push(format!(
                "iteration {}: only {} of {} requested items were available",
                self.iteration,
                batch.len(),
                wanted
            ));
        }
        self.batches.push(batch);
    }
}

/// Per-feature statistics of the relevant and non-relevant sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    /// Population standard deviation over `R ∪ N`.
    pub sigma: Vec<f64>,
    /// Population standard deviation over `R`.
    pub sigma_rel: Vec<f64>,
    /// `[min, max]` of each feature over `R`.
    pub dominant: Vec<(f64, f64)>,
    /// Fraction of `N` lying outside the dominant range, per feature.
    pub delta_ratio: Vec<f64>,
}

impl FeatureStats {
    pub fn from_rows(relevant: &[&[f64]], nonrelevant: &[&[f64]]) -> Result<Self> {
        let dim = relevant.first().map(|r| r.len()).ok_or_else(|| {
            Error::Parameter("feature statistics need at least one relevant item".into())
        })?;
        if relevant.iter().chain(nonrelevant).any(|r| r.len() != dim) {
            return Err(Error::Shape("feature rows differ in length".into()));
        }

        let mut stats = FeatureStats {
            sigma: Vec::with_capacity(dim),
            sigma_rel: Vec::with_capacity(dim),
            dominant: Vec::with_capacity(dim),
            delta_ratio: Vec::with_capacity(dim),
        };
        let mut rel_col = Vec::with_capacity(relevant.len());
        let mut non_col = Vec::with_capacity(nonrelevant.len());
        for j in 0..dim {
            rel_col.clear();
            non_col.clear();
            rel_col.extend(relevant.iter().map(|r| r[j]));
            non_col.extend(nonrelevant.iter().map(|r| r[j]));

            stats
                .sigma_rel
                .push(population_std(rel_col.iter().copied()));
            stats.sigma.push(population_std(
                rel_col.iter().chain(non_col.iter()).copied(),
            ));
            let (ratio, range) = discriminant_ratio(&rel_col, &non_col)?;
            stats.delta_ratio.push(ratio);
            stats.dominant.push(range);
        }
        Ok(stats)
    }

    pub fn weights(&self, mode: WeightMode, delta: f64) -> WeightVector {
        let w = self
            .sigma
            .iter()
            .zip(&self.sigma_rel)
            .zip(&self.delta_ratio)
            .map(|((s, s_rel), d)| {
                let ratio = s / s_rel.max(delta);
                match mode {
                    WeightMode::SigmaRatio => ratio,
                    WeightMode::Discriminant => d * ratio,
                }
            })
            .collect();
        WeightVector::new(w).expect("ratios of standard deviations are finite and non-negative")
    }
}

/// Dominant range of one feature over the relevant values and the fraction
/// of non-relevant values falling outside it (closed bounds). With no
/// non-relevant values the ratio is 1.
pub fn discriminant_ratio(relevant: &[f64], nonrelevant: &[f64]) -> Result<(f64, (f64, f64))> {
    let Some(&first) = relevant.first() else {
        return Err(Error::Parameter(
            "dominant range is undefined without relevant values".into(),
        ));
    };
    let (lo, hi) = relevant
        .iter()
        .fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if nonrelevant.is_empty() {
        return Ok((1.0, (lo, hi)));
    }
    let inside = nonrelevant.iter().filter(|&&v| lo <= v && v <= hi).count();
    Ok((1.0 - inside as f64 / nonrelevant.len() as f64, (lo, hi)))
}

/// Re-weighting of the features from the cumulative relevant set `relevant`
/// and non-relevant set `nonrelevant`.
pub fn compute_weights<S: AsRef<str>>(
    relevant: &[S],
    nonrelevant: &[S],
    db: &Dataset,
    config: &SessionConfig,
) -> Result<WeightVector> {
    weights_for_ids(relevant, nonrelevant, db, config)
}

fn weights_for_ids<S: AsRef<str>>(
    relevant: &[S],
    nonrelevant: &[S],
    db: &Dataset,
    config: &SessionConfig,
) -> Result<WeightVector> {
    let rows = |ids: &[S]| -> Result<Vec<&[f64]>> {
        ids.iter().map(|id| db.vector(id.as_ref())).collect()
    };
    let stats = FeatureStats::from_rows(&rows(relevant)?, &rows(nonrelevant)?)?;
    Ok(stats.weights(config.weight_mode, config.delta))
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values
        .clone()
        .fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (ss / n as f64).sqrt()
}
