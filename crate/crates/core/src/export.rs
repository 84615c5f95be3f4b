//! Training datasets derived from feedback.
//!
//! Pairs: every answered batch with `r1` relevant and `r2` non-relevant items
//! yields `C(r1, 2)` similar pairs (label 1) and `r1 * r2` dissimilar pairs
//! (label 0). Pairs are canonicalised (`id_a < id_b`) and pooled across
//! events; when the same pair receives both labels the latest event wins and
//! the pair is flagged.
//!
//! Classes: groups below a minimum size are pruned and every remaining group
//! is split into train and validation members.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::groups::{FeedbackEvent, GroupStore};
use crate::rng;

pub const PAIRS_HEADER: [&str; 4] = ["id_a", "id_b", "label", "flagged"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id_a: String,
    pub id_b: String,
    pub label: u8,
    /// The pair was labelled both similar and dissimilar across events.
    pub flagged: bool,
    /// Index into the event list of the event that set `label`.
    pub source_event: usize,
}

fn canonical(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// The pairs of a single event before deduplication, similar pairs first.
pub fn event_pairs(event: &FeedbackEvent, source_event: usize) -> Vec<PairRecord> {
    let relevant = &event.relevant;
    let nonrelevant: Vec<&String> = event.nonrelevant().collect();
    let mut out = Vec::with_capacity(
        relevant.len() * relevant.len().saturating_sub(1) / 2 + relevant.len() * nonrelevant.len(),
    );
    let mut push = |a: &str, b: &str, label: u8| {
        let (id_a, id_b) = canonical(a, b);
        out.push(PairRecord {
            id_a,
            id_b,
            label,
            flagged: false,
            source_event,
        });
    };
    for (i, a) in relevant.iter().enumerate() {
        for b in &relevant[i + 1..] {
            push(a, b, 1);
        }
    }
    for a in relevant {
        for b in &nonrelevant {
            push(a, b, 0);
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairExport {
    pub pairs: Vec<PairRecord>,
    /// Similar pairs emitted before deduplication.
    pub raw_similar: usize,
    /// Dissimilar pairs emitted before deduplication.
    pub raw_dissimilar: usize,
}

impl PairExport {
    pub fn similar(&self) -> usize {
        self.pairs.iter().filter(|p| p.label == 1).count()
    }

    pub fn dissimilar(&self) -> usize {
        self.pairs.iter().filter(|p| p.label == 0).count()
    }

    pub fn flagged(&self) -> usize {
        self.pairs.iter().filter(|p| p.flagged).count()
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(PAIRS_HEADER)?;
        for p in &self.pairs {
            w.write_record([
                p.id_a.as_str(),
                p.id_b.as_str(),
                if p.label == 1 { "1" } else { "0" },
                if p.flagged { "1" } else { "0" },
            ])?;
        }
        w.flush().map_err(|e| Error::io("<pairs>", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Sidecar `id,thumbnail` rows for every paired item that has a thumbnail.
    pub fn write_thumbnails(&self, dataset: &Dataset, out: impl Write) -> Result<usize> {
        let mut ids: Vec<&str> = self
            .pairs
            .iter()
            .flat_map(|p| [p.id_a.as_str(), p.id_b.as_str()])
            .collect();
        ids.sort_unstable();
        ids.dedup();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "thumbnail"])?;
        let mut written = 0;
        for id in ids {
            if let Some(thumb) = dataset.item(id).and_then(|i| i.thumbnail.as_deref()) {
                w.write_record([id, thumb])?;
                written += 1;
            }
        }
        w.flush().map_err(|e| Error::io("<thumbnails>", e))?;
        Ok(written)
    }
}

/// Pools the pairs of every event, latest label winning.
///
/// Events are taken in timestamp order; events sharing a timestamp keep their
/// list order.
pub fn export_pairs(events: &[FeedbackEvent]) -> Result<PairExport> {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&i| events[i].timestamp);

    let mut pooled: BTreeMap<(String, String), PairRecord> = BTreeMap::new();
    let mut export = PairExport::default();
    for i in order {
        let event = &events[i];
        event.validate()?;
        for pair in event_pairs(event, i) {
            if pair.id_a == pair.id_b {
                continue;
            }
            if pair.label == 1 {
                export.raw_similar += 1;
            } else {
                export.raw_dissimilar += 1;
            }
            let key = (pair.id_a.clone(), pair.id_b.clone());
            match pooled.get_mut(&key) {
                Some(existing) => {
                    if existing.label != pair.label {
                        existing.flagged = true;
                    }
                    existing.label = pair.label;
                    existing.source_event = pair.source_event;
                }
                None => {
                    pooled.insert(key, pair);
                }
            }
        }
    }
    export.pairs = pooled.into_values().collect();
    Ok(export)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassGroup {
    pub root: String,
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDatasetManifest {
    pub min_size: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub groups: Vec<ClassGroup>,
    /// Roots of the groups dropped for being smaller than `min_size`.
    pub pruned_groups: Vec<String>,
}

impl ClassDatasetManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

pub fn export_class_dataset(
    store: &GroupStore,
    min_size: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<ClassDatasetManifest> {
    if !(0.0..=1.0).contains(&val_fraction) {
        return Err(Error::Parameter(format!(
            "validation fraction {val_fraction} is outside [0, 1]"
        )));
    }
    if store.is_empty() {
        return Err(Error::Export("the group store is empty".into()));
    }
    let mut groups = Vec::new();
    let mut pruned_groups = Vec::new();
    for (k, (root, mut members)) in store.groups().into_iter().enumerate() {
        if members.len() < min_size {
            pruned_groups.push(root);
            continue;
        }
        // Guard against products like 0.2 * 15 landing a hair below an integer.
        let n_val = ((members.len() as f64) * val_fraction + 1e-9).floor() as usize;
        members.shuffle(&mut rng::stream(seed, k as u64));
        let mut validation = members.split_off(members.len() - n_val);
        members.sort();
        validation.sort();
        groups.push(ClassGroup {
            root,
            train: members,
            validation,
        });
    }
    if groups.is_empty() {
        return Err(Error::Export(format!(
            "all {} groups are smaller than {min_size}",
            pruned_groups.len()
        )));
    }
    Ok(ClassDatasetManifest {
        min_size,
        val_fraction,
        seed,
        groups,
        pruned_groups,
    })
}
