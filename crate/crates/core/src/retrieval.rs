//! Exhaustive weighted-L1 ranking.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Per-feature non-negative weights for the L1 distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some((j, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::Validation(format!(
                "weight {j} is {w}, weights must be finite and non-negative"
            )));
        }
        Ok(Self(weights))
    }

    pub fn uniform(dim: usize) -> Self {
        Self(vec![1.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|w| w * c).collect())
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub id: String,
    pub distance: f64,
}

/// Items in ascending distance, ties broken by ascending id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }
}

pub fn weighted_l1(a: &[f64], b: &[f64], w: &WeightVector) -> Result<f64> {
    if a.len() != b.len() || a.len() != w.len() {
        return Err(Error::Shape(format!(
            "weighted L1 needs equal lengths, got {}, {} and {} weights",
            a.len(),
            b.len(),
            w.len()
        )));
    }
    Ok(weighted_l1_unchecked(a, b, w.as_slice()))
}

#[inline]
pub(crate) fn weighted_l1_unchecked(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(w)
        .map(|((x, y), w)| w * (x - y).abs())
        .sum()
}

/// The `limit` nearest non-excluded items of `db` to `query`.
pub fn rank(
    query: &[f64],
    db: &Dataset,
    weights: &WeightVector,
    exclude: &HashSet<String>,
    limit: usize,
) -> Result<RankedList> {
    let items = db.items();
    rank_where(
        query,
        db,
        weights,
        |i| exclude.contains(&items[i].id),
        limit,
    )
}

/// Like [`rank`], with exclusion given as a predicate over row indices.
pub fn rank_where(
    query: &[f64],
    db: &Dataset,
    weights: &WeightVector,
    excluded: impl Fn(usize) -> bool,
    limit: usize,
) -> Result<RankedList> {
    if limit == 0 || db.is_empty() {
        return Ok(RankedList::default());
    }
    let features = db.features()?;
    if query.len() != features.cols() || weights.len() != features.cols() {
        return Err(Error::Shape(format!(
            "query has {} dims and weights {}, database has {}",
            query.len(),
            weights.len(),
            features.cols()
        )));
    }
    let w = weights.as_slice();
    let items = db.items();

    let mut scored: Vec<(f64, usize)> = (0..db.len())
        .filter(|&i| !excluded(i))
        .map(|i| (weighted_l1_unchecked(query, features.row(i), w), i))
        .collect();

    let by_distance_then_id = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
        a.0.total_cmp(&b.0)
            .then_with(|| items[a.1].id.cmp(&items[b.1].id))
    };
    if scored.len() > limit {
        scored.select_nth_unstable_by(limit - 1, by_distance_then_id);
        scored.truncate(limit);
    }
    scored.sort_unstable_by(by_distance_then_id);

    Ok(RankedList {
        entries: scored
            .into_iter()
            .map(|(distance, i)| RankedEntry {
                id: items[i].id.clone(),
                distance,
            })
            .collect(),
    })
}
