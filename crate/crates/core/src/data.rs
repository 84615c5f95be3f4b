//! Item manifests, feature matrices and dataset splits.
//!
//! Two on-disk formats are owned here:
//!
//! - **Manifest**: JSON lines, one object per item with keys `id`, `label`
//!   and an optional `thumbnail`.
//! - **Feature file**: a header line `FVEC1 <rows> <cols>` followed by one
//!   line per row of space-separated decimal numbers, parsed as `f64`.
//!   Values are written with the shortest representation that round-trips,
//!   so write-then-load is bit-exact.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const FVEC_MAGIC: &str = "FVEC1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail: Option<String>,
}

impl ItemRecord {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
            thumbnail: None,
        }
    }
}

/// Dense row-major matrix of finite feature values, one row per item.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {rows}x{cols} = {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let row = pos / cols.max(1);
            return Err(Error::Validation(format!(
                "non-finite feature value at row {row}"
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Shape(format!(
                "row {bad} has {} columns, expected {cols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: indices.len(),
            cols: self.cols,
            values,
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file)).map_err(|e| match e {
            Error::Io { cause, .. } => Error::io(path, cause),
            other => other,
        })
    }

    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, line)) => {
                    let line = line.map_err(|e| Error::io("<features>", e))?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => {
                    return Err(Error::Format {
                        line: 1,
                        message: "missing FVEC1 header".into(),
                    })
                }
            }
        };
        let (rows, cols) = parse_fvec_header(&header, 1)?;

        let mut values = Vec::with_capacity(rows * cols);
        let mut row = 0;
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io("<features>", e))?;
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            if row == rows {
                return Err(Error::Shape(format!(
                    "feature file has more than the {rows} rows its header declares"
                )));
            }
            let before = values.len();
            for tok in line.split_ascii_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::Format {
                    line: line_no,
                    message: format!("not a number: {tok:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "non-finite feature value at row {row}"
                    )));
                }
                values.push(v);
            }
            if values.len() - before != cols {
                return Err(Error::Shape(format!(
                    "row {row} (line {line_no}) has {} values, expected {cols}",
                    values.len() - before
                )));
            }
            row += 1;
        }
        if row != rows {
            return Err(Error::Shape(format!(
                "feature file header declares {rows} rows but {row} were present"
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{FVEC_MAGIC} {} {}", self.rows, self.cols)?;
        write_rows(out, self.iter_rows())
    }
}

pub(crate) fn write_rows<'a>(
    out: &mut impl Write,
    rows: impl Iterator<Item = &'a [f64]>,
) -> std::io::Result<()> {
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.write_all(b" ")?;
            }
            first = false;
            // Display for f64 is the shortest string that parses back exactly.
            write!(out, "{v}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub(crate) fn parse_fvec_header(line: &str, line_no: usize) -> Result<(usize, usize)> {
    let mut parts = line.split_ascii_whitespace();
    let bad = |message: String| Error::Format {
        line: line_no,
        message,
    };
    match parts.next() {
        Some(FVEC_MAGIC) => {}
        other => {
            return Err(bad(format!(
                "expected {FVEC_MAGIC} header, found {other:?}"
            )))
        }
    }
    let mut count = |name: &str| -> Result<usize> {
        parts
            .next()
            .ok_or_else(|| bad(format!("header missing {name} count")))?
            .parse()
            .map_err(|_| bad(format!("header {name} count is not an integer")))
    };
    let rows = count("row")?;
    let cols = count("column")?;
    if parts.next().is_some() {
        return Err(bad("trailing tokens after header".into()));
    }
    Ok((rows, cols))
}

/// An ordered collection of items, optionally with their feature vectors
/// attached. Immutable once built.
#[derive(Clone, Debug)]
pub struct Dataset {
    items: Vec<ItemRecord>,
    index: HashMap<String, usize>,
    features: Option<FeatureMatrix>,
}

impl Dataset {
    pub fn from_items(items: Vec<ItemRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if item.label.is_empty() {
                return Err(Error::Validation(format!(
                    "item {:?} has an empty label",
                    item.id
                )));
            }
            if index.insert(item.id.clone(), i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate item id {:?}",
                    item.id
                )));
            }
        }
        Ok(Self {
            items,
            index,
            features: None,
        })
    }

    pub fn new(items: Vec<ItemRecord>, features: FeatureMatrix) -> Result<Self> {
        Self::from_items(items)?.with_features(features)
    }

    /// Attaches a feature matrix, replacing any previous one. This is also the
    /// encoder-swap boundary: vectors from a retrained encoder enter here.
    pub fn with_features(mut self, features: FeatureMatrix) -> Result<Self> {
        if features.rows() != self.items.len() {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows but the dataset has {} items",
                features.rows(),
                self.items.len()
            )));
        }
        if features.cols() == 0 && features.rows() > 0 {
            return Err(Error::Shape(
                "feature dimensionality must be at least 1".into(),
            ));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn item(&self, id: &str) -> Option<&ItemRecord> {
        self.index_of(id).map(|i| &self.items[i])
    }

    pub fn label_of(&self, id: &str) -> Option<&str> {
        self.item(id).map(|item| item.label.as_str())
    }

    pub fn features(&self) -> Result<&FeatureMatrix> {
        self.features
            .as_ref()
            .ok_or_else(|| Error::Shape("dataset has no feature matrix attached".into()))
    }

    pub fn has_features(&self) -> bool {
        self.features.is_some()
    }

    pub fn dim(&self) -> usize {
        self.features.as_ref().map_or(0, FeatureMatrix::cols)
    }

    pub fn vector(&self, id: &str) -> Result<&[f64]> {
        let i = self
            .index_of(id)
            .ok_or_else(|| Error::Validation(format!("unknown item id {id:?}")))?;
        Ok(self.features()?.row(i))
    }

    /// Labels in first-appearance order.
    pub fn labels(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.items
            .iter()
            .filter(|item| seen.insert(item.label.as_str()))
            .map(|item| item.label.as_str())
            .collect()
    }

    /// A new dataset holding only `ids`, in the given order, with the matching
    /// feature rows.
    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Result<Dataset> {
        let mut indices = Vec::with_capacity(ids.len());
        for id in ids {
            let id = id.as_ref();
            indices.push(
                self.index_of(id)
                    .ok_or_else(|| Error::Validation(format!("unknown item id {id:?}")))?,
            );
        }
        let items = indices.iter().map(|&i| self.items[i].clone()).collect();
        let ds = Dataset::from_items(items)?;
        match &self.features {
            Some(fm) => ds.with_features(fm.select_rows(&indices)),
            None => Ok(ds),
        }
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(BufReader::new(file))
}

pub fn parse_manifest(reader: impl BufRead) -> Result<Dataset> {
    let mut items = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<manifest>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: ItemRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            line: idx + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Dataset::from_items(items)
}

pub fn write_manifest(path: impl AsRef<Path>, items: &[ItemRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_features(path: impl AsRef<Path>, dataset: Dataset) -> Result<Dataset> {
    let matrix = FeatureMatrix::read(path)?;
    dataset.with_features(matrix)
}

/// Loads a manifest and its feature file in one step.
pub fn load_dataset(manifest: impl AsRef<Path>, features: impl AsRef<Path>) -> Result<Dataset> {
    load_features(features, load_manifest(manifest)?)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub test: Vec<String>,
    pub validation: Vec<String>,
    pub retrieval_db: Vec<String>,
}

impl DatasetSplit {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// How test items are chosen within each label.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum TestSelection {
    /// Uniformly at random.
    #[default]
    Uniform,
    /// The items with the lowest initial-retrieval precision at `scope`
    /// (uniform weights, all other items as the database). Ties are broken by
    /// the seeded shuffle order.
    LowestRf0Precision { scope: usize },
}

pub fn split_dataset(
    dataset: &Dataset,
    seed: u64,
    n_test_per_label: usize,
    n_validation: usize,
) -> Result<DatasetSplit> {
    split_dataset_with(
        dataset,
        seed,
        n_test_per_label,
        n_validation,
        TestSelection::Uniform,
    )
}

pub fn split_dataset_with(
    dataset: &Dataset,
    seed: u64,
    n_test_per_label: usize,
    n_validation: usize,
    selection: TestSelection,
) -> Result<DatasetSplit> {
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, item) in dataset.items().iter().enumerate() {
        by_label.entry(item.label.as_str()).or_default().push(i);
    }
    for (label, members) in &by_label {
        if members.len() < n_test_per_label + 1 {
            return Err(Error::Split(format!(
                "label {label:?} has {} items, needs at least {}",
                members.len(),
                n_test_per_label + 1
            )));
        }
    }

    let rf0 = match selection {
        TestSelection::Uniform => None,
        TestSelection::LowestRf0Precision { scope } => {
            Some(crate::sim::rf0_precisions(dataset, scope)?)
        }
    };

    let mut rng = rng::stream(seed, 0);
    let mut is_test = vec![false; dataset.len()];
    let mut test = Vec::new();
    for members in by_label.values() {
        let mut members = members.clone();
        members.shuffle(&mut rng);
        if let Some(precision) = &rf0 {
            // Stable sort keeps the shuffled order among equal precisions.
            members.sort_by(|&a, &b| precision[a].total_cmp(&precision[b]));
        }
        for &i in members.iter().take(n_test_per_label) {
            is_test[i] = true;
            test.push(dataset.items()[i].id.clone());
        }
    }

    let mut pool: Vec<usize> = (0..dataset.len()).filter(|&i| !is_test[i]).collect();
    if pool.len() < n_validation {
        return Err(Error::Split(format!(
            "{} items remain after test selection, cannot draw {n_validation} validation items",
            pool.len()
        )));
    }
    pool.shuffle(&mut rng);
    let mut is_validation = vec![false; dataset.len()];
    let validation: Vec<String> = pool[..n_validation]
        .iter()
        .map(|&i| {
            is_validation[i] = true;
            dataset.items()[i].id.clone()
        })
        .collect();

    let retrieval_db = (0..dataset.len())
        .filter(|&i| !is_test[i] && !is_validation[i])
        .map(|i| dataset.items()[i].id.clone())
        .collect();

    Ok(DatasetSplit {
        test,
        validation,
        retrieval_db,
    })
}
