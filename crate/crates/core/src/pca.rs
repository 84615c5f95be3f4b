//! Principal component analysis of a feature matrix.
//!
//! Fitting eigendecomposes the sample covariance (divisor `n - 1`) of the
//! mean-centred rows. Each component is oriented so that its entry of largest
//! magnitude is positive (first such entry on ties).
//!
//! A fitted model is stored as text: a header `PCA1 <k> <d>`, a line with the
//! `d` mean values, a line with the `k` explained variances, then `k` lines of
//! component coefficients.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::{write_rows, FeatureMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_COMPONENTS: usize = 100;
const MODEL_MAGIC: &str = "PCA1";

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// k×d, rows are principal axes.
    components: FeatureMatrix,
    explained_variance: Vec<f64>,
}

/// Largest usable component count for a `rows × cols` matrix, capped at `k`.
pub fn clamp_components(k: usize, rows: usize, cols: usize) -> usize {
    k.min(rows.saturating_sub(1)).min(cols)
}

pub fn fit_pca(matrix: &FeatureMatrix, k: usize) -> Result<PcaModel> {
    let (n, d) = (matrix.rows(), matrix.cols());
    if n < 2 {
        return Err(Error::Parameter(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    if k == 0 || k > clamp_components(usize::MAX, n, d) {
        return Err(Error::Parameter(format!(
            "k = {k} is outside 1..={} for a {n}x{d} matrix",
            clamp_components(usize::MAX, n, d)
        )));
    }

    let mut mean = vec![0.0; d];
    for row in matrix.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let centered = DMatrix::from_fn(n, d, |i, j| matrix.row(i)[j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut values = Vec::with_capacity(k * d);
    let mut explained_variance = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        orient(&mut axis);
        values.extend_from_slice(&axis);
        explained_variance.push(eig.eigenvalues[c].max(0.0));
    }

    Ok(PcaModel {
        mean,
        components: FeatureMatrix::new(k, d, values)?,
        explained_variance,
    })
}

/// Flips `axis` so its largest-magnitude entry (first on ties) is positive.
pub fn orient(axis: &mut [f64]) {
    let mut best = 0;
    for (j, v) in axis.iter().enumerate() {
        if v.abs() > axis[best].abs() {
            best = j;
        }
    }
    if axis.get(best).is_some_and(|v| *v < 0.0) {
        for v in axis.iter_mut() {
            *v = -*v;
        }
    }
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &FeatureMatrix {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn transform(&self, vectors: &FeatureMatrix) -> Result<FeatureMatrix> {
        if vectors.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model expects {} columns, got {}",
                self.input_dim(),
                vectors.cols()
            )));
        }
        let k = self.k();
        let mut out = Vec::with_capacity(vectors.rows() * k);
        let mut centered = vec![0.0; self.input_dim()];
        for row in vectors.iter_rows() {
            for ((c, v), m) in centered.iter_mut().zip(row).zip(&self.mean) {
                *c = v - m;
            }
            for axis in self.components.iter_rows() {
                out.push(axis.iter().zip(&centered).map(|(a, c)| a * c).sum());
            }
        }
        FeatureMatrix::new(vectors.rows(), k, out)
    }

    /// Maps reduced vectors back into the input space.
    pub fn reconstruct(&self, reduced: &FeatureMatrix) -> Result<FeatureMatrix> {
        if reduced.cols() != self.k() {
            return Err(Error::Shape(format!(
                "model has {} components, got {} columns",
                self.k(),
                reduced.cols()
            )));
        }
        let d = self.input_dim();
        let mut out = Vec::with_capacity(reduced.rows() * d);
        for row in reduced.iter_rows() {
            let mut v = self.mean.clone();
            for (coef, axis) in row.iter().zip(self.components.iter_rows()) {
                for (x, a) in v.iter_mut().zip(axis) {
                    *x += coef * a;
                }
            }
            out.extend(v);
        }
        FeatureMatrix::new(reduced.rows(), d, out)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{MODEL_MAGIC} {} {}", self.k(), self.input_dim())?;
        write_rows(
            out,
            [self.mean.as_slice(), self.explained_variance.as_slice()].into_iter(),
        )?;
        write_rows(out, self.components.iter_rows())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file))
    }

    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut lines = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(|e| Error::io("<pca model>", e))?;
            if !line.trim().is_empty() {
                lines.push(line);
            }
        }
        let bad = |line: usize, message: String| Error::Format { line, message };
        let header = lines
            .first()
            .ok_or_else(|| bad(1, "empty model file".into()))?;
        let parts: Vec<&str> = header.split_ascii_whitespace().collect();
        let (k, d) = match parts.as_slice() {
            [MODEL_MAGIC, k, d] => (
                k.parse::<usize>()
                    .map_err(|_| bad(1, "bad component count".into()))?,
                d.parse::<usize>()
                    .map_err(|_| bad(1, "bad dimension".into()))?,
            ),
            _ => return Err(bad(1, format!("expected `{MODEL_MAGIC} <k> <d>` header"))),
        };
        if lines.len() != k + 3 {
            return Err(Error::Shape(format!(
                "model declares {k} components, file has {} data lines",
                lines.len().saturating_sub(1)
            )));
        }
        let parse_row = |idx: usize, want: usize| -> Result<Vec<f64>> {
            let row: Vec<f64> = lines[idx]
                .split_ascii_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(idx + 1, "not a number".into()))?;
            if row.len() != want {
                return Err(Error::Shape(format!(
                    "model line {} has {} values, expected {want}",
                    idx + 1,
                    row.len()
                )));
            }
            Ok(row)
        };
        let mean = parse_row(1, d)?;
        let explained_variance = parse_row(2, k)?;
        let mut values = Vec::with_capacity(k * d);
        for i in 0..k {
            values.extend(parse_row(3 + i, d)?);
        }
        Ok(Self {
            mean,
            components: FeatureMatrix::new(k, d, values)?,
            explained_variance,
        })
    }
}
