//! Reference implementations used as test oracles. Nothing here calls into the
//! code paths it is compared against.
#![allow(dead_code, clippy::too_many_arguments, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refine_core::data::{Dataset, FeatureMatrix, ItemRecord};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mode flag for the oracle weights: `true` multiplies by the discriminant ratio.
pub fn oracle_weights(
    rel: &[Vec<f64>],
    non: &[Vec<f64>],
    discriminant: bool,
    delta: f64,
) -> Vec<f64> {
    let d = rel[0].len();
    let mut out = vec![0.0; d];
    for j in 0..d {
        let r: Vec<f64> = rel.iter().map(|row| row[j]).collect();
        let mut all = r.clone();
        for row in non {
            all.push(row[j]);
        }
        let sd = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
        };
        let sigma = sd(&all);
        let sigma_rel = sd(&r);
        let denom = if sigma_rel < delta { delta } else { sigma_rel };
        let mut w = sigma / denom;
        if discriminant {
            w *= oracle_delta_ratio(&r, &non.iter().map(|row| row[j]).collect::<Vec<_>>());
        }
        out[j] = w;
    }
    out
}

pub fn oracle_delta_ratio(r: &[f64], n: &[f64]) -> f64 {
    if n.is_empty() {
        return 1.0;
    }
    let mut sorted = r.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let mut inside = 0usize;
    for &v in n {
        if v >= lo && v <= hi {
            inside += 1;
        }
    }
    1.0 - (inside as f64) / (n.len() as f64)
}

pub fn oracle_distance(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..a.len() {
        s += w[j] * (a[j] - b[j]).abs();
    }
    s
}

/// Full sort of every candidate by (distance, id).
pub fn oracle_rank(
    query: &[f64],
    ids: &[String],
    rows: &[Vec<f64>],
    w: &[f64],
    excluded: &dyn Fn(&str) -> bool,
    limit: usize,
) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = ids
        .iter()
        .zip(rows)
        .filter(|(id, _)| !excluded(id))
        .map(|(id, row)| (id.clone(), oracle_distance(query, row, w)))
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(limit);
    all
}

/// Brute-force relevance-feedback session: recomputes everything from the
/// formulas each iteration and fully re-sorts the database. Returns the batch
/// id sequences.
pub fn oracle_session(
    ids: &[String],
    rows: &[Vec<f64>],
    labels: &[String],
    query: usize,
    scope: usize,
    max_iterations: usize,
    discriminant: bool,
    delta: f64,
) -> Vec<Vec<String>> {
    let d = rows[0].len();
    let mut w = vec![1.0; d];
    let mut shown: Vec<usize> = Vec::new();
    let mut rel: Vec<usize> = Vec::new();
    let mut non: Vec<usize> = Vec::new();
    let mut batches = Vec::new();
    let mut t = 0;
    loop {
        let needed = scope - rel.len();
        let excluded = |id: &str| id == ids[query] || shown.iter().any(|&i| ids[i] == id);
        let batch = oracle_rank(&rows[query], ids, rows, &w, &excluded, needed);
        if batch.is_empty() {
            break;
        }
        let batch_idx: Vec<usize> = batch
            .iter()
            .map(|(id, _)| ids.iter().position(|x| x == id).unwrap())
            .collect();
        batches.push(batch.into_iter().map(|(id, _)| id).collect());
        for &i in &batch_idx {
            shown.push(i);
            if labels[i] == labels[query] {
                rel.push(i);
            } else {
                non.push(i);
            }
        }
        if rel.len() >= scope || t + 1 >= max_iterations {
            break;
        }
        if !rel.is_empty() {
            let r: Vec<Vec<f64>> = rel.iter().map(|&i| rows[i].clone()).collect();
            let n: Vec<Vec<f64>> = non.iter().map(|&i| rows[i].clone()).collect();
            w = oracle_weights(&r, &n, discriminant, delta);
        }
        t += 1;
    }
    batches
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues and eigenvectors (as rows), sorted by descending eigenvalue.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m[b][b].partial_cmp(&m[a][a]).unwrap());
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k][i]).collect())
        .collect();
    (values, vectors)
}

/// Sample covariance (divisor n - 1) of the rows.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut c = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    for row in &mut c {
        for x in row.iter_mut() {
            *x /= (n - 1) as f64;
        }
    }
    c
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Dataset with ids `i000`, `i001`, ... and the given labels.
pub fn dataset(rows: &[Vec<f64>], labels: &[String]) -> Dataset {
    let items = labels
        .iter()
        .enumerate()
        .map(|(i, l)| ItemRecord::new(format!("i{i:03}"), l.clone()))
        .collect();
    Dataset::new(items, FeatureMatrix::from_rows(rows).unwrap()).unwrap()
}

pub fn ids_of(ds: &Dataset) -> Vec<String> {
    ds.items().iter().map(|i| i.id.clone()).collect()
}

pub fn binom2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
