//! Silhouette, Davies-Bouldin and Calinski-Harabasz indices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dist, sq_dist, Matrix};

/// Value reported by [`calinski_harabasz`] when the within-cluster
/// dispersion is zero.
pub const CH_ZERO_WITHIN: f64 = f64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub silhouette: f64,
    pub davies_bouldin: f64,
    pub calinski_harabasz: f64,
}

impl QualityReport {
    pub fn compute(x: &Matrix, labels: &[usize]) -> Result<Self> {
        Ok(Self {
            silhouette: silhouette(x, labels)?,
            davies_bouldin: davies_bouldin(x, labels)?,
            calinski_harabasz: calinski_harabasz(x, labels)?,
        })
    }
}

/// Labels compacted to `0..k` in first-appearance order.
struct Clusters {
    ids: Vec<usize>,
    sizes: Vec<usize>,
}

fn compact(x: &Matrix, labels: &[usize]) -> Result<Clusters> {
    if labels.len() != x.rows() {
        return Err(Error::shape(format!(
            "{} labels for {} rows",
            labels.len(),
            x.rows()
        )));
    }
    let mut map = std::collections::HashMap::new();
    let mut sizes = Vec::new();
    let ids = labels
        .iter()
        .map(|l| {
            let next = map.len();
            let id = *map.entry(*l).or_insert(next);
            if id == sizes.len() {
                sizes.push(0);
            }
            sizes[id] += 1;
            id
        })
        .collect();
    if sizes.len() < 2 {
        return Err(Error::TooFewClusters(sizes.len()));
    }
    Ok(Clusters { ids, sizes })
}

fn centroids(x: &Matrix, c: &Clusters) -> Matrix {
    let mut m = Matrix::zeros(c.sizes.len(), x.cols());
    for (row, &id) in x.row_iter().zip(&c.ids) {
        for (s, v) in m.row_mut(id).iter_mut().zip(row) {
            *s += v;
        }
    }
    for (id, &n) in c.sizes.iter().enumerate() {
        for s in m.row_mut(id) {
            *s /= n as f64;
        }
    }
    m
}

pub fn silhouette(x: &Matrix, labels: &[usize]) -> Result<f64> {
    let c = compact(x, labels)?;
    let k = c.sizes.len();
    let n = x.rows();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[c.ids[j]] += dist(x.row(i), x.row(j));
            }
        }
        let own = c.ids[i];
        if c.sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (c.sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&l| l != own)
            .map(|l| sums[l] / c.sizes[l] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

pub fn davies_bouldin(x: &Matrix, labels: &[usize]) -> Result<f64> {
    let c = compact(x, labels)?;
    let k = c.sizes.len();
    let cent = centroids(x, &c);
    let mut scatter = vec![0.0; k];
    for (row, &id) in x.row_iter().zip(&c.ids) {
        scatter[id] += dist(row, cent.row(id));
    }
    for (s, &n) in scatter.iter_mut().zip(&c.sizes) {
        *s /= n as f64;
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = dist(cent.row(i), cent.row(j));
            // Coincident centroids contribute nothing rather than dividing by zero.
            if d > 0.0 {
                worst = worst.max((scatter[i] + scatter[j]) / d);
            }
        }
        total += worst;
    }
    Ok(total / k as f64)
}

pub fn calinski_harabasz(x: &Matrix, labels: &[usize]) -> Result<f64> {
    let c = compact(x, labels)?;
    let k = c.sizes.len();
    let n = x.rows();
    let cent = centroids(x, &c);
    let mean = x.column_means();
    let between: f64 = (0..k)
        .map(|i| c.sizes[i] as f64 * sq_dist(cent.row(i), &mean))
        .sum();
    let within: f64 = x
        .row_iter()
        .zip(&c.ids)
        .map(|(row, &id)| sq_dist(row, cent.row(id)))
        .sum();
    if within == 0.0 {
        return Ok(CH_ZERO_WITHIN);
    }
    Ok(between / within * (n - k) as f64 / (k - 1) as f64)
}
