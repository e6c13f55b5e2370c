//! Lower-level clustering objectives and the nearest-center mapping.

mod kmeans;
mod son;
mod spectral;

pub use kmeans::{kmeans, kmeans_fit, KMeansConfig, KMeansFit};
pub use son::{
    edge_count, edge_index, incidence_matrix, son_kkt_residuals, son_objective, son_solve,
    son_solve_with, KktResiduals, ProxVariant, SonConfig, SonDuals, SonSolution,
};
pub use spectral::{spectral, spectral_fit, SpectralConfig, SpectralFit, DEFAULT_SPECTRAL_CAP};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sq_dist, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterKind {
    Kmeans,
    Spectral,
    Son,
}

/// Cluster centers μ, one per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centers {
    pub mu: Matrix,
    pub kind: CenterKind,
}

impl Centers {
    pub fn new(mu: Matrix, kind: CenterKind) -> Self {
        Self { mu, kind }
    }

    pub fn len(&self) -> usize {
        self.mu.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.rows() == 0
    }
}

/// φ as a label per row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub labels: Vec<usize>,
}

impl Assignment {
    /// Number of rows carrying each label in `0..k`.
    pub fn counts(&self, k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

/// Index and squared distance of the nearest row of `mu`; ties go to the
/// lowest index.
#[inline]
pub fn nearest(point: &[f64], mu: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in mu.row_iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub fn assign(x: &Matrix, centers: &Centers) -> Result<Assignment> {
    assign_rows(x, &centers.mu)
}

pub(crate) fn assign_rows(x: &Matrix, mu: &Matrix) -> Result<Assignment> {
    if x.cols() != mu.cols() {
        return Err(Error::shape(format!(
            "points have {} features, centers have {}",
            x.cols(),
            mu.cols()
        )));
    }
    if mu.rows() == 0 {
        return Err(Error::invalid("no centers to assign to"));
    }
    Ok(Assignment {
        labels: x.row_iter().map(|p| nearest(p, mu).0).collect(),
    })
}

/// Mean of the rows carrying each label; `None` for labels with no rows.
pub(crate) fn label_means(x: &Matrix, labels: &[usize], k: usize) -> Vec<Option<Vec<f64>>> {
    let mut sums = vec![vec![0.0; x.cols()]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in x.row_iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(row) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| (c > 0).then(|| s.into_iter().map(|v| v / c as f64).collect()))
        .collect()
}
