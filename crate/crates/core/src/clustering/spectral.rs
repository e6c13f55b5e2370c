//! Unnormalised spectral clustering on a dense Gaussian similarity graph.

use super::{kmeans_fit, label_means, CenterKind, Centers, KMeansConfig};
use crate::error::{Error, Result};
use crate::numerics::{dist, sym_eig_with, EigConfig, EigenMethod, Matrix};

pub const DEFAULT_SPECTRAL_CAP: usize = 2000;

#[derive(Debug, Clone, Copy)]
pub struct SpectralConfig {
    pub k: usize,
    pub seed: u64,
    /// Largest row count accepted for the dense eigensolve.
    pub max_rows: usize,
    pub eigen: EigConfig,
}

impl SpectralConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_rows: DEFAULT_SPECTRAL_CAP,
            eigen: EigConfig {
                method: EigenMethod::TridiagonalQl,
                ..EigConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralFit {
    /// Input-space means of the spectral clusters.
    pub centers: Matrix,
    /// Cluster of each row as found in the embedding.
    pub labels: Vec<usize>,
    /// Kernel bandwidth (median pairwise distance).
    pub sigma: f64,
}

pub fn spectral(x: &Matrix, k: usize, seed: u64) -> Result<Centers> {
    let fit = spectral_fit(x, &SpectralConfig::new(k, seed))?;
    Ok(Centers::new(fit.centers, CenterKind::Spectral))
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mid = v.len() / 2;
    let (_, hi, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let hi = *hi;
    if v.len() % 2 == 1 {
        hi
    } else {
        let lo = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

pub fn spectral_fit(x: &Matrix, cfg: &SpectralConfig) -> Result<SpectralFit> {
    let n = x.rows();
    let k = cfg.k;
    if n > cfg.max_rows {
        return Err(Error::TooManyRows {
            rows: n,
            cap: cfg.max_rows,
        });
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} with {n} points")));
    }

    let mut d = Matrix::zeros(n, n);
    let mut pair_dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let v = dist(x.row(i), x.row(j));
            d[(i, j)] = v;
            d[(j, i)] = v;
            pair_dists.push(v);
        }
    }
    let sigma = median(pair_dists);
    let two_sigma2 = 2.0 * sigma * sigma;

    // L = D − W, built in place over the distance matrix.
    let mut lap = d;
    for i in 0..n {
        let mut degree = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let dij = lap[(i, j)];
            let w = if two_sigma2 > 0.0 {
                (-(dij * dij) / two_sigma2).exp()
            } else {
                1.0
            };
            lap[(i, j)] = -w;
            degree += w;
        }
        lap[(i, i)] = degree;
    }
    let eig = sym_eig_with(&lap, k, &cfg.eigen)?;
    let emb = eig.vectors;

    let km = kmeans_fit(&emb, &KMeansConfig::new(k, cfg.seed))?;
    let centers = Matrix::from_rows(
        &label_means(x, &km.labels, k)
            .into_iter()
            // An embedding cluster is never empty after Lloyd's repair unless
            // embedding rows coincide; fall back to the grand mean then.
            .map(|m| m.unwrap_or_else(|| x.column_means()))
            .collect::<Vec<_>>(),
    )?;
    Ok(SpectralFit {
        centers,
        labels: km.labels,
        sigma,
    })
}
