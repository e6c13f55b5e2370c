//! Lloyd's algorithm with k-means++ seeding.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{label_means, nearest, CenterKind, Centers};
use crate::error::{Error, Result};
use crate::numerics::{sq_dist, Matrix};
use crate::seed;

#[derive(Debug, Clone, Copy)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once no center moves farther than this.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iter: 300,
            tol: 1e-6,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centers: Matrix,
    pub labels: Vec<usize>,
    /// Objective after each assignment step; non-increasing.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl KMeansFit {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&0.0)
    }
}

pub fn kmeans(x: &Matrix, k: usize, seed: u64) -> Result<Centers> {
    let fit = kmeans_fit(x, &KMeansConfig::new(k, seed))?;
    Ok(Centers::new(fit.centers, CenterKind::Kmeans))
}

fn plus_plus(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = x.rows();
    let mut centers = Matrix::zeros(k, x.cols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = x.row_iter().map(|p| sq_dist(p, x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(x.row(pick));
        for (d, p) in d2.iter_mut().zip(x.row_iter()) {
            *d = d.min(sq_dist(p, x.row(pick)));
        }
    }
    centers
}

pub fn kmeans_fit(x: &Matrix, cfg: &KMeansConfig) -> Result<KMeansFit> {
    let n = x.rows();
    let k = cfg.k;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds {n} points")));
    }
    let mut rng = seed::rng(cfg.seed);
    let mut centers = plus_plus(x, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        let mut objective = 0.0;
        for (r, p) in x.row_iter().enumerate() {
            let (l, d) = nearest(p, &centers);
            labels[r] = l;
            dists[r] = d;
            objective += d;
        }
        trace.push(objective);
        if iterations == cfg.max_iter {
            break;
        }
        iterations += 1;

        let means = label_means(x, &labels, k);
        let mut moved = 0.0f64;
        let mut repaired = false;
        let mut taken = vec![false; n];
        for (c, mean) in means.into_iter().enumerate() {
            let new = match mean {
                Some(m) => m,
                None => {
                    // Empty cluster: reseed at the point farthest from its center.
                    let far = (0..n)
                        .filter(|&i| !taken[i])
                        .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
                    match far {
                        Some(i) if dists[i] > 0.0 => {
                            taken[i] = true;
                            dists[i] = 0.0;
                            repaired = true;
                            x.row(i).to_vec()
                        }
                        // Nothing left to steal (duplicate points): keep the center.
                        _ => centers.row(c).to_vec(),
                    }
                }
            };
            moved = moved.max(sq_dist(&new, centers.row(c)).sqrt());
            centers.row_mut(c).copy_from_slice(&new);
        }
        if moved < cfg.tol && !repaired {
            break;
        }
    }
    Ok(KMeansFit {
        centers,
        labels,
        objective_trace: trace,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objective(x: &Matrix, mu: &Matrix) -> f64 {
        x.row_iter().map(|p| nearest(p, mu).1).sum()
    }

    #[test]
    fn separated_pairs() {
        let x = Matrix::column(&[0.0, 1.0, 10.0, 11.0]);
        for seed in 0..10 {
            let c = kmeans(&x, 2, seed).unwrap();
            let mut v = c.mu.col(0);
            v.sort_by(f64::total_cmp);
            assert!(
                (v[0] - 0.5).abs() < 1e-12 && (v[1] - 10.5).abs() < 1e-12,
                "{v:?}"
            );
        }
    }

    #[test]
    fn k_equals_n_reproduces_points() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [3.0, -1.0], [7.0, 2.0], [-4.0, 4.0]]).unwrap();
        let fit = kmeans_fit(&x, &KMeansConfig::new(4, 3)).unwrap();
        assert_eq!(fit.objective(), 0.0);
        let mut rows: Vec<Vec<f64>> = fit.centers.row_iter().map(<[f64]>::to_vec).collect();
        rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut want: Vec<Vec<f64>> = x.row_iter().map(<[f64]>::to_vec).collect();
        want.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(rows, want);
    }

    #[test]
    fn beats_random_center_triples() {
        let mut rng = seed::rng(21);
        let centres = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
        let x = Matrix::from_fn(12, 2, |r, c| {
            centres[r % 3][c] + rng.random_range(-0.5..0.5)
        });
        let fit = kmeans_fit(&x, &KMeansConfig::new(3, 5)).unwrap();
        for _ in 0..200 {
            let idx: Vec<usize> = (0..3).map(|_| rng.random_range(0..12)).collect();
            let mu = x.select_rows(&idx);
            assert!(fit.objective() <= objective(&x, &mu) + 1e-12);
        }
    }

    #[test]
    fn objective_trace_monotone_and_deterministic() {
        let mut rng = seed::rng(8);
        let x = Matrix::from_fn(80, 3, |_, _| rng.random_range(-5.0..5.0));
        let a = kmeans_fit(&x, &KMeansConfig::new(5, 17)).unwrap();
        let b = kmeans_fit(&x, &KMeansConfig::new(5, 17)).unwrap();
        assert_eq!(a.centers, b.centers);
        for w in a.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", a.objective_trace);
        }
        let counts = super::super::Assignment { labels: a.labels }.counts(5);
        assert!(counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn empty_cluster_repair_keeps_clusters_nonempty() {
        // Many duplicates make k-means++ likely to reuse locations.
        let mut rows = vec![[0.0]; 30];
        rows.extend(vec![[1.0]; 2]);
        rows.push([50.0]);
        let x = Matrix::from_rows(&rows).unwrap();
        for seed in 0..20 {
            let fit = kmeans_fit(&x, &KMeansConfig::new(3, seed)).unwrap();
            let counts = super::super::Assignment { labels: fit.labels }.counts(3);
            assert!(counts.iter().all(|&c| c > 0), "seed {seed}: {counts:?}");
        }
    }

    #[test]
    fn rejects_bad_k() {
        let x = Matrix::column(&[1.0, 2.0]);
        assert!(kmeans(&x, 3, 0).is_err());
        assert!(kmeans(&x, 0, 0).is_err());
    }
}
