//! Group-level fairness costs 𝓕(μ, U).
//!
//! Costs only ever look at the rows of the original dataset `U`. Antidote
//! rows may sit next to them (see [`AugmentedDataset`]) but are skipped.

use serde::{Deserialize, Serialize};

use crate::clustering::{nearest, Centers};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{sq_dist, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Notion {
    /// Worst per-group mean squared distance to the nearest center.
    Social,
    /// Negated worst-case cluster/group proportion ratio, in [−1, 0].
    Balance,
}

impl Notion {
    pub fn evaluate<D: GroupedPoints + ?Sized>(
        self,
        centers: &Centers,
        data: &D,
    ) -> Result<FairnessReport> {
        match self {
            Notion::Social => social_cost(centers, data),
            Notion::Balance => balance_cost(centers, data),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Notion::Social => "social",
            Notion::Balance => "balance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessSpec {
    pub notion: Notion,
    pub alpha: f64,
}

impl FairnessSpec {
    pub fn new(notion: Notion, alpha: f64) -> Result<Self> {
        if alpha.is_nan() {
            return Err(Error::invalid("α must be a number"));
        }
        if notion == Notion::Balance && !(-1.0..=0.0).contains(&alpha) {
            return Err(Error::invalid(format!(
                "balance threshold α = {alpha} outside [−1, 0]"
            )));
        }
        Ok(Self { notion, alpha })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub cost: f64,
    /// Social: Δ_j/|ψ_j|. Balance: −min over clusters of min{R, 1/R} for group j.
    pub per_group: Vec<f64>,
    pub worst_group: usize,
    /// Cluster attaining the balance minimum; `None` for social fairness.
    pub worst_cluster: Option<usize>,
}

/// Rows that carry protected-group labels.
pub trait GroupedPoints {
    fn dim(&self) -> usize;
    fn n_groups(&self) -> usize;
    /// Calls `f(point, group)` for every row of the original data, in order.
    fn visit_original(&self, f: &mut dyn FnMut(&[f64], usize));
}

impl GroupedPoints for Dataset {
    fn dim(&self) -> usize {
        Dataset::dim(self)
    }

    fn n_groups(&self) -> usize {
        Dataset::n_groups(self)
    }

    fn visit_original(&self, f: &mut dyn FnMut(&[f64], usize)) {
        for (p, &g) in self.points().row_iter().zip(self.groups()) {
            f(p, g);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowOrigin {
    Original(usize),
    /// Antidote row, optionally carrying a (ignored) group label.
    Antidote(Option<usize>),
}

/// `U ∪ V` with per-row provenance.
#[derive(Debug, Clone)]
pub struct AugmentedDataset {
    pub points: Matrix,
    pub origin: Vec<RowOrigin>,
    n_groups: usize,
}

impl AugmentedDataset {
    pub fn new(u: &Dataset, v: &Matrix) -> Result<Self> {
        Self::with_antidote_labels(u, v, None)
    }

    /// Like [`AugmentedDataset::new`] but tags each antidote row with a group.
    pub fn with_antidote_labels(u: &Dataset, v: &Matrix, labels: Option<&[usize]>) -> Result<Self> {
        if let Some(l) = labels {
            if l.len() != v.rows() {
                return Err(Error::shape("one label per antidote row"));
            }
        }
        let points = u.points().vstack(v)?;
        let mut origin: Vec<RowOrigin> =
            u.groups().iter().map(|&g| RowOrigin::Original(g)).collect();
        origin.extend((0..v.rows()).map(|i| RowOrigin::Antidote(labels.map(|l| l[i]))));
        Ok(Self {
            points,
            origin,
            n_groups: u.n_groups(),
        })
    }
}

impl GroupedPoints for AugmentedDataset {
    fn dim(&self) -> usize {
        self.points.cols()
    }

    fn n_groups(&self) -> usize {
        self.n_groups
    }

    fn visit_original(&self, f: &mut dyn FnMut(&[f64], usize)) {
        for (p, o) in self.points.row_iter().zip(&self.origin) {
            if let RowOrigin::Original(g) = o {
                f(p, *g);
            }
        }
    }
}

fn check_dims<D: GroupedPoints + ?Sized>(centers: &Centers, data: &D) -> Result<()> {
    if centers.is_empty() {
        return Err(Error::invalid("no centers"));
    }
    if centers.mu.cols() != data.dim() {
        return Err(Error::shape(format!(
            "centers have {} features, data has {}",
            centers.mu.cols(),
            data.dim()
        )));
    }
    Ok(())
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn social_cost<D: GroupedPoints + ?Sized>(
    centers: &Centers,
    data: &D,
) -> Result<FairnessReport> {
    check_dims(centers, data)?;
    let g = data.n_groups();
    let mut delta = vec![0.0; g];
    let mut size = vec![0usize; g];
    data.visit_original(&mut |p, j| {
        delta[j] += nearest(p, &centers.mu).1;
        size[j] += 1;
    });
    social_report(delta, size)
}

/// Social cost where original row `r` is measured against `mu` row `r`
/// (each point's own SON center) instead of its nearest center.
pub fn social_cost_own_rows(mu: &Matrix, data: &Dataset) -> Result<FairnessReport> {
    if mu.rows() < data.len() || mu.cols() != data.dim() {
        return Err(Error::shape(format!(
            "{}x{} centers for {} rows of dimension {}",
            mu.rows(),
            mu.cols(),
            data.len(),
            data.dim()
        )));
    }
    let g = data.n_groups();
    let mut delta = vec![0.0; g];
    let mut size = vec![0usize; g];
    for (r, (p, &j)) in data.points().row_iter().zip(data.groups()).enumerate() {
        delta[j] += sq_dist(p, mu.row(r));
        size[j] += 1;
    }
    social_report(delta, size)
}

fn social_report(delta: Vec<f64>, size: Vec<usize>) -> Result<FairnessReport> {
    if size.iter().all(|&s| s == 0) {
        return Err(Error::invalid("no original rows to evaluate"));
    }
    let per_group: Vec<f64> = delta
        .iter()
        .zip(&size)
        .map(|(d, &s)| if s > 0 { d / s as f64 } else { 0.0 })
        .collect();
    let worst_group = argmax(&per_group);
    Ok(FairnessReport {
        cost: per_group[worst_group],
        per_group,
        worst_group,
        worst_cluster: None,
    })
}

pub fn balance_cost<D: GroupedPoints + ?Sized>(
    centers: &Centers,
    data: &D,
) -> Result<FairnessReport> {
    check_dims(centers, data)?;
    let g = data.n_groups();
    let k = centers.len();
    // counts[i][j] = |ψ(U, j) ∩ φ(U, μ, i)|
    let mut counts = vec![vec![0u64; g]; k];
    data.visit_original(&mut |p, j| {
        counts[nearest(p, &centers.mu).0][j] += 1;
    });
    let group_size: Vec<u64> = (0..g).map(|j| counts.iter().map(|c| c[j]).sum()).collect();
    let total: u64 = group_size.iter().sum();

    let mut per_group = vec![f64::NEG_INFINITY; g];
    let mut arg_cluster = vec![0usize; g];
    let mut any_cluster = false;
    for (i, row) in counts.iter().enumerate() {
        let cluster_size: u64 = row.iter().sum();
        if cluster_size == 0 {
            continue;
        }
        any_cluster = true;
        for j in 0..g {
            // R = (|ψ_j|/|U|) / (|ψ_j ∩ φ_i|/|φ_i|) = |ψ_j|·|φ_i| / (|U|·|ψ_j ∩ φ_i|)
            let num = (group_size[j] * cluster_size) as f64;
            let den = (total * row[j]) as f64;
            let term = if row[j] == 0 {
                0.0
            } else {
                num.min(den) / num.max(den)
            };
            if -term > per_group[j] {
                per_group[j] = -term;
                arg_cluster[j] = i;
            }
        }
    }
    if !any_cluster {
        return Err(Error::AllClustersEmpty);
    }
    let worst_group = argmax(&per_group);
    Ok(FairnessReport {
        cost: per_group[worst_group],
        per_group,
        worst_group,
        worst_cluster: Some(arg_cluster[worst_group]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::CenterKind;

    fn ds1(points: &[f64], groups: &[usize], g: usize) -> Dataset {
        Dataset::new(Matrix::column(points), groups.to_vec(), g, None).unwrap()
    }

    fn centers(points: &[f64]) -> Centers {
        Centers::new(Matrix::column(points), CenterKind::Kmeans)
    }

    #[test]
    fn social_worked_example() {
        let ds = ds1(&[0.0, 2.0, 10.0], &[0, 0, 1], 2);
        let r = social_cost(&centers(&[1.0, 10.0]), &ds).unwrap();
        assert_eq!(r.per_group, vec![1.0, 0.0]);
        assert_eq!(r.cost, 1.0);
        assert_eq!(r.worst_group, 0);
    }

    #[test]
    fn social_average_invariance() {
        let ds = ds1(&[0.0, 2.0, 10.0], &[0, 0, 1], 2);
        let dup = ds1(&[0.0, 2.0, 10.0, 0.0, 2.0], &[0, 0, 1, 0, 0], 2);
        let c = centers(&[1.0, 10.0]);
        assert_eq!(
            social_cost(&c, &ds).unwrap().cost,
            social_cost(&c, &dup).unwrap().cost
        );
    }

    #[test]
    fn balance_worked_example() {
        // groups (A,A,B,B); cluster0 = {A,A,B}, cluster1 = {B}
        let ds = ds1(&[0.0, 0.1, 0.2, 10.0], &[0, 0, 1, 1], 2);
        let r = balance_cost(&centers(&[0.1, 10.0]), &ds).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.worst_cluster, Some(1));
        assert_eq!(r.worst_group, 0);
        // cluster 0 alone: R(0,A) = 0.75, R(0,B) = 1.5 → terms 0.75, 2/3
        let only0 = ds1(&[0.0, 0.1, 0.2], &[0, 0, 1], 2);
        let r0 = balance_cost(&centers(&[0.1]), &only0).unwrap();
        assert_eq!(r0.cost, -1.0);
    }

    #[test]
    fn balance_perfect_and_single_cluster() {
        let ds = ds1(&[0.0, 0.1, 5.0, 5.1], &[0, 1, 0, 1], 2);
        assert_eq!(balance_cost(&centers(&[0.0, 5.0]), &ds).unwrap().cost, -1.0);
        let skew = ds1(&[0.0, 0.1, 5.0, 5.1, 5.2], &[0, 0, 1, 0, 1], 2);
        assert_eq!(balance_cost(&centers(&[3.0]), &skew).unwrap().cost, -1.0);
    }

    #[test]
    fn antidote_rows_are_ignored() {
        let ds = ds1(&[0.0, 2.0, 10.0, 11.0], &[0, 0, 1, 0], 2);
        let v = Matrix::column(&[1.0, 20.0]);
        let aug = AugmentedDataset::with_antidote_labels(&ds, &v, Some(&[1, 1])).unwrap();
        let c = centers(&[1.0, 10.5]);
        for notion in [Notion::Social, Notion::Balance] {
            assert_eq!(
                notion.evaluate(&c, &ds).unwrap(),
                notion.evaluate(&c, &aug).unwrap()
            );
        }
    }

    #[test]
    fn own_rows_variant() {
        let ds = ds1(&[0.0, 2.0, 10.0], &[0, 0, 1], 2);
        let mu = Matrix::column(&[0.5, 2.0, 9.0, 100.0]);
        let r = social_cost_own_rows(&mu, &ds).unwrap();
        assert_eq!(r.per_group, vec![0.125, 1.0]);
        assert_eq!(r.worst_group, 1);
    }

    #[test]
    fn spec_validation() {
        assert!(FairnessSpec::new(Notion::Balance, 0.5).is_err());
        assert!(FairnessSpec::new(Notion::Balance, -0.3).is_ok());
        assert!(FairnessSpec::new(Notion::Social, f64::INFINITY).is_ok());
        assert!(FairnessSpec::new(Notion::Social, f64::NAN).is_err());
    }

    #[test]
    fn shape_mismatch() {
        let ds = ds1(&[0.0, 1.0], &[0, 1], 2);
        let c = Centers::new(Matrix::zeros(1, 2), CenterKind::Kmeans);
        assert!(social_cost(&c, &ds).is_err());
        assert!(balance_cost(&c, &ds).is_err());
    }
}
