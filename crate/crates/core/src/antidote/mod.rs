//! Antidote data: points `V` added to `U` so that clustering `U ∪ V` is
//! fairer on `U`.
//!
//! [`algorithm2`] treats the lower-level clustering as a black box and
//! searches `V` with SRE + RACOS. [`algorithm1`] handles convex SON
//! clustering through the γ-relaxed KKT reduction.

mod convex;
mod search;

pub use convex::{algorithm1, build_relaxed_kkt, RelaxedKktSystem, RelaxedResiduals};
pub use search::algorithm2;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::{
    assign, kmeans_fit, son_solve_with, spectral_fit, CenterKind, Centers, KMeansConfig, SonConfig,
    SpectralConfig,
};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::fairness::{
    social_cost_own_rows, AugmentedDataset, FairnessReport, FairnessSpec, Notion,
};
use crate::metrics::{QualityReport, CH_ZERO_WITHIN};
use crate::numerics::Matrix;
use crate::zoopt::{RacosConfig, SearchBox};

/// Lower-level clustering 𝓒.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClusteringSpec {
    Kmeans { k: usize },
    Spectral { k: usize },
    Son { lambda: f64 },
}

/// Result of running 𝓒 on some rows.
#[derive(Debug, Clone)]
pub struct LowerFit {
    pub centers: Centers,
    /// Cluster of every input row as produced by the algorithm itself.
    pub labels: Vec<usize>,
}

impl ClusteringSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ClusteringSpec::Kmeans { .. } => "kmeans",
            ClusteringSpec::Spectral { .. } => "spectral",
            ClusteringSpec::Son { .. } => "son",
        }
    }

    pub fn fit(&self, x: &Matrix, seed: u64) -> Result<LowerFit> {
        match *self {
            ClusteringSpec::Kmeans { k } => {
                let f = kmeans_fit(x, &KMeansConfig::new(k, seed))?;
                Ok(LowerFit {
                    centers: Centers::new(f.centers, CenterKind::Kmeans),
                    labels: f.labels,
                })
            }
            ClusteringSpec::Spectral { k } => {
                let f = spectral_fit(x, &SpectralConfig::new(k, seed))?;
                Ok(LowerFit {
                    centers: Centers::new(f.centers, CenterKind::Spectral),
                    labels: f.labels,
                })
            }
            ClusteringSpec::Son { lambda } => {
                let sol = son_solve_with(x, &SonConfig::new(lambda))?;
                let mut labels = vec![0; x.rows()];
                for (c, members) in sol.merged.iter().enumerate() {
                    for &r in members {
                        labels[r] = c;
                    }
                }
                Ok(LowerFit {
                    centers: Centers::new(sol.mu, CenterKind::Son),
                    labels,
                })
            }
        }
    }
}

/// How SON centers enter the social cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SonCenterRule {
    /// Nearest of all `m` center rows.
    #[default]
    AllRows,
    /// Each original point's own center row.
    OwnRow,
}

/// The clustering/fairness pairs supported end to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Combination {
    KmeansBalance,
    KmeansSocial,
    SpectralBalance,
    SonSocial,
}

impl Combination {
    pub const ALL: [Combination; 4] = [
        Combination::KmeansBalance,
        Combination::KmeansSocial,
        Combination::SpectralBalance,
        Combination::SonSocial,
    ];

    pub fn notion(self) -> Notion {
        match self {
            Combination::KmeansBalance | Combination::SpectralBalance => Notion::Balance,
            Combination::KmeansSocial | Combination::SonSocial => Notion::Social,
        }
    }

    /// `k` is used by k-means/spectral, `lambda` by SON.
    pub fn clustering(self, k: usize, lambda: f64) -> ClusteringSpec {
        match self {
            Combination::KmeansBalance | Combination::KmeansSocial => ClusteringSpec::Kmeans { k },
            Combination::SpectralBalance => ClusteringSpec::Spectral { k },
            Combination::SonSocial => ClusteringSpec::Son { lambda },
        }
    }
}

impl fmt::Display for Combination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Combination::KmeansBalance => "kmeans+balance",
            Combination::KmeansSocial => "kmeans+social",
            Combination::SpectralBalance => "spectral+balance",
            Combination::SonSocial => "son+social",
        })
    }
}

impl FromStr for Combination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Combination::ALL
            .into_iter()
            .find(|c| c.to_string() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown combination `{s}` (expected kmeans+balance, kmeans+social, spectral+balance or son+social)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntidoteConfig {
    /// Initial number of antidote points V_s.
    pub v_start: usize,
    /// Growth step ξ after an unsuccessful outer iteration.
    pub xi: usize,
    pub alpha: f64,
    pub max_outer_iters: usize,
    /// Cap on |V|/|U|.
    pub max_v_fraction: f64,
    /// Embedding dimension n′.
    pub n_prime: usize,
    pub sre_stages: usize,
    /// Objective evaluations per SRE stage.
    pub inner_budget: usize,
    pub racos: RacosConfig,
    pub seed: u64,
    /// Affine relaxation weight γ (convex driver).
    pub gamma: f64,
    /// SON weight λ (convex driver).
    pub lambda: f64,
    pub son_rule: SonCenterRule,
    /// Subgradient steps for the relaxed problem (convex driver).
    pub subgradient_steps: usize,
    /// Step-size scale c₀ relative to the widest half-width of the search box.
    pub step_scale: f64,
    /// Reject antidote sets that leave a k-means/spectral cluster with no
    /// original rows (black-box driver).
    pub require_all_clusters: bool,
}

impl Default for AntidoteConfig {
    fn default() -> Self {
        Self {
            v_start: 10,
            xi: 1,
            alpha: 0.0,
            max_outer_iters: 20,
            max_v_fraction: 0.5,
            n_prime: 100,
            sre_stages: 3,
            inner_budget: 300,
            racos: RacosConfig::default(),
            seed: 0,
            gamma: 0.99,
            lambda: 0.005,
            son_rule: SonCenterRule::AllRows,
            subgradient_steps: 2000,
            step_scale: 0.5,
            require_all_clusters: true,
        }
    }
}

impl AntidoteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.xi == 0 {
            return Err(Error::invalid("ξ must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!("γ = {} outside (0, 1]", self.gamma)));
        }
        if !(self.max_v_fraction > 0.0) {
            return Err(Error::invalid("max_v_fraction must be positive"));
        }
        if self.alpha.is_nan() {
            return Err(Error::invalid("α must be a number"));
        }
        if self.max_outer_iters == 0 || self.sre_stages == 0 || self.n_prime == 0 {
            return Err(Error::invalid(
                "max_outer_iters, sre_stages and n_prime must be positive",
            ));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid(format!(
                "λ = {} must be non-negative",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Largest |V| allowed for `n` original rows.
    pub fn v_cap(&self, n: usize) -> usize {
        (self.max_v_fraction * n as f64).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    MetAlpha,
    BudgetExhausted,
    VCapReached,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::MetAlpha => "met_alpha",
            Status::BudgetExhausted => "budget_exhausted",
            Status::VCapReached => "V_cap_reached",
        })
    }
}

/// One outer iteration: the |V| tried and the verified cost it reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub v_count: usize,
    pub fairness: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AntidoteResult {
    #[serde(rename = "V")]
    pub v: Matrix,
    pub fairness_before: f64,
    /// Recomputed from a fresh lower-level solve on `U ∪ V`.
    pub fairness_after: f64,
    /// |V| / |U|.
    pub ratio: f64,
    pub iterations: usize,
    pub status: Status,
    pub history: Vec<OuterStep>,
}

/// Expanded bounding box of the rows of `x`: each side grows by
/// `margin` times the coordinate's range.
pub fn padded_box(x: &Matrix, margin: f64) -> Result<SearchBox> {
    let d = x.cols();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in x.row_iter() {
        for c in 0..d {
            lo[c] = lo[c].min(row[c]);
            hi[c] = hi[c].max(row[c]);
        }
    }
    for c in 0..d {
        let pad = margin * (hi[c] - lo[c]);
        lo[c] -= pad;
        hi[c] += pad;
    }
    SearchBox::new(lo, hi)
}

/// Repeats a d-dimensional box `count` times to bound a flattened `V`.
pub(crate) fn tile_box(b: &SearchBox, count: usize) -> Result<SearchBox> {
    let lo = b.lower().repeat(count);
    let hi = b.upper().repeat(count);
    SearchBox::new(lo, hi)
}

/// Whether every cluster of `fit` (run on `U ∪ V`, `U` first) keeps at
/// least one row of `U`, both under the algorithm's own labels and under
/// nearest-center assignment.
pub fn covers_all_clusters(ds: &Dataset, fit: &LowerFit) -> bool {
    let k = fit.centers.len();
    let mut own = vec![false; k];
    let mut nearest = vec![false; k];
    for (p, &l) in ds.points().row_iter().zip(&fit.labels) {
        if l < k {
            own[l] = true;
        }
        nearest[crate::clustering::nearest(p, &fit.centers.mu).0] = true;
    }
    own.into_iter().chain(nearest).all(|h| h)
}

/// Fairness of `fit` (run on `U ∪ V`) measured on `U`.
pub fn evaluate_fairness(
    ds: &Dataset,
    v: &Matrix,
    fit: &LowerFit,
    notion: Notion,
    son_rule: SonCenterRule,
) -> Result<FairnessReport> {
    if fit.centers.kind == CenterKind::Son && son_rule == SonCenterRule::OwnRow {
        return social_cost_own_rows(&fit.centers.mu, ds);
    }
    let aug = AugmentedDataset::new(ds, v)?;
    notion.evaluate(&fit.centers, &aug)
}

/// Fairness on `U` after clustering `U ∪ V` with the run's clustering seed.
/// With `require_all_clusters`, an antidote set that leaves some cluster
/// without original rows costs +∞. An empty `v` gives the vanilla cost.
pub fn antidote_cost(
    ds: &Dataset,
    clustering: &ClusteringSpec,
    notion: Notion,
    v: &Matrix,
    run_seed: u64,
    require_all_clusters: bool,
) -> Result<f64> {
    let cseed = crate::seed::derive(run_seed, crate::seed::stream::CLUSTERING);
    let fit = if v.rows() == 0 {
        clustering.fit(ds.points(), cseed)?
    } else {
        clustering.fit(&ds.points().vstack(v)?, cseed)?
    };
    if require_all_clusters && v.rows() > 0 && !covers_all_clusters(ds, &fit) {
        return Ok(f64::INFINITY);
    }
    Ok(evaluate_fairness(ds, v, &fit, notion, SonCenterRule::AllRows)?.cost)
}

/// Fairness of the unmodified clustering of `U`, computed the way the
/// matching driver computes `fairness_before`.
pub fn vanilla_cost(
    ds: &Dataset,
    clustering: &ClusteringSpec,
    notion: Notion,
    cfg: &AntidoteConfig,
) -> Result<f64> {
    let empty = Matrix::zeros(0, ds.dim());
    match clustering {
        ClusteringSpec::Son { .. } => {
            let fit = clustering.fit(ds.points(), 0)?;
            Ok(evaluate_fairness(ds, &empty, &fit, notion, cfg.son_rule)?.cost)
        }
        _ => antidote_cost(ds, clustering, notion, &empty, cfg.seed, false),
    }
}

/// Summary row comparing vanilla and antidote clusterings on `U`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub combination: String,
    pub alpha: f64,
    pub v_ratio: f64,
    pub f_vanilla: f64,
    pub f_antidote: f64,
    pub status: Status,
    /// `None` when the clustering of `U` has fewer than two clusters.
    pub quality_vanilla: Option<QualityReport>,
    pub quality_antidote: Option<QualityReport>,
}

pub const RUN_CSV_HEADER: [&str; 15] = [
    "combination",
    "dataset",
    "k",
    "alpha",
    "V_ratio",
    "F_vanilla",
    "F_antidote",
    "silhouette_vanilla",
    "silhouette_antidote",
    "db_vanilla",
    "db_antidote",
    "ch_vanilla",
    "ch_antidote",
    "status",
    "seed",
];

/// Four-decimal rendering used in CSV tables.
pub fn fmt4(v: f64) -> String {
    if v == CH_ZERO_WITHIN || v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else if v.is_nan() {
        "NA".to_string()
    } else {
        let s = format!("{v:.4}");
        if s == "-0.0000" {
            "0.0000".to_string()
        } else {
            s
        }
    }
}

impl Comparison {
    /// `k` is `None` for SON, which has no fixed cluster count.
    pub fn csv_row(&self, dataset: &str, k: Option<usize>, seed: u64) -> Vec<String> {
        let q = |r: &Option<QualityReport>, f: fn(&QualityReport) -> f64| {
            r.as_ref().map_or_else(|| "NA".to_string(), |r| fmt4(f(r)))
        };
        vec![
            self.combination.clone(),
            dataset.to_string(),
            k.map_or_else(|| "NA".to_string(), |k| k.to_string()),
            fmt4(self.alpha),
            fmt4(self.v_ratio),
            fmt4(self.f_vanilla),
            fmt4(self.f_antidote),
            q(&self.quality_vanilla, |r| r.silhouette),
            q(&self.quality_antidote, |r| r.silhouette),
            q(&self.quality_vanilla, |r| r.davies_bouldin),
            q(&self.quality_antidote, |r| r.davies_bouldin),
            q(&self.quality_vanilla, |r| r.calinski_harabasz),
            q(&self.quality_antidote, |r| r.calinski_harabasz),
            self.status.to_string(),
            seed.to_string(),
        ]
    }
}

/// Quality of the clustering of `U` induced by `fit` on `U ∪ V`: the first
/// `|U|` labels of the lower-level solution.
fn quality_on_u(ds: &Dataset, fit: &LowerFit) -> Option<QualityReport> {
    QualityReport::compute(ds.points(), &fit.labels[..ds.len()]).ok()
}

/// Re-runs the vanilla and antidote clusterings and reports fairness plus
/// quality on `U` for both. Fairness columns come from `result`.
pub fn compare_vanilla(
    ds: &Dataset,
    clustering: &ClusteringSpec,
    fairness: &FairnessSpec,
    result: &AntidoteResult,
    seed: u64,
) -> Result<Comparison> {
    let cseed = crate::seed::derive(seed, crate::seed::stream::CLUSTERING);
    let vanilla = clustering.fit(ds.points(), cseed)?;
    let antidote = clustering.fit(&ds.points().vstack(&result.v)?, cseed)?;
    let combination = match (clustering, fairness.notion) {
        (ClusteringSpec::Kmeans { .. }, Notion::Balance) => Combination::KmeansBalance.to_string(),
        (ClusteringSpec::Kmeans { .. }, Notion::Social) => Combination::KmeansSocial.to_string(),
        (ClusteringSpec::Spectral { .. }, Notion::Balance) => {
            Combination::SpectralBalance.to_string()
        }
        (ClusteringSpec::Son { .. }, Notion::Social) => Combination::SonSocial.to_string(),
        (c, n) => format!("{}+{}", c.name(), n.name()),
    };
    Ok(Comparison {
        combination,
        alpha: fairness.alpha,
        v_ratio: result.ratio,
        f_vanilla: result.fairness_before,
        f_antidote: result.fairness_after,
        status: result.status,
        quality_vanilla: quality_on_u(ds, &vanilla),
        quality_antidote: quality_on_u(ds, &antidote),
    })
}

/// Labels of `U` under nearest-center assignment; handy for metrics on
/// stored centers.
pub fn nearest_labels(ds: &Dataset, centers: &Centers) -> Result<Vec<usize>> {
    Ok(assign(ds.points(), centers)?.labels)
}
