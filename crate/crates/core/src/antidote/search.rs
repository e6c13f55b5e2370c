use super::{
    antidote_cost, padded_box, tile_box, AntidoteConfig, AntidoteResult, ClusteringSpec, OuterStep,
    Status,
};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::fairness::FairnessSpec;
use crate::numerics::Matrix;
use crate::seed::{self, stream};
use crate::zoopt::{racos_minimize_from, sre_minimize, SreConfig};

/// Grow-V search with a black-box lower level (k-means or spectral).
pub fn algorithm2(
    ds: &Dataset,
    clustering: &ClusteringSpec,
    fairness: &FairnessSpec,
    cfg: &AntidoteConfig,
) -> Result<AntidoteResult> {
    cfg.validate()?;
    if matches!(clustering, ClusteringSpec::Son { .. }) {
        return Err(Error::invalid(
            "SON clustering is handled by the convex reduction, not the black-box search",
        ));
    }
    if cfg.v_start == 0 {
        return Err(Error::invalid("the black-box search needs V_s ≥ 1"));
    }
    let n = ds.len();
    let d = ds.dim();
    let cap = cfg.v_cap(n);
    let notion = fairness.notion;

    let empty = Matrix::zeros(0, d);
    let before = antidote_cost(ds, clustering, notion, &empty, cfg.seed, false)?;

    let point_box = padded_box(ds.points(), 0.1)?;
    let cost_of = |v: &Matrix| {
        antidote_cost(
            ds,
            clustering,
            notion,
            v,
            cfg.seed,
            cfg.require_all_clusters,
        )
    };

    let mut best: Option<(Matrix, f64)> = None;
    let mut history = Vec::new();
    let mut status = Status::BudgetExhausted;
    let mut v_count = cfg.v_start;
    for t in 0..cfg.max_outer_iters {
        if v_count > cap {
            status = Status::VCapReached;
            break;
        }
        let dim = v_count * d;
        let flat_box = tile_box(&point_box, v_count)?;
        let mut init_rng = seed::rng(seed::derive(seed::derive(cfg.seed, stream::INIT), t as u64));
        let v0 = {
            use rand::Rng;
            let (lo, hi) = (flat_box.lower(), flat_box.upper());
            (0..dim)
                .map(|c| {
                    if lo[c] < hi[c] {
                        init_rng.random_range(lo[c]..hi[c])
                    } else {
                        lo[c]
                    }
                })
                .collect::<Vec<f64>>()
        };
        // Surface configuration errors (e.g. the spectral row cap) before searching.
        cost_of(&Matrix::from_vec(v_count, d, v0.clone())?)?;

        let objective = |flat: &[f64]| -> f64 {
            Matrix::from_vec(v_count, d, flat.to_vec())
                .and_then(|v| cost_of(&v))
                .unwrap_or(f64::INFINITY)
        };
        let opt_seed = seed::derive(seed::derive(cfg.seed, stream::OPTIMIZER), t as u64);
        let (flat, evaluations) = if dim > cfg.n_prime {
            let sre = SreConfig {
                racos: cfg.racos,
                start: Some(v0),
                ..SreConfig::new(cfg.n_prime, cfg.sre_stages, cfg.inner_budget)
            };
            let out = sre_minimize(objective, &flat_box, &sre, opt_seed)?;
            (out.x, out.evaluations)
        } else {
            let budget = cfg.inner_budget * cfg.sre_stages;
            let out =
                racos_minimize_from(objective, &flat_box, budget, &cfg.racos, opt_seed, &[v0])?;
            (out.x, out.state.evaluations)
        };

        let v = Matrix::from_vec(v_count, d, flat)?;
        let after = cost_of(&v)?;
        history.push(OuterStep {
            v_count,
            fairness: after,
            evaluations,
        });
        let improved = best.as_ref().is_none_or(|(_, b)| after < *b);
        if improved {
            best = Some((v, after));
        }
        if after <= fairness.alpha {
            // An earlier, lower cost would already have met α, so `best` is this V.
            status = Status::MetAlpha;
            break;
        }
        v_count += cfg.xi;
    }

    let (v, after) = best.unwrap_or((empty, before));
    Ok(AntidoteResult {
        ratio: v.rows() as f64 / n as f64,
        v,
        fairness_before: before,
        fairness_after: after,
        iterations: history.len(),
        status,
        history,
    })
}
