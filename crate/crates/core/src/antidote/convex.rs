//! SON + social fairness through the γ-relaxed single-level problem.
//!
//! Replacing the prox condition by `η − γ(η + ζ) = 0` gives `ζ = cη` with
//! `c = (1 − γ)/γ`. Together with `η = μᵀI`, `θ = Iζᵀ` and `θ + μ − X = 0`
//! this leaves `(Id + c·I Iᵀ) μ = X`, and `I Iᵀ = m·Id − 11ᵀ`, so
//! `μ_i = x̄ + (x_i − x̄)/(1 + cm)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    evaluate_fairness, padded_box, AntidoteConfig, AntidoteResult, ClusteringSpec, OuterStep,
    SonCenterRule, Status,
};
use crate::clustering::incidence_matrix;
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::fairness::Notion;
use crate::numerics::{cholesky, norm, solve_spd, sq_dist, Matrix};
use crate::seed::{self, stream};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxedKktSystem {
    pub m: usize,
    pub gamma: f64,
    /// (1 − γ)/γ.
    pub c: f64,
    /// Id + c·(m·Id − 11ᵀ).
    pub matrix: Matrix,
    pub mu: Matrix,
    /// μᵀI, d×|O|.
    pub eta: Matrix,
    /// cη, d×|O|.
    pub zeta: Matrix,
    /// Iζᵀ, m×d.
    pub theta: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxedResiduals {
    /// ‖θ + μ − X‖
    pub stationarity: f64,
    /// ‖μᵀI − η‖
    pub primal: f64,
    /// ‖Iζᵀ − θ‖
    pub dual: f64,
    /// ‖η − γ(η + ζ)‖
    pub relaxed_prox: f64,
}

impl RelaxedResiduals {
    pub fn max(&self) -> f64 {
        [self.stationarity, self.primal, self.dual, self.relaxed_prox]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn coupling(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!("γ = {gamma} outside (0, 1]")));
    }
    Ok((1.0 - gamma) / gamma)
}

/// Eliminates η, ζ and θ and solves the remaining SPD system for μ.
pub fn build_relaxed_kkt(x: &Matrix, gamma: f64) -> Result<RelaxedKktSystem> {
    let c = coupling(gamma)?;
    let m = x.rows();
    if m == 0 {
        return Err(Error::invalid("no rows"));
    }
    let matrix = Matrix::from_fn(m, m, |i, j| {
        if i == j {
            1.0 + c * (m as f64 - 1.0)
        } else {
            -c
        }
    });
    let mu = solve_spd(&matrix, x)?;
    let inc = incidence_matrix(m);
    let eta = mu.transpose().matmul(&inc)?;
    let zeta = eta.scale(c);
    let theta = inc.matmul(&zeta.transpose())?;
    Ok(RelaxedKktSystem {
        m,
        gamma,
        c,
        matrix,
        mu,
        eta,
        zeta,
        theta,
    })
}

impl RelaxedKktSystem {
    /// Residuals of the four relaxed conditions against data `x`.
    pub fn residuals(&self, x: &Matrix) -> Result<RelaxedResiduals> {
        let inc = incidence_matrix(self.m);
        let stationarity = self.theta.add(&self.mu)?.sub(x)?.frobenius();
        let primal = self
            .mu
            .transpose()
            .matmul(&inc)?
            .sub(&self.eta)?
            .frobenius();
        let dual = inc
            .matmul(&self.zeta.transpose())?
            .sub(&self.theta)?
            .frobenius();
        let relaxed_prox = self
            .eta
            .sub(&self.eta.add(&self.zeta)?.scale(self.gamma))?
            .frobenius();
        Ok(RelaxedResiduals {
            stationarity,
            primal,
            dual,
            relaxed_prox,
        })
    }

    /// Whether the system matrix admits a Cholesky factorisation.
    pub fn is_spd(&self) -> bool {
        cholesky(&self.matrix).is_ok()
    }
}

/// Closed form of the relaxed map: every row shrinks toward the grand mean
/// by `1/(1 + cm)`.
pub(crate) fn relaxed_centers(x: &Matrix, c: f64) -> Matrix {
    let m = x.rows();
    let mean = x.column_means();
    let s = 1.0 / (1.0 + c * m as f64);
    Matrix::from_fn(m, x.cols(), |r, k| mean[k] + s * (x[(r, k)] - mean[k]))
}

/// Social cost of the relaxed centers of `U ∪ V` on `U`, with a subgradient
/// with respect to the rows of `V` taken from the worst group.
pub(crate) fn surrogate(
    ds: &Dataset,
    v: &Matrix,
    c: f64,
    rule: SonCenterRule,
) -> Result<(f64, Matrix)> {
    let n = ds.len();
    let d = ds.dim();
    let all = ds.points().vstack(v)?;
    let m = all.rows();
    let s = 1.0 / (1.0 + c * m as f64);
    let mu = relaxed_centers(&all, c);

    let g = ds.n_groups();
    let mut cost = vec![0.0; g];
    let mut size = vec![0usize; g];
    let mut owner = vec![0usize; n];
    for (r, (p, &j)) in ds.points().row_iter().zip(ds.groups()).enumerate() {
        let (i, dist2) = match rule {
            SonCenterRule::AllRows => crate::clustering::nearest(p, &mu),
            SonCenterRule::OwnRow => (r, sq_dist(p, mu.row(r))),
        };
        owner[r] = i;
        cost[j] += dist2;
        size[j] += 1;
    }
    let mut worst = 0;
    for j in 0..g {
        cost[j] /= size[j] as f64;
        if cost[j] > cost[worst] {
            worst = j;
        }
    }

    // d/dv_l of ‖u − μ_i‖² = 2(μ_i − u)·((1 − s)/m + s·[i = n + l])
    let mut grad = Matrix::zeros(v.rows(), d);
    let shared = (1.0 - s) / m as f64;
    let mut common = vec![0.0; d];
    let w = 2.0 / size[worst] as f64;
    for (r, (p, &j)) in ds.points().row_iter().zip(ds.groups()).enumerate() {
        if j != worst {
            continue;
        }
        let i = owner[r];
        for k in 0..d {
            let gk = w * (mu[(i, k)] - p[k]);
            common[k] += gk * shared;
            if i >= n {
                grad[(i - n, k)] += gk * s;
            }
        }
    }
    for l in 0..v.rows() {
        for k in 0..d {
            grad[(l, k)] += common[k];
        }
    }
    Ok((cost[worst], grad))
}

/// Normalised subgradient descent on the relaxed surrogate from `v0`,
/// returning the best iterate.
fn descend(
    ds: &Dataset,
    v0: Matrix,
    c: f64,
    cfg: &AntidoteConfig,
    lo: &[f64],
    hi: &[f64],
) -> Result<Matrix> {
    let half = lo
        .iter()
        .zip(hi)
        .map(|(l, h)| 0.5 * (h - l))
        .fold(0.0, f64::max);
    let c0 = cfg.step_scale * half;
    let mut v = v0;
    let (mut best_val, mut grad) = surrogate(ds, &v, c, cfg.son_rule)?;
    let mut best = v.clone();
    for t in 1..=cfg.subgradient_steps {
        let gn = norm(grad.as_slice());
        if gn == 0.0 {
            break;
        }
        let step = c0 / (t as f64).sqrt() / gn;
        for r in 0..v.rows() {
            for k in 0..v.cols() {
                v[(r, k)] = (v[(r, k)] - step * grad[(r, k)]).clamp(lo[k], hi[k]);
            }
        }
        let (val, g) = surrogate(ds, &v, c, cfg.son_rule)?;
        grad = g;
        if val < best_val {
            best_val = val;
            best = v.clone();
        }
    }
    Ok(best)
}

/// Grow-V loop for SON clustering with social fairness; each inner problem
/// is the relaxed single-level surrogate, verified with a fresh SON solve.
pub fn algorithm1(ds: &Dataset, cfg: &AntidoteConfig) -> Result<AntidoteResult> {
    cfg.validate()?;
    let c = coupling(cfg.gamma)?;
    let n = ds.len();
    let d = ds.dim();
    let cap = cfg.v_cap(n);
    let son = ClusteringSpec::Son { lambda: cfg.lambda };
    let u = ds.points();
    let verify = |v: &Matrix| -> Result<f64> {
        let fit = son.fit(&u.vstack(v)?, 0)?;
        Ok(evaluate_fairness(ds, v, &fit, Notion::Social, cfg.son_rule)?.cost)
    };

    let empty = Matrix::zeros(0, d);
    let before = verify(&empty)?;
    let bounds = padded_box(u, 0.1)?;

    let mut best: Option<(Matrix, f64)> = None;
    let mut history = Vec::new();
    let mut status = Status::BudgetExhausted;
    let mut v_count = cfg.v_start;
    for t in 0..cfg.max_outer_iters {
        if v_count > cap {
            status = Status::VCapReached;
            break;
        }
        let mut rng = seed::rng(seed::derive(seed::derive(cfg.seed, stream::INIT), t as u64));
        let (lo, hi) = (bounds.lower(), bounds.upper());
        let v0 = Matrix::from_fn(v_count, d, |_, k| {
            if lo[k] < hi[k] {
                rng.random_range(lo[k]..hi[k])
            } else {
                lo[k]
            }
        });
        let v = if v_count == 0 {
            v0
        } else {
            descend(ds, v0, c, cfg, lo, hi)?
        };
        let after = verify(&v)?;
        history.push(OuterStep {
            v_count,
            fairness: after,
            evaluations: cfg.subgradient_steps,
        });
        if best.as_ref().is_none_or(|(_, b)| after < *b) {
            best = Some((v, after));
        }
        if after <= cfg.alpha {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_one_is_identity() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [-3.0, 0.5], [4.0, 4.0]]).unwrap();
        let sys = build_relaxed_kkt(&x, 1.0).unwrap();
        assert_eq!(sys.c, 0.0);
        assert!(sys.mu.sub(&x).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn two_by_two_analytic() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [4.0, 3.0]]).unwrap();
        let sys = build_relaxed_kkt(&x, 0.5).unwrap();
        assert_eq!(sys.c, 1.0);
        assert_eq!(
            sys.matrix,
            Matrix::from_rows(&[[2.0, -1.0], [-1.0, 2.0]]).unwrap()
        );
        // [[2,−1],[−1,2]]⁻¹ = (1/3)[[2,1],[1,2]]
        let want = Matrix::from_fn(2, 2, |r, k| {
            let (a, b) = if r == 0 { (2.0, 1.0) } else { (1.0, 2.0) };
            (a * x[(0, k)] + b * x[(1, k)]) / 3.0
        });
        assert!(sys.mu.sub(&want).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn reconstruction_satisfies_relaxed_conditions() {
        let mut rng = seed::rng(3);
        let x = Matrix::from_fn(7, 3, |_, _| rng.random_range(-5.0..5.0));
        for gamma in [0.05, 0.5, 0.9, 0.99, 1.0 - 1e-6, 1.0] {
            let sys = build_relaxed_kkt(&x, gamma).unwrap();
            assert!(sys.is_spd());
            let r = sys.residuals(&x).unwrap();
            assert!(r.max() <= 1e-10, "γ = {gamma}: {r:?}");
        }
    }

    #[test]
    fn closed_form_matches_solve_and_is_continuous() {
        let mut rng = seed::rng(4);
        let x = Matrix::from_fn(9, 2, |_, _| rng.random_range(-5.0..5.0));
        for gamma in [0.3, 0.99] {
            let sys = build_relaxed_kkt(&x, gamma).unwrap();
            let closed = relaxed_centers(&x, sys.c);
            assert!(closed.sub(&sys.mu).unwrap().max_abs() < 1e-12);
        }
        let near = build_relaxed_kkt(&x, 1.0 - 1e-6).unwrap();
        // μ − X = −(cm/(1 + cm))·(X − x̄), which vanishes with c.
        let mean = x.column_means();
        let spread = Matrix::from_fn(9, 2, |r, k| x[(r, k)] - mean[k]).frobenius();
        let cm = near.c * 9.0;
        let gap = near.mu.sub(&x).unwrap().frobenius();
        assert!(
            (gap - cm / (1.0 + cm) * spread).abs() < 1e-9 && gap < 1e-3,
            "{gap}"
        );
    }

    #[test]
    fn gamma_zero_rejected() {
        let x = Matrix::column(&[1.0, 2.0]);
        assert!(build_relaxed_kkt(&x, 0.0).is_err());
        assert!(build_relaxed_kkt(&x, 1.2).is_err());
    }

    fn fixture() -> Dataset {
        let pts = [0.0, 0.4, 1.1, 1.5, 6.0, 6.3, 9.0, 9.8, 2.2, 7.7];
        let groups = [0, 0, 0, 0, 1, 1, 1, 1, 0, 1];
        Dataset::new(Matrix::column(&pts), groups.to_vec(), 2, None).unwrap()
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let ds = fixture();
        let c = 0.3;
        for rule in [SonCenterRule::AllRows, SonCenterRule::OwnRow] {
            let v = Matrix::column(&[3.3, 8.1]);
            let (f0, g) = surrogate(&ds, &v, c, rule).unwrap();
            for l in 0..2 {
                let h = 1e-6;
                let mut vp = v.clone();
                vp[(l, 0)] += h;
                let mut vm = v.clone();
                vm[(l, 0)] -= h;
                let fd = (surrogate(&ds, &vp, c, rule).unwrap().0
                    - surrogate(&ds, &vm, c, rule).unwrap().0)
                    / (2.0 * h);
                assert!(
                    (fd - g[(l, 0)]).abs() < 1e-5,
                    "{rule:?} l={l}: fd {fd} vs {} (f={f0})",
                    g[(l, 0)]
                );
            }
        }
    }

    #[test]
    fn zero_antidote_baseline() {
        let ds = fixture();
        let cfg = AntidoteConfig {
            v_start: 0,
            alpha: f64::INFINITY,
            lambda: 0.01,
            ..AntidoteConfig::default()
        };
        let r = algorithm1(&ds, &cfg).unwrap();
        let sol = crate::clustering::son_solve(ds.points(), 0.01, 1e-6).unwrap();
        let want = crate::fairness::social_cost(
            &crate::clustering::Centers::new(sol.mu, crate::clustering::CenterKind::Son),
            &ds,
        )
        .unwrap()
        .cost;
        assert_eq!(r.fairness_before, want);
        assert_eq!(r.fairness_after, want);
        assert_eq!(r.status, Status::MetAlpha);
        assert_eq!(r.v.rows(), 0);
    }
}
