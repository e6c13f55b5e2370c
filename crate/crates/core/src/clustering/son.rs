//! Sum-of-norms (convex) clustering.
//!
//! Solves `min ½‖μ − X‖² + λ Σ_{i<j} ‖μ_i − μ_j‖` through the split
//! `μᵀI − η = 0`, where `I` is the node-arc incidence matrix of the complete
//! graph on the `m` rows (edge order: `(0,1), (0,2), …, (1,2), …`).
//!
//! ADMM iterates (scaled form, penalty ρ):
//!
//! * μ ← (Id + ρ·I Iᵀ)⁻¹ (X + ρ·I(η − u)), closed form since I Iᵀ = m·Id − 11ᵀ
//! * η_e ← prox_{(λ/ρ)‖·‖}(μ_i − μ_j + u_e)
//! * u_e ← u_e + μ_i − μ_j − η_e
//!
//! At the returned iterate the dual pair is ζ = ρ·uᵀ and θ = Iζᵀ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dist, norm, Matrix};

#[derive(Debug, Clone, Copy)]
pub struct SonConfig {
    pub lambda: f64,
    /// Relative primal/dual residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    /// Rows closer than this are reported as one fused group.
    pub merge_tol: f64,
}

impl SonConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            tol: 1e-6,
            max_iter: 5000,
            rho: 1.0,
            merge_tol: 1e-4,
        }
    }
}

/// Variables of the reformulated primal and of its dual at the solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SonDuals {
    /// d x |O| edge differences.
    pub eta: Matrix,
    /// m x d.
    pub theta: Matrix,
    /// d x |O| edge multipliers.
    pub zeta: Matrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SonSolution {
    /// One center per input row.
    pub mu: Matrix,
    pub lambda: f64,
    /// Partition of row indices into fused groups, ordered by first member.
    pub merged: Vec<Vec<usize>>,
    pub duals: SonDuals,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl SonSolution {
    /// One center per fused group (mean of the group's rows).
    pub fn fused_centers(&self) -> Matrix {
        let d = self.mu.cols();
        Matrix::from_fn(self.merged.len(), d, |g, c| {
            let grp = &self.merged[g];
            grp.iter().map(|&r| self.mu[(r, c)]).sum::<f64>() / grp.len() as f64
        })
    }

    pub fn cluster_count(&self) -> usize {
        self.merged.len()
    }
}

pub fn edge_count(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

/// Position of edge `(i, j)`, `i < j`, in the lexicographic order.
#[inline]
pub fn edge_index(m: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < m);
    i * (2 * m - i - 1) / 2 + (j - i - 1)
}

/// m x |O| incidence matrix: column `(i, j)` has +1 in row `i`, −1 in row `j`.
pub fn incidence_matrix(m: usize) -> Matrix {
    let mut inc = Matrix::zeros(m, edge_count(m));
    let mut e = 0;
    for i in 0..m {
        for j in i + 1..m {
            inc[(i, e)] = 1.0;
            inc[(j, e)] = -1.0;
            e += 1;
        }
    }
    inc
}

pub fn son_objective(x: &Matrix, mu: &Matrix, lambda: f64) -> f64 {
    let fit: f64 = x
        .as_slice()
        .iter()
        .zip(mu.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let mut pen = 0.0;
    for i in 0..mu.rows() {
        for j in i + 1..mu.rows() {
            pen += dist(mu.row(i), mu.row(j));
        }
    }
    0.5 * fit + lambda * pen
}

pub fn son_solve(x: &Matrix, lambda: f64, tol: f64) -> Result<SonSolution> {
    son_solve_with(
        x,
        &SonConfig {
            tol,
            ..SonConfig::new(lambda)
        },
    )
}

/// Edge-major buffer: row `e` holds the d-vector for edge `e`.
struct EdgeBuf {
    d: usize,
    data: Vec<f64>,
}

impl EdgeBuf {
    fn zeros(edges: usize, d: usize) -> Self {
        Self {
            d,
            data: vec![0.0; edges * d],
        }
    }

    #[inline]
    fn get(&self, e: usize) -> &[f64] {
        &self.data[e * self.d..(e + 1) * self.d]
    }

    #[inline]
    fn get_mut(&mut self, e: usize) -> &mut [f64] {
        &mut self.data[e * self.d..(e + 1) * self.d]
    }

    fn frobenius(&self) -> f64 {
        norm(&self.data)
    }

    /// d x |O| matrix (one column per edge).
    fn to_columns(&self) -> Matrix {
        let edges = self.data.len() / self.d.max(1);
        Matrix::from_fn(self.d, edges, |c, e| self.data[e * self.d + c])
    }
}

/// `I · Z` for edge-major `Z`: node i collects +Z_e for edges leaving it and
/// −Z_e for edges entering it.
fn incidence_apply(m: usize, z: &EdgeBuf, out: &mut Matrix) {
    out.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
    let d = z.d;
    let mut e = 0;
    for i in 0..m {
        for j in i + 1..m {
            let ze = z.get(e);
            for c in 0..d {
                out[(i, c)] += ze[c];
                out[(j, c)] -= ze[c];
            }
            e += 1;
        }
    }
}

fn edge_differences(mu: &Matrix, out: &mut EdgeBuf) {
    let m = mu.rows();
    let mut e = 0;
    for i in 0..m {
        for j in i + 1..m {
            let (a, b) = (mu.row(i), mu.row(j));
            for (o, (x, y)) in out.get_mut(e).iter_mut().zip(a.iter().zip(b)) {
                *o = x - y;
            }
            e += 1;
        }
    }
}

/// Solves (Id + ρ(m·Id − 11ᵀ)) μ = rhs row-block-wise.
fn laplacian_shift_solve(rhs: &Matrix, rho: f64, mu: &mut Matrix) {
    let m = rhs.rows();
    let mean = rhs.column_means();
    let shrink = 1.0 / (1.0 + rho * m as f64);
    for r in 0..m {
        for (c, mc) in mean.iter().enumerate() {
            mu[(r, c)] = mc + (rhs[(r, c)] - mc) * shrink;
        }
    }
}

#[inline]
fn block_soft_threshold(v: &mut [f64], t: f64) {
    let n = norm(v);
    let s = if n > t { 1.0 - t / n } else { 0.0 };
    v.iter_mut().for_each(|x| *x *= s);
}

pub fn son_solve_with(x: &Matrix, cfg: &SonConfig) -> Result<SonSolution> {
    if !(cfg.lambda >= 0.0) || !cfg.lambda.is_finite() {
        return Err(Error::invalid(format!("λ = {} must be ≥ 0", cfg.lambda)));
    }
    if !x.is_finite() {
        return Err(Error::invalid("non-finite input to SON clustering"));
    }
    let m = x.rows();
    let d = x.cols();
    let edges = edge_count(m);

    let mut mu = x.clone();
    let mut eta = EdgeBuf::zeros(edges, d);
    edge_differences(&mu, &mut eta);
    let mut u = EdgeBuf::zeros(edges, d);
    let mut diff = EdgeBuf::zeros(edges, d);
    let mut work = EdgeBuf::zeros(edges, d);
    let mut rhs = Matrix::zeros(m, d);
    let mut node = Matrix::zeros(m, d);
    let mut rho = cfg.rho;

    let mut primal = 0.0;
    let mut dual = 0.0;
    let mut iterations = 0;
    let mut converged = edges == 0 || cfg.lambda == 0.0;

    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        // μ-update
        for (w, (a, b)) in work.data.iter_mut().zip(eta.data.iter().zip(&u.data)) {
            *w = a - b;
        }
        incidence_apply(m, &work, &mut node);
        for (r, (xv, nv)) in rhs
            .as_mut_slice()
            .iter_mut()
            .zip(x.as_slice().iter().zip(node.as_slice()))
        {
            *r = xv + rho * nv;
        }
        laplacian_shift_solve(&rhs, rho, &mut mu);

        // η-update, keeping the previous η in `work` for the dual residual
        edge_differences(&mu, &mut diff);
        work.data.copy_from_slice(&eta.data);
        let t = cfg.lambda / rho;
        for e in 0..edges {
            let (de, ue, ee) = (diff.get(e), u.get(e), eta.get_mut(e));
            for c in 0..d {
                ee[c] = de[c] + ue[c];
            }
            block_soft_threshold(ee, t);
        }

        // u-update and residuals
        let mut r2 = 0.0;
        for ((ud, dd), ed) in u.data.iter_mut().zip(&diff.data).zip(&eta.data) {
            let r = dd - ed;
            *ud += r;
            r2 += r * r;
        }
        primal = r2.sqrt();
        for (w, e) in work.data.iter_mut().zip(&eta.data) {
            *w = e - *w;
        }
        incidence_apply(m, &work, &mut node);
        dual = rho * node.frobenius();

        let primal_scale = diff.frobenius().max(eta.frobenius()).max(1.0);
        incidence_apply(m, &u, &mut node);
        let dual_scale = (rho * node.frobenius()).max(1.0);
        if primal <= cfg.tol * primal_scale && dual <= cfg.tol * dual_scale {
            converged = true;
            break;
        }

        if iterations % 10 == 0 {
            let factor = if primal > 10.0 * dual {
                2.0
            } else if dual > 10.0 * primal {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                u.data.iter_mut().for_each(|v| *v /= factor);
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            solver: "SON ADMM",
            cap: cfg.max_iter,
            detail: format!(" (primal residual {primal:.3e}, dual residual {dual:.3e})"),
        });
    }

    // ζ = ρ·uᵀ, θ = Iζᵀ
    let mut zeta_edges = EdgeBuf::zeros(edges, d);
    for (z, v) in zeta_edges.data.iter_mut().zip(&u.data) {
        *z = rho * v;
    }
    let mut theta = Matrix::zeros(m, d);
    incidence_apply(m, &zeta_edges, &mut theta);
    if cfg.lambda == 0.0 || edges == 0 {
        // Separable objective: μ = X exactly.
        mu = x.clone();
        edge_differences(&mu, &mut eta);
    }

    let merged = fuse_groups(&mu, cfg.merge_tol);
    Ok(SonSolution {
        mu,
        lambda: cfg.lambda,
        merged,
        duals: SonDuals {
            eta: eta.to_columns(),
            theta,
            zeta: zeta_edges.to_columns(),
        },
        iterations,
        primal_residual: primal,
        dual_residual: dual,
    })
}

/// Connected components of the "within `tol`" relation.
fn fuse_groups(mu: &Matrix, tol: f64) -> Vec<Vec<usize>> {
    let m = mu.rows();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..m {
        for j in i + 1..m {
            if dist(mu.row(i), mu.row(j)) <= tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; m];
    for i in 0..m {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(i);
    }
    groups
}

/// How the proximal term in the second KKT condition is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProxVariant {
    /// `max{0, 1 − 1/‖v‖}·v`, the unit-weight prox.
    AsPrinted,
    /// `max{0, 1 − λ/‖v‖}·v`, the prox of `λ‖·‖`.
    LambdaScaled(f64),
}

/// Frobenius norms of the four KKT residuals
/// `θ + μ − X`, `η − 𝒫(η + ζ)`, `μᵀI − η`, `Iζᵀ − θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub prox: f64,
    pub primal: f64,
    pub dual: f64,
}

impl KktResiduals {
    pub fn as_array(&self) -> [f64; 4] {
        [self.stationarity, self.prox, self.primal, self.dual]
    }

    pub fn max(&self) -> f64 {
        self.as_array().into_iter().fold(0.0, f64::max)
    }
}

/// Evaluates the KKT system with explicit incidence-matrix products.
pub fn son_kkt_residuals(
    mu: &Matrix,
    x: &Matrix,
    eta: &Matrix,
    theta: &Matrix,
    zeta: &Matrix,
    prox: ProxVariant,
) -> Result<KktResiduals> {
    let m = x.rows();
    let d = x.cols();
    let edges = edge_count(m);
    let check = |name: &str, mat: &Matrix, rows: usize, cols: usize| {
        if mat.rows() != rows || mat.cols() != cols {
            Err(Error::shape(format!(
                "{name} is {}x{}, expected {rows}x{cols}",
                mat.rows(),
                mat.cols()
            )))
        } else {
            Ok(())
        }
    };
    check("mu", mu, m, d)?;
    check("theta", theta, m, d)?;
    check("eta", eta, d, edges)?;
    check("zeta", zeta, d, edges)?;

    let inc = incidence_matrix(m);
    let stationarity = theta.add(mu)?.sub(x)?.frobenius();
    let primal = mu.transpose().matmul(&inc)?.sub(eta)?.frobenius();
    let dual = inc.matmul(&zeta.transpose())?.sub(theta)?.frobenius();

    let weight = match prox {
        ProxVariant::AsPrinted => 1.0,
        ProxVariant::LambdaScaled(l) => l,
    };
    let mut prox_sq = 0.0;
    for e in 0..edges {
        let v: Vec<f64> = (0..d).map(|c| eta[(c, e)] + zeta[(c, e)]).collect();
        let nv = norm(&v);
        let s = if nv > 0.0 {
            (1.0 - weight / nv).max(0.0)
        } else {
            0.0
        };
        for c in 0..d {
            prox_sq += (eta[(c, e)] - s * v[c]).powi(2);
        }
    }
    Ok(KktResiduals {
        stationarity,
        prox: prox_sq.sqrt(),
        primal,
        dual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn lambda_zero_is_identity() {
        let x = Matrix::from_rows(&[[0.3, 1.0], [2.0, -1.0], [5.0, 5.0]]).unwrap();
        let sol = son_solve(&x, 0.0, 1e-6).unwrap();
        assert_eq!(sol.mu, x);
        assert_eq!(sol.cluster_count(), 3);
    }

    #[test]
    fn large_lambda_fuses_to_grand_mean() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.5], [3.0, -1.0], [0.5, 2.0]]).unwrap();
        let m = x.rows() as f64;
        let mut max_pair = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                max_pair = max_pair.max(dist(x.row(i), x.row(j)));
            }
        }
        let sol = son_solve(&x, 2.0 * max_pair / m, 1e-8).unwrap();
        let mean = x.column_means();
        for r in 0..4 {
            assert!(dist(sol.mu.row(r), &mean) < 1e-5, "{:?}", sol.mu);
        }
        assert_eq!(sol.cluster_count(), 1);
    }

    #[test]
    fn never_worse_than_warm_start() {
        let mut rng = crate::seed::rng(3);
        let x = Matrix::from_fn(12, 2, |_, _| rng.random_range(-2.0..2.0));
        for lambda in [0.01, 0.1, 0.5] {
            let sol = son_solve(&x, lambda, 1e-6).unwrap();
            assert!(son_objective(&x, &sol.mu, lambda) <= son_objective(&x, &x, lambda));
        }
    }

    #[test]
    fn kkt_residuals_at_convergence() {
        let mut rng = crate::seed::rng(4);
        let x = Matrix::from_fn(8, 2, |_, _| rng.random_range(-1.0..1.0));
        let tol = 1e-6;
        for lambda in [0.02, 0.1, 1.0] {
            let sol = son_solve(&x, lambda, tol).unwrap();
            let r = son_kkt_residuals(
                &sol.mu,
                &x,
                &sol.duals.eta,
                &sol.duals.theta,
                &sol.duals.zeta,
                ProxVariant::LambdaScaled(lambda),
            )
            .unwrap();
            assert!(r.max() <= 10.0 * tol, "λ={lambda}: {r:?}");
        }
    }

    #[test]
    fn perturbed_mu_breaks_stationarity() {
        let x = Matrix::column(&[0.0, 1.0, 4.0]);
        let sol = son_solve(&x, 0.1, 1e-8).unwrap();
        let mut mu = sol.mu.clone();
        mu[(1, 0)] += 1.0;
        let r = son_kkt_residuals(
            &mu,
            &x,
            &sol.duals.eta,
            &sol.duals.theta,
            &sol.duals.zeta,
            ProxVariant::AsPrinted,
        )
        .unwrap();
        assert!(r.stationarity >= 0.9);
    }

    #[test]
    fn incidence_gram_is_complete_graph_laplacian() {
        let inc = incidence_matrix(3);
        let gram = inc.matmul(&inc.transpose()).unwrap();
        let want = Matrix::from_fn(3, 3, |i, j| if i == j { 2.0 } else { -1.0 });
        assert_eq!(gram, want);
        for m in [2, 5, 7] {
            let inc = incidence_matrix(m);
            let mut e = 0;
            for i in 0..m {
                for j in i + 1..m {
                    assert_eq!(edge_index(m, i, j), e);
                    assert_eq!((inc[(i, e)], inc[(j, e)]), (1.0, -1.0));
                    e += 1;
                }
            }
        }
    }

    #[test]
    fn kkt_shape_mismatch() {
        let x = Matrix::column(&[0.0, 1.0]);
        let bad = Matrix::zeros(2, 2);
        let eta = Matrix::zeros(1, 1);
        assert!(son_kkt_residuals(&x, &x, &eta, &x, &bad, ProxVariant::AsPrinted).is_err());
    }

    #[test]
    fn fusion_groups_are_transitive() {
        let mu = Matrix::column(&[0.0, 0.00008, 0.00016, 1.0]);
        assert_eq!(fuse_groups(&mu, 1e-4), vec![vec![0, 1, 2], vec![3]]);
    }

    #[test]
    fn rejects_negative_lambda_and_reports_cap() {
        let x = Matrix::column(&[0.0, 1.0, 3.0]);
        assert!(son_solve(&x, -1.0, 1e-6).is_err());
        let cfg = SonConfig {
            max_iter: 2,
            tol: 1e-14,
            ..SonConfig::new(0.3)
        };
        assert!(matches!(
            son_solve_with(&x, &cfg),
            Err(Error::NoConvergence { cap: 2, .. })
        ));
    }
}
