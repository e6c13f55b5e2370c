//! Derivative-free minimisation: a sequential RACOS sampler and the
//! sequential random embedding (SRE) wrapper for high-dimensional problems.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::seed;

/// Axis-aligned feasible region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid(format!(
                "box bounds of lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(Error::invalid(format!(
                    "box coordinate {i}: [{l}, {u}] is not a finite interval"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn max_half_width(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (u - l))
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn clip(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| if l < u { rng.random_range(l..u) } else { l })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RacosConfig {
    /// Size of the positive set.
    pub positive: usize,
    /// Uniform samples drawn before learning starts (positives included).
    pub initial: usize,
    /// Probability of sampling the whole box instead of the learned region.
    pub explore: f64,
    pub shrink_attempts: usize,
    /// Coordinates of the anchor resampled from the learned region per
    /// candidate; 0 resamples all of them.
    pub uncertain_bits: usize,
    /// Candidates generated per round before the archive is updated.
    pub batch: usize,
    /// Evaluate each batch on the rayon pool.
    pub parallel: bool,
}

impl Default for RacosConfig {
    fn default() -> Self {
        Self {
            positive: 5,
            initial: 20,
            explore: 0.1,
            shrink_attempts: 30,
            uncertain_bits: 1,
            batch: 1,
            parallel: false,
        }
    }
}

impl RacosConfig {
    fn validate(&self, budget: usize) -> Result<()> {
        if self.positive == 0 || self.initial <= self.positive {
            return Err(Error::invalid(format!(
                "need 0 < positive ({}) < initial ({})",
                self.positive, self.initial
            )));
        }
        if !(0.0..=1.0).contains(&self.explore) {
            return Err(Error::invalid(format!(
                "explore probability {}",
                self.explore
            )));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if budget < self.initial {
            return Err(Error::invalid(format!(
                "budget {budget} is smaller than the {} initial samples",
                self.initial
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OptState {
    /// Every evaluated point with its value, in evaluation order.
    pub archive: Vec<(Vec<f64>, f64)>,
    /// Archive indices of the positive set.
    pub positive: Vec<usize>,
    /// Archive indices of the negative set.
    pub negative: Vec<usize>,
    /// Region learned in the last round.
    pub region: SearchBox,
    pub seed: u64,
    pub evaluations: usize,
}

impl OptState {
    /// Best value seen after each evaluation.
    pub fn best_trace(&self) -> Vec<f64> {
        self.archive
            .iter()
            .scan(f64::INFINITY, |b, (_, v)| {
                *b = b.min(*v);
                Some(*b)
            })
            .collect()
    }

    fn best(&self) -> usize {
        let mut best = 0;
        for (i, (_, v)) in self.archive.iter().enumerate() {
            if *v < self.archive[best].1 {
                best = i;
            }
        }
        best
    }

    fn worst_of(&self, set: &[usize]) -> usize {
        let mut w = 0;
        for (pos, &i) in set.iter().enumerate() {
            if self.archive[i].1 > self.archive[set[w]].1 {
                w = pos;
            }
        }
        w
    }

    fn admit(&mut self, idx: usize) {
        let v = self.archive[idx].1;
        let wp = self.worst_of(&self.positive);
        if v < self.archive[self.positive[wp]].1 {
            let demoted = std::mem::replace(&mut self.positive[wp], idx);
            let wn = self.worst_of(&self.negative);
            self.negative[wn] = demoted;
        } else {
            let wn = self.worst_of(&self.negative);
            self.negative[wn] = idx;
        }
    }
}

#[derive(Debug, Clone)]
pub struct RacosOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub state: OptState,
}

fn evaluate<F>(f: &F, xs: &[Vec<f64>], parallel: bool) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let clean = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    if parallel {
        xs.par_iter().map(|x| clean(f(x))).collect()
    } else {
        xs.iter().map(|x| clean(f(x))).collect()
    }
}

/// Randomised coordinate shrinking around `anchor` until no negative lies
/// inside the region or the attempt limit is hit.
fn learn_region(
    bounds: &SearchBox,
    anchor: &[f64],
    negatives: &[&[f64]],
    attempts: usize,
    rng: &mut ChaCha8Rng,
) -> SearchBox {
    let mut region = bounds.clone();
    let d = bounds.dim();
    for _ in 0..attempts {
        let inside: Vec<&[f64]> = negatives
            .iter()
            .copied()
            .filter(|x| region.contains(x))
            .collect();
        if inside.is_empty() {
            break;
        }
        let neg = inside[rng.random_range(0..inside.len())];
        let k = rng.random_range(0..d);
        let r: f64 = rng.random();
        if neg[k] > anchor[k] {
            region.upper[k] = anchor[k] + r * (neg[k] - anchor[k]);
        } else if neg[k] < anchor[k] {
            region.lower[k] = neg[k] + (1.0 - r) * (anchor[k] - neg[k]);
        }
    }
    region
}

fn sample_around(
    region: &SearchBox,
    anchor: &[f64],
    bits: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let d = region.dim();
    if bits == 0 || bits >= d {
        return region.sample(rng);
    }
    let mut x = anchor.to_vec();
    for k in rand::seq::index::sample(rng, d, bits) {
        let (l, u) = (region.lower[k], region.upper[k]);
        x[k] = if l < u { rng.random_range(l..u) } else { l };
    }
    x
}

pub fn racos_minimize<F>(
    f: F,
    bounds: &SearchBox,
    budget: usize,
    cfg: &RacosConfig,
    seed: u64,
) -> Result<RacosOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    racos_minimize_from(f, bounds, budget, cfg, seed, &[])
}

/// Like [`racos_minimize`], with `starts` (clipped to the box) taking the
/// place of the first uniform initial samples.
pub fn racos_minimize_from<F>(
    f: F,
    bounds: &SearchBox,
    budget: usize,
    cfg: &RacosConfig,
    seed: u64,
    starts: &[Vec<f64>],
) -> Result<RacosOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate(budget)?;
    if starts.len() > cfg.initial || starts.iter().any(|s| s.len() != bounds.dim()) {
        return Err(Error::invalid(
            "start points do not fit the initial batch or the box",
        ));
    }
    let mut rng = seed::rng(seed);

    let initial: Vec<Vec<f64>> = (0..cfg.initial)
        .map(|i| match starts.get(i) {
            Some(s) => {
                let mut s = s.clone();
                bounds.clip(&mut s);
                s
            }
            None => bounds.sample(&mut rng),
        })
        .collect();
    let values = evaluate(&f, &initial, cfg.parallel);
    let mut state = OptState {
        archive: initial.into_iter().zip(values).collect(),
        positive: Vec::new(),
        negative: Vec::new(),
        region: bounds.clone(),
        seed,
        evaluations: cfg.initial,
    };
    let mut order: Vec<usize> = (0..cfg.initial).collect();
    order.sort_by(|&a, &b| {
        state.archive[a]
            .1
            .total_cmp(&state.archive[b].1)
            .then(a.cmp(&b))
    });
    state.positive = order[..cfg.positive].to_vec();
    state.negative = order[cfg.positive..].to_vec();

    while state.evaluations < budget {
        let round = cfg.batch.min(budget - state.evaluations);
        let mut candidates = Vec::with_capacity(round);
        for _ in 0..round {
            if rng.random::<f64>() < cfg.explore {
                candidates.push(bounds.sample(&mut rng));
                continue;
            }
            let anchor_idx = state.positive[rng.random_range(0..state.positive.len())];
            let anchor = state.archive[anchor_idx].0.clone();
            let negatives: Vec<&[f64]> = state
                .negative
                .iter()
                .map(|&i| state.archive[i].0.as_slice())
                .collect();
            state.region = learn_region(bounds, &anchor, &negatives, cfg.shrink_attempts, &mut rng);
            candidates.push(sample_around(
                &state.region,
                &anchor,
                cfg.uncertain_bits,
                &mut rng,
            ));
        }
        let values = evaluate(&f, &candidates, cfg.parallel);
        for (x, v) in candidates.into_iter().zip(values) {
            state.archive.push((x, v));
            state.evaluations += 1;
            state.admit(state.archive.len() - 1);
        }
    }

    let best = state.best();
    let (x, value) = state.archive[best].clone();
    Ok(RacosOutcome { x, value, state })
}

/// One random linear embedding `x = clip(offset + A·w)`.
#[derive(Debug, Clone)]
pub struct EmbeddingStage {
    /// D×n′ with entries drawn from N(0, 1/n′).
    pub projection: Matrix,
    pub offset: Vec<f64>,
}

impl EmbeddingStage {
    pub fn draw(offset: Vec<f64>, n_prime: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let normal = Normal::new(0.0, (1.0 / n_prime as f64).sqrt()).expect("positive variance");
        let projection = Matrix::from_fn(offset.len(), n_prime, |_, _| normal.sample(&mut rng));
        Self { projection, offset }
    }

    pub fn lift(&self, w: &[f64], bounds: &SearchBox) -> Vec<f64> {
        let mut x = self.offset.clone();
        for (r, xr) in x.iter_mut().enumerate() {
            *xr += self
                .projection
                .row(r)
                .iter()
                .zip(w)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
        bounds.clip(&mut x);
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SreConfig {
    pub n_prime: usize,
    pub stages: usize,
    /// Evaluations per stage.
    pub inner_budget: usize,
    pub racos: RacosConfig,
    /// Half-width of the low-dimensional box, in units of the widest
    /// half-width of the full box.
    pub embed_scale: f64,
    /// First offset; the centre of the box when absent.
    pub start: Option<Vec<f64>>,
}

impl SreConfig {
    pub fn new(n_prime: usize, stages: usize, inner_budget: usize) -> Self {
        Self {
            n_prime,
            stages,
            inner_budget,
            racos: RacosConfig::default(),
            embed_scale: 1.0,
            start: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SreOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Best value after each stage.
    pub stage_values: Vec<f64>,
}

/// Seeds for the projection and the inner RACOS run of stage `s`.
pub fn sre_stage_seeds(seed: u64, stage: usize) -> (u64, u64) {
    let base = seed::derive(seed, 0x5EED_0000 + stage as u64);
    (seed::derive(base, 1), seed::derive(base, 2))
}

/// Minimise `f` over `bounds` (dimension D) through `cfg.stages` random
/// embeddings of dimension `cfg.n_prime`. Each stage's search includes
/// `w = 0`, i.e. the current offset, so the result never regresses.
pub fn sre_minimize<F>(f: F, bounds: &SearchBox, cfg: &SreConfig, seed: u64) -> Result<SreOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = bounds.dim();
    if cfg.n_prime == 0 || cfg.n_prime >= dim {
        return Err(Error::invalid(format!(
            "embedding dimension {} must lie in 1..{dim}",
            cfg.n_prime
        )));
    }
    if cfg.stages == 0 {
        return Err(Error::invalid("need at least one embedding stage"));
    }
    if !(cfg.embed_scale > 0.0) {
        return Err(Error::invalid("embedding scale must be positive"));
    }
    let mut offset = match &cfg.start {
        Some(s) if s.len() == dim => {
            let mut s = s.clone();
            bounds.clip(&mut s);
            s
        }
        Some(s) => {
            return Err(Error::shape(format!(
                "start has {} coordinates, box {dim}",
                s.len()
            )))
        }
        None => bounds.center(),
    };
    let half = cfg.embed_scale * bounds.max_half_width().max(f64::MIN_POSITIVE);
    let low = SearchBox::cube(cfg.n_prime, -half, half)?;

    let mut best_value = f64::INFINITY;
    let mut evaluations = 0;
    let mut stage_values = Vec::with_capacity(cfg.stages);
    for s in 0..cfg.stages {
        let (embed_seed, racos_seed) = sre_stage_seeds(seed, s);
        let stage = EmbeddingStage::draw(offset.clone(), cfg.n_prime, embed_seed);
        let out = racos_minimize_from(
            |w: &[f64]| f(&stage.lift(w, bounds)),
            &low,
            cfg.inner_budget,
            &cfg.racos,
            racos_seed,
            &[vec![0.0; cfg.n_prime]],
        )?;
        evaluations += out.state.evaluations;
        if out.value < best_value {
            best_value = out.value;
            offset = stage.lift(&out.x, bounds);
        }
        stage_values.push(best_value);
    }
    Ok(SreOutcome {
        x: offset,
        value: best_value,
        evaluations,
        stage_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn box_validation() {
        assert!(SearchBox::new(vec![0.0], vec![-1.0]).is_err());
        assert!(SearchBox::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(SearchBox::new(vec![f64::NEG_INFINITY], vec![1.0]).is_err());
        assert!(SearchBox::new(vec![2.0], vec![2.0]).is_ok());
    }

    #[test]
    fn sphere_ten_d() {
        let b = SearchBox::cube(10, -1.0, 1.0).unwrap();
        let vals: Vec<f64> = (0..10)
            .map(|s| {
                racos_minimize(sphere, &b, 2000, &RacosConfig::default(), s)
                    .unwrap()
                    .value
            })
            .collect();
        let hits = vals.iter().filter(|&&v| v <= 0.05).count();
        assert!(hits >= 9, "{hits}/10 {vals:?}");
    }

    #[test]
    fn flat_objective() {
        let b = SearchBox::cube(3, 0.0, 1.0).unwrap();
        let out = racos_minimize(|_: &[f64]| 4.0, &b, 60, &RacosConfig::default(), 1).unwrap();
        assert_eq!(out.value, 4.0);
        assert_eq!(out.x, out.state.archive[0].0);
    }

    #[test]
    fn initial_only_budget_is_uniform_batch() {
        let b = SearchBox::cube(2, -1.0, 1.0).unwrap();
        let cfg = RacosConfig::default();
        let out = racos_minimize(sphere, &b, cfg.initial, &cfg, 9).unwrap();
        let mut rng = seed::rng(9);
        let batch: Vec<Vec<f64>> = (0..cfg.initial).map(|_| b.sample(&mut rng)).collect();
        let best = batch
            .iter()
            .min_by(|a, c| sphere(a).total_cmp(&sphere(c)))
            .unwrap();
        assert_eq!(&out.x, best);
        assert_eq!(out.state.evaluations, cfg.initial);
    }

    #[test]
    fn budget_respected_and_trace_monotone() {
        let b = SearchBox::cube(4, -2.0, 3.0).unwrap();
        let calls = AtomicUsize::new(0);
        let f = |x: &[f64]| {
            calls.fetch_add(1, Ordering::Relaxed);
            assert!(b.contains(x));
            sphere(x)
        };
        let out = racos_minimize(f, &b, 337, &RacosConfig::default(), 3).unwrap();
        assert_eq!(calls.load(Ordering::Relaxed), 337);
        assert_eq!(out.state.evaluations, 337);
        let trace = out.state.best_trace();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*trace.last().unwrap(), out.value);
        let worst_pos = out
            .state
            .positive
            .iter()
            .map(|&i| out.state.archive[i].1)
            .fold(f64::MIN, f64::max);
        assert!(out
            .state
            .negative
            .iter()
            .all(|&i| out.state.archive[i].1 >= worst_pos));
    }

    #[test]
    fn deterministic_and_batch_parallel_consistent() {
        let b = SearchBox::cube(5, -1.0, 1.0).unwrap();
        let cfg = RacosConfig::default();
        let a = racos_minimize(sphere, &b, 300, &cfg, 11).unwrap();
        let c = racos_minimize(sphere, &b, 300, &cfg, 11).unwrap();
        assert_eq!(a.x, c.x);
        assert_eq!(a.state.archive, c.state.archive);
        let seq = RacosConfig { batch: 4, ..cfg };
        let par = RacosConfig {
            batch: 4,
            parallel: true,
            ..cfg
        };
        let s = racos_minimize(sphere, &b, 300, &seq, 11).unwrap();
        let p = racos_minimize(sphere, &b, 300, &par, 11).unwrap();
        assert_eq!(s.state.archive, p.state.archive);
    }

    #[test]
    fn bad_budget_rejected() {
        let b = SearchBox::cube(2, -1.0, 1.0).unwrap();
        assert!(racos_minimize(sphere, &b, 5, &RacosConfig::default(), 0).is_err());
    }

    fn subspace(x: &[f64]) -> f64 {
        (x[3] - 0.5).powi(2) + (x[17] + 0.3).powi(2)
    }

    #[test]
    fn sre_low_effective_dimension() {
        let b = SearchBox::cube(200, -1.0, 1.0).unwrap();
        let cfg = SreConfig::new(10, 3, 400);
        let start = subspace(&b.center());
        let ratios: Vec<f64> = (0..10)
            .map(|s| sre_minimize(subspace, &b, &cfg, s).unwrap().value / start)
            .collect();
        let hits = ratios.iter().filter(|&&r| r <= 0.1).count();
        assert!(hits >= 8, "{hits}/10 {ratios:?}");
    }

    #[test]
    fn sre_rejects_degenerate_embedding() {
        let b = SearchBox::cube(10, -1.0, 1.0).unwrap();
        assert!(sre_minimize(sphere, &b, &SreConfig::new(10, 1, 50), 0).is_err());
        assert!(sre_minimize(sphere, &b, &SreConfig::new(3, 0, 50), 0).is_err());
    }

    #[test]
    fn single_stage_is_one_embedded_run() {
        let b = SearchBox::cube(30, -1.0, 1.0).unwrap();
        let cfg = SreConfig::new(4, 1, 120);
        let got = sre_minimize(sphere, &b, &cfg, 42).unwrap();
        let (es, rs) = sre_stage_seeds(42, 0);
        let stage = EmbeddingStage::draw(b.center(), 4, es);
        let low = SearchBox::cube(4, -1.0, 1.0).unwrap();
        let run = racos_minimize_from(
            |w: &[f64]| sphere(&stage.lift(w, &b)),
            &low,
            120,
            &cfg.racos,
            rs,
            &[vec![0.0; 4]],
        )
        .unwrap();
        assert_eq!(got.value, run.value);
        assert_eq!(got.x, stage.lift(&run.x, &b));
    }

    #[test]
    fn sre_never_worse_than_start() {
        let b = SearchBox::cube(20, -1.0, 1.0).unwrap();
        let mut cfg = SreConfig::new(3, 4, 25);
        cfg.start = Some(vec![0.0; 20]);
        let out = sre_minimize(sphere, &b, &cfg, 5).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.stage_values.windows(2).all(|w| w[1] <= w[0]));
    }
}
