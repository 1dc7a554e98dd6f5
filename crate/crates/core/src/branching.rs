//! The two-type F-branching process that the exploration dominates.
//!
//! Type I nodes stand for positive literals and type II for negative ones. A
//! type-I node begets `(F1, F0)` children of types (I, II), a type-II node
//! `(F2, F1)`, where `F_i` is a Poisson law with mean `gamma_i =
//! (1 - delta) alpha_i / 2`, truncated at a cutoff `c_i` and scaled by
//! `1 - beta/2`, the leftover mass going to zero.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::exploration::{revealed_type, Exploration, LazySource, VarSet};
use crate::formula::{Literal, ModelParams, Polarity};
use crate::stats::{self, Z95};
use crate::{seed, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OffspringDist {
    pub gamma: f64,
    pub beta: f64,
    pub cutoff: usize,
    /// `pmf[k]` for `0 <= k <= cutoff`.
    pub pmf: Vec<f64>,
    #[serde(skip)]
    cdf: Vec<f64>,
    pub mean: f64,
}

impl OffspringDist {
    pub fn point_mass_zero(beta: f64) -> Self {
        OffspringDist { gamma: 0.0, beta, cutoff: 0, pmf: vec![1.0], cdf: vec![1.0], mean: 0.0 }
    }

    /// Inverse transform: smallest `k` with `P(F <= k) > u`.
    pub fn quantile(&self, u: f64) -> usize {
        self.cdf.iter().position(|&c| c > u).unwrap_or(self.cutoff)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.quantile(rng.random::<f64>())
    }

    /// Probability generating function.
    pub fn pgf(&self, s: f64) -> f64 {
        self.pmf.iter().rev().fold(0.0, |acc, &p| acc * s + p)
    }
}

pub fn make_offspring_dist(alpha_i: f64, delta: f64, beta: f64) -> Result<OffspringDist> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParams(format!("beta must lie in (0, 1), got {beta}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParams(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(alpha_i >= 0.0 && alpha_i.is_finite()) {
        return Err(Error::InvalidParams(format!("alpha must be finite and nonnegative, got {alpha_i}")));
    }
    let gamma = (1.0 - delta) * alpha_i / 2.0;
    if gamma == 0.0 {
        return Ok(OffspringDist::point_mass_zero(beta));
    }
    let scale = 1.0 - beta / 2.0;
    let target = (1.0 - beta) * gamma;
    let mut pmf = vec![0.0];
    let mut term = (-gamma).exp();
    let mut mean = 0.0;
    let mut k = 0usize;
    // The untruncated scaled mean is (1 - beta/2) gamma > target, so this ends.
    while mean <= target {
        k += 1;
        term *= gamma / k as f64;
        let p = scale * term;
        pmf.push(p);
        mean += k as f64 * p;
    }
    pmf[0] = 1.0 - pmf[1..].iter().sum::<f64>();
    let mut cdf = Vec::with_capacity(pmf.len());
    let mut acc = 0.0;
    for &p in &pmf {
        acc += p;
        cdf.push(acc);
    }
    *cdf.last_mut().expect("nonempty") = 1.0;
    Ok(OffspringDist { gamma, beta, cutoff: k, pmf, cdf, mean })
}

/// `P(Bin(floor(n (1 - delta)), alpha_i / 2n) = k) >= P(F = k)` for every
/// `1 <= k <= c`.
pub fn dominance_pmf_check(dist: &OffspringDist, n: usize, alpha_i: f64, delta: f64) -> bool {
    if dist.cutoff == 0 {
        return true;
    }
    let p = alpha_i / (2.0 * n as f64);
    if p > 1.0 {
        return false;
    }
    let trials = (n as f64 * (1.0 - delta)).floor() as u64;
    let bin = stats::binomial_pmf_prefix(trials, p, dist.cutoff as u64);
    (1..=dist.cutoff).all(|k| bin.get(k).copied().unwrap_or(0.0) >= dist.pmf[k])
}

/// Smallest power of two `n >= 2` at which [`dominance_pmf_check`] holds.
pub fn dominance_threshold(dist: &OffspringDist, alpha_i: f64, delta: f64) -> Result<usize> {
    let mut n = 2usize;
    while !dominance_pmf_check(dist, n, alpha_i, delta) {
        n = n
            .checked_mul(2)
            .filter(|&m| m <= 1 << 40)
            .ok_or_else(|| Error::Precondition("no dominance threshold below 2^40".into()))?;
    }
    Ok(n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NodeType {
    #[serde(rename = "I")]
    One,
    #[serde(rename = "II")]
    Two,
}

impl NodeType {
    pub fn polarity(self) -> Polarity {
        match self {
            NodeType::One => Polarity::Positive,
            NodeType::Two => Polarity::Negative,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FBranchingConfig {
    pub params: ModelParams,
    pub delta: f64,
    pub beta: f64,
    /// `F0, F1, F2`.
    pub offspring: [OffspringDist; 3],
    pub m0: [[f64; 2]; 2],
    pub rho0: f64,
}

impl FBranchingConfig {
    pub fn new(params: &ModelParams, delta: f64, beta: f64) -> Result<Self> {
        params.validate()?;
        let make = |i: usize| make_offspring_dist(params.alpha(i), delta, beta);
        let offspring = [make(0)?, make(1)?, make(2)?];
        let [m0, m1, m2] = [offspring[0].mean, offspring[1].mean, offspring[2].mean];
        Ok(FBranchingConfig {
            params: *params,
            delta,
            beta,
            offspring,
            m0: [[m1, m0], [m2, m1]],
            rho0: m1 + (m0 * m2).sqrt(),
        })
    }

    /// `delta = (1 - 1/rho) / 2`, `beta = (1 - 1/((1 - delta) rho)) / 2`.
    pub fn auto(params: &ModelParams) -> Result<Self> {
        let (delta, beta) = auto_delta_beta(params.rho())?;
        Self::new(params, delta, beta)
    }

    pub fn means(&self) -> [f64; 3] {
        [self.offspring[0].mean, self.offspring[1].mean, self.offspring[2].mean]
    }

    /// Some offspring law is the point mass at zero.
    pub fn is_degenerate(&self) -> bool {
        self.offspring.iter().any(|d| d.gamma == 0.0)
    }

    /// Laws of (type-I, type-II) children of a node of the given type.
    pub fn children(&self, ty: NodeType) -> (&OffspringDist, &OffspringDist) {
        match ty {
            NodeType::One => (&self.offspring[1], &self.offspring[0]),
            NodeType::Two => (&self.offspring[2], &self.offspring[1]),
        }
    }

    /// Largest dominance threshold over the three laws.
    pub fn dominance_threshold(&self) -> Result<usize> {
        let mut n0 = 2;
        for (i, d) in self.offspring.iter().enumerate() {
            n0 = n0.max(dominance_threshold(d, self.params.alpha(i), self.delta)?);
        }
        Ok(n0)
    }

    pub fn dominates_at(&self, n: usize) -> bool {
        (0..3).all(|i| dominance_pmf_check(&self.offspring[i], n, self.params.alpha(i), self.delta))
    }

    pub fn supercrit(&self) -> Result<SupercritParams> {
        let [m0, _, m2] = self.means();
        if self.rho0 <= 1.0 || m0 * m2 == 0.0 {
            return Err(Error::Precondition(format!(
                "need rho0 > 1 and m0 m2 > 0, got rho0 = {}, m0 = {m0}, m2 = {m2}",
                self.rho0
            )));
        }
        let norm = (m0 + m2).sqrt();
        let (a, b) = (m0.sqrt() / norm, m2.sqrt() / norm);
        Ok(SupercritParams { a, b, mu: (self.rho0 - 1.0) * a.min(b) })
    }
}

pub fn auto_delta_beta(rho: f64) -> Result<(f64, f64)> {
    if rho.is_nan() || rho <= 1.0 {
        return Err(Error::InvalidParams(format!("auto-derived delta and beta need rho > 1, got {rho}")));
    }
    let delta = (1.0 - 1.0 / rho) / 2.0;
    let beta = (1.0 - 1.0 / ((1.0 - delta) * rho)) / 2.0;
    Ok((delta, beta))
}

/// Positive eigenvector `(a, b)` of `M0` for `rho0` with `a^2 + b^2 = 1`, and
/// the drift `mu = (rho0 - 1) min(a, b)` of `Z = a X1 + b X2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupercritParams {
    pub a: f64,
    pub b: f64,
    pub mu: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TraversalState {
    pub x1: u64,
    pub x2: u64,
    pub t: usize,
}

impl TraversalState {
    pub fn start(ty: NodeType) -> Self {
        match ty {
            NodeType::One => TraversalState { x1: 1, x2: 0, t: 0 },
            NodeType::Two => TraversalState { x1: 0, x2: 1, t: 0 },
        }
    }

    pub fn is_absorbed(&self) -> bool {
        self.x1 == 0 && self.x2 == 0
    }

    /// Type of the next visited node; type I is preferred.
    pub fn next_visit(&self) -> Option<NodeType> {
        if self.x1 > 0 {
            Some(NodeType::One)
        } else if self.x2 > 0 {
            Some(NodeType::Two)
        } else {
            None
        }
    }

    /// Visits one node of type `ty` and adds its children.
    pub fn advance(&mut self, ty: NodeType, kids: (usize, usize)) {
        match ty {
            NodeType::One => self.x1 -= 1,
            NodeType::Two => self.x2 -= 1,
        }
        self.x1 += kids.0 as u64;
        self.x2 += kids.1 as u64;
        self.t += 1;
    }
}

/// `T` steps of the traversal from a single node, including `X(0)`. Stops
/// early once absorbed.
pub fn simulate_traversal(cfg: &FBranchingConfig, start: NodeType, steps: usize, seed: u64) -> Result<Vec<TraversalState>> {
    if steps == 0 {
        return Err(Error::Precondition("traversal needs at least one step".into()));
    }
    let mut rng = seed::rng_for(seed, &[]);
    let mut x = TraversalState::start(start);
    let mut out = vec![x];
    while x.t < steps {
        let Some(ty) = x.next_visit() else { break };
        let (d1, d2) = cfg.children(ty);
        let kids = (d1.sample(&mut rng), d2.sample(&mut rng));
        x.advance(ty, kids);
        out.push(x);
    }
    Ok(out)
}

fn run_to_horizon(cfg: &FBranchingConfig, start: NodeType, steps: usize, seed: u64) -> TraversalState {
    let mut rng = seed::rng_for(seed, &[]);
    let mut x = TraversalState::start(start);
    while x.t < steps {
        let Some(ty) = x.next_visit() else { break };
        let (d1, d2) = cfg.children(ty);
        let kids = (d1.sample(&mut rng), d2.sample(&mut rng));
        x.advance(ty, kids);
    }
    x
}

/// Minimal fixed point of `s = f(s)` for the pair of generating functions,
/// by damped iteration from zero.
pub fn extinction_fixed_point(cfg: &FBranchingConfig) -> [f64; 2] {
    const OMEGA: f64 = 0.5;
    let [f0, f1, f2] = &cfg.offspring;
    let mut s = [0.0f64, 0.0];
    for _ in 0..100_000 {
        let g = [f1.pgf(s[0]) * f0.pgf(s[1]), f2.pgf(s[0]) * f1.pgf(s[1])];
        let next = [s[0] + OMEGA * (g[0] - s[0]), s[1] + OMEGA * (g[1] - s[1])];
        let step = (next[0] - s[0]).abs().max((next[1] - s[1]).abs());
        s = next;
        if step < 1e-12 {
            break;
        }
    }
    s
}

/// Extinction probabilities through the even-step single-type process when
/// `alpha1 = 0`: `q1` solves `s = G0(G2(s))` and `q2 = G2(q1)`.
pub fn extinction_even_step(cfg: &FBranchingConfig) -> Option<[f64; 2]> {
    if cfg.offspring[1].gamma != 0.0 {
        return None;
    }
    let [f0, _, f2] = &cfg.offspring;
    let mut s = 0.0f64;
    for _ in 0..100_000 {
        let next = s + 0.5 * (f0.pgf(f2.pgf(s)) - s);
        let step = (next - s).abs();
        s = next;
        if step < 1e-12 {
            break;
        }
    }
    Some([s, f2.pgf(s)])
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProportionEstimate {
    pub hits: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl ProportionEstimate {
    pub fn new(hits: u64, trials: u64) -> Self {
        let p_hat = hits as f64 / trials as f64;
        let (ci_lo, ci_hi) = stats::wilson(hits, trials, Z95);
        ProportionEstimate { hits, trials, p_hat, se: (p_hat * (1.0 - p_hat) / trials as f64).sqrt(), ci_lo, ci_hi }
    }

    /// `|p_hat - p| <= k` standard errors, the error floored at one hit.
    pub fn agrees_with(&self, p: f64, k: f64) -> bool {
        let floor = 1.0 / self.trials as f64;
        let se = (p * (1.0 - p) / self.trials as f64).sqrt().max(self.se).max(floor);
        (self.p_hat - p).abs() <= k * se
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtinctionEstimate {
    pub q1: ProportionEstimate,
    pub q2: ProportionEstimate,
    pub fixed_point: [f64; 2],
    pub even_step: Option<[f64; 2]>,
    pub horizon: usize,
}

impl ExtinctionEstimate {
    pub fn max_q_hat(&self) -> f64 {
        self.q1.p_hat.max(self.q2.p_hat)
    }
}

/// Monte Carlo extinction frequencies from each single ancestor type, counted
/// as absorption within `horizon` steps.
pub fn estimate_extinction(cfg: &FBranchingConfig, trials: usize, horizon: usize, master_seed: u64) -> Result<ExtinctionEstimate> {
    if trials == 0 || horizon == 0 {
        return Err(Error::Precondition("trials and horizon must be positive".into()));
    }
    let count = |ty: NodeType, tag: u64| -> u64 {
        (0..trials)
            .into_par_iter()
            .filter(|&i| run_to_horizon(cfg, ty, horizon, seed::derive(master_seed, &[tag, i as u64])).is_absorbed())
            .count() as u64
    };
    Ok(ExtinctionEstimate {
        q1: ProportionEstimate::new(count(NodeType::One, 1), trials as u64),
        q2: ProportionEstimate::new(count(NodeType::Two, 2), trials as u64),
        fixed_point: extinction_fixed_point(cfg),
        even_step: extinction_even_step(cfg),
        horizon,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GrowthEstimate {
    pub start: NodeType,
    pub horizon: usize,
    /// `mu T / 2`.
    pub level: f64,
    pub estimate: ProportionEstimate,
}

/// Estimates `P(X1(T) + X2(T) >= mu T / 2)` from a single node of type
/// `start`.
pub fn linear_growth_check(cfg: &FBranchingConfig, start: NodeType, horizon: usize, trials: usize, master_seed: u64) -> Result<GrowthEstimate> {
    let sp = cfg.supercrit()?;
    if trials == 0 || horizon == 0 {
        return Err(Error::Precondition("trials and horizon must be positive".into()));
    }
    let level = sp.mu * horizon as f64 / 2.0;
    let tag = start as u64;
    let hits = (0..trials)
        .into_par_iter()
        .filter(|&i| {
            let x = run_to_horizon(cfg, start, horizon, seed::derive(master_seed, &[tag, i as u64]));
            (x.x1 + x.x2) as f64 >= level
        })
        .count() as u64;
    Ok(GrowthEstimate { start, horizon, level, estimate: ProportionEstimate::new(hits, trials as u64) })
}

#[derive(Clone, Debug)]
pub struct CoupledRun {
    pub trace: crate::exploration::ExplorationTrace,
    pub trajectory: Vec<TraversalState>,
    /// `(a+, a-) >= X(t)` componentwise for every `t <= tau`.
    pub dominated: bool,
    /// First step where the comparison failed, if any.
    pub violation: Option<usize>,
}

/// Exploration of the random model and the F-branching traversal, driven by
/// one uniform per offspring count. The Binomial count is the exploration's
/// and the `F` count the traversal's; the exploration pops the literal type
/// the traversal visits.
pub fn coupled_run(
    n: usize,
    cfg: &FBranchingConfig,
    restriction: Arc<VarSet>,
    start: Literal,
    horizon: usize,
    run_seed: u64,
) -> Result<CoupledRun> {
    let params = cfg.params;
    params.check_for(n)?;
    if restriction.n() != n {
        return Err(Error::Precondition("restriction is over a different n".into()));
    }
    if !cfg.dominates_at(n) {
        return Err(Error::Precondition(format!("n = {n} is below the dominance threshold")));
    }
    let alpha = params.alpha_max();
    if (restriction.len() as f64) < (1.0 - cfg.delta / 2.0) * n as f64 {
        return Err(Error::Precondition("restriction smaller than (1 - delta/2) n".into()));
    }
    if cfg.delta * (n as f64) / 2.0 < 2.0 * alpha * horizon as f64 + 1.0 {
        return Err(Error::Precondition("n too small for the horizon: need delta n / 2 >= 2 alpha T + 1".into()));
    }
    let mut rng = seed::rng_for(run_seed, &[]);
    let mut source = LazySource::new(n, params, seed::rng_for(run_seed, &[1]))?;
    let mut ex = Exploration::new(restriction, start)?;
    let start_ty = if start.is_positive() { NodeType::One } else { NodeType::Two };
    let mut x = TraversalState::start(start_ty);
    let mut trajectory = vec![x];
    let mut violation = None;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    while ex.t() < horizon {
        let Some(ty) = x.next_visit() else { break };
        let Some(current) = ex.pop_polarity(ty.polarity()) else {
            violation.get_or_insert(ex.t());
            break;
        };
        let u = ex.alive_count() as u64;
        let (u1, u2): (f64, f64) = (rng.random(), rng.random());
        let (d1, d2) = cfg.children(ty);
        let p_pos = params.clause_prob(revealed_type(current, Polarity::Positive), n);
        let p_neg = params.clause_prob(revealed_type(current, Polarity::Negative), n);
        let k_pos = stats::binomial_quantile(u, p_pos, u1) as usize;
        let k_neg = stats::binomial_quantile(u, p_neg, u2) as usize;
        pos.clear();
        neg.clear();
        source.reveal_counts(&ex.alive(), k_pos, k_neg, &mut pos, &mut neg);
        ex.expose(current, &pos, &neg);
        x.advance(ty, (d1.quantile(u1), d2.quantile(u2)));
        trajectory.push(x);
        let (a_pos, a_neg) = ex.active_counts();
        if (a_pos as u64) < x.x1 || (a_neg as u64) < x.x2 {
            violation.get_or_insert(ex.t());
        }
    }
    let trace = ex.finish(horizon, alpha);
    let dominated = violation.is_none_or(|t| t > trace.tau);
    Ok(CoupledRun { trace, trajectory, dominated, violation })
}
