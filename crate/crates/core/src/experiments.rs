//! Monte Carlo experiments: satisfiability sweeps, threshold location and the
//! round bootstrap that certifies unsatisfiability above the threshold.

use std::collections::HashSet;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::branching::auto_delta_beta;
use crate::digraph::{is_satisfiable, ImplicationDigraph};
use crate::exploration::{
    find_closing, horizon_for, run_round, ClauseSource, DigraphSource, LazySource, RoundConfig, RoundVerdict, VarSet,
};
use crate::formula::{sample_formula, Formula, Literal, ModelParams};
use crate::stats::{self, LogisticFit, Z95};
use crate::{seed, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub rho: f64,
    pub trials: u64,
    pub sat: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Wall time, or 0 unless timing was requested.
    pub seconds: f64,
}

impl SweepRow {
    pub fn params(&self) -> ModelParams {
        ModelParams { alpha0: self.alpha0, alpha1: self.alpha1, alpha2: self.alpha2 }
    }
}

/// Satisfiable fraction over `trials` formulas; trial `i` of row `row` uses
/// the seed `derive(seed, [row, i])`.
pub fn estimate_row(n: usize, params: &ModelParams, trials: u64, master_seed: u64, row: u64, timing: bool) -> Result<SweepRow> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    params.check_for(n)?;
    let clock = Instant::now();
    let sat = (0..trials)
        .into_par_iter()
        .map(|i| {
            let f = sample_formula(n, params, seed::derive(master_seed, &[row, i]))?;
            Ok(u64::from(is_satisfiable(&f).satisfiable))
        })
        .sum::<Result<u64>>()?;
    let (ci_lo, ci_hi) = stats::wilson(sat, trials, Z95);
    Ok(SweepRow {
        n,
        alpha0: params.alpha0,
        alpha1: params.alpha1,
        alpha2: params.alpha2,
        rho: params.rho(),
        trials,
        sat,
        p_hat: sat as f64 / trials as f64,
        ci_lo,
        ci_hi,
        seconds: if timing { clock.elapsed().as_secs_f64() } else { 0.0 },
    })
}

pub fn estimate_sat_probability(n: usize, params: &ModelParams, trials: u64, master_seed: u64) -> Result<SweepRow> {
    estimate_row(n, params, trials, master_seed, 0, false)
}

/// A sweep over sizes and either one parameter point or a ray
/// `lambda * direction`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: Vec<usize>,
    #[serde(default)]
    pub alphas: Option<[f64; 3]>,
    #[serde(default)]
    pub ray: Option<[f64; 3]>,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.n.is_empty() || self.n.iter().any(|&n| n < 2) {
            return bad("every n must be at least 2".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        match (self.alphas, self.ray) {
            (Some(a), None) => {
                if !self.lambdas.is_empty() {
                    return bad("lambdas only apply to a ray".into());
                }
                ModelParams::new(a[0], a[1], a[2])?;
            }
            (None, Some(r)) => {
                ModelParams::new(r[0], r[1], r[2])?;
                if self.lambdas.is_empty() {
                    return bad("a ray needs at least one lambda".into());
                }
                if self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                    return bad("lambdas must be finite and nonnegative".into());
                }
                if self.lambdas.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("lambda grid must be strictly increasing".into());
                }
            }
            _ => return bad("give exactly one of alphas or ray".into()),
        }
        for &n in &self.n {
            for p in self.points() {
                p.check_for(n)?;
            }
        }
        Ok(())
    }

    /// Parameter points in row order.
    pub fn points(&self) -> Vec<ModelParams> {
        let mk = |a: [f64; 3]| ModelParams { alpha0: a[0], alpha1: a[1], alpha2: a[2] };
        match (self.alphas, self.ray) {
            (Some(a), _) => vec![mk(a)],
            (None, Some(r)) => self.lambdas.iter().map(|&l| mk(r).scaled(l)).collect(),
            (None, None) => Vec::new(),
        }
    }
}

/// One row per `(n, point)`, `n` outermost.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let points = cfg.points();
    let mut rows = Vec::with_capacity(cfg.n.len() * points.len());
    for &n in &cfg.n {
        for p in &points {
            rows.push(estimate_row(n, p, cfg.trials, cfg.seed, rows.len() as u64, cfg.timing)?);
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ThresholdResult {
    Crossing {
        lambda: f64,
        rho_at_crossing: f64,
        bracket: [f64; 2],
        evaluations: Vec<SweepRow>,
    },
    /// `alpha0 alpha2 = 0` on the ray: every formula is satisfiable.
    NoTransition { reason: String },
}

fn ray_rho(direction: &ModelParams) -> Result<f64> {
    direction.validate()?;
    Ok(direction.rho())
}

/// Bisection for `p_hat(lambda) = 1/2` along `lambda * direction`, starting
/// from the bracket `[0.5, 1.5] / rho(direction)`.
pub fn find_threshold(direction: &ModelParams, n: usize, trials: u64, tol: f64, master_seed: u64) -> Result<ThresholdResult> {
    let rho_dir = ray_rho(direction)?;
    if direction.alpha0 * direction.alpha2 == 0.0 {
        return Ok(ThresholdResult::NoTransition { reason: "alpha0 * alpha2 = 0: every formula is satisfiable".into() });
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParams("tol must be positive".into()));
    }
    let mut evaluations = Vec::new();
    let eval = |lambda: f64, evaluations: &mut Vec<SweepRow>| -> Result<f64> {
        let row = estimate_row(n, &direction.scaled(lambda), trials, master_seed, evaluations.len() as u64, false)?;
        let p = row.p_hat;
        evaluations.push(row);
        Ok(p)
    };
    let (mut lo, mut hi) = (0.5 / rho_dir, 1.5 / rho_dir);
    let (p_lo, p_hi) = (eval(lo, &mut evaluations)?, eval(hi, &mut evaluations)?);
    if p_lo < 0.5 || p_hi >= 0.5 {
        return Err(Error::Bracket(format!(
            "p_hat = {p_lo} at lambda = {lo} and {p_hi} at lambda = {hi} do not straddle 1/2"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if eval(mid, &mut evaluations)? >= 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    Ok(ThresholdResult::Crossing { lambda, rho_at_crossing: rho_dir * lambda, bracket: [lo, hi], evaluations })
}

#[derive(Clone, Debug, Serialize)]
pub struct LogisticThreshold {
    pub lambda: f64,
    pub rho_at_crossing: f64,
    pub fit: LogisticFit,
    pub rows: Vec<SweepRow>,
}

/// `rho` values 0.80, 0.85, ..., 1.20 used for the logistic fit.
pub fn rho_grid() -> Vec<f64> {
    (0..=8).map(|i| 0.8 + 0.05 * i as f64).collect()
}

/// Fits a logistic curve to `p_hat` over the points `lambda * direction` with
/// `rho` on [`rho_grid`], and reports its midpoint.
pub fn fit_threshold(direction: &ModelParams, n: usize, trials: u64, master_seed: u64) -> Result<LogisticThreshold> {
    let rho_dir = ray_rho(direction)?;
    if direction.alpha0 * direction.alpha2 == 0.0 {
        return Err(Error::Bracket("no transition on a ray with alpha0 * alpha2 = 0".into()));
    }
    let rows = rho_grid()
        .into_iter()
        .enumerate()
        .map(|(i, r)| estimate_row(n, &direction.scaled(r / rho_dir), trials, master_seed, i as u64, false))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(f64, u64, u64)> = rows.iter().map(|r| (r.rho / rho_dir, r.sat, r.trials)).collect();
    let fit = stats::fit_logistic(&points).ok_or_else(|| Error::Bracket("logistic fit did not converge".into()))?;
    Ok(LogisticThreshold { lambda: fit.midpoint, rho_at_crossing: fit.midpoint * rho_dir, fit, rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapVerdict {
    ContradictoryCycle,
    RoundStopped,
    ExhaustedRounds,
}

#[derive(Clone, Debug, Serialize)]
pub struct BootstrapOutcome {
    pub verdict: BootstrapVerdict,
    pub n: usize,
    pub delta: f64,
    pub horizon: usize,
    pub budget: usize,
    pub rounds_run: usize,
    /// 1-based round that produced the cycle.
    pub cycle_round: Option<usize>,
    pub same_parity_only: bool,
    /// No variable was visited by two rounds.
    pub rounds_disjoint: bool,
    /// `x ~> ~x` and `~x ~> x` found in the successful round.
    #[serde(skip)]
    pub cycle: Option<(Vec<Literal>, Vec<Literal>)>,
}

/// Number of rounds: `ceil(delta sqrt(n) / 9 alpha)`, capped by
/// `floor(delta n / 2 (4 alpha T + 1))`.
pub fn round_budget(n: usize, alpha_max: f64, delta: f64) -> usize {
    let t = horizon_for(n) as f64;
    let wanted = (delta * (n as f64).sqrt() / (9.0 * alpha_max)).ceil();
    let cap = (delta * n as f64 / (2.0 * (4.0 * alpha_max * t + 1.0))).floor();
    wanted.min(cap).max(0.0) as usize
}

/// Default `delta` for the bootstrap.
pub fn bootstrap_delta(rho: f64) -> Result<f64> {
    Ok(auto_delta_beta(rho)?.0)
}

/// Preconditions of the bootstrap: `rho > 1`, `alpha0 alpha2 > 0` and
/// `(1 - delta) rho > 1`.
pub fn check_bootstrap(params: &ModelParams, n: usize, delta: f64) -> Result<()> {
    params.check_for(n)?;
    if params.rho() <= 1.0 {
        return Err(Error::Precondition(format!("bootstrap needs rho > 1, got {}", params.rho())));
    }
    if params.alpha0 * params.alpha2 == 0.0 {
        return Err(Error::Precondition("bootstrap needs alpha0 * alpha2 > 0".into()));
    }
    if !(delta > 0.0 && (1.0 - delta) * params.rho() > 1.0) {
        return Err(Error::Precondition(format!("delta = {delta} must satisfy (1 - delta) rho > 1")));
    }
    Ok(())
}

fn bootstrap_with<S: ClauseSource>(source: &mut S, n: usize, params: &ModelParams, delta: f64, master_seed: u64) -> Result<BootstrapOutcome> {
    let budget = round_budget(n, params.alpha_max(), delta);
    let same_parity_only = params.alpha1 == 0.0;
    let mut remaining = VarSet::full(n);
    let mut visited_total: HashSet<u32> = HashSet::new();
    let mut rounds_disjoint = true;
    let mut outcome = BootstrapOutcome {
        verdict: BootstrapVerdict::ExhaustedRounds,
        n,
        delta,
        horizon: horizon_for(n),
        budget,
        rounds_run: 0,
        cycle_round: None,
        same_parity_only,
        rounds_disjoint: true,
        cycle: None,
    };
    let mut rng = seed::rng_for(master_seed, &[0]);
    for round in 0..budget {
        let Some(x) = remaining.first() else { break };
        let cfg = RoundConfig::new(n, params, delta, Literal::positive(x))?;
        let out = run_round(source, Arc::new(remaining.clone()), &cfg, &mut rng)?;
        outcome.rounds_run = round + 1;
        let visited = out.visited_vars();
        rounds_disjoint &= visited.iter().all(|v| !visited_total.contains(v));
        if out.verdict == RoundVerdict::Stopped {
            outcome.verdict = BootstrapVerdict::RoundStopped;
            break;
        }
        let second = out.second.as_ref().expect("completed round has two explorations");
        let forward = find_closing(&out.first, source, same_parity_only);
        let backward = match forward {
            Some(_) => find_closing(second, source, same_parity_only),
            None => None,
        };
        if let (Some(fw), Some(bw)) = (forward, backward) {
            outcome.verdict = BootstrapVerdict::ContradictoryCycle;
            outcome.cycle_round = Some(round + 1);
            outcome.cycle = fw.path(&out.first).zip(bw.path(second));
            break;
        }
        for &v in &visited {
            remaining.remove(v);
        }
        visited_total.extend(visited);
    }
    outcome.rounds_disjoint = rounds_disjoint;
    Ok(outcome)
}

/// Rounds on the random model, revealed lazily.
pub fn bootstrap_rounds_with(n: usize, params: &ModelParams, delta: f64, master_seed: u64) -> Result<BootstrapOutcome> {
    check_bootstrap(params, n, delta)?;
    let mut source = LazySource::new(n, *params, seed::rng_for(master_seed, &[1]))?;
    bootstrap_with(&mut source, n, params, delta, master_seed)
}

pub fn bootstrap_rounds(n: usize, params: &ModelParams, master_seed: u64) -> Result<BootstrapOutcome> {
    let delta = bootstrap_delta(params.rho())?;
    bootstrap_rounds_with(n, params, delta, master_seed)
}

/// Rounds on a concrete formula; `params` sets the stopping rule and budget.
pub fn bootstrap_rounds_on(f: &Formula, params: &ModelParams, delta: f64, master_seed: u64) -> Result<BootstrapOutcome> {
    check_bootstrap(params, f.n(), delta)?;
    let g = ImplicationDigraph::build(f);
    let mut source = DigraphSource::new(&g);
    bootstrap_with(&mut source, f.n(), params, delta, master_seed)
}
