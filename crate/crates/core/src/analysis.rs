//! Spectral data of the branching matrix, the first-moment bound on the
//! unsatisfiability probability, and hooked chains.

use rayon::prelude::*;
use serde::Serialize;

use crate::digraph::ImplicationDigraph;
use crate::formula::{sample_formula, Formula, Literal, ModelParams};
use crate::{seed, stats, Error, Result};

/// `M = 1/2 [[a1, a0], [a2, a1]]` with its two (always real) eigenvalues.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BranchingMatrix {
    pub entries: [[f64; 2]; 2],
    pub rho: f64,
    pub rho_minus: f64,
}

pub fn branching_matrix(params: &ModelParams) -> BranchingMatrix {
    let [a0, a1, a2] = params.alphas();
    let root = (a0 * a2).sqrt();
    BranchingMatrix {
        entries: [[0.5 * a1, 0.5 * a0], [0.5 * a2, 0.5 * a1]],
        rho: 0.5 * (a1 + root),
        rho_minus: 0.5 * (a1 - root),
    }
}

impl BranchingMatrix {
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.entries;
        [dot2(m[0][0], v[0], m[0][1], v[1]), dot2(m[1][0], v[0], m[1][1], v[1])]
    }
}

/// `a*x + b*y` with both products and the sum carried in double-double.
fn dot2(a: f64, x: f64, b: f64, y: f64) -> f64 {
    let p1 = a * x;
    let e1 = a.mul_add(x, -p1);
    let p2 = b * y;
    let e2 = b.mul_add(y, -p2);
    let s = p1 + p2;
    let bb = s - p1;
    let err = (p1 - (s - bb)) + (p2 - bb);
    s + (err + e1 + e2)
}

/// Largest eigenvalue of an arbitrary real 2x2 matrix with real spectrum,
/// from its characteristic polynomial and polished by Newton steps.
pub fn largest_real_eigenvalue(m: [[f64; 2]; 2]) -> Option<f64> {
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    let disc = half_diff * half_diff + m[0][1] * m[1][0];
    if disc < 0.0 {
        return None;
    }
    let trace = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let mut lambda = 0.5 * trace + disc.sqrt();
    for _ in 0..4 {
        let p = lambda * lambda - trace * lambda + det;
        let dp = 2.0 * lambda - trace;
        if dp.abs() <= f64::EPSILON * (1.0 + lambda.abs()) {
            break;
        }
        let step = p / dp;
        lambda -= step;
        if step.abs() <= f64::EPSILON * lambda.abs() {
            break;
        }
    }
    Some(lambda)
}

/// Closed-form `rho` next to the numerically computed largest eigenvalue.
pub fn rho_numeric_check(params: &ModelParams) -> (f64, f64) {
    let bm = branching_matrix(params);
    let numeric = largest_real_eigenvalue(bm.entries).expect("branching matrix has real spectrum");
    (bm.rho, numeric)
}

/// `M^(s-1) (1, 1)^T` by repeated multiplication.
pub fn path_count_bound(params: &ModelParams, s: usize) -> [f64; 2] {
    assert!(s >= 1, "path length index starts at 1");
    let bm = branching_matrix(params);
    (1..s).fold([1.0, 1.0], |v, _| bm.apply(v))
}

/// `C * sum_{s=2}^{n} (2s)^2 / n * (T+_{s-1} + T-_{s-1})` with the path
/// counts replaced by their matrix-power bound and `C = max(alpha)^2`.
pub fn first_moment_bound(params: &ModelParams, n: usize) -> f64 {
    assert!(n >= 2);
    let c = params.alpha_max().powi(2);
    if c == 0.0 {
        return 0.0;
    }
    let bm = branching_matrix(params);
    let nf = n as f64;
    let mut v = [1.0, 1.0];
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut prev = f64::INFINITY;
    for s in 2..=n {
        v = bm.apply(v);
        let sf = s as f64;
        let term = 4.0 * sf * sf / nf * (v[0] + v[1]);
        // Kahan
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if term < prev && term <= 1e-30 * sum {
            break;
        }
        prev = term;
        if !sum.is_finite() {
            break;
        }
    }
    c * sum
}

/// `u -> y_1 -> ... -> y_s -> v` with strongly distinct `y_i` and both ends
/// among `{y_i, ~y_i}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HookedChain {
    pub u: Literal,
    pub y: Vec<Literal>,
    pub v: Literal,
}

impl HookedChain {
    pub fn len(&self) -> usize {
        self.y.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Checks the definition against the formula's digraph.
    pub fn is_valid_in(&self, g: &ImplicationDigraph) -> bool {
        let vars: Vec<u32> = self.y.iter().map(|l| l.var()).collect();
        let mut sorted = vars.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if self.y.is_empty() || sorted.len() != vars.len() {
            return false;
        }
        if !vars.contains(&self.u.var()) || !vars.contains(&self.v.var()) {
            return false;
        }
        g.has_edge(self.u, self.y[0])
            && self.y.windows(2).all(|w| g.has_edge(w[0], w[1]))
            && g.has_edge(self.y[self.y.len() - 1], self.v)
    }
}

pub const HOOKED_MAX_VARS: usize = 20;
pub const HOOKED_MAX_S: usize = 8;

struct ChainSearch<'a> {
    g: &'a ImplicationDigraph,
    min_len: usize,
    max_s: usize,
    path: Vec<Literal>,
    used: Vec<bool>,
}

impl ChainSearch<'_> {
    /// Visits every hook of the current path; stops when `visit` returns true.
    fn hooks(&self, visit: &mut dyn FnMut(HookedChain) -> bool) -> bool {
        if self.path.len() + 1 < self.min_len.max(3) {
            return false;
        }
        let first = self.path[0];
        let last = self.path[self.path.len() - 1];
        // u -> y1 iff ~y1 -> ~u
        for u in self.g.out_neighbors(first.complement()).map(Literal::complement) {
            if !self.used[u.var() as usize] {
                continue;
            }
            for v in self.g.out_neighbors(last) {
                if self.used[v.var() as usize]
                    && visit(HookedChain { u, y: self.path.clone(), v })
                {
                    return true;
                }
            }
        }
        false
    }

    fn extend(&mut self, visit: &mut dyn FnMut(HookedChain) -> bool) -> bool {
        if self.hooks(visit) {
            return true;
        }
        if self.path.len() == self.max_s {
            return false;
        }
        let last = self.path[self.path.len() - 1];
        let next: Vec<Literal> = self.g.out_neighbors(last).collect();
        for w in next {
            if self.used[w.var() as usize] {
                continue;
            }
            self.used[w.var() as usize] = true;
            self.path.push(w);
            let stop = self.extend(visit);
            self.path.pop();
            self.used[w.var() as usize] = false;
            if stop {
                return true;
            }
        }
        false
    }

    fn run(g: &ImplicationDigraph, min_len: usize, max_s: usize, visit: &mut dyn FnMut(HookedChain) -> bool) {
        let mut search = ChainSearch {
            g,
            min_len,
            max_s,
            path: Vec::with_capacity(max_s),
            used: vec![false; g.n() + 1],
        };
        for start in 0..g.vertex_count() {
            let y1 = Literal::from_index(start);
            search.used[y1.var() as usize] = true;
            search.path.push(y1);
            let stop = search.extend(visit);
            search.path.pop();
            search.used[y1.var() as usize] = false;
            if stop {
                return;
            }
        }
    }
}

/// Every hooked chain with `min_length <= s + 1 <= max_s + 1`.
pub fn enumerate_hooked_chains(f: &Formula, min_length: usize, max_s: usize) -> Result<Vec<HookedChain>> {
    if f.n() > HOOKED_MAX_VARS || max_s > HOOKED_MAX_S {
        return Err(Error::TooLarge(format!(
            "hooked-chain enumeration needs n <= {HOOKED_MAX_VARS} and s <= {HOOKED_MAX_S}, got n = {}, s = {max_s}",
            f.n()
        )));
    }
    let g = ImplicationDigraph::build(f);
    let mut out = Vec::new();
    ChainSearch::run(&g, min_length, max_s, &mut |c| {
        out.push(c);
        false
    });
    Ok(out)
}

/// First hooked chain of length at least `min_length`, searching chains of
/// any `s` up to `n`.
pub fn find_hooked_chain(f: &Formula, min_length: usize) -> Result<Option<HookedChain>> {
    if f.n() > HOOKED_MAX_VARS {
        return Err(Error::TooLarge(format!(
            "hooked-chain search needs n <= {HOOKED_MAX_VARS}, got {}",
            f.n()
        )));
    }
    let g = ImplicationDigraph::build(f);
    let mut found = None;
    ChainSearch::run(&g, min_length, f.n(), &mut |c| {
        found = Some(c);
        true
    });
    Ok(found)
}

/// Number of directed paths of `len` edges from `start` through strongly
/// distinct literals.
pub fn count_distinct_paths(g: &ImplicationDigraph, start: Literal, len: usize) -> u64 {
    fn go(g: &ImplicationDigraph, at: Literal, left: usize, used: &mut Vec<bool>) -> u64 {
        if left == 0 {
            return 1;
        }
        let mut total = 0;
        for w in g.out_neighbors(at) {
            let v = w.var() as usize;
            if !used[v] {
                used[v] = true;
                total += go(g, w, left - 1, used);
                used[v] = false;
            }
        }
        total
    }
    let mut used = vec![false; g.n() + 1];
    used[start.var() as usize] = true;
    go(g, start, len, &mut used)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PathCountEstimate {
    pub plus_mean: f64,
    pub plus_se: f64,
    pub minus_mean: f64,
    pub minus_se: f64,
}

pub const PATH_COUNT_MAX_S: usize = 6;
pub const PATH_COUNT_MAX_N: usize = 200;

/// Monte Carlo estimate of `(T+_{s-1}, T-_{s-1})`: expected numbers of
/// strongly-distinct paths with `s - 1` edges from `x1` and from `~x1`.
pub fn estimate_path_counts(
    params: &ModelParams,
    n: usize,
    s: usize,
    trials: usize,
    master_seed: u64,
) -> Result<PathCountEstimate> {
    if s == 0 || s > PATH_COUNT_MAX_S || n > PATH_COUNT_MAX_N || trials == 0 {
        return Err(Error::Precondition(format!(
            "path counts need 1 <= s <= {PATH_COUNT_MAX_S}, n <= {PATH_COUNT_MAX_N}, trials >= 1 (got s = {s}, n = {n}, trials = {trials})"
        )));
    }
    params.check_for(n)?;
    let counts: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let f = sample_formula(n, params, seed::derive(master_seed, &[t as u64]))?;
            let g = ImplicationDigraph::build(&f);
            Ok((
                count_distinct_paths(&g, Literal::positive(1), s - 1) as f64,
                count_distinct_paths(&g, Literal::negative(1), s - 1) as f64,
            ))
        })
        .collect::<Result<_>>()?;
    let plus: Vec<f64> = counts.iter().map(|c| c.0).collect();
    let minus: Vec<f64> = counts.iter().map(|c| c.1).collect();
    let (plus_mean, plus_se) = stats::mean_se(&plus);
    let (minus_mean, minus_se) = stats::mean_se(&minus);
    Ok(PathCountEstimate { plus_mean, plus_se, minus_mean, minus_se })
}
