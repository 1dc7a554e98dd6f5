//! The exploration process on the implication digraph.
//!
//! Starting from a literal `x`, the process keeps an exposed set `E_t`, an
//! active set `A_t` split into a positive and a negative stack, and the set of
//! alive variables `U_t` (variables of the restriction touched by neither).
//! Each step pops a current literal `l`, activates every literal `u` over an
//! alive variable whose clause `(~l v u)` is present, and moves `l` to `E`.
//!
//! Clause presence comes from a [`ClauseSource`]: either a concrete formula
//! or the random model revealed lazily. Every clause is examined at most once
//! per exploration, so the lazy source can flip a fresh coin per clause; it
//! does so in aggregate with one Binomial count per target polarity.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::digraph::ImplicationDigraph;
use crate::formula::{sample_formula, Clause, Formula, Literal, ModelParams, Polarity};
use crate::stats::{self, ChiSquare};
use crate::{seed, Error, Result};

/// A set of variables over `1..=n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarSet {
    mask: Vec<bool>,
    len: usize,
}

impl VarSet {
    pub fn full(n: usize) -> Self {
        let mut mask = vec![true; n + 1];
        mask[0] = false;
        VarSet { mask, len: n }
    }

    pub fn from_vars<I: IntoIterator<Item = u32>>(n: usize, vars: I) -> Self {
        let mut s = VarSet { mask: vec![false; n + 1], len: 0 };
        for v in vars {
            s.insert(v);
        }
        s
    }

    pub fn n(&self) -> usize {
        self.mask.len() - 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn contains(&self, var: u32) -> bool {
        self.mask.get(var as usize).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, var: u32) {
        assert!(var >= 1 && var as usize <= self.n(), "variable {var} out of range");
        if !self.mask[var as usize] {
            self.mask[var as usize] = true;
            self.len += 1;
        }
    }

    pub fn remove(&mut self, var: u32) {
        if self.contains(var) {
            self.mask[var as usize] = false;
            self.len -= 1;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(v, _)| v as u32)
    }

    pub fn first(&self) -> Option<u32> {
        self.iter().next()
    }
}

/// Read-only view of the alive variables at the current step.
pub struct AliveVars<'a> {
    restriction: &'a VarSet,
    left: &'a HashMap<u32, u32>,
    count: usize,
}

impl AliveVars<'_> {
    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn contains(&self, var: u32) -> bool {
        self.restriction.contains(var) && !self.left.contains_key(&var)
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.restriction.iter().filter(|v| !self.left.contains_key(v))
    }

    /// `k` distinct alive variables chosen uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, k: usize, out: &mut Vec<u32>) {
        out.clear();
        if k == 0 {
            return;
        }
        assert!(k <= self.count, "cannot pick {k} of {} alive variables", self.count);
        let n = self.restriction.n();
        if 4 * self.count >= n && 2 * k <= self.count {
            let mut chosen = HashSet::with_capacity(k);
            while out.len() < k {
                let v = rng.random_range(1..=n as u32);
                if self.contains(v) && chosen.insert(v) {
                    out.push(v);
                }
            }
        } else {
            let alive: Vec<u32> = self.iter().collect();
            out.extend(index::sample(rng, alive.len(), k).into_iter().map(|i| alive[i]));
        }
    }
}

/// Answers clause-presence queries for the exploration.
pub trait ClauseSource {
    /// Pushes into `pos` / `neg` the alive variables `w` for which
    /// `(~current v w)` / `(~current v ~w)` is present.
    fn reveal(&mut self, current: Literal, alive: &AliveVars<'_>, pos: &mut Vec<u32>, neg: &mut Vec<u32>);

    /// Presence of a clause no exploration has examined yet.
    fn clause_present(&mut self, a: Literal, b: Literal) -> bool;
}

pub struct DigraphSource<'g> {
    graph: &'g ImplicationDigraph,
}

impl<'g> DigraphSource<'g> {
    pub fn new(graph: &'g ImplicationDigraph) -> Self {
        DigraphSource { graph }
    }
}

impl ClauseSource for DigraphSource<'_> {
    fn reveal(&mut self, current: Literal, alive: &AliveVars<'_>, pos: &mut Vec<u32>, neg: &mut Vec<u32>) {
        for w in self.graph.out_neighbors(current) {
            if alive.contains(w.var()) {
                if w.is_positive() {
                    pos.push(w.var());
                } else {
                    neg.push(w.var());
                }
            }
        }
    }

    fn clause_present(&mut self, a: Literal, b: Literal) -> bool {
        self.graph.has_edge(a.complement(), b)
    }
}

/// Type of the clause `(~current v target)`.
pub(crate) fn revealed_type(current: Literal, target: Polarity) -> usize {
    (!current.is_positive()) as usize + (target == Polarity::Positive) as usize
}

/// The random model on `n` variables, revealed on demand.
pub struct LazySource<R> {
    params: ModelParams,
    n: usize,
    rng: R,
    scratch: Vec<u32>,
}

impl<R: Rng> LazySource<R> {
    pub fn new(n: usize, params: ModelParams, rng: R) -> Result<Self> {
        params.check_for(n)?;
        Ok(LazySource { params, n, rng, scratch: Vec::new() })
    }

    pub fn prob(&self, clause_type: usize) -> f64 {
        self.params.clause_prob(clause_type, self.n)
    }

    pub fn rng(&mut self) -> &mut R {
        &mut self.rng
    }

    /// Activates exactly `k_pos` positive and `k_neg` negative targets,
    /// each a uniform subset of the alive variables.
    pub fn reveal_counts(&mut self, alive: &AliveVars<'_>, k_pos: usize, k_neg: usize, pos: &mut Vec<u32>, neg: &mut Vec<u32>) {
        alive.sample(&mut self.rng, k_pos, &mut self.scratch);
        pos.extend_from_slice(&self.scratch);
        alive.sample(&mut self.rng, k_neg, &mut self.scratch);
        neg.extend_from_slice(&self.scratch);
    }
}

fn binomial_draw<R: Rng>(rng: &mut R, trials: usize, p: f64) -> usize {
    if trials == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        trials
    } else {
        Binomial::new(trials as u64, p).expect("valid binomial").sample(rng) as usize
    }
}

impl<R: Rng> ClauseSource for LazySource<R> {
    fn reveal(&mut self, current: Literal, alive: &AliveVars<'_>, pos: &mut Vec<u32>, neg: &mut Vec<u32>) {
        let u = alive.count();
        let p_pos = self.prob(revealed_type(current, Polarity::Positive));
        let p_neg = self.prob(revealed_type(current, Polarity::Negative));
        let k_pos = binomial_draw(&mut self.rng, u, p_pos);
        let k_neg = binomial_draw(&mut self.rng, u, p_neg);
        self.reveal_counts(alive, k_pos, k_neg, pos, neg);
    }

    fn clause_present(&mut self, a: Literal, b: Literal) -> bool {
        let c = Clause::new_unchecked(a, b);
        let p = self.prob(c.clause_type());
        p > 0.0 && self.rng.random_bool(p.min(1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopPolicy {
    /// Pop the positive stack whenever it is nonempty.
    PreferPositive,
    PreferNegative,
    /// Pick uniformly among all active literals.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    /// Steps completed.
    pub t: usize,
    /// Alive variables after the step.
    pub u: usize,
    pub a_pos: usize,
    pub a_neg: usize,
    /// The literal exposed in this step.
    #[serde(serialize_with = "ser_literal")]
    pub current: Literal,
}

fn ser_literal<S: serde::Serializer>(l: &Literal, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_i64(l.to_dimacs())
}

/// Implicit record of every clause examined by one exploration.
///
/// At step `t` (0-based) with current literal `l_t`, the examined clauses are
/// `(~l_t v w)` for every literal `w` whose variable is alive at `t`.
#[derive(Clone, Debug)]
pub struct ExaminedClauses {
    restriction: Arc<VarSet>,
    left: HashMap<u32, u32>,
    current_at: HashMap<Literal, u32>,
    order: Vec<Literal>,
}

impl ExaminedClauses {
    pub fn alive_at(&self, var: u32, step: u32) -> bool {
        self.restriction.contains(var) && self.left.get(&var).is_none_or(|&s| s > step)
    }

    pub fn current_step(&self, l: Literal) -> Option<u32> {
        self.current_at.get(&l).copied()
    }

    pub fn contains(&self, c: &Clause) -> bool {
        let [a, b] = c.literals();
        let hit = |x: Literal, y: Literal| {
            self.current_step(x.complement()).is_some_and(|t| self.alive_at(y.var(), t))
        };
        hit(a, b) || hit(b, a)
    }

    /// Every examined clause, listed step by step. Linear in `n * steps`.
    pub fn list(&self) -> Vec<Clause> {
        let mut out = Vec::new();
        for (t, &l) in self.order.iter().enumerate() {
            for v in self.restriction.iter().filter(|&v| self.alive_at(v, t as u32)) {
                for w in [Literal::positive(v), Literal::negative(v)] {
                    out.push(Clause::new_unchecked(l.complement(), w));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct ExplorationTrace {
    pub start: Literal,
    pub horizon: usize,
    pub alpha_max: f64,
    pub restriction_size: usize,
    pub u0: usize,
    pub steps: Vec<StepRecord>,
    /// Last `t <= horizon` with `u_t >= u_0 - 2 alpha_max horizon`; the
    /// alive count is frozen after the stacks empty.
    pub tau: usize,
    pub stopped_early: bool,
    /// Both stacks ran dry before the horizon.
    pub exhausted: bool,
    pub exposed: Vec<Literal>,
    pub active_pos: Vec<Literal>,
    pub active_neg: Vec<Literal>,
    /// Literal that activated each non-start literal.
    pub parent: HashMap<Literal, Literal>,
    pub examined: ExaminedClauses,
}

impl ExplorationTrace {
    pub fn u_at(&self, t: usize) -> usize {
        match t {
            0 => self.u0,
            t => self.steps.get(t - 1).or(self.steps.last()).map_or(self.u0, |r| r.u),
        }
    }

    pub fn active(&self) -> impl Iterator<Item = Literal> + '_ {
        self.active_pos.iter().chain(&self.active_neg).copied()
    }

    /// Variables of `E_T` and `A_T`.
    pub fn visited_vars(&self) -> HashSet<u32> {
        self.exposed.iter().chain(self.active_pos.iter()).chain(&self.active_neg).map(|l| l.var()).collect()
    }

    /// Literal path from the start to `target` along activation edges.
    pub fn path_from_start(&self, target: Literal) -> Option<Vec<Literal>> {
        let mut path = vec![target];
        let mut cur = target;
        while cur != self.start {
            cur = *self.parent.get(&cur)?;
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }

    pub fn examined_count(&self) -> usize {
        (0..self.steps.len()).map(|t| 2 * self.u_at(t)).sum()
    }
}

/// One exploration, advanced step by step.
pub struct Exploration {
    restriction: Arc<VarSet>,
    start: Literal,
    left: HashMap<u32, u32>,
    pos_stack: Vec<Literal>,
    neg_stack: Vec<Literal>,
    exposed: Vec<Literal>,
    steps: Vec<StepRecord>,
    parent: HashMap<Literal, Literal>,
    u0: usize,
    pos_buf: Vec<u32>,
    neg_buf: Vec<u32>,
}

impl Exploration {
    pub fn new(restriction: Arc<VarSet>, start: Literal) -> Result<Self> {
        if !restriction.contains(start.var()) {
            return Err(Error::Precondition(format!("start literal {start} outside the restriction")));
        }
        let u0 = restriction.len() - 1;
        let mut left = HashMap::new();
        left.insert(start.var(), 0);
        let (pos_stack, neg_stack) = if start.is_positive() {
            (vec![start], Vec::new())
        } else {
            (Vec::new(), vec![start])
        };
        Ok(Exploration {
            restriction,
            start,
            left,
            pos_stack,
            neg_stack,
            exposed: Vec::new(),
            steps: Vec::new(),
            parent: HashMap::new(),
            u0,
            pos_buf: Vec::new(),
            neg_buf: Vec::new(),
        })
    }

    pub fn t(&self) -> usize {
        self.exposed.len()
    }

    pub fn alive_count(&self) -> usize {
        self.restriction.len() - self.left.len()
    }

    pub fn u0(&self) -> usize {
        self.u0
    }

    pub fn active_counts(&self) -> (usize, usize) {
        (self.pos_stack.len(), self.neg_stack.len())
    }

    pub fn is_dead(&self) -> bool {
        self.pos_stack.is_empty() && self.neg_stack.is_empty()
    }

    pub fn alive(&self) -> AliveVars<'_> {
        AliveVars { restriction: &self.restriction, left: &self.left, count: self.alive_count() }
    }

    pub fn pop<R: Rng + ?Sized>(&mut self, policy: PopPolicy, rng: &mut R) -> Option<Literal> {
        match policy {
            PopPolicy::PreferPositive => self.pos_stack.pop().or_else(|| self.neg_stack.pop()),
            PopPolicy::PreferNegative => self.neg_stack.pop().or_else(|| self.pos_stack.pop()),
            PopPolicy::Uniform => {
                let total = self.pos_stack.len() + self.neg_stack.len();
                if total == 0 {
                    return None;
                }
                let i = rng.random_range(0..total);
                Some(if i < self.pos_stack.len() {
                    self.pos_stack.remove(i)
                } else {
                    self.neg_stack.remove(i - self.pos_stack.len())
                })
            }
        }
    }

    pub fn pop_polarity(&mut self, polarity: Polarity) -> Option<Literal> {
        match polarity {
            Polarity::Positive => self.pos_stack.pop(),
            Polarity::Negative => self.neg_stack.pop(),
        }
    }

    /// Exposes `current`, activating the given alive variables.
    pub fn expose(&mut self, current: Literal, new_pos: &[u32], new_neg: &[u32]) {
        let step = self.exposed.len() as u32;
        let mut pos: Vec<u32> = new_pos.to_vec();
        let mut neg: Vec<u32> = new_neg.to_vec();
        pos.sort_unstable();
        neg.sort_unstable();
        for &v in pos.iter().chain(&neg) {
            debug_assert!(self.alive().contains(v) || self.left.get(&v) == Some(&(step + 1)));
            self.left.entry(v).or_insert(step + 1);
        }
        for &v in &pos {
            let l = Literal::positive(v);
            self.parent.insert(l, current);
            self.pos_stack.push(l);
        }
        for &v in &neg {
            let l = Literal::negative(v);
            self.parent.insert(l, current);
            self.neg_stack.push(l);
        }
        self.exposed.push(current);
        self.steps.push(StepRecord {
            t: self.exposed.len(),
            u: self.alive_count(),
            a_pos: self.pos_stack.len(),
            a_neg: self.neg_stack.len(),
            current,
        });
    }

    /// Pops with `policy`, asks `source` for the activated literals and
    /// exposes. Returns the current literal, or `None` once both stacks are
    /// empty.
    pub fn step<S: ClauseSource, R: Rng + ?Sized>(&mut self, source: &mut S, policy: PopPolicy, rng: &mut R) -> Option<Literal> {
        let current = self.pop(policy, rng)?;
        let (mut pos, mut neg) = (std::mem::take(&mut self.pos_buf), std::mem::take(&mut self.neg_buf));
        pos.clear();
        neg.clear();
        source.reveal(current, &self.alive(), &mut pos, &mut neg);
        self.expose(current, &pos, &neg);
        self.pos_buf = pos;
        self.neg_buf = neg;
        Some(current)
    }

    /// `u_t + |var(E_t u A_t)| = |S|`.
    pub fn partition_holds(&self) -> bool {
        let touched: HashSet<u32> = self
            .exposed
            .iter()
            .chain(&self.pos_stack)
            .chain(&self.neg_stack)
            .map(|l| l.var())
            .collect();
        touched.iter().all(|&v| !self.alive().contains(v) && self.restriction.contains(v))
            && self.alive_count() + touched.len() == self.restriction.len()
    }

    pub fn finish(self, horizon: usize, alpha_max: f64) -> ExplorationTrace {
        let threshold = self.u0 as f64 - 2.0 * alpha_max * horizon as f64;
        let last_u = self.steps.last().map_or(self.u0, |r| r.u);
        let tau = if (last_u as f64) >= threshold {
            horizon
        } else {
            // u_t is nonincreasing, so the qualifying times form a prefix
            self.steps.iter().take_while(|r| r.u as f64 >= threshold).count()
        };
        let exhausted = self.is_dead() && self.steps.len() < horizon;
        let current_at = self.exposed.iter().enumerate().map(|(t, &l)| (l, t as u32)).collect();
        ExplorationTrace {
            start: self.start,
            horizon,
            alpha_max,
            restriction_size: self.restriction.len(),
            u0: self.u0,
            tau,
            stopped_early: tau < horizon,
            exhausted,
            examined: ExaminedClauses {
                restriction: self.restriction,
                left: self.left,
                current_at,
                order: self.exposed.clone(),
            },
            steps: self.steps,
            exposed: self.exposed,
            active_pos: self.pos_stack,
            active_neg: self.neg_stack,
            parent: self.parent,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ExploreOptions {
    pub horizon: usize,
    /// `max(alpha_0, alpha_1, alpha_2)`, used by the stopping time.
    pub alpha_max: f64,
    pub policy: PopPolicy,
}

/// Runs up to `horizon` steps against `source`.
pub fn explore_with<S: ClauseSource, R: Rng + ?Sized>(
    source: &mut S,
    restriction: Arc<VarSet>,
    start: Literal,
    opts: &ExploreOptions,
    rng: &mut R,
) -> Result<ExplorationTrace> {
    if opts.horizon == 0 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    let mut ex = Exploration::new(restriction, start)?;
    while ex.t() < opts.horizon && ex.step(source, opts.policy, rng).is_some() {}
    Ok(ex.finish(opts.horizon, opts.alpha_max))
}

/// Exploration of a concrete formula. `seed` only matters for
/// [`PopPolicy::Uniform`].
pub fn explore(f: &Formula, restriction: Arc<VarSet>, start: Literal, opts: &ExploreOptions, seed: u64) -> Result<ExplorationTrace> {
    if restriction.n() != f.n() {
        return Err(Error::Precondition(format!(
            "restriction is over {} variables, formula over {}",
            restriction.n(),
            f.n()
        )));
    }
    let g = ImplicationDigraph::build(f);
    let mut src = DigraphSource::new(&g);
    explore_with(&mut src, restriction, start, opts, &mut seed::rng_for(seed, &[0]))
}

/// `T = floor(sqrt(n))`.
pub fn horizon_for(n: usize) -> usize {
    (n as f64).sqrt().floor() as usize
}

#[derive(Clone, Copy, Debug)]
pub struct RoundConfig {
    pub n: usize,
    pub horizon: usize,
    pub delta: f64,
    pub alpha_max: f64,
    pub rho: f64,
    pub start: Literal,
    pub policy: PopPolicy,
}

impl RoundConfig {
    /// Standard configuration: `T = floor(sqrt n)`, prefer-positive pops.
    pub fn new(n: usize, params: &ModelParams, delta: f64, start: Literal) -> Result<Self> {
        let rho = params.rho();
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParams(format!("delta must lie in (0, 1), got {delta}")));
        }
        if rho > 1.0 && (1.0 - delta) * rho <= 1.0 {
            return Err(Error::InvalidParams(format!("(1 - delta) rho = {} must exceed 1", (1.0 - delta) * rho)));
        }
        Ok(RoundConfig {
            n,
            horizon: horizon_for(n).max(1),
            delta,
            alpha_max: params.alpha_max(),
            rho,
            start,
            policy: PopPolicy::PreferPositive,
        })
    }

    fn options(&self) -> ExploreOptions {
        ExploreOptions { horizon: self.horizon, alpha_max: self.alpha_max, policy: self.policy }
    }

    pub fn min_restriction(&self) -> f64 {
        (1.0 - self.delta / 2.0) * self.n as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundVerdict {
    Stopped,
    Completed,
}

#[derive(Clone, Debug)]
pub struct RoundOutcome {
    pub first: ExplorationTrace,
    pub second: Option<ExplorationTrace>,
    pub verdict: RoundVerdict,
    /// The restriction the second exploration ran on.
    pub second_restriction: Option<Arc<VarSet>>,
}

impl RoundOutcome {
    /// Variables touched by either exploration, including the start's.
    pub fn visited_vars(&self) -> HashSet<u32> {
        let mut v = self.first.visited_vars();
        if let Some(s) = &self.second {
            v.extend(s.visited_vars());
        }
        v
    }

    /// Lemma-style disjointness of the examined clause sets for a completed
    /// round.
    pub fn clauses_disjoint(&self) -> bool {
        match &self.second {
            Some(second) => {
                let a_t: Vec<Literal> = self.first.active().collect();
                check_clause_disjointness(&self.first, second, &a_t)
            }
            None => true,
        }
    }
}

/// One round: explore from `x` on `S`; if the stopping time reaches the
/// horizon, delete the visited variables except `var(x)` and explore from
/// `~x` on what is left.
pub fn run_round<S: ClauseSource, R: Rng + ?Sized>(
    source: &mut S,
    restriction: Arc<VarSet>,
    cfg: &RoundConfig,
    rng: &mut R,
) -> Result<RoundOutcome> {
    if restriction.n() != cfg.n {
        return Err(Error::Precondition("restriction and config disagree on n".into()));
    }
    if (restriction.len() as f64) < cfg.min_restriction() {
        return Err(Error::Precondition(format!(
            "|S| = {} is below (1 - delta/2) n = {}",
            restriction.len(),
            cfg.min_restriction()
        )));
    }
    let x = cfg.start;
    let first = explore_with(source, restriction.clone(), x, &cfg.options(), rng)?;
    if first.stopped_early {
        return Ok(RoundOutcome { first, second: None, verdict: RoundVerdict::Stopped, second_restriction: None });
    }
    let mut reduced = (*restriction).clone();
    for v in first.visited_vars() {
        if v != x.var() {
            reduced.remove(v);
        }
    }
    let reduced = Arc::new(reduced);
    let second = explore_with(source, reduced.clone(), x.complement(), &cfg.options(), rng)?;
    let verdict = if second.stopped_early { RoundVerdict::Stopped } else { RoundVerdict::Completed };
    Ok(RoundOutcome { first, second: Some(second), verdict, second_restriction: Some(reduced) })
}

/// Checks that the first exploration never examined a clause
/// `(~u v ~v)`, `u, v in A_T`, and that the second examined none of those nor
/// any clause the first examined.
pub fn check_clause_disjointness(first: &ExplorationTrace, second: &ExplorationTrace, a_t: &[Literal]) -> bool {
    closing_clauses_unexamined(&first.examined, a_t)
        && closing_clauses_unexamined(&second.examined, a_t)
        && examined_disjoint(&first.examined, &second.examined)
}

fn closing_clauses_unexamined(ex: &ExaminedClauses, a_t: &[Literal]) -> bool {
    // (~u v ~v) is examined iff u (or v) was current while the other's
    // variable was alive.
    for &u in a_t {
        if let Some(t) = ex.current_step(u) {
            if a_t.iter().any(|&v| v.var() != u.var() && ex.alive_at(v.var(), t)) {
                return false;
            }
        }
    }
    true
}

fn examined_disjoint(a: &ExaminedClauses, b: &ExaminedClauses) -> bool {
    // A clause examined by b at step t2 is (~l2 v w) with var(w) alive in b.
    // It is examined by a iff l2 was current in a with var(w) alive there, or
    // ~w = l1 was current in a while var(l2) was alive in a.
    for (&l2, &t2) in &b.current_at {
        if let Some(t1) = a.current_step(l2) {
            let shared = b
                .restriction
                .iter()
                .any(|v| v != l2.var() && b.alive_at(v, t2) && a.alive_at(v, t1));
            if shared {
                return false;
            }
        }
    }
    for (&l1, &t1) in &a.current_at {
        if !b.restriction.contains(l1.var()) {
            continue;
        }
        for (&l2, &t2) in &b.current_at {
            if l1.var() != l2.var() && b.alive_at(l1.var(), t2) && a.alive_at(l2.var(), t1) {
                return false;
            }
        }
    }
    true
}

/// How a completed exploration closes a path from its start to the
/// complement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Closing {
    /// Both `u` and `~u` are active.
    Complementary(Literal),
    /// The clause `(~u v ~v)` is present for active `u, v`.
    Clause(Literal, Literal),
}

/// Looks for a directed path `start ~> ~start` closed by one clause
/// `(~u v ~v)` over active `u, v`. With `same_parity_only`, only pairs of
/// equal polarity are tried.
pub fn find_closing<S: ClauseSource>(trace: &ExplorationTrace, source: &mut S, same_parity_only: bool) -> Option<Closing> {
    let active: Vec<Literal> = trace.active().collect();
    let mut seen: HashMap<u32, Literal> = HashMap::with_capacity(active.len());
    for &l in &active {
        if let Some(&other) = seen.get(&l.var()) {
            debug_assert_eq!(other, l.complement());
            return Some(Closing::Complementary(l));
        }
        seen.insert(l.var(), l);
    }
    for (i, &u) in active.iter().enumerate() {
        for &v in &active[i + 1..] {
            if same_parity_only && u.is_positive() != v.is_positive() {
                continue;
            }
            if source.clause_present(u.complement(), v.complement()) {
                return Some(Closing::Clause(u, v));
            }
        }
    }
    None
}

impl Closing {
    /// The literal path `start ~> ~start` it certifies.
    pub fn path(&self, trace: &ExplorationTrace) -> Option<Vec<Literal>> {
        let (u, v) = match *self {
            Closing::Complementary(u) => (u, u.complement()),
            Closing::Clause(u, v) => (u, v),
        };
        let mut path = trace.path_from_start(u)?;
        // ~v ~> ~start is the contrapositive of start ~> v; with v = ~u this
        // continues from u itself.
        let to_v = trace.path_from_start(v)?;
        let skip = usize::from(matches!(self, Closing::Complementary(_)));
        path.extend(to_v.iter().rev().skip(skip).map(|l| l.complement()));
        Some(path)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StepLawReport {
    pub observations_positive: usize,
    pub observations_negative: usize,
    /// Alive-count decrease given a positive current literal.
    pub positive_decrease: ChiSquare,
    pub positive_new_pos: ChiSquare,
    pub positive_new_neg: ChiSquare,
    pub negative_decrease: ChiSquare,
    pub negative_new_pos: ChiSquare,
    pub negative_new_neg: ChiSquare,
}

impl StepLawReport {
    pub fn min_p_value(&self) -> f64 {
        [
            &self.positive_decrease,
            &self.positive_new_pos,
            &self.positive_new_neg,
            &self.negative_decrease,
            &self.negative_new_pos,
            &self.negative_new_neg,
        ]
        .iter()
        .map(|c| c.p_value)
        .fold(1.0, f64::min)
    }
}

struct LawAccumulator {
    observed: Vec<f64>,
    expected: Vec<f64>,
}

impl LawAccumulator {
    const CELLS: usize = 16;

    fn new() -> Self {
        LawAccumulator { observed: vec![0.0; Self::CELLS + 1], expected: vec![0.0; Self::CELLS + 1] }
    }

    fn add(&mut self, value: usize, trials: usize, p: f64) {
        self.observed[value.min(Self::CELLS)] += 1.0;
        let pmf = stats::binomial_pmf_prefix(trials as u64, p, Self::CELLS as u64 - 1);
        let mut mass = 0.0;
        for (k, q) in pmf.iter().enumerate() {
            self.expected[k] += q;
            mass += q;
        }
        self.expected[Self::CELLS] += (1.0 - mass).max(0.0);
    }

    fn test(&self) -> ChiSquare {
        stats::chi_square_gof(&self.observed, &self.expected)
    }
}

/// Compares one-step increments of explorations on generated formulas with
/// their exact conditional Binomial laws. Even trials start from `x1` with
/// prefer-positive pops, odd trials from `~x1` with prefer-negative pops.
pub fn step_distribution_check(params: &ModelParams, n: usize, trials: usize, master_seed: u64) -> Result<StepLawReport> {
    params.check_for(n)?;
    let steps = horizon_for(n).clamp(1, 20);
    // (positive current, u_t, decrease, new positives, new negatives)
    type Observation = (bool, usize, usize, usize, usize);
    let mut per_trial: Vec<Vec<Observation>> = Vec::with_capacity(trials);
    {
        use rayon::prelude::*;
        per_trial.par_extend((0..trials).into_par_iter().map(|trial| {
            let f = sample_formula(n, params, seed::derive(master_seed, &[trial as u64])).expect("checked params");
            let g = ImplicationDigraph::build(&f);
            let mut src = DigraphSource::new(&g);
            let (start, policy) = if trial % 2 == 0 {
                (Literal::positive(1), PopPolicy::PreferPositive)
            } else {
                (Literal::negative(1), PopPolicy::PreferNegative)
            };
            let mut ex = Exploration::new(Arc::new(VarSet::full(n)), start).expect("start in range");
            let mut rng = seed::rng_for(master_seed, &[trial as u64, 1]);
            let mut obs = Vec::new();
            while ex.t() < steps {
                let u_before = ex.alive_count();
                let (p_before, n_before) = ex.active_counts();
                let Some(cur) = ex.step(&mut src, policy, &mut rng) else { break };
                let (p_after, n_after) = ex.active_counts();
                let popped_pos = cur.is_positive() as usize;
                let popped_neg = 1 - popped_pos;
                obs.push((
                    cur.is_positive(),
                    u_before,
                    u_before - ex.alive_count(),
                    p_after + popped_pos - p_before,
                    n_after + popped_neg - n_before,
                ));
            }
            obs
        }));
    }
    let p = |t: usize| params.clause_prob(t, n);
    let mut acc: Vec<LawAccumulator> = (0..6).map(|_| LawAccumulator::new()).collect();
    let (mut n_pos, mut n_neg) = (0, 0);
    for (positive, u, dec, new_pos, new_neg) in per_trial.into_iter().flatten() {
        let cur = if positive { Literal::positive(1) } else { Literal::negative(1) };
        let pp = p(revealed_type(cur, Polarity::Positive));
        let pn = p(revealed_type(cur, Polarity::Negative));
        let base = if positive { 0 } else { 3 };
        acc[base].add(dec, u, pp + pn - pp * pn);
        acc[base + 1].add(new_pos, u, pp);
        acc[base + 2].add(new_neg, u, pn);
        if positive {
            n_pos += 1;
        } else {
            n_neg += 1;
        }
    }
    Ok(StepLawReport {
        observations_positive: n_pos,
        observations_negative: n_neg,
        positive_decrease: acc[0].test(),
        positive_new_pos: acc[1].test(),
        positive_new_neg: acc[2].test(),
        negative_decrease: acc[3].test(),
        negative_new_pos: acc[4].test(),
        negative_new_neg: acc[5].test(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digraph::build_digraph;

    fn opts(horizon: usize) -> ExploreOptions {
        ExploreOptions { horizon, alpha_max: 1.0, policy: PopPolicy::PreferPositive }
    }

    #[test]
    fn empty_formula_halts_after_one_step() {
        let f = Formula::empty(5);
        let tr = explore(&f, Arc::new(VarSet::full(5)), Literal::positive(1), &opts(2), 0).unwrap();
        assert_eq!(tr.exposed, vec![Literal::positive(1)]);
        assert_eq!(tr.steps.len(), 1);
        assert!(tr.active().next().is_none());
        assert!(tr.exhausted);
        assert_eq!(tr.tau, 2);
        assert!(!tr.stopped_early);
    }

    #[test]
    fn single_implication_trace() {
        let f = Formula::from_pairs(3, &[(-1, 2)]).unwrap();
        let tr = explore(&f, Arc::new(VarSet::full(3)), Literal::positive(1), &opts(10), 0).unwrap();
        assert_eq!(tr.exposed, vec![Literal::positive(1), Literal::positive(2)]);
        assert_eq!(tr.steps[0].a_pos, 1);
        assert_eq!(tr.steps[0].u, 1);
        assert_eq!(tr.steps[1].a_pos, 0);
        assert_eq!(tr.path_from_start(Literal::positive(2)).unwrap(), vec![Literal::positive(1), Literal::positive(2)]);
    }

    #[test]
    fn rejects_bad_start() {
        let s = Arc::new(VarSet::from_vars(4, [2, 3]));
        assert!(explore(&Formula::empty(4), s, Literal::positive(1), &opts(3), 0).is_err());
        assert!(explore(&Formula::empty(4), Arc::new(VarSet::full(4)), Literal::positive(1), &opts(0), 0).is_err());
    }

    #[test]
    fn invariants_on_random_formulas() {
        let params = ModelParams::new(1.5, 2.0, 2.5).unwrap();
        for s in 0..200u64 {
            let n = 40;
            let f = sample_formula(n, &params, s).unwrap();
            let g = build_digraph(&f);
            let mut src = DigraphSource::new(&g);
            let restriction = Arc::new(VarSet::from_vars(n, (1..=n as u32).filter(|v| !(v + s as u32).is_multiple_of(7))));
            let start = Literal::new(restriction.first().unwrap(), if s % 2 == 0 { Polarity::Positive } else { Polarity::Negative });
            let policy = [PopPolicy::PreferPositive, PopPolicy::PreferNegative, PopPolicy::Uniform][s as usize % 3];
            let mut ex = Exploration::new(restriction.clone(), start).unwrap();
            let mut rng = seed::rng_for(s, &[]);
            let mut last_u = ex.alive_count();
            assert!(ex.partition_holds());
            while ex.step(&mut src, policy, &mut rng).is_some() {
                assert!(ex.partition_holds());
                assert!(ex.alive_count() <= last_u);
                assert_eq!(ex.t(), ex.exposed.len());
                last_u = ex.alive_count();
            }
            let tr = ex.finish(n, params.alpha_max());
            // every activation is an edge, so everything is reachable
            for (&child, &parent) in &tr.parent {
                assert!(g.has_edge(parent, child));
            }
            for l in tr.exposed.iter().chain(tr.active_pos.iter()).chain(&tr.active_neg) {
                let path = tr.path_from_start(*l).unwrap();
                let mut vars: Vec<u32> = path.iter().map(|l| l.var()).collect();
                vars.sort_unstable();
                vars.dedup();
                assert_eq!(vars.len(), path.len());
            }
            // each clause examined at most once, and the implicit record agrees
            let listed = tr.examined.list();
            let unique: HashSet<Clause> = listed.iter().copied().collect();
            assert_eq!(unique.len(), listed.len());
            assert_eq!(listed.len(), tr.examined_count());
            for c in f.clauses().iter().take(20) {
                assert_eq!(tr.examined.contains(c), unique.contains(c));
            }
        }
    }

    #[test]
    fn tau_counts_the_qualifying_prefix() {
        let params = ModelParams::uniform(3.0).unwrap();
        let mut src = LazySource::new(400, params, seed::rng_for(5, &[])).unwrap();
        let o = ExploreOptions { horizon: 20, alpha_max: 0.05, policy: PopPolicy::PreferPositive };
        let tr = explore_with(&mut src, Arc::new(VarSet::full(400)), Literal::positive(1), &o, &mut seed::rng_for(6, &[])).unwrap();
        let thr = tr.u0 as f64 - 2.0 * 0.05 * 20.0;
        let brute = (0..=20).filter(|&t| tr.u_at(t) as f64 >= thr).max().unwrap();
        assert_eq!(tr.tau, brute);
        assert_eq!(tr.stopped_early, brute < 20);
    }

    #[test]
    fn rounds_keep_clause_sets_disjoint() {
        for s in 0..300u64 {
            let params = match s % 3 {
                0 => ModelParams::uniform(2.0).unwrap(),
                1 => ModelParams::new(4.0, 0.0, 4.0).unwrap(),
                _ => ModelParams::new(1.0, 2.5, 3.0).unwrap(),
            };
            let n = 400;
            let cfg = RoundConfig::new(n, &params, 0.25, Literal::positive(1 + (s % 5) as u32)).unwrap();
            let f = sample_formula(n, &params, s).unwrap();
            let g = build_digraph(&f);
            let mut src = DigraphSource::new(&g);
            let out = run_round(&mut src, Arc::new(VarSet::full(n)), &cfg, &mut seed::rng_for(s, &[])).unwrap();
            if let Some(second) = &out.second {
                assert!(out.clauses_disjoint());
                // brute-force cross-check on the explicit clause lists
                let a: HashSet<Clause> = out.first.examined.list().into_iter().collect();
                assert!(second.examined.list().iter().all(|c| !a.contains(c)));
                let restr = out.second_restriction.as_ref().unwrap();
                assert!(restr.len() + 2 * cfg.alpha_max as usize * cfg.horizon >= n);
            }
        }
    }

    #[test]
    fn disjointness_check_detects_overlap() {
        // Exploring the same formula twice from the same start overlaps.
        let f = Formula::from_pairs(4, &[(-1, 2), (-2, 3)]).unwrap();
        let s = Arc::new(VarSet::full(4));
        let a = explore(&f, s.clone(), Literal::positive(1), &opts(5), 0).unwrap();
        let b = explore(&f, s, Literal::positive(1), &opts(5), 0).unwrap();
        assert!(!check_clause_disjointness(&a, &b, &[]));
        // and a trace whose current literal later lies in A_T
        assert!(!check_clause_disjointness(&a, &b, &[Literal::positive(2), Literal::positive(4)]));
    }

    #[test]
    fn empty_round() {
        let params = ModelParams::uniform(0.0).unwrap();
        let cfg = RoundConfig::new(100, &params, 0.2, Literal::positive(1)).unwrap();
        let f = sample_formula(100, &params, 1).unwrap();
        let g = build_digraph(&f);
        let out = run_round(&mut DigraphSource::new(&g), Arc::new(VarSet::full(100)), &cfg, &mut seed::rng_for(0, &[])).unwrap();
        assert_eq!(out.verdict, RoundVerdict::Completed);
        assert!(out.first.exhausted && out.second.as_ref().unwrap().exhausted);
        assert_eq!(out.first.steps.len(), 1);
        assert!(out.clauses_disjoint());
    }

    #[test]
    fn round_preconditions() {
        let params = ModelParams::uniform(2.0).unwrap();
        assert!(RoundConfig::new(100, &params, 0.6, Literal::positive(1)).is_err());
        assert!(RoundConfig::new(100, &params, 0.0, Literal::positive(1)).is_err());
        let cfg = RoundConfig::new(100, &params, 0.2, Literal::positive(1)).unwrap();
        let small = Arc::new(VarSet::from_vars(100, 1..=80));
        let mut src = LazySource::new(100, params, seed::rng_for(0, &[])).unwrap();
        assert!(run_round(&mut src, small, &cfg, &mut seed::rng_for(0, &[])).is_err());
    }

    #[test]
    fn closing_paths_are_edge_valid() {
        let params = ModelParams::uniform(3.0).unwrap();
        let n = 900;
        let mut found = 0;
        for s in 0..40u64 {
            let f = sample_formula(n, &params, s).unwrap();
            let g = build_digraph(&f);
            let mut src = DigraphSource::new(&g);
            let o = ExploreOptions { horizon: 30, alpha_max: 3.0, policy: PopPolicy::PreferPositive };
            let tr = explore_with(&mut src, Arc::new(VarSet::full(n)), Literal::positive(1), &o, &mut seed::rng_for(s, &[])).unwrap();
            if let Some(c) = find_closing(&tr, &mut src, false) {
                let path = c.path(&tr).unwrap();
                assert_eq!(path[0], Literal::positive(1));
                assert_eq!(*path.last().unwrap(), Literal::negative(1));
                assert!(path.windows(2).all(|w| g.has_edge(w[0], w[1])), "{path:?}");
                found += 1;
            }
        }
        assert!(found > 0);
    }

    #[test]
    fn degenerate_step_law() {
        let params = ModelParams::new(0.0, 0.0, 2.0).unwrap();
        let r = step_distribution_check(&params, 400, 40, 3).unwrap();
        assert_eq!(r.positive_decrease.dof, 0);
        assert_eq!(r.positive_decrease.p_value, 1.0);
    }

    #[test]
    fn step_law_matches_binomials() {
        let params = ModelParams::new(1.0, 0.5, 2.0).unwrap();
        let r = step_distribution_check(&params, 10_000, 600, 17).unwrap();
        assert!(r.observations_positive > 500 && r.observations_negative > 500);
        assert!(r.min_p_value() > 0.001, "{r:?}");
    }
}
