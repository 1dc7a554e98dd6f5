//! Literals, clauses and formulas of the generalized 2-SAT model.

mod dimacs;
mod generate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use dimacs::{parse_dimacs, read_dimacs, write_dimacs, Provenance};
pub use generate::{sample_formula, type_count, unrank_clause};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn flip(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

/// A literal over a 1-based variable index.
///
/// Encoded as `2 * var + negated`, so complementing is a single xor and the
/// implication digraph can index vertices by `code - 2`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal(u32);

impl Literal {
    pub fn new(var: u32, polarity: Polarity) -> Self {
        assert!(var >= 1, "variables are 1-based");
        Literal(2 * var + (polarity == Polarity::Negative) as u32)
    }

    pub fn positive(var: u32) -> Self {
        Self::new(var, Polarity::Positive)
    }

    pub fn negative(var: u32) -> Self {
        Self::new(var, Polarity::Negative)
    }

    #[inline]
    pub fn var(self) -> u32 {
        self.0 >> 1
    }

    #[inline]
    pub fn is_positive(self) -> bool {
        self.0 & 1 == 0
    }

    pub fn polarity(self) -> Polarity {
        if self.is_positive() {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }

    #[inline]
    pub fn complement(self) -> Self {
        Literal(self.0 ^ 1)
    }

    /// Vertex index in `0..2n`.
    #[inline]
    pub fn index(self) -> usize {
        (self.0 - 2) as usize
    }

    #[inline]
    pub fn from_index(index: usize) -> Self {
        Literal(index as u32 + 2)
    }

    pub fn to_dimacs(self) -> i64 {
        if self.is_positive() {
            self.var() as i64
        } else {
            -(self.var() as i64)
        }
    }

    pub fn from_dimacs(value: i64) -> Option<Self> {
        match value {
            0 => None,
            v if v.unsigned_abs() > (u32::MAX / 2 - 1) as u64 => None,
            v if v > 0 => Some(Literal::positive(v as u32)),
            v => Some(Literal::negative((-v) as u32)),
        }
    }

    /// Truth value under `assignment` (index `var - 1`).
    pub fn eval(self, assignment: &[bool]) -> bool {
        assignment[self.var() as usize - 1] == self.is_positive()
    }

    /// Strongly distinct: over different variables.
    pub fn strongly_distinct(self, other: Literal) -> bool {
        self.var() != other.var()
    }
}

impl fmt::Debug for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_positive() {
            write!(f, "x{}", self.var())
        } else {
            write!(f, "~x{}", self.var())
        }
    }
}

/// A 2-clause over strongly distinct literals, stored with the lower
/// variable first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Clause {
    first: Literal,
    second: Literal,
}

impl Clause {
    pub fn new(a: Literal, b: Literal) -> Result<Self> {
        if a.var() == b.var() {
            return Err(Error::InvalidClause(format!(
                "({a} v {b}) repeats variable {}",
                a.var()
            )));
        }
        Ok(Self::new_unchecked(a, b))
    }

    pub(crate) fn new_unchecked(a: Literal, b: Literal) -> Self {
        debug_assert_ne!(a.var(), b.var());
        if a.var() < b.var() {
            Clause { first: a, second: b }
        } else {
            Clause { first: b, second: a }
        }
    }

    pub fn first(&self) -> Literal {
        self.first
    }

    pub fn second(&self) -> Literal {
        self.second
    }

    pub fn literals(&self) -> [Literal; 2] {
        [self.first, self.second]
    }

    /// Number of positive literals, which selects the presence probability.
    pub fn clause_type(&self) -> usize {
        classify_clause(self)
    }

    pub fn is_satisfied(&self, assignment: &[bool]) -> bool {
        self.first.eval(assignment) || self.second.eval(assignment)
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} v {})", self.first, self.second)
    }
}

pub fn classify_clause(c: &Clause) -> usize {
    c.first.is_positive() as usize + c.second.is_positive() as usize
}

/// Clause-presence intensities: a type-`i` clause appears with probability
/// `alpha_i / 2n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl ModelParams {
    pub fn new(alpha0: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        let p = ModelParams { alpha0, alpha1, alpha2 };
        p.validate()?;
        Ok(p)
    }

    /// The standard model: every clause with probability `alpha / 2n`.
    pub fn uniform(alpha: f64) -> Result<Self> {
        Self::new(alpha, alpha, alpha)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.alphas().into_iter().enumerate() {
            if !a.is_finite() || a < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "alpha{i} must be finite and nonnegative, got {a}"
                )));
            }
        }
        Ok(())
    }

    pub fn alphas(&self) -> [f64; 3] {
        [self.alpha0, self.alpha1, self.alpha2]
    }

    pub fn alpha(&self, clause_type: usize) -> f64 {
        self.alphas()[clause_type]
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha0.max(self.alpha1).max(self.alpha2)
    }

    /// Presence probability of a type-`clause_type` clause on `n` variables.
    pub fn clause_prob(&self, clause_type: usize, n: usize) -> f64 {
        self.alpha(clause_type) / (2.0 * n as f64)
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        ModelParams {
            alpha0: lambda * self.alpha0,
            alpha1: lambda * self.alpha1,
            alpha2: lambda * self.alpha2,
        }
    }

    /// Largest eigenvalue of the branching matrix, `(a1 + sqrt(a0 a2)) / 2`.
    pub fn rho(&self) -> f64 {
        0.5 * (self.alpha1 + (self.alpha0 * self.alpha2).sqrt())
    }

    /// Rejects intensities that would make some `alpha_i / 2n` exceed one.
    pub fn check_for(&self, n: usize) -> Result<()> {
        self.validate()?;
        if n < 2 {
            return Err(Error::InvalidParams(format!("need n >= 2, got {n}")));
        }
        for t in 0..3 {
            if self.clause_prob(t, n) > 1.0 {
                return Err(Error::InvalidParams(format!(
                    "alpha{t}/2n = {} exceeds 1 at n = {n}",
                    self.clause_prob(t, n)
                )));
            }
        }
        Ok(())
    }
}

/// A duplicate-free set of clauses over variables `1..=n`, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Formula {
    n: usize,
    clauses: Vec<Clause>,
    seed: Option<u64>,
}

impl Formula {
    pub fn empty(n: usize) -> Self {
        Formula { n, clauses: Vec::new(), seed: None }
    }

    /// Builds a formula, canonicalizing order and dropping duplicates.
    pub fn from_clauses<I: IntoIterator<Item = Clause>>(n: usize, clauses: I) -> Result<Self> {
        let mut clauses: Vec<Clause> = clauses.into_iter().collect();
        for c in &clauses {
            for l in c.literals() {
                if l.var() as usize > n {
                    return Err(Error::InvalidClause(format!(
                        "{c} uses variable {} but n = {n}",
                        l.var()
                    )));
                }
            }
        }
        clauses.sort_unstable();
        clauses.dedup();
        Ok(Formula { n, clauses, seed: None })
    }

    /// Convenience constructor from DIMACS-style integer pairs.
    pub fn from_pairs(n: usize, pairs: &[(i64, i64)]) -> Result<Self> {
        let clauses = pairs
            .iter()
            .map(|&(a, b)| {
                let la = Literal::from_dimacs(a)
                    .ok_or_else(|| Error::InvalidClause(format!("bad literal {a}")))?;
                let lb = Literal::from_dimacs(b)
                    .ok_or_else(|| Error::InvalidClause(format!("bad literal {b}")))?;
                Clause::new(la, lb)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_clauses(n, clauses)
    }

    pub(crate) fn from_sorted(n: usize, clauses: Vec<Clause>, seed: Option<u64>) -> Self {
        debug_assert!(clauses.windows(2).all(|w| w[0] < w[1]));
        Formula { n, clauses, seed }
    }

    pub fn with_clause(&self, c: Clause) -> Result<Self> {
        let mut clauses = self.clauses.clone();
        clauses.push(c);
        let mut f = Self::from_clauses(self.n, clauses)?;
        f.seed = self.seed;
        Ok(f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn contains(&self, c: &Clause) -> bool {
        self.clauses.binary_search(c).is_ok()
    }

    /// Number of clauses of each type.
    pub fn type_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for c in &self.clauses {
            counts[c.clause_type()] += 1;
        }
        counts
    }

    pub fn evaluate(&self, assignment: &[bool]) -> Result<bool> {
        if assignment.len() != self.n {
            return Err(Error::AssignmentLength { expected: self.n, got: assignment.len() });
        }
        Ok(self.clauses.iter().all(|c| c.is_satisfied(assignment)))
    }
}
