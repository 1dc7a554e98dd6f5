//! Sampling from the generalized model in time linear in the clause count.
//!
//! For each clause type the number of present clauses is drawn as
//! `Binomial(type_count, alpha_i / 2n)` and that many distinct clause ranks
//! are chosen uniformly without replacement, which has the same law as one
//! coin per clause.
//!
//! Stream layout: type `i` uses a ChaCha8 generator keyed by the formula seed
//! with stream id `i`; successive draws advance the block counter. Types can
//! therefore be generated independently and in any order.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use super::{Clause, Formula, Literal, ModelParams};
use crate::Result;

/// Number of distinct clauses of the given type on `n` variables.
pub fn type_count(n: usize, clause_type: usize) -> u64 {
    let n = n as u64;
    match clause_type {
        0 | 2 => n * (n - 1) / 2,
        1 => n * (n - 1),
        _ => panic!("clause type must be 0, 1 or 2"),
    }
}

fn unrank_pair(rank: u64) -> (u32, u32) {
    // rank = j(j-1)/2 + i with 0 <= i < j
    let mut j = ((1.0 + (1.0 + 8.0 * rank as f64).sqrt()) / 2.0) as u64;
    while j * (j - 1) / 2 > rank {
        j -= 1;
    }
    while (j + 1) * j / 2 <= rank {
        j += 1;
    }
    let i = rank - j * (j - 1) / 2;
    (i as u32 + 1, j as u32 + 1)
}

/// Bijection from `0..type_count(n, t)` to type-`t` clauses.
///
/// Types 0 and 2 enumerate unordered variable pairs; type 1 enumerates
/// ordered pairs `(i, j)`, `i != j`, meaning `(x_i v ~x_j)`.
pub fn unrank_clause(n: usize, clause_type: usize, rank: u64) -> Clause {
    debug_assert!(rank < type_count(n, clause_type));
    match clause_type {
        0 => {
            let (a, b) = unrank_pair(rank);
            Clause::new_unchecked(Literal::negative(a), Literal::negative(b))
        }
        2 => {
            let (a, b) = unrank_pair(rank);
            Clause::new_unchecked(Literal::positive(a), Literal::positive(b))
        }
        1 => {
            let row = n as u64 - 1;
            let i = rank / row;
            let jj = rank % row;
            let j = if jj >= i { jj + 1 } else { jj };
            Clause::new_unchecked(Literal::positive(i as u32 + 1), Literal::negative(j as u32 + 1))
        }
        _ => panic!("clause type must be 0, 1 or 2"),
    }
}

/// Draws a formula with each type-`i` clause present independently with
/// probability `alpha_i / 2n`. Deterministic in `(n, params, seed)`.
pub fn sample_formula(n: usize, params: &ModelParams, seed: u64) -> Result<Formula> {
    params.check_for(n)?;
    let mut clauses = Vec::new();
    for t in 0..3 {
        let p = params.clause_prob(t, n);
        if p == 0.0 {
            continue;
        }
        let total = type_count(n, t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let k = if p >= 1.0 {
            total
        } else {
            Binomial::new(total, p).expect("p in (0, 1)").sample(&mut rng)
        };
        let picks = index::sample(&mut rng, total as usize, k as usize);
        clauses.extend(picks.into_iter().map(|r| unrank_clause(n, t, r as u64)));
    }
    clauses.sort_unstable();
    Ok(Formula::from_sorted(n, clauses, Some(seed)))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    #[test]
    fn unranking_is_a_bijection_onto_each_type() {
        for n in 2..9 {
            for t in 0..3 {
                let all: HashSet<Clause> =
                    (0..type_count(n, t)).map(|r| unrank_clause(n, t, r)).collect();
                assert_eq!(all.len() as u64, type_count(n, t));
                assert!(all.iter().all(|c| c.clause_type() == t));
                assert!(all.iter().all(|c| c.second().var() as usize <= n));
            }
        }
    }

    #[test]
    fn unrank_pair_large_ranks() {
        let n: u64 = 1_000_000;
        let last = n * (n - 1) / 2 - 1;
        assert_eq!(unrank_pair(last), (n as u32 - 1, n as u32));
        assert_eq!(unrank_pair(0), (1, 2));
        assert_eq!(unrank_pair(1), (1, 3));
        assert_eq!(unrank_pair(2), (2, 3));
    }

    #[test]
    fn zero_intensity_gives_empty_formula() {
        let f = sample_formula(100, &ModelParams::uniform(0.0).unwrap(), 7).unwrap();
        assert!(f.is_empty());
        assert_eq!(f.seed(), Some(7));
    }

    #[test]
    fn same_seed_same_formula() {
        let p = ModelParams::new(1.0, 0.5, 2.0).unwrap();
        let a = sample_formula(500, &p, 11).unwrap();
        let b = sample_formula(500, &p, 11).unwrap();
        let c = sample_formula(500, &p, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.clauses(), c.clauses());
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = ModelParams::uniform(1.0).unwrap();
        assert!(sample_formula(1, &p, 0).is_err());
        let big = ModelParams::new(0.0, 10.0, 0.0).unwrap();
        assert!(sample_formula(4, &big, 0).is_err());
    }

    #[test]
    fn saturated_probability_takes_every_clause() {
        let p = ModelParams::new(8.0, 0.0, 0.0).unwrap();
        let f = sample_formula(4, &p, 3).unwrap();
        assert_eq!(f.type_counts(), [6, 0, 0]);
    }

    #[test]
    fn large_n_is_feasible() {
        let f = sample_formula(1_000_000, &ModelParams::uniform(1.0).unwrap(), 5).unwrap();
        let expected = 999_999.0;
        assert!((f.len() as f64 - expected).abs() < 6.0 * expected.sqrt());
    }
}
