//! Generalized random 2-SAT.
//!
//! Every clause over `n` variables is present independently with probability
//! `alpha_i / 2n`, where `i` is the number of positive literals in the clause.
//! The satisfiability threshold sits where the largest eigenvalue of the
//! branching matrix `M = 1/2 [[a1, a0], [a2, a1]]` crosses one.
//!
//! Module map:
//!
//! * [`formula`]: literals, clauses, formulas, the random generator, DIMACS IO.
//! * [`digraph`]: implication digraph, iterative Tarjan SCC, witnesses,
//!   contradictory cycles and a brute-force oracle.
//! * [`analysis`]: branching matrix, first-moment bound, hooked chains,
//!   Monte Carlo path counts.
//! * [`exploration`]: the stack-driven exploration process and rounds.
//! * [`branching`]: truncated Poisson offspring laws, the two-type traversal,
//!   extinction probabilities and the dominance coupling.
//! * [`experiments`]: satisfiability sweeps, threshold location and the round
//!   bootstrap.

pub mod analysis;
pub mod branching;
pub mod digraph;
pub mod experiments;
pub mod exploration;
pub mod formula;
pub mod seed;
pub mod stats;

mod error;

pub use error::{Error, Result};
pub use formula::{Clause, Formula, Literal, ModelParams, Polarity};
