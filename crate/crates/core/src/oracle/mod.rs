//! Exact micro-scale solvers and reference checks.
//!
//! Every routine here enumerates joint state/action spaces explicitly and
//! solves dense linear systems, so all of it sits behind size guards: these
//! are ground-truth references for tests, evaluation, and diagnostics, not
//! learning-scale algorithms. Wherever feasible a quantity is computed by
//! two independent routes (linear solve vs. truncated series, stationary
//! solve vs. power iteration, visitation-weighted gradients vs. trajectory
//! propagation) so that a defect in one route cannot silently confirm
//! itself.

pub mod best_response;
pub mod diagnostics;
pub mod gradient;
pub mod marginal;
pub mod markov;
pub mod nmpg;
pub mod subchain;
pub mod truncation;

pub use best_response::{
    best_response_local, best_response_upper, ne_gap, ne_gap_global, BrMode, NeGap,
};
pub use diagnostics::{critic_error, diagnostics, Diagnostics};
pub use gradient::{exact_policy_gradient, exact_policy_gradient_all, policy_gradient_trajectory};
pub use marginal::{marginal_best_response, marginal_ne_gap_global, marginal_objectives};
pub use markov::{
    induced_chain, induced_chain_sa, objective, q_function, q_function_series,
    stationary_distribution, stationary_power, visitation, ExactSolution,
};
pub use nmpg::{congestion_descriptor, nmpg_check, value_potential_congestion, NmpgReport};
pub use subchain::{
    build_subchain, build_zchain, inner_conditional_gap, subchain_checks, td0_fixed_point,
    td0_for_subchain, SubChain, SubChainReport, Td0Solution, ZChain,
};
pub use truncation::{decay_gap, truncated_q, TruncatedQ};

use crate::game::GameError;
use thiserror::Error;

/// Enumeration guard: no dense joint table may exceed this many entries.
pub const ENUM_GUARD: usize = 200_000;

/// Dense-solve guard: square linear systems above this dimension are
/// refused rather than attempted.
pub const DENSE_GUARD: usize = 4096;

/// Sup-norm tolerance at which value iteration stops (the returned value is
/// then within `TOL_VI` of the optimum).
pub const TOL_VI: f64 = 1e-10;

/// Tie tolerance for argmax sets: every action within this distance of the
/// maximum counts as a maximizer.
pub const ARGMAX_TOL: f64 = 1e-9;

/// Errors from exact solvers.
#[derive(Debug, Error)]
pub enum OracleError {
    /// The underlying game evaluation failed.
    #[error(transparent)]
    Game(#[from] GameError),
    /// An enumeration or dense linear system exceeds its size guard.
    #[error("{what} of size {size} exceeds the guard {limit}")]
    Guard {
        /// What was being enumerated.
        what: &'static str,
        /// Requested size.
        size: usize,
        /// Permitted maximum.
        limit: usize,
    },
    /// A Markov chain is not ergodic where ergodicity is required.
    #[error("chain not ergodic: {0}")]
    NonErgodic(String),
    /// A matrix that must have full rank does not.
    #[error("{0} is rank deficient")]
    RankDeficient(&'static str),
    /// An iterative solver did not reach tolerance.
    #[error("{what} did not converge within {iters} iterations")]
    NoConvergence {
        /// Which solver stalled.
        what: &'static str,
        /// Iteration budget that was exhausted.
        iters: usize,
    },
    /// Malformed input (not a distribution, wrong length, …).
    #[error("bad input: {0}")]
    BadInput(String),
}

/// Builds a mixed-radix codec, translating a blown guard into an
/// [`OracleError::Guard`] with a saturating size estimate.
pub(crate) fn guarded_radix(
    sizes: &[usize],
    limit: usize,
    what: &'static str,
) -> Result<crate::game::index::MixedRadix, OracleError> {
    crate::game::index::MixedRadix::checked_new(sizes, limit).map_err(|_| OracleError::Guard {
        what,
        size: sizes.iter().fold(1usize, |acc, &c| acc.saturating_mul(c)),
        limit,
    })
}

/// Refuses dense square systems beyond [`DENSE_GUARD`].
pub(crate) fn ensure_dense(size: usize, what: &'static str) -> Result<(), OracleError> {
    if size > DENSE_GUARD {
        Err(OracleError::Guard { what, size, limit: DENSE_GUARD })
    } else {
        Ok(())
    }
}
