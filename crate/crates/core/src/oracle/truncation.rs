//! Neighborhood-truncated averaged Q-functions and their decay gap.
//!
//! A κ_c-truncated Q-function replaces the state coordinates outside
//! `N_i^{κ_c}` with an arbitrary fixed distribution `u` and averages
//! `Q̄_i` under it. The decay gap measures how much the result can depend
//! on that choice; on games with κ_r-local rewards it falls geometrically
//! in `κ_c`.

use super::markov::ExactSolution;
use super::OracleError;
use crate::game::index::{gather, MixedRadix};
use crate::game::NetworkedGame;
use crate::policy::{profile_from_theta, Theta};

/// A truncated averaged Q-function over `(s_{N_i^{κ_c}}, a_i)`.
#[derive(Debug, Clone)]
pub struct TruncatedQ {
    /// The truncating agent.
    pub agent: usize,
    /// Truncation radius.
    pub kappa_c: usize,
    /// Sorted members of `N_i^{κ_c}`.
    pub members: Vec<usize>,
    /// Values indexed by the members' mixed-radix state index (ascending
    /// member order, last fastest), own action fastest:
    /// `s_N·|A_i| + a_i`.
    pub values: Vec<f64>,
}

impl TruncatedQ {
    /// Looks a value up by member-state digits and own action.
    pub fn at(&self, s_members: &[usize], a_i: usize, game: &NetworkedGame) -> f64 {
        let sizes: Vec<usize> = self.members.iter().map(|&j| game.state_sizes()[j]).collect();
        let radix = MixedRadix::new(&sizes);
        let asz = game.action_sizes()[self.agent];
        self.values[radix.index(s_members) * asz + a_i]
    }
}

/// `E_{s_out ∼ u}[Q̄_i(s_N, s_out, a_i)]`: the κ_c-truncated averaged
/// Q-function of agent `i` at softmax parameters `theta`, under an
/// arbitrary distribution `u` over the joint states of the agents
/// *outside* `N_i^{κ_c}` (mixed radix over the complement in ascending
/// agent order; pass `&[1.0]` when the neighborhood covers everyone).
///
/// # Errors
///
/// [`OracleError::BadInput`] when `u` has the wrong length or is not a
/// distribution; guard errors from the underlying enumeration.
pub fn truncated_q(
    game: &NetworkedGame,
    theta: &Theta,
    i: usize,
    kappa_c: usize,
    u: &[f64],
) -> Result<TruncatedQ, OracleError> {
    let members = game.graph().khop(i, kappa_c);
    let complement = game.graph().khop_complement(i, kappa_c);
    let out_sizes: Vec<usize> = complement.iter().map(|&j| game.state_sizes()[j]).collect();
    let out_radix = MixedRadix::new(&out_sizes);
    if u.len() != out_radix.len() {
        return Err(OracleError::BadInput(format!(
            "tail distribution has {} entries, expected {}",
            u.len(),
            out_radix.len()
        )));
    }
    let total: f64 = u.iter().sum();
    if u.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(OracleError::BadInput(format!("tail distribution sums to {total}")));
    }

    let profile = profile_from_theta(theta);
    let sol = ExactSolution::solve(game, &profile)?;
    let member_sizes: Vec<usize> = members.iter().map(|&j| game.state_sizes()[j]).collect();
    let members_radix = MixedRadix::new(&member_sizes);
    let asz = game.action_sizes()[i];
    let mut values = vec![0.0; members_radix.len() * asz];
    let mut digits = vec![0usize; game.n()];
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    let states = MixedRadix::new(game.state_sizes());
    for s_idx in 0..states.len() {
        states.decode_into(s_idx, &mut digits);
        gather(&digits, &complement, &mut outside);
        let w = u[out_radix.index(&outside)];
        if w == 0.0 {
            continue;
        }
        gather(&digits, &members, &mut inside);
        let base = members_radix.index(&inside) * asz;
        for a_i in 0..asz {
            values[base + a_i] += w * sol.q_bar[i][s_idx * asz + a_i];
        }
    }
    Ok(TruncatedQ { agent: i, kappa_c, members, values })
}

/// The decay gap of agent `i` at radius `κ_c`: the supremum over
/// `(s_N, a_i)` of the spread of `Q̄_i` across completions of the outside
/// state,
///
/// ```text
/// sup_{s_N, a_i} ( max_{s_out} Q̄_i − min_{s_out} Q̄_i ).
/// ```
///
/// By linearity of [`truncated_q`] in `u`, this bounds the difference
/// between any two truncations (the extreme values are attained at point
/// masses). Zero when `N_i^{κ_c}` covers every agent. On games with
/// rewards rescaled to `[0, 1]` it satisfies
/// `≤ 2·min(γ^{κ_c−κ_r+1}, 1)/(1−γ)`.
///
/// # Errors
///
/// Guard errors from the underlying enumeration.
pub fn decay_gap(
    game: &NetworkedGame,
    theta: &Theta,
    i: usize,
    kappa_c: usize,
) -> Result<f64, OracleError> {
    let members = game.graph().khop(i, kappa_c);
    let profile = profile_from_theta(theta);
    let sol = ExactSolution::solve(game, &profile)?;
    let member_sizes: Vec<usize> = members.iter().map(|&j| game.state_sizes()[j]).collect();
    let members_radix = MixedRadix::new(&member_sizes);
    let asz = game.action_sizes()[i];
    let slots = members_radix.len() * asz;
    let mut lows = vec![f64::INFINITY; slots];
    let mut highs = vec![f64::NEG_INFINITY; slots];
    let mut digits = vec![0usize; game.n()];
    let mut inside = Vec::new();
    let states = MixedRadix::new(game.state_sizes());
    for s_idx in 0..states.len() {
        states.decode_into(s_idx, &mut digits);
        gather(&digits, &members, &mut inside);
        let base = members_radix.index(&inside) * asz;
        for a_i in 0..asz {
            let v = sol.q_bar[i][s_idx * asz + a_i];
            let slot = base + a_i;
            lows[slot] = lows[slot].min(v);
            highs[slot] = highs[slot].max(v);
        }
    }
    Ok(lows.iter().zip(&highs).fold(0.0f64, |m, (&lo, &hi)| m.max(hi - lo)))
}
