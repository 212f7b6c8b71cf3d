//! Exact policy gradients for softmax parameters.
//!
//! Two independent routes are provided: the visitation-weighted advantage
//! form (one linear solve) and a trajectory propagation that discounts
//! score-weighted averaged Q-values step by step with an analytic tail
//! bound. Tests require the two to agree, and both to agree with central
//! finite differences of the objective.

use super::markov::{ExactSolution, GlobalView};
use super::{ensure_dense, OracleError};
use crate::game::NetworkedGame;
use crate::policy::{profile_from_theta, AgentTable, PolicyProfile, Theta};
use nalgebra::DVector;

/// Agent `i`'s exact gradient from an already-computed solution:
///
/// ```text
/// ∂J_i/∂θ_i(s_i°, a_i) = (1/(1−γ)) Σ_{s: s_i = s_i°} d(s)·ξ_i(a_i|s_i)·Ā_i(s, a_i).
/// ```
pub(crate) fn agent_gradient_from_solution(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    sol: &ExactSolution,
    i: usize,
) -> AgentTable {
    let asz = game.action_sizes()[i];
    let inv = 1.0 / (1.0 - game.gamma());
    let mut g = AgentTable::zeros(game.state_sizes()[i], asz);
    for s_idx in 0..sol.n_states() {
        let weight = sol.d[s_idx];
        if weight == 0.0 {
            continue;
        }
        let s_i = sol.state_digit(s_idx, i);
        let row = profile.row(i, s_i);
        for a_i in 0..asz {
            *g.get_mut(s_i, a_i) += inv * weight * row[a_i] * sol.adv_bar[i][s_idx * asz + a_i];
        }
    }
    g
}

/// Exact `∂J_i/∂θ_i` for every agent, sharing one exact solve.
///
/// # Errors
///
/// Fails when enumeration or dense-solve guards are exceeded.
pub fn exact_policy_gradient_all(
    game: &NetworkedGame,
    theta: &Theta,
) -> Result<Vec<AgentTable>, OracleError> {
    let profile = profile_from_theta(theta);
    let sol = ExactSolution::solve(game, &profile)?;
    Ok((0..game.n()).map(|i| agent_gradient_from_solution(game, &profile, &sol, i)).collect())
}

/// Exact `∂J_i/∂θ_i` for a single agent.
///
/// # Errors
///
/// Fails when enumeration or dense-solve guards are exceeded.
pub fn exact_policy_gradient(
    game: &NetworkedGame,
    theta: &Theta,
    i: usize,
) -> Result<AgentTable, OracleError> {
    exact_policy_gradient_all(game, theta).map(|mut all| all.swap_remove(i))
}

/// `∂J_i/∂θ_i` by trajectory propagation:
///
/// ```text
/// Σ_{t≤T} γ^t Σ_s Pr[s(t)=s] Σ_{a_i} ξ_i(a_i|s_i)·Q̄_i(s,a_i)·∇log ξ_i(a_i|s_i),
/// ```
///
/// with `T` chosen so the analytic tail `2·γ^{T+1}·max|Q̄_i|/(1−γ)` is
/// below `tol`. Independent of the visitation route up to the shared Q̄.
///
/// # Errors
///
/// Fails when enumeration or dense-solve guards are exceeded.
pub fn policy_gradient_trajectory(
    game: &NetworkedGame,
    theta: &Theta,
    i: usize,
    tol: f64,
) -> Result<AgentTable, OracleError> {
    let profile = profile_from_theta(theta);
    let sol = ExactSolution::solve(game, &profile)?;
    let view = GlobalView::new(game)?;
    ensure_dense(view.states.len(), "induced state chain")?;
    let p = view.induced_matrix(&profile)?;
    let gamma = game.gamma();
    let asz = game.action_sizes()[i];
    let mut g = AgentTable::zeros(game.state_sizes()[i], asz);
    let qmax = sol.q_bar[i].iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if qmax == 0.0 {
        return Ok(g);
    }
    let horizon = if gamma == 0.0 {
        1
    } else {
        ((tol * (1.0 - gamma) / (2.0 * qmax)).ln() / gamma.ln()).ceil().max(1.0) as usize
    };
    let mut p_t = DVector::from_vec(view.mu_vec());
    let mut discount = 1.0;
    for _ in 0..horizon {
        for s_idx in 0..view.states.len() {
            let mass = p_t[s_idx];
            if mass == 0.0 {
                continue;
            }
            let s_i = view.states.digit(s_idx, i);
            let row = profile.row(i, s_i).to_vec();
            for a_i in 0..asz {
                let coef = discount * mass * row[a_i] * sol.q_bar[i][s_idx * asz + a_i];
                if coef == 0.0 {
                    continue;
                }
                // ∇_{θ(s_i, b)} log ξ_i(a_i|s_i) = 1{b = a_i} − ξ_i(b|s_i).
                *g.get_mut(s_i, a_i) += coef;
                for (b, &xb) in row.iter().enumerate() {
                    *g.get_mut(s_i, b) -= coef * xb;
                }
            }
        }
        p_t = p.tr_mul(&p_t);
        discount *= gamma;
    }
    Ok(g)
}
