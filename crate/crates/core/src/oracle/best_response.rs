//! Best-response values and Nash-gap evaluation.
//!
//! The gap of agent `i` at a profile is `max_{ξ_i'} J_i(ξ_i', ξ_{−i}) −
//! J_i(ξ)`, where the max ranges over policies conditioned on the agent's
//! own local state. Two estimators are provided:
//!
//! * [`best_response_local`] — exact-gradient ascent on the deviating
//!   agent's softmax parameters with restarts and deterministic polish; a
//!   lower bound on the max that is tight whenever the ascent finds the
//!   optimum, and the default gap estimator;
//! * [`best_response_upper`] — value iteration on the deviator's averaged
//!   decision process with *full state observation*; an upper bound on
//!   what any local policy can attain.
//!
//! Evaluations log both the raw difference and the reported gap (clamped
//! at zero).

use super::gradient::agent_gradient_from_solution;
use super::markov::{ExactSolution, GlobalView};
use super::{ensure_dense, OracleError, TOL_VI};
use crate::game::NetworkedGame;
use crate::policy::{softmax_probs, AgentTable, PolicyProfile, Theta};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Iteration cap for best-response value iteration.
const VI_MAX_ITER: usize = 5_000_000;

/// Line-search halvings per accepted ascent step.
const MAX_HALVINGS: usize = 45;

/// How a per-agent best response is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BrMode {
    /// Exact-gradient ascent over the deviator's own softmax parameters
    /// (restarts + deterministic polish). Matches the policy class of the
    /// gap definition.
    Local {
        /// Number of ascent restarts (warm, uniform, then random inits).
        restarts: usize,
        /// Ascent steps per restart.
        steps: usize,
    },
    /// Full-observation value-iteration upper bound.
    Upper,
}

impl Default for BrMode {
    fn default() -> Self {
        BrMode::Local { restarts: 4, steps: 300 }
    }
}

/// One agent's Nash-gap evaluation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NeGap {
    /// `J_i` at the evaluated profile.
    pub objective: f64,
    /// Best-response value found (or upper-bounded).
    pub best_response: f64,
    /// `best_response − objective` before clamping. Slightly negative
    /// values witness an ascent that could not recover the profile's own
    /// value and are kept for diagnosis.
    pub raw: f64,
    /// `max(raw, 0)` — the reported gap.
    pub gap: f64,
}

/// Upper-bounds agent `i`'s best-response value by value iteration on its
/// averaged decision process: state `s`, action `a_i`, kernel
/// `Σ_{a_{−i}} ξ_{−i}(a_{−i}|s)·P(s'|s,a)` and reward `r̄_i(s,a_i)`, with
/// the deviator observing the full global state. Stops when the sup-norm
/// sweep change is at most `TOL_VI·(1−γ)/(2γ)`, so the returned
/// `E_μ V*` is within [`TOL_VI`] of the optimum. Agent `i`'s own entry in
/// `profile` is ignored.
///
/// # Errors
///
/// Fails on guards or if value iteration exhausts its iteration cap.
pub fn best_response_upper(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    i: usize,
) -> Result<f64, OracleError> {
    let view = GlobalView::new(game)?;
    let ns = view.states.len();
    let nai = game.action_sizes()[i];
    ensure_dense(ns, "induced state chain")?;
    ensure_dense(ns.saturating_mul(nai), "averaged decision process")?;
    let gamma = game.gamma();

    // Averaged kernel rows and rewards per (s, a_i).
    let mut kernel = vec![0.0; ns * nai * ns];
    let mut rbar = vec![0.0; ns * nai];
    for (s_idx, s) in view.state_digits.iter().enumerate() {
        for a in &view.action_digits {
            let mut w = 1.0;
            for j in 0..game.n() {
                if j != i {
                    w *= profile.prob(j, s[j], a[j]);
                }
            }
            if w == 0.0 {
                continue;
            }
            let slot = s_idx * nai + a[i];
            rbar[slot] += w * game.reward(i, s, a);
            let nd = view.next_dist(s, a);
            let row = &mut kernel[slot * ns..(slot + 1) * ns];
            for (sp, &q) in nd.iter().enumerate() {
                row[sp] += w * q;
            }
        }
    }

    let threshold = if gamma > 0.0 { TOL_VI * (1.0 - gamma) / (2.0 * gamma) } else { TOL_VI };
    let mut v = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    for it in 1..=VI_MAX_ITER {
        let mut change = 0.0f64;
        for s_idx in 0..ns {
            let mut best = f64::NEG_INFINITY;
            for a_i in 0..nai {
                let slot = s_idx * nai + a_i;
                let row = &kernel[slot * ns..(slot + 1) * ns];
                let cont: f64 = row.iter().zip(&v).map(|(&p, &vv)| p * vv).sum();
                best = best.max(rbar[slot] + gamma * cont);
            }
            next[s_idx] = best;
            change = change.max((best - v[s_idx]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if change <= threshold {
            let _ = it;
            return Ok(view.mu_vec().iter().zip(&v).map(|(&m, &vv)| m * vv).sum());
        }
    }
    Err(OracleError::NoConvergence { what: "best-response value iteration", iters: VI_MAX_ITER })
}

/// A one-hot policy table selecting the per-row argmax of `table`
/// (ties to the lowest index).
fn deterministic_argmax(table: &AgentTable) -> AgentTable {
    let mut out = AgentTable::zeros(table.rows, table.cols);
    for s in 0..table.rows {
        let row = table.row(s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = a;
            }
        }
        *out.get_mut(s, best) = 1.0;
    }
    out
}

/// The visitation-weighted greedy policy
/// `a*(s_i) = argmax_{a_i} Σ_{s: s_i} d(s)·Q̄_i(s, a_i)` of a solution.
fn greedy_from_solution(game: &NetworkedGame, sol: &ExactSolution, i: usize) -> AgentTable {
    let ssz = game.state_sizes()[i];
    let asz = game.action_sizes()[i];
    let mut weighted = AgentTable::zeros(ssz, asz);
    for s_idx in 0..sol.n_states() {
        let w = sol.d[s_idx];
        if w == 0.0 {
            continue;
        }
        let s_i = sol.state_digit(s_idx, i);
        for a_i in 0..asz {
            *weighted.get_mut(s_i, a_i) += w * sol.q_bar[i][s_idx * asz + a_i];
        }
    }
    deterministic_argmax(&weighted)
}

/// One gradient-ascent run from `theta_init`; returns the best `J_i`
/// observed, including two deterministic polish candidates (the argmax of
/// the final parameters and the visitation-weighted greedy policy).
fn ascent_from(
    game: &NetworkedGame,
    base: &PolicyProfile,
    i: usize,
    theta_init: AgentTable,
    steps: usize,
) -> Result<f64, OracleError> {
    let mut theta_i = theta_init;
    let mut profile = base.with_agent_table(i, softmax_probs(&theta_i));
    let mut sol = ExactSolution::solve(game, &profile)?;
    let mut current = sol.j[i];
    let mut best = current;
    let mut eta = 1.0f64;
    for _ in 0..steps {
        let g = agent_gradient_from_solution(game, &profile, &sol, i);
        let gmax = g.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        if gmax < 1e-13 {
            break;
        }
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let mut cand = theta_i.clone();
            for (c, &gg) in cand.data.iter_mut().zip(&g.data) {
                *c += eta * gg;
            }
            let cand_profile = base.with_agent_table(i, softmax_probs(&cand));
            let cand_sol = ExactSolution::solve(game, &cand_profile)?;
            if cand_sol.j[i] > current {
                theta_i = cand;
                profile = cand_profile;
                sol = cand_sol;
                current = sol.j[i];
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
        best = best.max(current);
        eta = (eta * 1.5).min(1e3);
    }
    let det = base.with_agent_table(i, deterministic_argmax(&theta_i));
    best = best.max(super::markov::objective(game, &det, i)?);
    let greedy = base.with_agent_table(i, greedy_from_solution(game, &sol, i));
    best = best.max(super::markov::objective(game, &greedy, i)?);
    Ok(best)
}

/// Estimates agent `i`'s best-response value by exact-gradient ascent on
/// its own softmax parameters with `restarts` initializations (warm start
/// at the profile itself, then the uniform policy, then Gaussian draws
/// from an internal fixed-seed generator — the estimate is deterministic)
/// and adaptive step sizes. Returns the best `J_i` found; monotone
/// non-decreasing in `restarts`.
///
/// The warm start guarantees the returned value is at least
/// `J_i(profile)` up to solver tolerance.
///
/// # Errors
///
/// Fails when enumeration or dense-solve guards are exceeded.
pub fn best_response_local(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    i: usize,
    restarts: usize,
    steps: usize,
) -> Result<f64, OracleError> {
    let ssz = game.state_sizes()[i];
    let asz = game.action_sizes()[i];
    let mut rng = ChaCha8Rng::seed_from_u64(0x0be5_7aceu64);
    let mut best = f64::NEG_INFINITY;
    for attempt in 0..restarts.max(1) {
        let init = match attempt {
            0 => {
                // Warm start: log-probabilities of the current policy.
                let mut t = AgentTable::zeros(ssz, asz);
                for s in 0..ssz {
                    for a in 0..asz {
                        *t.get_mut(s, a) = profile.prob(i, s, a).max(1e-300).ln();
                    }
                }
                t
            }
            1 => AgentTable::zeros(ssz, asz),
            _ => Theta::random(&[ssz], &[asz], 2.0, &mut rng).tables.swap_remove(0),
        };
        best = best.max(ascent_from(game, profile, i, init, steps)?);
    }
    Ok(best)
}

/// Agent `i`'s Nash gap under the chosen best-response mode.
///
/// # Errors
///
/// Fails when enumeration or dense-solve guards are exceeded, or when the
/// upper-bound value iteration stalls.
pub fn ne_gap(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    i: usize,
    mode: &BrMode,
) -> Result<NeGap, OracleError> {
    let objective = super::markov::objective(game, profile, i)?;
    let best_response = match *mode {
        BrMode::Local { restarts, steps } => best_response_local(game, profile, i, restarts, steps)?,
        BrMode::Upper => best_response_upper(game, profile, i)?,
    };
    let raw = best_response - objective;
    Ok(NeGap { objective, best_response, raw, gap: raw.max(0.0) })
}

/// The global Nash gap `max_i` plus the per-agent detail.
///
/// # Errors
///
/// Same failure modes as [`ne_gap`].
pub fn ne_gap_global(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    mode: &BrMode,
) -> Result<(f64, Vec<NeGap>), OracleError> {
    let per_agent: Vec<NeGap> =
        (0..game.n()).map(|i| ne_gap(game, profile, i, mode)).collect::<Result<_, _>>()?;
    let global = per_agent.iter().fold(0.0f64, |m, g| m.max(g.gap));
    Ok((global, per_agent))
}
