//! A four-agent chain game with closed-form objectives.
//!
//! Agents `0–1–2–3` sit on a path. Each has two local states
//! `{0 = bad, 1 = good}` and two actions `{0 = bad, 1 = good}`; everyone
//! starts in the bad state. Dynamics are deterministic:
//!
//! * agent 0 controls itself: `s_0(t+1) = good ⇔ a_0(t) = good`;
//! * agent `i ≥ 1` copies its predecessor: `s_i(t+1) = s_{i−1}(t)`.
//!
//! Only agent 3 is ever paid: `r_3 = 1` exactly when it is in the good
//! state **and** plays the good action; all other rewards are zero. Since
//! `s_3(t) = s_0(t−3)`, the objective of agent 3 is
//!
//! ```text
//! J_3(ξ) = Σ_{t≥3} γ^t · Pr[s_0(t−3) = good] · ξ_3(good | good)
//!        = γ⁴ · ξ_3(g|g) · ξ_0(g|b) / ((1−γ)(1 − γ·(ξ_0(g|g) − ξ_0(g|b))))
//!        ≜ f(ξ_0, ξ_3),
//! ```
//!
//! a rational function of the first and last agents' policies alone (the
//! two-state chain `Pr[s_0(t) = good]` is a geometric recursion summed in
//! closed form; see [`chain_payoff`]). `J_0 = J_1 = J_2 ≡ 0`.
//!
//! ## Local potentials
//!
//! The game admits 1-local potentials `Φ_0 = Φ_1 = 0`, `Φ_2 = Φ_3 = f`:
//! every agent's unilateral deviation leaves the objectives of its 1-hop
//! neighbors shifted by exactly the corresponding `Φ_i` difference. It is
//! **not** a global potential game: a global `Φ` would need
//! `Φ(ξ_3', ξ_{−3}) − Φ(ξ_3, ξ_{−3})` to equal `J_3`'s change for *both*
//! `ξ_0 = good` (difference `γ⁴/(1−γ)`) and `ξ_0 = bad` (difference `0`),
//! which no single function satisfies — deviations of the far-apart pair
//! `(0, 3)` interact. [`global_potential_witness`] returns this
//! contradicting pair of deviation values.

use super::{GameError, LocalKernel, Mu, NetworkedGame, NmpgDescriptor, PotentialFn, RewardRule};
use crate::netgraph::Graph;
use crate::policy::PolicyProfile;

/// Local state / action index for "bad".
pub const BAD: usize = 0;
/// Local state / action index for "good".
pub const GOOD: usize = 1;

/// The closed-form payoff `f(ξ_0, ξ_3)` of agent 3 (equal to `J_3` for
/// every policy profile; agents 1 and 2 cannot influence it).
///
/// # Arguments
///
/// * `gamma` — discount factor.
/// * `xi0_good_from_bad` — `ξ_0(good | bad)`.
/// * `xi0_good_from_good` — `ξ_0(good | good)`.
/// * `xi3_good_from_good` — `ξ_3(good | good)`.
pub fn chain_payoff(
    gamma: f64,
    xi0_good_from_bad: f64,
    xi0_good_from_good: f64,
    xi3_good_from_good: f64,
) -> f64 {
    // p_τ = Pr[s_0(τ) = good] obeys p_{τ+1} = gb + ρ·p_τ with p_0 = 0,
    // ρ = gg − gb, so Σ_τ γ^τ p_τ = γ·gb / ((1−γ)(1−γρ)) and
    // J_3 = ξ_3(g|g) · γ³ · Σ_τ γ^τ p_τ.
    let rho = xi0_good_from_good - xi0_good_from_bad;
    xi3_good_from_good * gamma.powi(4) * xi0_good_from_bad
        / ((1.0 - gamma) * (1.0 - gamma * rho))
}

/// Evaluates the closed-form objective `J_i` of the chain game at a
/// profile (zero for agents 0–2, [`chain_payoff`] for agent 3).
pub fn chain_objective(gamma: f64, i: usize, profile: &PolicyProfile) -> f64 {
    if i == 3 {
        chain_payoff(
            gamma,
            profile.prob(0, BAD, GOOD),
            profile.prob(0, GOOD, GOOD),
            profile.prob(3, GOOD, GOOD),
        )
    } else {
        0.0
    }
}

/// The two deviation values that rule out a global potential: changing
/// agent 3 from all-bad to all-good shifts `J_3` by `γ⁴/(1−γ)` when agent 0
/// plays good, but by `0` when agent 0 plays bad.
pub fn global_potential_witness(gamma: f64) -> (f64, f64) {
    (gamma.powi(4) / (1.0 - gamma), 0.0)
}

/// Builds the chain game and its 1-local potential descriptor.
///
/// # Returns
///
/// The validated game (path graph, deterministic kernels, κ_r = 0 rewards,
/// all agents starting in the bad state) and an [`NmpgDescriptor`] with
/// κ_G = 1 whose potentials `(0, 0, f, f)` are evaluated in closed form.
pub fn build_chain_example(gamma: f64) -> Result<(NetworkedGame, NmpgDescriptor), GameError> {
    let n = 4;
    let graph = Graph::path(n);
    let state_sizes = vec![2; n];
    let action_sizes = vec![2; n];

    let mut kernels = Vec::with_capacity(n);
    // Agent 0: next state equals its own action; reads no states.
    kernels.push(LocalKernel {
        deps: vec![],
        table: vec![
            1.0, 0.0, // a = bad  → bad
            0.0, 1.0, // a = good → good
        ],
    });
    // Agents 1..3 copy the predecessor's current state; own action ignored.
    for i in 1..n {
        let mut table = vec![0.0; 2 * 2 * 2]; // (s_{i−1}, a_i) rows over s_i'
        for s_pred in 0..2 {
            for a_i in 0..2 {
                table[(s_pred * 2 + a_i) * 2 + s_pred] = 1.0;
            }
        }
        kernels.push(LocalKernel { deps: vec![i - 1], table });
    }

    let mut rewards = vec![
        RewardRule::Table { state_deps: vec![], action_deps: vec![], table: vec![0.0] };
        n
    ];
    // r_3(s_3, a_3) = 1{s_3 = good, a_3 = good}.
    rewards[3] = RewardRule::Table {
        state_deps: vec![3],
        action_deps: vec![3],
        table: vec![0.0, 0.0, 0.0, 1.0],
    };

    let mu = Mu::point(&[BAD; 4], &state_sizes);
    let game = NetworkedGame::new(
        graph,
        state_sizes,
        action_sizes,
        0,
        gamma,
        mu,
        kernels,
        rewards,
        (0.0, 1.0),
    )?;

    let zero: fn(f64) -> PotentialFn =
        |_gamma| Box::new(|_game: &NetworkedGame, _profile: &PolicyProfile| 0.0);
    let payoff: fn(f64) -> PotentialFn = |gamma| {
        Box::new(move |_game: &NetworkedGame, profile: &PolicyProfile| {
            chain_objective(gamma, 3, profile)
        })
    };
    let descriptor = NmpgDescriptor::new(
        1,
        vec![zero(gamma), zero(gamma), payoff(gamma), payoff(gamma)],
    );
    Ok((game, descriptor))
}
