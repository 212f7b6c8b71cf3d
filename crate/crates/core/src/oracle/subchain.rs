//! State–action chains of a single agent and their neighborhood
//! restrictions.
//!
//! Fixing a product policy turns the pair `z = (s, a_i)` into a Markov
//! chain: every other agent's coordinate is its local state (action
//! averaged out), agent `i`'s coordinate is its state–action pair. The
//! *sub-chain* restricts `z` to the coordinates inside `N_i^{κ_c}` by
//! averaging the full chain under its stationary law; its value function
//! is what a κ_c-localized temporal-difference critic estimates at
//! convergence, and the projected fixed point [`td0_fixed_point`] is the
//! exact limit for linear features.

use super::markov::{chain_period, is_strongly_connected, stationary_distribution};
use super::{ensure_dense, guarded_radix, OracleError, DENSE_GUARD};
use crate::critic::FeatureMap;
use crate::game::index::{gather, MixedRadix};
use crate::game::NetworkedGame;
use crate::policy::PolicyProfile;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// The full state–action chain of one agent under a fixed product policy.
#[derive(Debug, Clone)]
pub struct ZChain {
    /// The distinguished agent whose actions are part of the state.
    pub agent: usize,
    /// Discount factor.
    pub gamma: f64,
    /// Per-coordinate sizes: `|S_j|` for `j ≠ agent`, `|S_i|·|A_i|` at the
    /// agent (encoded `s_i·|A_i| + a_i`).
    pub z_sizes: Vec<usize>,
    /// Transition matrix over `z` (rows = source).
    pub kernel: DMatrix<f64>,
    /// Stationary distribution.
    pub pi: Vec<f64>,
    /// Expected one-step reward of the agent at each `z`, the other
    /// agents' actions averaged under the policy.
    pub r_bar: Vec<f64>,
    /// Discounted value `(I − γP_z)⁻¹ r̄`; equals `Q̄_i(s, a_i)`.
    pub value: Vec<f64>,
}

/// Builds the state–action chain of agent `i` under `profile` (use an
/// ε-mixed profile when ergodicity needs forcing). Transitions factor per
/// coordinate: `P̃_j(s_j'|s) = Σ_{a_j} ξ_j(a_j|s_j)P_j(s_j'|s_{D_j},a_j)`
/// for `j ≠ i` and `P_i(s_i'|s_{D_i},a_i)·ξ_i(a_i'|s_i')` at the agent.
///
/// # Errors
///
/// Fails on size guards, or with [`OracleError::NonErgodic`] when the
/// chain has no unique stationary distribution.
pub fn build_zchain(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    i: usize,
) -> Result<ZChain, OracleError> {
    let n = game.n();
    let gamma = game.gamma();
    let asz = game.action_sizes()[i];
    let mut z_sizes: Vec<usize> = game.state_sizes().to_vec();
    z_sizes[i] *= asz;
    let radix = guarded_radix(&z_sizes, DENSE_GUARD, "state-action chain")?;
    let dim = radix.len();
    ensure_dense(dim, "state-action chain")?;

    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let other_action_sizes: Vec<usize> =
        others.iter().map(|&j| game.action_sizes()[j]).collect();
    let other_actions = MixedRadix::new(&other_action_sizes);

    let mut kernel = DMatrix::zeros(dim, dim);
    let mut r_bar = vec![0.0; dim];
    let mut z_digits = vec![0usize; n];
    let mut s = vec![0usize; n];
    let mut a_full = vec![0usize; n];
    for z_idx in 0..dim {
        radix.decode_into(z_idx, &mut z_digits);
        for j in 0..n {
            s[j] = if j == i { z_digits[i] / asz } else { z_digits[j] };
        }
        let a_i = z_digits[i] % asz;

        // Per-coordinate next distributions, expanded in agent order.
        let mut row = vec![1.0];
        for j in 0..n {
            let factor: Vec<f64> = if j == i {
                let base = game.next_local_dist(i, &s, a_i);
                let mut f = Vec::with_capacity(base.len() * asz);
                for (sp, &p) in base.iter().enumerate() {
                    let arr = profile.row(i, sp);
                    for &w in arr {
                        f.push(p * w);
                    }
                }
                f
            } else {
                let mut f = vec![0.0; game.state_sizes()[j]];
                for a_j in 0..game.action_sizes()[j] {
                    let w = profile.prob(j, s[j], a_j);
                    if w == 0.0 {
                        continue;
                    }
                    for (sp, &p) in game.next_local_dist(j, &s, a_j).iter().enumerate() {
                        f[sp] += w * p;
                    }
                }
                f
            };
            let mut next = Vec::with_capacity(row.len() * factor.len());
            for &p in &row {
                for &q in &factor {
                    next.push(p * q);
                }
            }
            row = next;
        }
        for (zp, &p) in row.iter().enumerate() {
            if p != 0.0 {
                kernel[(z_idx, zp)] = p;
            }
        }

        // Expected reward over the other agents' actions.
        a_full[i] = a_i;
        let mut acc = 0.0;
        for oa_idx in 0..other_actions.len() {
            let mut w = 1.0;
            for (k, &j) in others.iter().enumerate() {
                let a_j = other_actions.digit(oa_idx, k);
                a_full[j] = a_j;
                w *= profile.prob(j, s[j], a_j);
            }
            if w != 0.0 {
                acc += w * game.reward(i, &s, &a_full);
            }
        }
        r_bar[z_idx] = acc;
    }

    let pi = stationary_distribution(&kernel)?;
    let system = DMatrix::identity(dim, dim) - gamma * &kernel;
    let value = system
        .lu()
        .solve(&DVector::from_column_slice(&r_bar))
        .ok_or(OracleError::RankDeficient("state-action value system"))?;
    Ok(ZChain {
        agent: i,
        gamma,
        z_sizes,
        kernel,
        pi,
        r_bar,
        value: value.iter().copied().collect(),
    })
}

/// The κ_c-restriction of a [`ZChain`]: coordinates inside `N_i^{κ_c}`,
/// with the outside averaged under the stationary law.
#[derive(Debug, Clone)]
pub struct SubChain {
    /// The distinguished agent.
    pub agent: usize,
    /// Restriction radius.
    pub kappa_c: usize,
    /// Discount factor.
    pub gamma: f64,
    /// Sorted members of `N_i^{κ_c}` (always contains the agent).
    pub members: Vec<usize>,
    /// Per-member coordinate sizes (the agent's collapsed to
    /// `|S_i|·|A_i|`).
    pub z_sizes: Vec<usize>,
    /// Restricted kernel `P̄(z_N'|z_N) = E_π[P_z(z, z_N' × ·) | z_N]`.
    pub kernel: DMatrix<f64>,
    /// Stationary marginal `π̄(z_N)`.
    pub pi_bar: Vec<f64>,
    /// Stationary-conditional expected reward `r̃(z_N) = E_π[r̄ | z_N]`.
    pub r_tilde: Vec<f64>,
    /// Restricted value `(I − γP̄)⁻¹ r̃`.
    pub value: Vec<f64>,
}

/// Restricts an existing chain to `N_i^{κ_c}` (cheaper than
/// [`build_subchain`] when several radii share one chain).
///
/// # Errors
///
/// [`OracleError::BadInput`] when `κ_c < κ_r`; [`OracleError::NonErgodic`]
/// when some restricted state carries no stationary mass.
pub fn subchain_from_zchain(
    game: &NetworkedGame,
    z: &ZChain,
    kappa_c: usize,
) -> Result<SubChain, OracleError> {
    if kappa_c < game.kappa_r() {
        return Err(OracleError::BadInput(format!(
            "restriction radius {kappa_c} below the reward radius {}",
            game.kappa_r()
        )));
    }
    let i = z.agent;
    let members = game.graph().khop(i, kappa_c);
    let full = MixedRadix::new(&z.z_sizes);
    let member_sizes: Vec<usize> = members.iter().map(|&j| z.z_sizes[j]).collect();
    let restricted = MixedRadix::new(&member_sizes);
    let dim_n = restricted.len();
    let dim = full.len();

    let mut restricted_of = vec![0usize; dim];
    let mut digits = vec![0usize; game.n()];
    let mut sub = Vec::new();
    for z_idx in 0..dim {
        full.decode_into(z_idx, &mut digits);
        gather(&digits, &members, &mut sub);
        restricted_of[z_idx] = restricted.index(&sub);
    }

    let mut pi_bar = vec![0.0; dim_n];
    let mut kernel = DMatrix::zeros(dim_n, dim_n);
    let mut r_tilde = vec![0.0; dim_n];
    for z_idx in 0..dim {
        let w = z.pi[z_idx];
        let zn = restricted_of[z_idx];
        pi_bar[zn] += w;
        if w == 0.0 {
            continue;
        }
        r_tilde[zn] += w * z.r_bar[z_idx];
        for zp in 0..dim {
            let p = z.kernel[(z_idx, zp)];
            if p != 0.0 {
                kernel[(zn, restricted_of[zp])] += w * p;
            }
        }
    }
    for zn in 0..dim_n {
        let mass = pi_bar[zn];
        if mass <= 0.0 {
            return Err(OracleError::NonErgodic(format!(
                "restricted state {zn} carries no stationary mass"
            )));
        }
        r_tilde[zn] /= mass;
        for zp in 0..dim_n {
            kernel[(zn, zp)] /= mass;
        }
    }

    let system = DMatrix::identity(dim_n, dim_n) - z.gamma * &kernel;
    let value = system
        .lu()
        .solve(&DVector::from_column_slice(&r_tilde))
        .ok_or(OracleError::RankDeficient("restricted value system"))?;
    Ok(SubChain {
        agent: i,
        kappa_c,
        gamma: z.gamma,
        members,
        z_sizes: member_sizes,
        kernel,
        pi_bar,
        r_tilde,
        value: value.iter().copied().collect(),
    })
}

/// Builds agent `i`'s state–action chain under `profile` and restricts it
/// to `N_i^{κ_c}` in one call.
///
/// # Errors
///
/// Union of [`build_zchain`] and [`subchain_from_zchain`] failures.
pub fn build_subchain(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    i: usize,
    kappa_c: usize,
) -> Result<SubChain, OracleError> {
    let z = build_zchain(game, profile, i)?;
    subchain_from_zchain(game, &z, kappa_c)
}

/// Report of the structural checks a sub-chain must satisfy.
#[derive(Debug, Clone, Serialize)]
pub struct SubChainReport {
    /// The distinguished agent.
    pub agent: usize,
    /// Restriction radius.
    pub kappa_c: usize,
    /// Restricted kernel is irreducible.
    pub irreducible: bool,
    /// Period of the restricted kernel (1 = aperiodic).
    pub period: usize,
    /// `‖stationary(P̄) − π̄‖_∞` (both sides by independent solves).
    pub stationary_marginal_gap: f64,
    /// `sup_z |value(z_N(z)) − value(z)|` between restricted and full
    /// values.
    pub value_gap: f64,
    /// The geometric bound `span·γ^{κ_c−κ_r+1}/(1−γ)` the value gap must
    /// respect (`span` = reward range width).
    pub value_bound: f64,
    /// Human-readable descriptions of every failed check.
    pub failures: Vec<String>,
    /// True when every check passed.
    pub pass: bool,
}

/// Verifies a sub-chain against its originating chain: irreducibility,
/// aperiodicity, stationary-marginal consistency (≤ 1e-8), and the
/// geometric value-gap bound. Failed checks are reported with the
/// violating state.
///
/// # Errors
///
/// Size/input errors only; check failures land in the report.
pub fn subchain_checks(
    game: &NetworkedGame,
    z: &ZChain,
    sub: &SubChain,
) -> Result<SubChainReport, OracleError> {
    let mut failures = Vec::new();
    let irreducible = is_strongly_connected(&sub.kernel);
    if !irreducible {
        failures.push("restricted kernel is not irreducible".to_string());
    }
    let period = if irreducible { chain_period(&sub.kernel) } else { 0 };
    if period != 1 {
        failures.push(format!("restricted kernel has period {period}"));
    }

    let mut stationary_marginal_gap = f64::INFINITY;
    if irreducible && period == 1 {
        let pi_direct = stationary_distribution(&sub.kernel)?;
        stationary_marginal_gap = 0.0;
        let mut worst = 0usize;
        for (zn, (&a, &b)) in pi_direct.iter().zip(&sub.pi_bar).enumerate() {
            if (a - b).abs() > stationary_marginal_gap {
                stationary_marginal_gap = (a - b).abs();
                worst = zn;
            }
        }
        if stationary_marginal_gap > 1e-8 {
            failures.push(format!(
                "stationary marginal mismatch {stationary_marginal_gap:e} at restricted state {worst}"
            ));
        }
    }

    let full = MixedRadix::new(&z.z_sizes);
    let restricted = MixedRadix::new(&sub.z_sizes);
    let mut value_gap = 0.0f64;
    let mut worst_z = 0usize;
    let mut digits = vec![0usize; game.n()];
    let mut inside = Vec::new();
    for z_idx in 0..full.len() {
        full.decode_into(z_idx, &mut digits);
        gather(&digits, &sub.members, &mut inside);
        let diff = (sub.value[restricted.index(&inside)] - z.value[z_idx]).abs();
        if diff > value_gap {
            value_gap = diff;
            worst_z = z_idx;
        }
    }
    let (lo, hi) = game.reward_range();
    let exponent = (sub.kappa_c as i32 - game.kappa_r() as i32 + 1).max(0);
    let value_bound = (hi - lo) * z.gamma.powi(exponent).min(1.0) / (1.0 - z.gamma);
    if value_gap > value_bound + 1e-9 {
        failures.push(format!(
            "value gap {value_gap:e} exceeds bound {value_bound:e} at state {worst_z}"
        ));
    }

    let pass = failures.is_empty();
    Ok(SubChainReport {
        agent: sub.agent,
        kappa_c: sub.kappa_c,
        irreducible,
        period,
        stationary_marginal_gap,
        value_gap,
        value_bound,
        failures,
        pass,
    })
}

/// The largest deviation between the restricted kernel's per-coordinate
/// conditionals and the original per-agent transition factors, over agents
/// whose factor reads only member coordinates (their dependency set and
/// own state lie inside `N_i^{κ_c}`). For such *inner* agents the
/// restriction is exact, so the result is numerical noise (≤ 1e-12);
/// returns `None` when no agent qualifies.
///
/// # Errors
///
/// Size/input errors from enumeration.
pub fn inner_conditional_gap(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    z: &ZChain,
    sub: &SubChain,
) -> Result<Option<f64>, OracleError> {
    let i = z.agent;
    let asz = game.action_sizes()[i];
    let inner: Vec<usize> = sub
        .members
        .iter()
        .copied()
        .filter(|&j| {
            game.kernel(j)
                .deps
                .iter()
                .chain(std::iter::once(&j))
                .all(|dep| sub.members.binary_search(dep).is_ok())
        })
        .collect();
    if inner.is_empty() {
        return Ok(None);
    }
    let restricted = MixedRadix::new(&sub.z_sizes);
    let mut gap = 0.0f64;
    let mut zn_digits = vec![0usize; sub.members.len()];
    let mut s_full = vec![0usize; game.n()];
    for zn in 0..restricted.len() {
        restricted.decode_into(zn, &mut zn_digits);
        // Reconstruct the member states (the agent's digit also carries its
        // action); non-member coordinates are irrelevant for inner agents.
        s_full.iter_mut().for_each(|v| *v = 0);
        let mut a_i = 0usize;
        for (pos, &j) in sub.members.iter().enumerate() {
            if j == i {
                s_full[j] = zn_digits[pos] / asz;
                a_i = zn_digits[pos] % asz;
            } else {
                s_full[j] = zn_digits[pos];
            }
        }
        for &j in &inner {
            let pos = sub.members.binary_search(&j).expect("inner agents are members");
            let csz = sub.z_sizes[pos];
            // Marginal of the restricted kernel row on coordinate `pos`.
            let mut marginal = vec![0.0; csz];
            for zp in 0..restricted.len() {
                let p = sub.kernel[(zn, zp)];
                if p != 0.0 {
                    marginal[restricted.digit(zp, pos)] += p;
                }
            }
            // Reference factor from the game itself.
            let mut reference = vec![0.0; csz];
            if j == i {
                let base = game.next_local_dist(i, &s_full, a_i);
                for (sp, &p) in base.iter().enumerate() {
                    let row = profile.row(i, sp);
                    for (ap, &w) in row.iter().enumerate() {
                        reference[sp * asz + ap] = p * w;
                    }
                }
            } else {
                for a_j in 0..game.action_sizes()[j] {
                    let w = profile.prob(j, s_full[j], a_j);
                    if w == 0.0 {
                        continue;
                    }
                    for (sp, &p) in game.next_local_dist(j, &s_full, a_j).iter().enumerate() {
                        reference[sp] += w * p;
                    }
                }
            }
            for (m, r) in marginal.iter().zip(&reference) {
                gap = gap.max((m - r).abs());
            }
        }
    }
    Ok(Some(gap))
}

/// The projected temporal-difference fixed point of a finite chain:
///
/// ```text
/// w* = (Ωᵀ D (I − γP) Ω)⁻¹ Ωᵀ D r,   D = diag(π),
/// ```
///
/// along with the fitted values `Ωw*` and the reduction error
/// `ε_red = sup |Ωw* − value|` against the chain's exact value
/// `(I − γP)⁻¹ r`.
#[derive(Debug, Clone)]
pub struct Td0Solution {
    /// Fixed-point weights.
    pub w: Vec<f64>,
    /// Fitted values `Ωw*`, aligned with the chain's state indexing.
    pub fitted: Vec<f64>,
    /// Exact chain values `(I − γP)⁻¹ r`.
    pub value: Vec<f64>,
    /// `sup |fitted − value|`.
    pub eps_red: f64,
}

/// Solves the projected fixed point on an arbitrary finite chain.
///
/// # Errors
///
/// [`OracleError::RankDeficient`] when `Ω` has linearly dependent columns
/// (detected through the Gram matrix `ΩᵀDΩ`); [`OracleError::BadInput`]
/// on shape mismatches.
pub fn td0_fixed_point(
    kernel: &DMatrix<f64>,
    pi: &[f64],
    rewards: &[f64],
    gamma: f64,
    omega: &DMatrix<f64>,
) -> Result<Td0Solution, OracleError> {
    check_chain_shapes(kernel, pi, rewards, omega)?;
    let dim = kernel.nrows();
    let d_omega = DMatrix::from_fn(dim, omega.ncols(), |r, c| pi[r] * omega[(r, c)]);
    let gram = omega.tr_mul(&d_omega);
    if nalgebra::Cholesky::new(gram).is_none() {
        return Err(OracleError::RankDeficient("feature matrix"));
    }
    projected_fixed_point(kernel, pi, rewards, gamma, omega)
}

/// Rank-safe projected fixed point: solves `ΩᵀD(I−γP)Ω·w = ΩᵀDr` through
/// a minimum-norm solve, so rank-deficient feature sets still yield their
/// (unique) fitted values `Ωw` on the feature span. Prefer
/// [`td0_fixed_point`] when linear independence is part of the contract.
///
/// # Errors
///
/// [`OracleError::BadInput`] on shape mismatches or a failed solve.
pub(crate) fn projected_fixed_point(
    kernel: &DMatrix<f64>,
    pi: &[f64],
    rewards: &[f64],
    gamma: f64,
    omega: &DMatrix<f64>,
) -> Result<Td0Solution, OracleError> {
    check_chain_shapes(kernel, pi, rewards, omega)?;
    let dim = kernel.nrows();
    let d_omega = DMatrix::from_fn(dim, omega.ncols(), |r, c| pi[r] * omega[(r, c)]);
    let propagated = omega - gamma * (kernel * omega);
    let system = d_omega.tr_mul(&propagated);
    let rhs = d_omega.tr_mul(&DVector::from_column_slice(rewards));
    let w = system
        .svd(true, true)
        .solve(&rhs, 1e-13)
        .map_err(|e| OracleError::BadInput(format!("projected fixed-point solve failed: {e}")))?;
    let fitted_vec = omega * &w;
    let value_vec = (DMatrix::identity(dim, dim) - gamma * kernel)
        .lu()
        .solve(&DVector::from_column_slice(rewards))
        .ok_or(OracleError::RankDeficient("chain value system"))?;
    let eps_red = fitted_vec
        .iter()
        .zip(value_vec.iter())
        .fold(0.0f64, |m, (&f, &v)| m.max((f - v).abs()));
    Ok(Td0Solution {
        w: w.iter().copied().collect(),
        fitted: fitted_vec.iter().copied().collect(),
        value: value_vec.iter().copied().collect(),
        eps_red,
    })
}

fn check_chain_shapes(
    kernel: &DMatrix<f64>,
    pi: &[f64],
    rewards: &[f64],
    omega: &DMatrix<f64>,
) -> Result<(), OracleError> {
    let dim = kernel.nrows();
    if kernel.ncols() != dim || pi.len() != dim || rewards.len() != dim || omega.nrows() != dim {
        return Err(OracleError::BadInput(format!(
            "shape mismatch: kernel {}×{}, |π| {}, |r| {}, Ω rows {}",
            kernel.nrows(),
            kernel.ncols(),
            pi.len(),
            rewards.len(),
            omega.nrows()
        )));
    }
    Ok(())
}

/// The feature matrix of a sub-chain under a critic feature map: row
/// `z_N` = `φ(s_members, a_i)`.
///
/// # Errors
///
/// [`OracleError::BadInput`] when the map's agent or members disagree with
/// the sub-chain.
pub fn feature_matrix(
    game: &NetworkedGame,
    sub: &SubChain,
    features: &FeatureMap,
) -> Result<DMatrix<f64>, OracleError> {
    if features.agent() != sub.agent || features.members() != sub.members.as_slice() {
        return Err(OracleError::BadInput(format!(
            "feature map over agent {} / members {:?} does not match sub-chain agent {} / members {:?}",
            features.agent(),
            features.members(),
            sub.agent,
            sub.members
        )));
    }
    let restricted = MixedRadix::new(&sub.z_sizes);
    let asz = game.action_sizes()[sub.agent];
    let pos_i = sub
        .members
        .binary_search(&sub.agent)
        .expect("the agent belongs to its own neighborhood");
    let mut omega = DMatrix::zeros(restricted.len(), features.dim());
    let mut digits = vec![0usize; sub.members.len()];
    let mut s_members = vec![0usize; sub.members.len()];
    for zn in 0..restricted.len() {
        restricted.decode_into(zn, &mut digits);
        for (pos, &d) in digits.iter().enumerate() {
            s_members[pos] = if pos == pos_i { d / asz } else { d };
        }
        let a_i = digits[pos_i] % asz;
        for (k, v) in features.active(&s_members, a_i) {
            omega[(zn, k)] = v;
        }
    }
    Ok(omega)
}

/// Projected TD(0) fixed point of a sub-chain under a critic feature map.
///
/// # Errors
///
/// Union of [`feature_matrix`] and [`td0_fixed_point`] failures.
pub fn td0_for_subchain(
    game: &NetworkedGame,
    sub: &SubChain,
    features: &FeatureMap,
) -> Result<Td0Solution, OracleError> {
    let omega = feature_matrix(game, sub, features)?;
    td0_fixed_point(&sub.kernel, &sub.pi_bar, &sub.r_tilde, sub.gamma, &omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::FeatureMode;
    use crate::game::fixtures::{random_game, random_three_agent_game};
    use crate::game::{LocalKernel, Mu, RewardRule};
    use crate::netgraph::Graph;
    use crate::oracle::markov::ExactSolution;
    use crate::policy::{profile_from_theta, Theta};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mixed_profile(game: &NetworkedGame, seed: u64, eps: f64) -> PolicyProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        profile_from_theta(&Theta::random(game.state_sizes(), game.action_sizes(), 1.0, &mut rng))
            .epsilon_explore(eps)
    }

    #[test]
    fn zchain_value_equals_averaged_q() {
        let game = random_three_agent_game(1, 0.9, &mut ChaCha8Rng::seed_from_u64(3));
        let profile = mixed_profile(&game, 4, 0.2);
        let sol = ExactSolution::solve(&game, &profile).unwrap();
        for i in 0..game.n() {
            let z = build_zchain(&game, &profile, i).unwrap();
            let full = MixedRadix::new(&z.z_sizes);
            let asz = game.action_sizes()[i];
            let mut digits = vec![0usize; game.n()];
            for z_idx in 0..full.len() {
                full.decode_into(z_idx, &mut digits);
                let mut s = digits.clone();
                s[i] = digits[i] / asz;
                let a_i = digits[i] % asz;
                assert_abs_diff_eq!(
                    z.value[z_idx],
                    sol.q_bar_at(i, &s, a_i),
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn full_radius_subchain_is_the_chain_itself() {
        let game = random_three_agent_game(1, 0.9, &mut ChaCha8Rng::seed_from_u64(5));
        let profile = mixed_profile(&game, 6, 0.2);
        let z = build_zchain(&game, &profile, 1).unwrap();
        let sub = subchain_from_zchain(&game, &z, game.graph().diameter()).unwrap();
        assert_eq!(sub.members, vec![0, 1, 2]);
        assert_eq!(sub.z_sizes, z.z_sizes);
        for (a, b) in sub.value.iter().zip(&z.value) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
        }
        for (a, b) in sub.pi_bar.iter().zip(&z.pi) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        let report = subchain_checks(&game, &z, &sub).unwrap();
        assert!(report.pass, "failures: {:?}", report.failures);
        assert!(report.value_gap <= 1e-10);
    }

    #[test]
    fn subchain_checks_pass_on_a_mixed_line_game() {
        // 3-agent line, κ_r = 0, rewards in [0, 1]: the value gap must
        // respect γ^{κ_c+1}/(1−γ) and the structural checks must pass.
        let gamma = 0.9;
        let game = random_game(Graph::path(3), vec![2, 2, 2], vec![2, 2, 2], 0, gamma, &mut {
            ChaCha8Rng::seed_from_u64(7)
        })
        .unwrap();
        let profile = mixed_profile(&game, 8, 0.2);
        for i in 0..game.n() {
            let z = build_zchain(&game, &profile, i).unwrap();
            for kappa_c in 0..=game.graph().diameter() {
                let sub = subchain_from_zchain(&game, &z, kappa_c).unwrap();
                let report = subchain_checks(&game, &z, &sub).unwrap();
                assert!(
                    report.pass,
                    "agent {i}, κ_c {kappa_c}: {:?}",
                    report.failures
                );
                assert!(report.stationary_marginal_gap <= 1e-8);
                if let Some(gap) = inner_conditional_gap(&game, &profile, &z, &sub).unwrap() {
                    assert!(gap <= 1e-12, "agent {i}, κ_c {kappa_c}: inner gap {gap}");
                }
            }
        }
    }

    #[test]
    fn rows_of_restricted_kernel_are_stochastic() {
        let game = random_three_agent_game(1, 0.9, &mut ChaCha8Rng::seed_from_u64(9));
        let profile = mixed_profile(&game, 10, 0.1);
        let sub = build_subchain(&game, &profile, 0, 1).unwrap();
        for r in 0..sub.kernel.nrows() {
            let sum: f64 = (0..sub.kernel.ncols()).map(|c| sub.kernel[(r, c)]).sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        }
        let pi_sum: f64 = sub.pi_bar.iter().sum();
        assert_abs_diff_eq!(pi_sum, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn non_ergodic_chain_is_rejected() {
        // A single agent deterministically cycling between two states.
        let game = NetworkedGame::new(
            Graph::from_edges(1, &[]).unwrap(),
            vec![2],
            vec![1],
            0,
            0.9,
            Mu::Product(vec![vec![1.0, 0.0]]),
            vec![LocalKernel { deps: vec![0], table: vec![0.0, 1.0, 1.0, 0.0] }],
            vec![RewardRule::Table { state_deps: vec![0], action_deps: vec![], table: vec![0.0, 1.0] }],
            (0.0, 1.0),
        )
        .unwrap();
        let profile = PolicyProfile::uniform(game.state_sizes(), game.action_sizes());
        assert!(matches!(
            build_zchain(&game, &profile, 0),
            Err(OracleError::NonErgodic(_))
        ));
    }

    #[test]
    fn tabular_features_reproduce_the_restricted_value() {
        let game = random_three_agent_game(1, 0.9, &mut ChaCha8Rng::seed_from_u64(11));
        let profile = mixed_profile(&game, 12, 0.2);
        for i in 0..game.n() {
            let sub = build_subchain(&game, &profile, i, 1).unwrap();
            let fm = FeatureMap::new(&game, i, 1, FeatureMode::Tabular).unwrap();
            let td = td0_for_subchain(&game, &sub, &fm).unwrap();
            assert!(td.eps_red <= 1e-10, "agent {i}: ε_red {}", td.eps_red);
            for (f, v) in td.fitted.iter().zip(&td.value) {
                assert_abs_diff_eq!(*f, *v, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn constant_feature_has_scalar_fixed_point() {
        let game = random_three_agent_game(1, 0.8, &mut ChaCha8Rng::seed_from_u64(13));
        let profile = mixed_profile(&game, 14, 0.2);
        let sub = build_subchain(&game, &profile, 1, 1).unwrap();
        let dim = sub.kernel.nrows();
        let omega = DMatrix::from_element(dim, 1, 1.0);
        let td = td0_fixed_point(&sub.kernel, &sub.pi_bar, &sub.r_tilde, sub.gamma, &omega).unwrap();
        let mean: f64 = sub.pi_bar.iter().zip(&sub.r_tilde).map(|(&p, &r)| p * r).sum();
        assert_abs_diff_eq!(td.w[0], mean / (1.0 - sub.gamma), epsilon = 1e-12);
    }

    #[test]
    fn projected_bellman_residual_vanishes_at_the_fixed_point() {
        let game = random_three_agent_game(1, 0.9, &mut ChaCha8Rng::seed_from_u64(15));
        let profile = mixed_profile(&game, 16, 0.2);
        let sub = build_subchain(&game, &profile, 2, 1).unwrap();
        let fm = FeatureMap::new(&game, 2, 1, FeatureMode::OnehotConcat).unwrap();
        let omega = feature_matrix(&game, &sub, &fm).unwrap();
        // Block indicators all sum to the same constant vector; keep one
        // independent subset of columns for this residual check.
        let omega = omega.select_columns([0usize, 2, 3, 4].iter());
        let td = td0_fixed_point(&sub.kernel, &sub.pi_bar, &sub.r_tilde, sub.gamma, &omega).unwrap();
        let w = DVector::from_column_slice(&td.w);
        let bellman =
            DVector::from_column_slice(&sub.r_tilde) + sub.gamma * (&sub.kernel * (&omega * &w))
                - &omega * &w;
        let mut residual = DVector::<f64>::zeros(omega.ncols());
        for c in 0..omega.ncols() {
            residual[c] = (0..bellman.len()).map(|r| omega[(r, c)] * sub.pi_bar[r] * bellman[r]).sum();
        }
        assert!(residual.amax() <= 1e-10, "projected residual {}", residual.amax());
    }

    #[test]
    fn duplicate_feature_columns_are_rejected() {
        let game = random_three_agent_game(1, 0.9, &mut ChaCha8Rng::seed_from_u64(17));
        let profile = mixed_profile(&game, 18, 0.2);
        let sub = build_subchain(&game, &profile, 0, 1).unwrap();
        let dim = sub.kernel.nrows();
        let omega = DMatrix::from_fn(dim, 2, |r, _| (r + 1) as f64);
        assert!(matches!(
            td0_fixed_point(&sub.kernel, &sub.pi_bar, &sub.r_tilde, sub.gamma, &omega),
            Err(OracleError::RankDeficient("feature matrix"))
        ));
    }

    #[test]
    fn radius_below_reward_locality_is_rejected() {
        let game = random_three_agent_game(1, 0.9, &mut ChaCha8Rng::seed_from_u64(19));
        let profile = mixed_profile(&game, 20, 0.2);
        assert!(matches!(
            build_subchain(&game, &profile, 0, 0),
            Err(OracleError::BadInput(_))
        ));
    }
}
