//! Induced Markov chains and exact value quantities by dense linear solves.
//!
//! A product policy `ξ` turns a game into a finite Markov chain over global
//! states (or state–action pairs). This module materializes those chains,
//! solves the discounted Bellman systems exactly, and provides stationary
//! distributions with explicit ergodicity checks. Several quantities have a
//! second, independent route (truncated series, power iteration) used by
//! tests to cross-examine the direct solves.

use super::{ensure_dense, guarded_radix, OracleError, ENUM_GUARD};
use crate::game::index::MixedRadix;
use crate::game::{Mu, NetworkedGame};
use crate::policy::PolicyProfile;
use nalgebra::{DMatrix, DVector};

/// A fully enumerated view of a game: mixed-radix codecs plus cached digit
/// decodings for every global state and joint action.
pub(crate) struct GlobalView<'g> {
    pub game: &'g NetworkedGame,
    pub states: MixedRadix,
    pub actions: MixedRadix,
    pub state_digits: Vec<Vec<usize>>,
    pub action_digits: Vec<Vec<usize>>,
}

impl<'g> GlobalView<'g> {
    /// Enumerates the joint spaces, enforcing the `|S|·|A| ≤` guard.
    pub fn new(game: &'g NetworkedGame) -> Result<Self, OracleError> {
        let states = guarded_radix(game.state_sizes(), ENUM_GUARD, "joint state space")?;
        let actions = guarded_radix(game.action_sizes(), ENUM_GUARD, "joint action space")?;
        let pairs = states.len().saturating_mul(actions.len());
        if pairs > ENUM_GUARD {
            return Err(OracleError::Guard {
                what: "joint state-action space",
                size: pairs,
                limit: ENUM_GUARD,
            });
        }
        let state_digits = (0..states.len()).map(|idx| states.decode(idx)).collect();
        let action_digits = (0..actions.len()).map(|idx| actions.decode(idx)).collect();
        Ok(Self { game, states, actions, state_digits, action_digits })
    }

    /// Next-state distribution over global states for joint `(s, a)`,
    /// assembled as the outer product of the per-agent factored kernels
    /// (agent 0 slowest, matching the mixed-radix layout).
    pub fn next_dist(&self, s: &[usize], a: &[usize]) -> Vec<f64> {
        let mut out = vec![1.0];
        for i in 0..self.game.n() {
            let row = self.game.next_local_dist(i, s, a[i]);
            let mut next = Vec::with_capacity(out.len() * row.len());
            for &p in &out {
                for &q in row {
                    next.push(p * q);
                }
            }
            out = next;
        }
        out
    }

    /// The induced chain over global states, `P^ξ(s'|s) = Σ_a ξ(a|s)P(s'|s,a)`.
    pub fn induced_matrix(&self, profile: &PolicyProfile) -> Result<DMatrix<f64>, OracleError> {
        let ns = self.states.len();
        ensure_dense(ns, "induced state chain")?;
        let mut p = DMatrix::zeros(ns, ns);
        for (s_idx, s) in self.state_digits.iter().enumerate() {
            for a in &self.action_digits {
                let w = profile.joint_prob(s, a);
                if w == 0.0 {
                    continue;
                }
                let nd = self.next_dist(s, a);
                for (sp, &q) in nd.iter().enumerate() {
                    if q != 0.0 {
                        p[(s_idx, sp)] += w * q;
                    }
                }
            }
        }
        Ok(p)
    }

    /// The induced chain over state–action pairs,
    /// `P^ξ_{sa}((s,a) → (s',a')) = P(s'|s,a)·ξ(a'|s')`, pair index
    /// `s·|A| + a`.
    pub fn pair_matrix(&self, profile: &PolicyProfile) -> Result<DMatrix<f64>, OracleError> {
        let ns = self.states.len();
        let na = self.actions.len();
        let dim = ns * na;
        ensure_dense(dim, "induced state-action chain")?;
        // ap[s'][a'] = ξ(a'|s'), the arrival-side action weights.
        let ap: Vec<Vec<f64>> = self
            .state_digits
            .iter()
            .map(|s| self.action_digits.iter().map(|a| profile.joint_prob(s, a)).collect())
            .collect();
        let mut p = DMatrix::zeros(dim, dim);
        for (s_idx, s) in self.state_digits.iter().enumerate() {
            for (a_idx, a) in self.action_digits.iter().enumerate() {
                let nd = self.next_dist(s, a);
                let row = s_idx * na + a_idx;
                for (sp, &q) in nd.iter().enumerate() {
                    if q == 0.0 {
                        continue;
                    }
                    for (apx, &w) in ap[sp].iter().enumerate() {
                        if w != 0.0 {
                            p[(row, sp * na + apx)] = q * w;
                        }
                    }
                }
            }
        }
        Ok(p)
    }

    /// Agent `i`'s reward over all `(s, a)`, index `s·|A| + a`.
    pub fn reward_table(&self, i: usize) -> Vec<f64> {
        let na = self.actions.len();
        let mut r = vec![0.0; self.states.len() * na];
        for (s_idx, s) in self.state_digits.iter().enumerate() {
            for (a_idx, a) in self.action_digits.iter().enumerate() {
                r[s_idx * na + a_idx] = self.game.reward(i, s, a);
            }
        }
        r
    }

    /// Agent `i`'s expected one-step reward `r̄_i(s) = E_{a∼ξ(·|s)} r_i(s,a)`.
    pub fn expected_reward(&self, profile: &PolicyProfile, i: usize) -> Vec<f64> {
        let mut r = vec![0.0; self.states.len()];
        for (s_idx, s) in self.state_digits.iter().enumerate() {
            for a in &self.action_digits {
                let w = profile.joint_prob(s, a);
                if w != 0.0 {
                    r[s_idx] += w * self.game.reward(i, s, a);
                }
            }
        }
        r
    }

    /// The initial distribution as a dense vector over global states.
    pub fn mu_vec(&self) -> Vec<f64> {
        let sizes = self.game.state_sizes();
        self.state_digits.iter().map(|s| self.game.mu().density(s, sizes)).collect()
    }
}

/// The transition matrix of the Markov chain over global states induced by
/// a product policy (row = source state).
///
/// # Errors
///
/// Fails when the joint enumeration or the dense matrix exceeds its guard.
pub fn induced_chain(
    game: &NetworkedGame,
    profile: &PolicyProfile,
) -> Result<DMatrix<f64>, OracleError> {
    GlobalView::new(game)?.induced_matrix(profile)
}

/// The transition matrix over state–action pairs (pair index `s·|A| + a`).
///
/// # Errors
///
/// Fails when the joint enumeration or the dense matrix exceeds its guard.
pub fn induced_chain_sa(
    game: &NetworkedGame,
    profile: &PolicyProfile,
) -> Result<DMatrix<f64>, OracleError> {
    GlobalView::new(game)?.pair_matrix(profile)
}

/// Complete exact evaluation of a product policy: per-agent values,
/// Q-functions, averaged Q-functions, advantages, objectives, and the
/// discounted visitation distribution, all derived from one pass over the
/// enumerated game.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    /// Discount factor of the solved game.
    pub gamma: f64,
    pub(crate) states: MixedRadix,
    pub(crate) actions: MixedRadix,
    /// Per agent: `V_i(s)`, indexed by global state.
    pub v: Vec<Vec<f64>>,
    /// Per agent: `Q_i(s, a)`, indexed `s·|A| + a`.
    pub q: Vec<Vec<f64>>,
    /// Per agent: `Q̄_i(s, a_i)` with the other agents' actions averaged
    /// under the profile, indexed `s·|A_i| + a_i`.
    pub q_bar: Vec<Vec<f64>>,
    /// Per agent: advantage `A_i(s, a) = Q_i − V_i`, indexed like `q`.
    pub adv: Vec<Vec<f64>>,
    /// Per agent: averaged advantage `Ā_i(s, a_i) = Q̄_i − V_i`.
    pub adv_bar: Vec<Vec<f64>>,
    /// Per agent objective `J_i = E_{s∼μ} V_i(s)`.
    pub j: Vec<f64>,
    /// Discounted visitation `d(s) = (1−γ)·Σ_t γ^t Pr[s(t)=s]` from μ.
    pub d: Vec<f64>,
    /// The initial distribution μ as a dense vector.
    pub mu: Vec<f64>,
}

impl ExactSolution {
    /// Solves the game under `profile` exactly.
    ///
    /// Values solve `(I − γP^ξ) V_i = r̄_i`; the visitation solves the
    /// transposed system; Q-functions are assembled as
    /// `r_i + γ·E_{s'}V_i`, and averaged Q-functions marginalize the other
    /// agents' actions with prefix/suffix policy products.
    ///
    /// # Errors
    ///
    /// Fails when enumeration or dense-solve guards are exceeded.
    pub fn solve(game: &NetworkedGame, profile: &PolicyProfile) -> Result<Self, OracleError> {
        let view = GlobalView::new(game)?;
        let ns = view.states.len();
        let na = view.actions.len();
        ensure_dense(ns, "induced state chain")?;
        let n = game.n();
        let gamma = game.gamma();
        let p = view.induced_matrix(profile)?;
        let system = DMatrix::identity(ns, ns) - gamma * &p;
        let lu = system.clone().lu();

        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let rhs = DVector::from_vec(view.expected_reward(profile, i));
            let vi = lu.solve(&rhs).ok_or(OracleError::RankDeficient("discounted value system"))?;
            v.push(vi.iter().copied().collect::<Vec<f64>>());
        }

        let mu = view.mu_vec();
        let d_vec = system
            .transpose()
            .lu()
            .solve(&DVector::from_column_slice(&mu))
            .ok_or(OracleError::RankDeficient("discounted visitation system"))?;
        let d: Vec<f64> = d_vec.iter().map(|&x| x * (1.0 - gamma)).collect();

        let mut q = vec![vec![0.0; ns * na]; n];
        let mut q_bar: Vec<Vec<f64>> =
            (0..n).map(|i| vec![0.0; ns * game.action_sizes()[i]]).collect();
        let mut prefix = vec![1.0; n + 1];
        let mut suffix = vec![1.0; n + 1];
        for (s_idx, s) in view.state_digits.iter().enumerate() {
            for (a_idx, a) in view.action_digits.iter().enumerate() {
                let nd = view.next_dist(s, a);
                for i in 0..n {
                    let cont: f64 = nd.iter().zip(&v[i]).map(|(&pq, &vv)| pq * vv).sum();
                    q[i][s_idx * na + a_idx] = game.reward(i, s, a) + gamma * cont;
                }
                // prefix[k] = ∏_{j<k} ξ_j(a_j|s_j); suffix[k] = ∏_{j≥k} ξ_j.
                for k in 0..n {
                    prefix[k + 1] = prefix[k] * profile.prob(k, s[k], a[k]);
                }
                for k in (0..n).rev() {
                    suffix[k] = suffix[k + 1] * profile.prob(k, s[k], a[k]);
                }
                for i in 0..n {
                    let w_others = prefix[i] * suffix[i + 1];
                    if w_others != 0.0 {
                        let asz = game.action_sizes()[i];
                        q_bar[i][s_idx * asz + a[i]] += w_others * q[i][s_idx * na + a_idx];
                    }
                }
            }
        }

        let mut adv = vec![vec![0.0; ns * na]; n];
        let mut adv_bar: Vec<Vec<f64>> =
            (0..n).map(|i| vec![0.0; ns * game.action_sizes()[i]]).collect();
        for i in 0..n {
            for s_idx in 0..ns {
                for a_idx in 0..na {
                    adv[i][s_idx * na + a_idx] = q[i][s_idx * na + a_idx] - v[i][s_idx];
                }
                let asz = game.action_sizes()[i];
                for a_i in 0..asz {
                    adv_bar[i][s_idx * asz + a_i] = q_bar[i][s_idx * asz + a_i] - v[i][s_idx];
                }
            }
        }

        let j = (0..n).map(|i| mu.iter().zip(&v[i]).map(|(&m, &vv)| m * vv).sum()).collect();
        Ok(Self {
            gamma,
            states: view.states,
            actions: view.actions,
            v,
            q,
            q_bar,
            adv,
            adv_bar,
            j,
            d,
            mu,
        })
    }

    /// Number of global states.
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Number of joint actions.
    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    /// Flat index of a global state.
    pub fn state_index(&self, s: &[usize]) -> usize {
        self.states.index(s)
    }

    /// Flat index of a joint action.
    pub fn action_index(&self, a: &[usize]) -> usize {
        self.actions.index(a)
    }

    /// Agent `i`'s local-state digit of a flat global-state index.
    pub fn state_digit(&self, s_idx: usize, i: usize) -> usize {
        self.states.digit(s_idx, i)
    }

    /// `Q̄_i(s, a_i)` looked up by digits.
    pub fn q_bar_at(&self, i: usize, s: &[usize], a_i: usize) -> f64 {
        let asz = self.actions.sizes()[i];
        self.q_bar[i][self.states.index(s) * asz + a_i]
    }
}

/// `J_i(ξ) = E_{s∼μ} V_i(s)` by a single dense solve.
///
/// # Errors
///
/// Fails when enumeration or dense-solve guards are exceeded.
pub fn objective(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    i: usize,
) -> Result<f64, OracleError> {
    let view = GlobalView::new(game)?;
    let ns = view.states.len();
    ensure_dense(ns, "induced state chain")?;
    let p = view.induced_matrix(profile)?;
    let system = DMatrix::identity(ns, ns) - game.gamma() * p;
    let rhs = DVector::from_vec(view.expected_reward(profile, i));
    let v = system.lu().solve(&rhs).ok_or(OracleError::RankDeficient("discounted value system"))?;
    Ok(view.mu_vec().iter().zip(v.iter()).map(|(&m, &vv)| m * vv).sum())
}

/// Exact `Q_i` over state–action pairs by solving
/// `(I − γ P^ξ_{sa}) Q_i = r_i` (index `s·|A| + a`).
///
/// # Errors
///
/// Fails when enumeration or dense-solve guards are exceeded.
pub fn q_function(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    i: usize,
) -> Result<Vec<f64>, OracleError> {
    let view = GlobalView::new(game)?;
    let p = view.pair_matrix(profile)?;
    let dim = p.nrows();
    let system = DMatrix::identity(dim, dim) - game.gamma() * p;
    let rhs = DVector::from_vec(view.reward_table(i));
    let q = system.lu().solve(&rhs).ok_or(OracleError::RankDeficient("state-action system"))?;
    Ok(q.iter().copied().collect())
}

/// Exact `Q_i` by the truncated series `Σ_{t≤T} (γP^ξ_{sa})^t r_i`, with
/// `T` chosen so the analytic tail `γ^{T+1}·max|r|/(1−γ)` is below `tol`.
/// Returns the table and `T`. This is an independent route to
/// [`q_function`] (iteration instead of a linear solve); tests pit the two
/// against each other.
///
/// # Errors
///
/// Fails when enumeration or dense-solve guards are exceeded.
pub fn q_function_series(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    i: usize,
    tol: f64,
) -> Result<(Vec<f64>, usize), OracleError> {
    let view = GlobalView::new(game)?;
    let p = view.pair_matrix(profile)?;
    let r = view.reward_table(i);
    let rmax = r.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if rmax == 0.0 {
        return Ok((vec![0.0; r.len()], 0));
    }
    let gamma = game.gamma();
    let terms = if gamma == 0.0 {
        1
    } else {
        ((tol * (1.0 - gamma) / rmax).ln() / gamma.ln()).ceil().max(1.0) as usize
    };
    let r_vec = DVector::from_column_slice(&r);
    let mut acc = r_vec.clone();
    for _ in 0..terms {
        acc = &r_vec + gamma * (&p * acc);
    }
    Ok((acc.iter().copied().collect(), terms))
}

/// Discounted visitation from an arbitrary start distribution:
/// `d(s) = (1−γ)·Σ_t γ^t Pr[s(t)=s]`, solved as
/// `(I − γ P^ξᵀ) x = start`, `d = (1−γ)x`.
///
/// # Errors
///
/// Fails on guards, or with [`OracleError::BadInput`] when `start` is not a
/// distribution over the game's global states.
pub fn visitation(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    start: &Mu,
) -> Result<Vec<f64>, OracleError> {
    let view = GlobalView::new(game)?;
    let ns = view.states.len();
    ensure_dense(ns, "induced state chain")?;
    let sizes = game.state_sizes();
    let s0: Vec<f64> = view.state_digits.iter().map(|s| start.density(s, sizes)).collect();
    let total: f64 = s0.iter().sum();
    if s0.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(OracleError::BadInput(format!("start distribution sums to {total}")));
    }
    let p = view.induced_matrix(profile)?;
    let system = (DMatrix::identity(ns, ns) - game.gamma() * p).transpose();
    let x = system
        .lu()
        .solve(&DVector::from_column_slice(&s0))
        .ok_or(OracleError::RankDeficient("discounted visitation system"))?;
    Ok(x.iter().map(|&v| v * (1.0 - game.gamma())).collect())
}

/// Validates that `kernel` is square and row-stochastic.
fn validate_kernel(kernel: &DMatrix<f64>) -> Result<(), OracleError> {
    let n = kernel.nrows();
    if kernel.ncols() != n || n == 0 {
        return Err(OracleError::BadInput(format!(
            "kernel is {}×{}, expected square and non-empty",
            kernel.nrows(),
            kernel.ncols()
        )));
    }
    for r in 0..n {
        let mut sum = 0.0;
        for c in 0..n {
            let p = kernel[(r, c)];
            if p < -1e-15 {
                return Err(OracleError::BadInput(format!("kernel entry ({r},{c}) = {p} < 0")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(OracleError::BadInput(format!("kernel row {r} sums to {sum}")));
        }
    }
    Ok(())
}

/// True when the directed graph of positive transitions is strongly
/// connected (checked by forward and backward reachability from state 0).
pub(crate) fn is_strongly_connected(kernel: &DMatrix<f64>) -> bool {
    let n = kernel.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let p = if forward { kernel[(u, v)] } else { kernel[(v, u)] };
                if p > 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|b| b)
    };
    reach(true) && reach(false)
}

/// The period of a strongly connected chain: the gcd of
/// `level(u) + 1 − level(v)` over all positive transitions `u → v`, with
/// levels from a breadth-first search. Aperiodic ⇔ 1.
pub(crate) fn chain_period(kernel: &DMatrix<f64>) -> usize {
    let n = kernel.nrows();
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::from([0usize]);
    level[0] = 0;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if kernel[(u, v)] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g: u64 = 0;
    for u in 0..n {
        for v in 0..n {
            if kernel[(u, v)] > 0.0 {
                let d = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs();
                g = gcd(g, d);
            }
        }
    }
    g.max(1) as usize
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// The unique stationary distribution of an ergodic finite chain, by
/// solving `πᵀP = πᵀ, Σπ = 1` with a replaced normalization row. The
/// result satisfies `‖πᵀP − πᵀ‖_∞ ≤ 1e-10`.
///
/// # Errors
///
/// [`OracleError::NonErgodic`] when the chain is reducible or periodic;
/// [`OracleError::BadInput`] when `kernel` is not row-stochastic.
pub fn stationary_distribution(kernel: &DMatrix<f64>) -> Result<Vec<f64>, OracleError> {
    validate_kernel(kernel)?;
    let n = kernel.nrows();
    if !is_strongly_connected(kernel) {
        return Err(OracleError::NonErgodic("chain is not irreducible".into()));
    }
    let period = chain_period(kernel);
    if period != 1 {
        return Err(OracleError::NonErgodic(format!("chain is periodic with period {period}")));
    }
    let mut system = kernel.transpose() - DMatrix::identity(n, n);
    for c in 0..n {
        system[(n - 1, c)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = system.lu().solve(&rhs).ok_or(OracleError::RankDeficient("stationary system"))?;
    let mut pi: Vec<f64> = pi.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);
    let mut residual = 0.0f64;
    for c in 0..n {
        let flow: f64 = (0..n).map(|r| pi[r] * kernel[(r, c)]).sum();
        residual = residual.max((flow - pi[c]).abs());
    }
    if residual > 1e-10 {
        return Err(OracleError::BadInput(format!("stationary solve residual {residual:e}")));
    }
    Ok(pi)
}

/// Stationary distribution by power iteration from the uniform vector —
/// the independent cross-check for [`stationary_distribution`]. Returns the
/// distribution and the number of iterations used.
///
/// # Errors
///
/// [`OracleError::NoConvergence`] when the sup-norm change does not fall
/// below `tol` within `max_iter` sweeps; [`OracleError::BadInput`] for a
/// non-stochastic kernel.
pub fn stationary_power(
    kernel: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize), OracleError> {
    validate_kernel(kernel)?;
    let n = kernel.nrows();
    let mut pi = DVector::from_element(n, 1.0 / n as f64);
    for it in 1..=max_iter {
        let next = kernel.tr_mul(&pi);
        let diff = (&next - &pi).amax();
        pi = next;
        if diff <= tol {
            return Ok((pi.iter().copied().collect(), it));
        }
    }
    Err(OracleError::NoConvergence { what: "stationary power iteration", iters: max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::chain::{build_chain_example, chain_objective, GOOD};
    use crate::game::fixtures::{random_three_agent_game, two_commuter_game};
    use crate::policy::{profile_from_theta, AgentTable, PolicyProfile, Theta};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_profile(game: &NetworkedGame, seed: u64) -> PolicyProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        profile_from_theta(&Theta::random(game.state_sizes(), game.action_sizes(), 1.0, &mut rng))
    }

    #[test]
    fn induced_chain_rows_are_stochastic() {
        let game = random_three_agent_game(1, 0.9, &mut ChaCha8Rng::seed_from_u64(7));
        let profile = random_profile(&game, 8);
        let p = induced_chain(&game, &profile).unwrap();
        for r in 0..p.nrows() {
            let sum: f64 = (0..p.ncols()).map(|c| p[(r, c)]).sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn chain_game_head_agent_copies_its_action() {
        // In the 4-agent chain game the head agent's next state equals its
        // own action, so under a head policy pinned to GOOD every row of
        // the induced chain puts all mass on states whose head digit is
        // GOOD.
        let (game, _) = build_chain_example(0.9).unwrap();
        let mut head = AgentTable::zeros(2, 2);
        *head.get_mut(0, GOOD) = 1.0;
        *head.get_mut(1, GOOD) = 1.0;
        let profile =
            PolicyProfile::uniform(game.state_sizes(), game.action_sizes()).with_agent_table(0, head);
        let p = induced_chain(&game, &profile).unwrap();
        let states = MixedRadix::new(game.state_sizes());
        for r in 0..p.nrows() {
            let good_mass: f64 =
                (0..p.ncols()).filter(|&c| states.digit(c, 0) == GOOD).map(|c| p[(r, c)]).sum();
            assert_abs_diff_eq!(good_mass, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn chain_objectives_match_closed_form() {
        for gamma in [0.5, 0.9, 0.99] {
            let (game, _) = build_chain_example(gamma).unwrap();
            for seed in 0..4 {
                let profile = random_profile(&game, 100 + seed);
                let sol = ExactSolution::solve(&game, &profile).unwrap();
                for i in 0..4 {
                    let expected = chain_objective(gamma, i, &profile);
                    assert_abs_diff_eq!(sol.j[i], expected, epsilon = 1e-10);
                    let direct = objective(&game, &profile, i).unwrap();
                    assert_abs_diff_eq!(direct, expected, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn exact_solution_internal_identities() {
        let game = random_three_agent_game(1, 0.9, &mut ChaCha8Rng::seed_from_u64(21));
        let profile = random_profile(&game, 22);
        let sol = ExactSolution::solve(&game, &profile).unwrap();
        let ns = sol.n_states();
        let na = sol.n_actions();
        let (lo, hi) = game.reward_range();
        let d_sum: f64 = sol.d.iter().sum();
        assert_abs_diff_eq!(d_sum, 1.0, epsilon = 1e-10);
        assert!(sol.d.iter().all(|&x| x >= -1e-15));
        for i in 0..game.n() {
            let asz = game.action_sizes()[i];
            for s_idx in 0..ns {
                let s = sol.states.decode(s_idx);
                // V from joint Q and from averaged Q agree with the stored V.
                let mut v_joint = 0.0;
                for a_idx in 0..na {
                    let a = sol.actions.decode(a_idx);
                    v_joint += profile.joint_prob(&s, &a) * sol.q[i][s_idx * na + a_idx];
                }
                let mut v_avg = 0.0;
                let mut adv_mass = 0.0;
                for a_i in 0..asz {
                    let w = profile.prob(i, s[i], a_i);
                    v_avg += w * sol.q_bar[i][s_idx * asz + a_i];
                    adv_mass += w * sol.adv_bar[i][s_idx * asz + a_i];
                }
                assert_abs_diff_eq!(v_joint, sol.v[i][s_idx], epsilon = 1e-10);
                assert_abs_diff_eq!(v_avg, sol.v[i][s_idx], epsilon = 1e-10);
                assert_abs_diff_eq!(adv_mass, 0.0, epsilon = 1e-10);
            }
            // Q range: rewards in [lo, hi] bound every Q by the geometric sum.
            let gamma = game.gamma();
            for &qv in &sol.q[i] {
                assert!(qv >= lo / (1.0 - gamma) - 1e-9 && qv <= hi / (1.0 - gamma) + 1e-9);
            }
        }
        let j_from_mu: f64 = sol.mu.iter().zip(&sol.v[0]).map(|(&m, &v)| m * v).sum();
        assert_abs_diff_eq!(j_from_mu, sol.j[0], epsilon = 1e-12);
    }

    #[test]
    fn q_function_routes_agree() {
        let game = random_three_agent_game(1, 0.9, &mut ChaCha8Rng::seed_from_u64(31));
        let profile = random_profile(&game, 32);
        for i in 0..game.n() {
            let by_solve = q_function(&game, &profile, i).unwrap();
            let (by_series, terms) = q_function_series(&game, &profile, i, 1e-12).unwrap();
            assert!(terms > 0);
            for (a, b) in by_solve.iter().zip(&by_series) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
            // The pair-chain Q also matches the ExactSolution assembly.
            let sol = ExactSolution::solve(&game, &profile).unwrap();
            for (a, b) in by_solve.iter().zip(&sol.q[i]) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn constant_reward_gives_geometric_q() {
        use crate::game::{LocalKernel, Mu, RewardRule};
        use crate::netgraph::Graph;
        let gamma = 0.9;
        let game = NetworkedGame::new(
            Graph::from_edges(1, &[]).unwrap(),
            vec![2],
            vec![2],
            0,
            gamma,
            Mu::Product(vec![vec![0.5, 0.5]]),
            vec![LocalKernel {
                deps: vec![0],
                table: vec![0.3, 0.7, 0.6, 0.4, 0.2, 0.8, 0.9, 0.1],
            }],
            vec![RewardRule::Table {
                state_deps: vec![0],
                action_deps: vec![0],
                table: vec![0.7; 4],
            }],
            (0.0, 1.0),
        )
        .unwrap();
        let profile = PolicyProfile::uniform(game.state_sizes(), game.action_sizes());
        let q = q_function(&game, &profile, 0).unwrap();
        for &qv in &q {
            assert_abs_diff_eq!(qv, 0.7 / (1.0 - gamma), epsilon = 1e-10);
        }
        let sol = ExactSolution::solve(&game, &profile).unwrap();
        assert_abs_diff_eq!(sol.j[0], 0.7 / (1.0 - gamma), epsilon = 1e-10);
        for &a in &sol.adv[0] {
            assert_abs_diff_eq!(a, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn pair_chain_marginalizes_to_state_chain() {
        let game = random_three_agent_game(1, 0.8, &mut ChaCha8Rng::seed_from_u64(41));
        let profile = random_profile(&game, 42);
        let p = induced_chain(&game, &profile).unwrap();
        let psa = induced_chain_sa(&game, &profile).unwrap();
        let states = MixedRadix::new(game.state_sizes());
        let actions = MixedRadix::new(game.action_sizes());
        let na = actions.len();
        for s_idx in 0..states.len() {
            let s = states.decode(s_idx);
            for sp in 0..states.len() {
                let mut total = 0.0;
                for a_idx in 0..na {
                    let a = actions.decode(a_idx);
                    let w = profile.joint_prob(&s, &a);
                    let row_sum: f64 = (0..na).map(|apx| psa[(s_idx * na + a_idx, sp * na + apx)]).sum();
                    total += w * row_sum;
                }
                assert_abs_diff_eq!(total, p[(s_idx, sp)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn visitation_dominates_start_and_matches_series() {
        let game = random_three_agent_game(1, 0.9, &mut ChaCha8Rng::seed_from_u64(51));
        let profile = random_profile(&game, 52);
        let start = Mu::point(&[1, 0, 1], game.state_sizes());
        let d = visitation(&game, &profile, &start).unwrap();
        let states = MixedRadix::new(game.state_sizes());
        let gamma = game.gamma();
        // d ≥ (1−γ)·start entrywise, and sums to 1.
        assert!(d[states.index(&[1, 0, 1])] >= (1.0 - gamma) - 1e-12);
        assert_abs_diff_eq!(d.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        // Independent route: propagate p_{t+1} = Pᵀ p_t and discount-sum.
        let p = induced_chain(&game, &profile).unwrap();
        let mut p_t = DVector::zeros(states.len());
        p_t[states.index(&[1, 0, 1])] = 1.0;
        let mut acc = DVector::zeros(states.len());
        let mut w = 1.0 - gamma;
        for _ in 0..700 {
            acc += w * &p_t;
            p_t = p.tr_mul(&p_t);
            w *= gamma;
        }
        for (a, b) in d.iter().zip(acc.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn visitation_sticks_to_absorbing_state() {
        // Two-commuter game: both commuters started at their destinations
        // stay there forever, so the visitation from that point is a point
        // mass.
        let game = two_commuter_game(0.5, 0.9);
        let cong = game.congestion().unwrap();
        let dest = [cong.dest_state[0], cong.dest_state[1]];
        let profile = PolicyProfile::uniform(game.state_sizes(), game.action_sizes());
        let start = Mu::point(&dest, game.state_sizes());
        let d = visitation(&game, &profile, &start).unwrap();
        let states = MixedRadix::new(game.state_sizes());
        assert_abs_diff_eq!(d[states.index(&dest)], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn visitation_rejects_non_distribution() {
        let game = random_three_agent_game(1, 0.9, &mut ChaCha8Rng::seed_from_u64(61));
        let profile = random_profile(&game, 62);
        let bad = Mu::Dense({
            let mut v = vec![0.0; 8];
            v[0] = 0.7;
            v
        });
        // Constructing the Mu is fine; visitation validates the density sum.
        assert!(matches!(
            visitation(&game, &profile, &bad),
            Err(OracleError::BadInput(_))
        ));
    }

    #[test]
    fn visitation_matches_geometric_stopping_monte_carlo() {
        use rand::Rng;
        let game = random_three_agent_game(1, 0.8, &mut ChaCha8Rng::seed_from_u64(71));
        let profile = random_profile(&game, 72);
        let d = visitation(&game, &profile, game.mu()).unwrap();
        let states = MixedRadix::new(game.state_sizes());
        // Sample the state at a Geometric(1−γ) stopping time; its law is d.
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let trials = 40_000;
        let mut counts = vec![0usize; states.len()];
        for _ in 0..trials {
            let mut s = game.mu().sample(game.state_sizes(), &mut rng);
            while rng.gen::<f64>() < game.gamma() {
                let a = profile.sample_joint(&s, &mut rng);
                s = game.step(&s, &a, &mut rng);
            }
            counts[states.index(&s)] += 1;
        }
        for (idx, &p) in d.iter().enumerate() {
            let freq = counts[idx] as f64 / trials as f64;
            let sigma = (p * (1.0 - p) / trials as f64).sqrt().max(1e-9);
            assert!(
                (freq - p).abs() <= 3.0 * sigma + 1e-4,
                "state {idx}: freq {freq} vs d {p} (σ = {sigma})"
            );
        }
    }

    #[test]
    fn stationary_two_state_closed_form() {
        let kernel = DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.6, 0.4]);
        let pi = stationary_distribution(&kernel).unwrap();
        assert_abs_diff_eq!(pi[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[1], 1.0 / 3.0, epsilon = 1e-12);
        let (pi_pow, iters) = stationary_power(&kernel, 1e-13, 100_000).unwrap();
        assert!(iters > 0);
        for (a, b) in pi.iter().zip(&pi_pow) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn stationary_doubly_stochastic_is_uniform() {
        let kernel = DMatrix::from_row_slice(
            3,
            3,
            &[0.2, 0.5, 0.3, 0.5, 0.1, 0.4, 0.3, 0.4, 0.3],
        );
        let pi = stationary_distribution(&kernel).unwrap();
        for &p in &pi {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn stationary_rejects_periodic_and_reducible_chains() {
        let cycle = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            stationary_distribution(&cycle),
            Err(OracleError::NonErgodic(msg)) if msg.contains("period")
        ));
        let identity = DMatrix::identity(2, 2);
        assert!(matches!(
            stationary_distribution(&identity),
            Err(OracleError::NonErgodic(msg)) if msg.contains("irreducible")
        ));
    }

    #[test]
    fn stationary_matches_induced_chain_of_a_game() {
        // End-to-end: the stationary law of an induced micro-chain agrees
        // between the linear solve and power iteration.
        let game = random_three_agent_game(1, 0.9, &mut ChaCha8Rng::seed_from_u64(81));
        let profile = random_profile(&game, 82).epsilon_explore(0.2);
        let p = induced_chain(&game, &profile).unwrap();
        let pi = stationary_distribution(&p).unwrap();
        let (pi_pow, _) = stationary_power(&p, 1e-13, 200_000).unwrap();
        for (a, b) in pi.iter().zip(&pi_pow) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn guard_rejects_oversized_games() {
        // 8 agents with 4 states and 4 actions each: |S|·|A| = 4^16 ≫ guard.
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let game = crate::game::fixtures::random_game(
            crate::netgraph::Graph::path(8),
            vec![4; 8],
            vec![4; 8],
            1,
            0.9,
            &mut rng,
        )
        .unwrap();
        let profile = PolicyProfile::uniform(game.state_sizes(), game.action_sizes());
        assert!(matches!(
            ExactSolution::solve(&game, &profile),
            Err(OracleError::Guard { .. })
        ));
    }
}
