//! Localized temporal-difference policy evaluation with linear function
//! approximation.
//!
//! Each agent `i` estimates its averaged Q-function from a single shared
//! trajectory, but only ever observes the restriction of that trajectory to
//! its κ_c-hop neighborhood `N_i^{κ_c}`:
//!
//! * features `φ_i(s_{N_i^{κ_c}}, a_i)` ([`FeatureMap`], tabular or
//!   concatenated one-hot, always `‖φ‖ ≤ 1`);
//! * TD(λ) with eligibility traces ([`td_lambda_local`]):
//!   `δ(t) = φ(t)ᵀw − r_i(t) − γφ(t+1)ᵀw`, `w ← w − αδζ`,
//!   `ζ ← γλζ + φ(t+1)`, with `w(0)=0` and `ζ(0)=φ(0)`;
//! * a generalized stochastic-approximation form ([`generalized_td`])
//!   `w(t+1) = w(t) + α·F(X(t), w(t))·ζ(t)` over observation windows
//!   `X(t) = (z(t−t₀), …, z(t+1))`, of which TD(λ) is the instance
//!   `t₀ = 0`, `F = −δ`, trace decay `γλ`.
//!
//! Locality is structural: the TD update consumes a [`RestrictedTrajectory`]
//! produced by [`restrict`], which contains nothing outside the
//! neighborhood.

use crate::game::index::MixedRadix;
use crate::game::NetworkedGame;
use crate::policy::{PolicyProfile, Theta};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by feature construction and TD learning.
#[derive(Debug, Error)]
pub enum CriticError {
    /// The truncation radius must cover the reward locality radius.
    #[error("kappa_c = {kappa_c} below the reward radius kappa_r = {kappa_r}")]
    KappaTooSmall { kappa_c: usize, kappa_r: usize },
    /// A configuration field is out of range.
    #[error("invalid critic configuration: {0}")]
    BadConfig(String),
    /// Weights left the finite range during learning.
    #[error("agent {agent}: TD weights diverged (non-finite) at step {step}")]
    Divergence { agent: usize, step: usize },
    /// A weight or feature vector has the wrong length.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Feature construction rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// Full one-hot over the joint `(s_{N^{κ_c}}, a_i)` — exact basis with
    /// linearly independent columns.
    Tabular,
    /// Concatenated one-hots of each neighbor's local state and the own
    /// action, scaled by `1/√(|N^{κ_c}|+1)` so that `‖φ‖ = 1`.
    OnehotConcat,
}

/// Agent `i`'s feature map `φ_i(s_{N_i^{κ_c}}, a_i) ∈ ℝ^{d_i}`.
///
/// Local states are passed in ascending-member order (the order of
/// [`FeatureMap::members`]).
#[derive(Debug, Clone)]
pub struct FeatureMap {
    mode: FeatureMode,
    agent: usize,
    members: Vec<usize>,
    member_sizes: Vec<usize>,
    n_actions: usize,
    dim: usize,
    /// Tabular: mixed radix over `(s_members…, a_i)`.
    radix: MixedRadix,
    /// Onehot-concat: starting coordinate of each member's block (the
    /// action block follows the last member block).
    offsets: Vec<usize>,
    /// Onehot-concat entry value `1/√(|N^{κ_c}|+1)`.
    scale: f64,
}

impl FeatureMap {
    /// Builds agent `i`'s feature map for truncation radius `kappa_c`.
    ///
    /// # Errors
    ///
    /// [`CriticError::KappaTooSmall`] when `kappa_c < kappa_r`.
    pub fn new(
        game: &NetworkedGame,
        i: usize,
        kappa_c: usize,
        mode: FeatureMode,
    ) -> Result<Self, CriticError> {
        if kappa_c < game.kappa_r() {
            return Err(CriticError::KappaTooSmall { kappa_c, kappa_r: game.kappa_r() });
        }
        let members = game.graph().khop(i, kappa_c);
        let member_sizes: Vec<usize> = members.iter().map(|&j| game.state_sizes()[j]).collect();
        let n_actions = game.action_sizes()[i];
        let mut radix_sizes = member_sizes.clone();
        radix_sizes.push(n_actions);
        let radix = MixedRadix::new(&radix_sizes);
        let mut offsets = Vec::with_capacity(members.len() + 1);
        let mut acc = 0;
        for &c in &member_sizes {
            offsets.push(acc);
            acc += c;
        }
        offsets.push(acc); // action block
        let (dim, scale) = match mode {
            FeatureMode::Tabular => (radix.len(), 1.0),
            FeatureMode::OnehotConcat => {
                (acc + n_actions, 1.0 / ((members.len() + 1) as f64).sqrt())
            }
        };
        Ok(Self { mode, agent: i, members, member_sizes, n_actions, dim, radix, offsets, scale })
    }

    /// The agent this map belongs to.
    pub fn agent(&self) -> usize {
        self.agent
    }

    /// Sorted members of `N_i^{κ_c}` (the order of the `s_members` inputs).
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// Feature dimension `d_i`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The construction rule.
    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    /// Active coordinates of `φ(s_members, a_i)` as `(index, value)` pairs
    /// in ascending index order.
    pub fn active(&self, s_members: &[usize], a_i: usize) -> Vec<(usize, f64)> {
        debug_assert_eq!(s_members.len(), self.members.len());
        debug_assert!(a_i < self.n_actions);
        match self.mode {
            FeatureMode::Tabular => {
                let mut digits = Vec::with_capacity(s_members.len() + 1);
                digits.extend_from_slice(s_members);
                digits.push(a_i);
                vec![(self.radix.index(&digits), 1.0)]
            }
            FeatureMode::OnehotConcat => {
                let mut out = Vec::with_capacity(self.members.len() + 1);
                for (k, &s) in s_members.iter().enumerate() {
                    debug_assert!(s < self.member_sizes[k]);
                    out.push((self.offsets[k] + s, self.scale));
                }
                out.push((self.offsets[self.members.len()] + a_i, self.scale));
                out
            }
        }
    }

    /// Dense `φ(s_members, a_i)`.
    pub fn row(&self, s_members: &[usize], a_i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (k, v) in self.active(s_members, a_i) {
            out[k] = v;
        }
        out
    }

    /// Inner product `⟨φ(s_members, a_i), w⟩` (no length check; see
    /// [`q_hat`] for the checked form). Summation follows ascending
    /// coordinate order, so it is value-identical to a dense dot product.
    pub fn dot(&self, w: &[f64], s_members: &[usize], a_i: usize) -> f64 {
        self.active(s_members, a_i).iter().map(|&(k, v)| v * w[k]).sum()
    }
}

/// The critic's estimate `Q̂_i(s_{N^{κ_c}}, a_i; w) = ⟨φ_i(·), w⟩`.
///
/// # Errors
///
/// [`CriticError::DimensionMismatch`] when `w` has the wrong length.
pub fn q_hat(
    features: &FeatureMap,
    w: &[f64],
    s_members: &[usize],
    a_i: usize,
) -> Result<f64, CriticError> {
    if w.len() != features.dim() {
        return Err(CriticError::DimensionMismatch { expected: features.dim(), got: w.len() });
    }
    Ok(features.dot(w, s_members, a_i))
}

/// Builds agent `i`'s feature map (operation form of [`FeatureMap::new`]).
pub fn make_features(
    game: &NetworkedGame,
    i: usize,
    kappa_c: usize,
    mode: FeatureMode,
) -> Result<FeatureMap, CriticError> {
    FeatureMap::new(game, i, kappa_c, mode)
}

/// TD(λ) hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticConfig {
    /// Trajectory length `K` (number of TD updates).
    pub k: usize,
    /// Step size `α > 0`.
    pub alpha: f64,
    /// Trace decay `λ ∈ [0, 1)` (the trace decays by `γλ` per step).
    pub lambda: f64,
    /// Exploration weight `ε ∈ [0, 1]` mixed into the sampling policy.
    pub eps: f64,
    /// Truncation radius `κ_c ≥ κ_r`.
    pub kappa_c: usize,
}

impl CriticConfig {
    /// Validates fields against the game; returns advisory warnings.
    ///
    /// `ε = 0` is permitted (it is the benchmark experiment's setting) but
    /// flagged: without exploration, stationary coverage of all
    /// `(s_{N^{κ_c}}, a_i)` pairs is not guaranteed and fixed-point
    /// references may be undefined.
    pub fn validate(&self, game: &NetworkedGame) -> Result<Vec<String>, CriticError> {
        if self.kappa_c < game.kappa_r() {
            return Err(CriticError::KappaTooSmall {
                kappa_c: self.kappa_c,
                kappa_r: game.kappa_r(),
            });
        }
        if !(self.alpha > 0.0) {
            return Err(CriticError::BadConfig(format!("alpha = {} must be > 0", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(CriticError::BadConfig(format!(
                "lambda = {} outside [0, 1)",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.eps) {
            return Err(CriticError::BadConfig(format!("eps = {} outside [0, 1]", self.eps)));
        }
        let mut warnings = Vec::new();
        if self.eps == 0.0 {
            warnings.push(
                "eps = 0: no exploration mixing; stationary coverage (pi_min > 0) is not \
                 guaranteed and TD fixed-point references may be undefined"
                    .to_string(),
            );
        }
        Ok(warnings)
    }
}

/// A sampled rollout of length `K+1`: `(s(t), a(t), r(t))` for
/// `t = 0, …, K`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    /// Global states, `K+1` entries.
    pub states: Vec<Vec<usize>>,
    /// Global actions, `K+1` entries.
    pub actions: Vec<Vec<usize>>,
    /// Per-agent rewards `r(t) = r(s(t), a(t))`, `K+1` entries of length
    /// `n`.
    pub rewards: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Number of recorded triples (`K+1`).
    pub fn len(&self) -> usize {
        self.states.len()
    }

    /// True when no triples are recorded.
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Samples a `K+1`-triple trajectory: `s(0) ∼ μ`, actions from the
/// ε-mixed profile, rewards for every agent at every step.
pub fn collect_trajectory<R: Rng + ?Sized>(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    eps: f64,
    k: usize,
    rng: &mut R,
) -> Trajectory {
    let mixed = profile.epsilon_explore(eps);
    let mut states = Vec::with_capacity(k + 1);
    let mut actions = Vec::with_capacity(k + 1);
    let mut rewards = Vec::with_capacity(k + 1);
    let mut s = game.mu().sample(game.state_sizes(), rng);
    for t in 0..=k {
        let a = mixed.sample_joint(&s, rng);
        rewards.push(game.rewards_all(&s, &a));
        let s_next = if t < k { game.step(&s, &a, rng) } else { Vec::new() };
        states.push(s);
        actions.push(a);
        if t < k {
            s = s_next;
        } else {
            s = Vec::new();
        }
    }
    Trajectory { states, actions, rewards }
}

/// Agent `i`'s view of a trajectory: neighborhood states, own actions, own
/// rewards. The TD update receives only this object, so locality is
/// enforced by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedTrajectory {
    /// Members of `N_i^{κ_c}`, ascending.
    pub members: Vec<usize>,
    /// `s_{N^{κ_c}}(t)` per step, in member order.
    pub s_local: Vec<Vec<usize>>,
    /// `a_i(t)` per step.
    pub a: Vec<usize>,
    /// `r_i(t)` per step.
    pub r: Vec<f64>,
}

/// Projects a trajectory onto `(s_{N_i^{κ_c}}, a_i, r_i)`.
pub fn restrict(
    traj: &Trajectory,
    game: &NetworkedGame,
    i: usize,
    kappa_c: usize,
) -> RestrictedTrajectory {
    let members = game.graph().khop(i, kappa_c);
    let s_local = traj
        .states
        .iter()
        .map(|s| members.iter().map(|&j| s[j]).collect())
        .collect();
    let a = traj.actions.iter().map(|a| a[i]).collect();
    let r = traj.rewards.iter().map(|r| r[i]).collect();
    RestrictedTrajectory { members, s_local, a, r }
}

/// Localized TD(λ) (one shared trajectory, per-agent restricted updates).
///
/// # Arguments
///
/// * `theta` — current policy parameters (the evaluated policy before
///   ε-mixing).
/// * `mode` — feature construction rule (one map per agent).
/// * `cfg` — validated [`CriticConfig`].
/// * `rng` — drives initial state, exploration, and transitions.
///
/// # Returns
///
/// Per-agent weight vectors `{w_i(K)}`.
///
/// # Errors
///
/// [`CriticError::Divergence`] with the offending agent and step when a
/// weight turns non-finite.
pub fn td_lambda_local<R: Rng + ?Sized>(
    game: &NetworkedGame,
    theta: &Theta,
    mode: FeatureMode,
    cfg: &CriticConfig,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, CriticError> {
    td_lambda_local_from(game, theta, mode, cfg, None, rng)
}

/// [`td_lambda_local`] with caller-supplied starting weights.
///
/// `w0 = None` starts every agent from zero (identical to
/// [`td_lambda_local`]); `w0 = Some(ws)` resumes each agent's recursion from
/// `ws[i]`, which lets an outer training loop keep refining one weight vector
/// across repeated short evaluation bursts instead of re-learning from
/// scratch each time.
///
/// # Errors
///
/// In addition to the [`td_lambda_local`] errors,
/// [`CriticError::BadConfig`] when `w0` has the wrong number of agents or a
/// weight vector whose length differs from that agent's feature dimension.
pub fn td_lambda_local_from<R: Rng + ?Sized>(
    game: &NetworkedGame,
    theta: &Theta,
    mode: FeatureMode,
    cfg: &CriticConfig,
    w0: Option<&[Vec<f64>]>,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, CriticError> {
    cfg.validate(game)?;
    if let Some(ws) = w0 {
        if ws.len() != game.n() {
            return Err(CriticError::BadConfig(format!(
                "starting weights cover {} agents, the game has {}",
                ws.len(),
                game.n()
            )));
        }
    }
    let profile = crate::policy::profile_from_theta(theta);
    let traj = collect_trajectory(game, &profile, cfg.eps, cfg.k, rng);
    let gamma = game.gamma();
    let mut out = Vec::with_capacity(game.n());
    for i in 0..game.n() {
        let fm = FeatureMap::new(game, i, cfg.kappa_c, mode)?;
        let start = match w0 {
            None => vec![0.0; fm.dim()],
            Some(ws) => {
                if ws[i].len() != fm.dim() {
                    return Err(CriticError::BadConfig(format!(
                        "agent {i} starting weights have length {}, features need {}",
                        ws[i].len(),
                        fm.dim()
                    )));
                }
                ws[i].clone()
            }
        };
        let rt = restrict(&traj, game, i, cfg.kappa_c);
        out.push(td_lambda_restricted(&fm, &rt, start, gamma, cfg.alpha, cfg.lambda, i)?);
    }
    Ok(out)
}

/// The per-agent TD(λ) inner loop over a restricted trajectory.
fn td_lambda_restricted(
    fm: &FeatureMap,
    rt: &RestrictedTrajectory,
    w0: Vec<f64>,
    gamma: f64,
    alpha: f64,
    lambda: f64,
    agent: usize,
) -> Result<Vec<f64>, CriticError> {
    let k = rt.a.len().saturating_sub(1);
    let mut w = w0;
    let mut zeta = fm.row(&rt.s_local[0], rt.a[0]);
    let trace_decay = gamma * lambda;
    for t in 0..k {
        let delta = fm.dot(&w, &rt.s_local[t], rt.a[t])
            - rt.r[t]
            - gamma * fm.dot(&w, &rt.s_local[t + 1], rt.a[t + 1]);
        for (wk, zk) in w.iter_mut().zip(&zeta) {
            *wk -= alpha * delta * zk;
        }
        if !w.iter().all(|x| x.is_finite()) {
            return Err(CriticError::Divergence { agent, step: t });
        }
        for z in zeta.iter_mut() {
            *z *= trace_decay;
        }
        for (idx, v) in fm.active(&rt.s_local[t + 1], rt.a[t + 1]) {
            zeta[idx] += v;
        }
    }
    Ok(w)
}

/// A `(t₀+2)`-step observation window `(z(t−t₀), …, z(t+1))` with the
/// matching rewards, handed to the update functional of
/// [`generalized_td`].
#[derive(Debug)]
pub struct WindowView<'a> {
    /// Neighborhood states, `t₀+2` entries ending at `t+1`.
    pub s_local: &'a [Vec<usize>],
    /// Own actions, aligned with `s_local`.
    pub actions: &'a [usize],
    /// Own rewards, aligned with `s_local`.
    pub rewards: &'a [f64],
}

/// Generalized trace-based stochastic approximation:
/// `w(t+1) = w(t) + α·F(X(t), w(t))·ζ(t)`,
/// `ζ(t+1) = λ_trace·ζ(t) + φ(z(t+1))`, `ζ(0) = φ(z(0))`, `w(0) = 0`.
///
/// TD(λ) is the instance `t₀ = 0`, `F = −δ`, `λ_trace = γλ` (the TD form
/// folds the discount into the trace decay; here the decay is a free
/// parameter).
///
/// Updates run for `t = t₀, …, K−1` (the window needs `t−t₀ ≥ 0`).
///
/// # Errors
///
/// [`CriticError::BadConfig`] when the trajectory is shorter than one full
/// window; [`CriticError::Divergence`] on non-finite weights.
pub fn generalized_td<F>(
    fm: &FeatureMap,
    rt: &RestrictedTrajectory,
    f: F,
    lambda_trace: f64,
    t0: usize,
    alpha: f64,
) -> Result<Vec<f64>, CriticError>
where
    F: Fn(WindowView<'_>, &[f64]) -> f64,
{
    let k = rt.a.len().saturating_sub(1);
    if k < t0 {
        return Err(CriticError::BadConfig(format!(
            "trajectory has {k} transitions, fewer than t0 = {t0}"
        )));
    }
    let mut w = vec![0.0; fm.dim()];
    let mut zeta = fm.row(&rt.s_local[0], rt.a[0]);
    for t in 0..k {
        if t >= t0 {
            let lo = t - t0;
            let window = WindowView {
                s_local: &rt.s_local[lo..=t + 1],
                actions: &rt.a[lo..=t + 1],
                rewards: &rt.r[lo..=t + 1],
            };
            let drive = f(window, &w);
            for (wk, zk) in w.iter_mut().zip(&zeta) {
                *wk += alpha * drive * zk;
            }
            if !w.iter().all(|x| x.is_finite()) {
                return Err(CriticError::Divergence { agent: fm.agent(), step: t });
            }
        }
        for z in zeta.iter_mut() {
            *z *= lambda_trace;
        }
        for (idx, v) in fm.active(&rt.s_local[t + 1], rt.a[t + 1]) {
            zeta[idx] += v;
        }
    }
    Ok(w)
}
