//! Policy-ascent drivers.
//!
//! Two loops share the update rule `θ_i ← θ_i + β·direction_i` applied to all
//! agents simultaneously from the same parameter snapshot:
//!
//! * [`ipg_exact`] — independent policy gradient with the exact per-agent
//!   gradients from the dense solver; the deterministic reference dynamics.
//! * [`localized_actor_critic`] — the sample-based loop: each outer iteration
//!   fits per-agent value weights by temporal-difference learning on the
//!   ε-mixed policy, then estimates each agent's gradient from fresh rollouts
//!   of the *unmixed* policy scored against those weights.
//!
//! Both return the final parameters together with a [`LearningLog`] that makes
//! the run replayable: the seed, parameter snapshots at a configurable stride,
//! per-iteration ascent-direction norms, and critic weights.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critic::{td_lambda_local_from, CriticConfig, CriticError, FeatureMap, FeatureMode};
use crate::game::NetworkedGame;
use crate::oracle::{exact_policy_gradient_all, OracleError};
use crate::policy::{profile_from_theta, score_row, AgentTable, Theta};

/// Substream (of the run seed) that drives critic trajectory sampling.
pub const CRITIC_STREAM: u64 = 2;
/// Substream (of the run seed) that drives the actor's gradient rollouts.
pub const ACTOR_STREAM: u64 = 3;

/// Errors from the ascent drivers.
#[derive(Debug, Error)]
pub enum ActorError {
    /// Feature construction or temporal-difference evaluation failed.
    #[error(transparent)]
    Critic(#[from] CriticError),
    /// The exact-gradient solver failed (enumeration guard, singularity, …).
    #[error(transparent)]
    Oracle(#[from] OracleError),
    /// The configuration or an argument shape is invalid.
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    /// A quantity left the finite range; the run is aborted rather than
    /// silently repaired.
    #[error("{what} became non-finite at outer iteration {iteration}")]
    Diverged {
        /// Which quantity diverged.
        what: &'static str,
        /// One-based outer iteration at which divergence was detected.
        iteration: usize,
    },
}

/// How the ascent step size is chosen.
///
/// The two named schedules divide `(1−γ)³` by a multiple of the largest
/// `κ_G`-neighbourhood size `n(κ_G)`; they assume rewards normalized to
/// `[0,1]`. `Literal` bypasses the schedules and uses the configured number
/// as-is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaMode {
    /// `(1−γ)³ / (6·n(κ_G))` — the step under which exact independent
    /// policy gradient provably converges.
    PaperExact,
    /// `(1−γ)³ / (24·n(κ_G))` — the more conservative step the sample-based
    /// analysis assumes (exactly a quarter of the exact schedule).
    PaperApprox,
    /// Use the configured `beta` verbatim.
    Literal,
}

impl Default for BetaMode {
    fn default() -> Self {
        BetaMode::Literal
    }
}

/// Step size for the named schedules, `None` for [`BetaMode::Literal`].
pub fn default_beta(game: &NetworkedGame, kappa_g: usize, mode: BetaMode) -> Option<f64> {
    let shrink = (1.0 - game.gamma()).powi(3);
    let nk = game.graph().n_of_kappa(kappa_g) as f64;
    match mode {
        BetaMode::PaperExact => Some(shrink / (6.0 * nk)),
        BetaMode::PaperApprox => Some(shrink / (24.0 * nk)),
        BetaMode::Literal => None,
    }
}

/// Settings for the sample-based loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorConfig {
    /// Outer ascent iterations.
    pub m: usize,
    /// Gradient-sample trajectories per outer iteration.
    pub t: usize,
    /// Rollout truncation horizon for the gradient estimator.
    pub h: usize,
    /// Ascent step size (already resolved; see [`default_beta`]).
    pub beta: f64,
    /// Neighbourhood radius whose size scales the named step schedules.
    pub kappa_g: usize,
    /// Observation radius of the value features the estimator scores against.
    /// Must equal `critic.kappa_c`: the estimator reuses the critic's fit.
    pub kappa_c: usize,
    /// Inner temporal-difference evaluation settings.
    pub critic: CriticConfig,
}

impl ActorConfig {
    /// Validates the configuration against a game.
    ///
    /// Returns advisory warnings (non-fatal oddities such as `ε = 0`
    /// exploration or a radius larger than the graph diameter).
    ///
    /// # Errors
    ///
    /// [`ActorError::BadConfig`] if `t` or `h` is zero, `beta` is not a
    /// positive finite number, or `kappa_c` disagrees with the critic's;
    /// critic-side violations propagate as [`ActorError::Critic`].
    pub fn validate(&self, game: &NetworkedGame) -> Result<Vec<String>, ActorError> {
        if self.t == 0 {
            return Err(ActorError::BadConfig("t must be at least 1".into()));
        }
        if self.h == 0 {
            return Err(ActorError::BadConfig("h must be at least 1".into()));
        }
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(ActorError::BadConfig(format!(
                "beta must be positive and finite, got {}",
                self.beta
            )));
        }
        if self.kappa_c != self.critic.kappa_c {
            return Err(ActorError::BadConfig(format!(
                "kappa_c ({}) must equal critic.kappa_c ({}): the gradient estimator scores \
                 rollouts against the critic's features",
                self.kappa_c, self.critic.kappa_c
            )));
        }
        let mut warnings = self.critic.validate(game)?;
        if self.kappa_g > game.graph().diameter() {
            warnings.push(format!(
                "kappa_g = {} exceeds the graph diameter {}; the neighbourhood is the whole graph",
                self.kappa_g,
                game.graph().diameter()
            ));
        }
        Ok(warnings)
    }
}

/// Replayable record of an ascent run.
///
/// `seed` plus the configuration reproduces the run exactly; the snapshots
/// let later evaluation (gap series, regret curves) re-derive anything else.
#[derive(Debug, Clone, Serialize)]
pub struct LearningLog {
    /// Seed the sampling streams were derived from; `None` for exact runs,
    /// which draw no randomness.
    pub seed: Option<u64>,
    /// Snapshot stride: parameters are recorded every `snapshot_every`
    /// iterations (0 = only the endpoints). The final iterate is always kept.
    pub snapshot_every: usize,
    /// `(iteration, θ)` pairs; entry 0 is the initial point.
    pub snapshots: Vec<(usize, Theta)>,
    /// Per-iteration per-agent Euclidean norms of the applied ascent
    /// direction (before scaling by `beta`).
    pub grad_norms: Vec<Vec<f64>>,
    /// Critic weights at the snapshot iterations; empty for exact runs.
    pub critic_weights: Vec<(usize, Vec<Vec<f64>>)>,
    /// Advisory warnings from configuration validation.
    pub warnings: Vec<String>,
    /// Wall-clock seconds spent inside the loop.
    pub wall_clock_secs: f64,
}

impl LearningLog {
    fn new(seed: Option<u64>, snapshot_every: usize, theta0: &Theta) -> Self {
        LearningLog {
            seed,
            snapshot_every,
            snapshots: vec![(0, theta0.clone())],
            grad_norms: Vec::new(),
            critic_weights: Vec::new(),
            warnings: Vec::new(),
            wall_clock_secs: 0.0,
        }
    }
}

fn should_snapshot(iteration: usize, total: usize, every: usize) -> bool {
    iteration == total || (every > 0 && iteration % every == 0)
}

fn frobenius(table: &AgentTable) -> f64 {
    table.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn ensure_finite_theta(theta: &Theta, iteration: usize) -> Result<(), ActorError> {
    if theta.tables.iter().all(|t| t.data.iter().all(|v| v.is_finite())) {
        Ok(())
    } else {
        Err(ActorError::Diverged { what: "policy parameters", iteration })
    }
}

fn ensure_finite_weights(weights: &[Vec<f64>], iteration: usize) -> Result<(), ActorError> {
    if weights.iter().all(|w| w.iter().all(|v| v.is_finite())) {
        Ok(())
    } else {
        Err(ActorError::Diverged { what: "critic weights", iteration })
    }
}

/// Simultaneous exact-gradient ascent: `θ_i ← θ_i + β·∇_{θ_i} J_i(θ)` for
/// all agents, `m` times.
///
/// # Errors
///
/// [`ActorError::BadConfig`] for a non-positive `beta`; solver failures
/// propagate as [`ActorError::Oracle`]; non-finite parameters abort with
/// [`ActorError::Diverged`].
pub fn ipg_exact(
    game: &NetworkedGame,
    theta0: &Theta,
    beta: f64,
    m: usize,
    snapshot_every: usize,
) -> Result<(Theta, LearningLog), ActorError> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(ActorError::BadConfig(format!(
            "beta must be positive and finite, got {beta}"
        )));
    }
    let start = Instant::now();
    let mut theta = theta0.clone();
    let mut log = LearningLog::new(None, snapshot_every, theta0);
    for iteration in 1..=m {
        let grads = exact_policy_gradient_all(game, &theta)?;
        log.grad_norms.push(grads.iter().map(frobenius).collect());
        theta.axpy(beta, &Theta { tables: grads });
        ensure_finite_theta(&theta, iteration)?;
        if should_snapshot(iteration, m, snapshot_every) {
            log.snapshots.push((iteration, theta.clone()));
        }
    }
    log.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok((theta, log))
}

/// Monte-Carlo policy-gradient estimate scored against fitted value weights.
///
/// Samples `t_samples` trajectories of length `horizon` under the *unmixed*
/// policy `ξ(θ)` — one shared set for all agents — and accumulates, per
/// trajectory,
///
/// `η_i = Σ_{k<H} γ^k · (φ_i(s_members(k), a_i(k))ᵀ w_i) · ∇_{θ_i} log ξ_i(a_i(k)|s_i(k))`,
///
/// then combines trajectories by the running average
/// `Δ ← (t/(t+1))·Δ + (1/(t+1))·η`, which equals the arithmetic mean of the
/// `η`s. With `t_samples = 0` the zero initial average is returned.
///
/// # Errors
///
/// [`ActorError::BadConfig`] if `weights`/`features` don't have one entry per
/// agent, a feature map is for the wrong agent, or a weight vector has the
/// wrong dimension.
pub fn grad_estimate<R: Rng + ?Sized>(
    game: &NetworkedGame,
    theta: &Theta,
    weights: &[Vec<f64>],
    features: &[FeatureMap],
    t_samples: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<AgentTable>, ActorError> {
    let n = game.n();
    if weights.len() != n || features.len() != n {
        return Err(ActorError::BadConfig(format!(
            "need one weight vector and one feature map per agent ({n}), got {} and {}",
            weights.len(),
            features.len()
        )));
    }
    for i in 0..n {
        if features[i].agent() != i {
            return Err(ActorError::BadConfig(format!(
                "feature map at position {i} is for agent {}",
                features[i].agent()
            )));
        }
        if weights[i].len() != features[i].dim() {
            return Err(ActorError::BadConfig(format!(
                "agent {i}: weight vector has length {} but the features have dimension {}",
                weights[i].len(),
                features[i].dim()
            )));
        }
    }

    let profile = profile_from_theta(theta);
    let gamma = game.gamma();
    let zero = Theta::zeros(game.state_sizes(), game.action_sizes());
    let mut delta = zero.tables.clone();
    let mut eta = zero.tables;
    let mut members_state: Vec<Vec<usize>> =
        features.iter().map(|fm| vec![0; fm.members().len()]).collect();

    for t in 0..t_samples {
        for table in &mut eta {
            table.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut q_max = vec![0.0_f64; n];
        let mut s = game.mu().sample(game.state_sizes(), rng);
        let mut disc = 1.0;
        for _ in 0..horizon {
            let a = profile.sample_joint(&s, rng);
            for i in 0..n {
                for (slot, &j) in members_state[i].iter_mut().zip(features[i].members()) {
                    *slot = s[j];
                }
                let q_hat = features[i].dot(&weights[i], &members_state[i], a[i]);
                q_max[i] = q_max[i].max(q_hat.abs());
                let score = score_row(profile.row(i, s[i]), a[i]);
                let row = eta[i].row_mut(s[i]);
                for (entry, sc) in row.iter_mut().zip(&score) {
                    *entry += disc * q_hat * sc;
                }
            }
            s = game.step(&s, &a, rng);
            disc *= gamma;
        }
        // Per-sample norm bound: ‖∇ log ξ_i‖ ≤ √2 on a softmax row, so
        // ‖η_i‖ ≤ √2 · max|φᵀw| · (1−γ^H)/(1−γ).
        #[cfg(debug_assertions)]
        for i in 0..n {
            let bound = std::f64::consts::SQRT_2
                * q_max[i]
                * (1.0 - gamma.powi(horizon as i32))
                / (1.0 - gamma);
            debug_assert!(
                frobenius(&eta[i]) <= bound + 1e-9,
                "per-trajectory update for agent {i} exceeds its norm bound: {} > {bound}",
                frobenius(&eta[i])
            );
        }
        let keep = t as f64 / (t as f64 + 1.0);
        let add = 1.0 / (t as f64 + 1.0);
        for (avg, sample) in delta.iter_mut().zip(&eta) {
            for (d, e) in avg.data.iter_mut().zip(&sample.data) {
                *d = keep * *d + add * *e;
            }
        }
    }
    Ok(delta)
}

/// The sample-based ascent loop.
///
/// Each of the `config.m` outer iterations (i) refines per-agent value
/// weights by temporal-difference learning on one shared ε-mixed trajectory
/// — the weights start at zero before the first iteration and persist across
/// iterations, so `config.critic.k` steps per iteration accumulate into a
/// tracking estimate of the current policy's values — (ii) estimates every
/// agent's gradient with [`grad_estimate`] from `config.t` unmixed rollouts,
/// and (iii) steps all agents simultaneously from the same parameter
/// snapshot. Critic and actor sampling use separate
/// counter-mode streams derived from `seed` ([`CRITIC_STREAM`],
/// [`ACTOR_STREAM`]), so the run is reproducible from `seed` alone.
///
/// With `config.m = 0` the initial parameters are returned unchanged.
///
/// # Errors
///
/// Configuration and shape problems surface as [`ActorError::BadConfig`] or
/// [`ActorError::Critic`]; non-finite critic weights or parameters abort with
/// [`ActorError::Diverged`] rather than being silently repaired.
pub fn localized_actor_critic(
    game: &NetworkedGame,
    config: &ActorConfig,
    mode: FeatureMode,
    theta0: &Theta,
    seed: u64,
    snapshot_every: usize,
) -> Result<(Theta, LearningLog), ActorError> {
    let warnings = config.validate(game)?;
    let features = (0..game.n())
        .map(|i| FeatureMap::new(game, i, config.kappa_c, mode))
        .collect::<Result<Vec<_>, _>>()?;
    let mut critic_rng = ChaCha8Rng::seed_from_u64(seed);
    critic_rng.set_stream(CRITIC_STREAM);
    let mut actor_rng = ChaCha8Rng::seed_from_u64(seed);
    actor_rng.set_stream(ACTOR_STREAM);

    let start = Instant::now();
    let mut theta = theta0.clone();
    let mut log = LearningLog::new(Some(seed), snapshot_every, theta0);
    log.warnings = warnings;
    // The value weights start at zero once and then persist: each outer
    // iteration resumes the TD recursion from the previous iteration's
    // weights, so the critic tracks the slowly-moving policy incrementally
    // rather than re-learning from scratch in `config.critic.k` steps.
    let mut carried: Option<Vec<Vec<f64>>> = None;
    for iteration in 1..=config.m {
        let weights = td_lambda_local_from(
            game,
            &theta,
            mode,
            &config.critic,
            carried.as_deref(),
            &mut critic_rng,
        )?;
        ensure_finite_weights(&weights, iteration)?;
        let direction =
            grad_estimate(game, &theta, &weights, &features, config.t, config.h, &mut actor_rng)?;
        log.grad_norms.push(direction.iter().map(frobenius).collect());
        theta.axpy(config.beta, &Theta { tables: direction });
        ensure_finite_theta(&theta, iteration)?;
        if should_snapshot(iteration, config.m, snapshot_every) {
            log.snapshots.push((iteration, theta.clone()));
            log.critic_weights.push((iteration, weights.clone()));
        }
        carried = Some(weights);
    }
    log.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok((theta, log))
}
