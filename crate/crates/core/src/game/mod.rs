//! Networked Markov games with factored transitions and local rewards.
//!
//! A game couples `n` agents on an undirected communication graph. Agent
//! `i` owns a local state space `S_i` and action space `A_i`; the global
//! state is `s = (s_1, …, s_n)`. Dynamics and rewards are local:
//!
//! * transitions factor per agent,
//!   `P(s' | s, a) = ∏_i P_i(s_i' | s_{D_i}, a_i)`, where the dependency
//!   set `D_i` is contained in the 1-hop neighborhood `N_i`;
//! * rewards are κ_r-local: `r_i(s, a) = r_i(s_{N_i^{κ_r}}, a_{N_i^{κ_r}})`.
//!
//! Each agent's policy conditions only on its own local state (see
//! [`crate::policy`]); the objective is the discounted return
//! `J_i = E_{s(0)∼μ}[Σ_t γ^t r_i(t)]`.
//!
//! ## Dense table layout
//!
//! All tables are dense arrays in mixed-radix layout over their declared
//! dependency sets in ascending agent order, last coordinate fastest
//! ([`index::MixedRadix`]). Storing tables over *dependency subsets* of the
//! neighborhoods (instead of the full neighborhoods) is an exact
//! representation — a function constant in a dropped coordinate is the same
//! function — and keeps large instances (e.g. the 12-commuter congestion
//! benchmark) representable.
//!
//! ## Submodules
//!
//! * [`index`] — mixed-radix codecs;
//! * [`congestion`] — commuter games on a road network (constructors, the
//!   stage potential, the induced communication graph);
//! * [`chain`] — a 4-agent chain game with closed-form objective, a
//!   1-local-potential game that is not a global potential game;
//! * [`spec`] — JSON descriptions of games;
//! * [`fixtures`] — small instances shared by tests and self-check suites.

pub mod chain;
pub mod congestion;
pub mod fixtures;
pub mod index;
pub mod spec;

use crate::netgraph::Graph;
use index::MixedRadix;
use rand::Rng;
use thiserror::Error;

/// Maximum support size materialized by [`NetworkedGame::global_kernel`].
pub const GLOBAL_KERNEL_GUARD: usize = 1_000_000;

/// Tolerance for "sums to one" validation of distributions.
const DIST_TOL: f64 = 1e-12;

/// Errors raised by game construction and evaluation.
#[derive(Debug, Error)]
pub enum GameError {
    /// A per-agent list has the wrong length.
    #[error("{what} has length {got}, expected {expected}")]
    Length { what: &'static str, got: usize, expected: usize },
    /// A declared dependency set is not sorted/unique or leaves the
    /// permitted neighborhood.
    #[error("agent {agent}: dependency set {deps:?} is not a sorted subset of its {hops}-hop neighborhood")]
    BadDeps { agent: usize, deps: Vec<usize>, hops: usize },
    /// A dense table has the wrong number of entries.
    #[error("agent {agent}: {what} table has {got} entries, expected {expected}")]
    TableShape { agent: usize, what: &'static str, got: usize, expected: usize },
    /// A row that must be a probability distribution is not.
    #[error("agent {agent}: {what} row {row} is not a distribution (sum {sum})")]
    NotADistribution { agent: usize, what: &'static str, row: usize, sum: f64 },
    /// The initial distribution is malformed.
    #[error("initial distribution invalid: {0}")]
    BadMu(String),
    /// The discount factor must lie in `[0, 1)`.
    #[error("discount factor {0} outside [0, 1)")]
    BadGamma(f64),
    /// A joint enumeration exceeded its size guard.
    #[error(transparent)]
    Guard(#[from] index::EnumerationGuard),
    /// A label lookup failed.
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    /// Congestion-game construction failed.
    #[error("congestion game: {0}")]
    Congestion(String),
    /// The requested operation needs congestion structure the game lacks.
    #[error("operation requires a congestion-structured game")]
    NotCongestion,
}

/// Initial distribution μ over global states.
///
/// The product form stores one distribution per agent (the global density
/// is their product); the dense form enumerates global states in canonical
/// mixed-radix order and is only usable on small instances.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mu {
    /// Independent per-agent initial distributions.
    Product(Vec<Vec<f64>>),
    /// A dense joint distribution over global states.
    Dense(Vec<f64>),
}

impl Mu {
    /// A product of point masses at the given local states.
    pub fn point(start: &[usize], state_sizes: &[usize]) -> Self {
        let per_agent = start
            .iter()
            .zip(state_sizes)
            .map(|(&s, &c)| {
                let mut row = vec![0.0; c];
                row[s] = 1.0;
                row
            })
            .collect();
        Mu::Product(per_agent)
    }

    fn validate(&self, state_sizes: &[usize]) -> Result<(), GameError> {
        match self {
            Mu::Product(rows) => {
                if rows.len() != state_sizes.len() {
                    return Err(GameError::BadMu(format!(
                        "{} per-agent rows for {} agents",
                        rows.len(),
                        state_sizes.len()
                    )));
                }
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != state_sizes[i] {
                        return Err(GameError::BadMu(format!(
                            "agent {i}: row length {} for {} local states",
                            row.len(),
                            state_sizes[i]
                        )));
                    }
                    check_distribution(row)
                        .map_err(|sum| GameError::BadMu(format!("agent {i}: row sums to {sum}")))?;
                }
                Ok(())
            }
            Mu::Dense(vals) => {
                let total: usize = state_sizes.iter().product();
                if vals.len() != total {
                    return Err(GameError::BadMu(format!(
                        "dense length {} for {} global states",
                        vals.len(),
                        total
                    )));
                }
                check_distribution(vals)
                    .map_err(|sum| GameError::BadMu(format!("dense vector sums to {sum}")))?;
                Ok(())
            }
        }
    }

    /// Samples an initial global state.
    pub fn sample<R: Rng + ?Sized>(&self, state_sizes: &[usize], rng: &mut R) -> Vec<usize> {
        match self {
            Mu::Product(rows) => rows.iter().map(|row| sample_index(rng, row)).collect(),
            Mu::Dense(vals) => {
                let mr = MixedRadix::new(state_sizes);
                mr.decode(sample_index(rng, vals))
            }
        }
    }

    /// When the distribution is a point mass, returns the deterministic
    /// start state; `None` otherwise.
    pub fn as_point(&self, state_sizes: &[usize]) -> Option<Vec<usize>> {
        let single = |row: &[f64]| {
            let mut hit = None;
            for (k, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    if hit.is_some() || (p - 1.0).abs() > 1e-12 {
                        return None;
                    }
                    hit = Some(k);
                }
            }
            hit
        };
        match self {
            Mu::Product(rows) => rows.iter().map(|row| single(row)).collect(),
            Mu::Dense(vals) => single(vals).map(|idx| MixedRadix::new(state_sizes).decode(idx)),
        }
    }

    /// Probability mass of a specific global state.
    pub fn density(&self, s: &[usize], state_sizes: &[usize]) -> f64 {
        match self {
            Mu::Product(rows) => s.iter().zip(rows).map(|(&si, row)| row[si]).product(),
            Mu::Dense(vals) => {
                let mr = MixedRadix::new(state_sizes);
                vals[mr.index(s)]
            }
        }
    }
}

/// One agent's factored transition kernel `P_i(s_i' | s_{D_i}, a_i)`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LocalKernel {
    /// Sorted agent indices whose local states the kernel reads
    /// (a subset of the owner's 1-hop neighborhood; need not contain the
    /// owner, e.g. an agent that copies a neighbor's state).
    pub deps: Vec<usize>,
    /// Dense rows: for each `(s_{D_i}, a_i)` in mixed radix (dependency
    /// states ascending, own action fastest), a distribution over `s_i'`.
    pub table: Vec<f64>,
}

/// One agent's reward rule.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardRule {
    /// A dense table over declared state/action dependency sets (each a
    /// sorted subset of the κ_r-hop neighborhood), laid out as
    /// `(s_{deps} ⊕ a_{deps})` in mixed radix, actions fastest.
    Table { state_deps: Vec<usize>, action_deps: Vec<usize>, table: Vec<f64> },
    /// Computed from the game's congestion structure (time cost plus edge
    /// congestion); see [`congestion`].
    Congestion,
}

/// A networked Markov game. Construct via [`NetworkedGame::new`] or the
/// [`congestion`]/[`chain`]/[`spec`] constructors; fields are validated once
/// and read-only afterwards.
#[derive(Debug, Clone)]
pub struct NetworkedGame {
    graph: Graph,
    state_sizes: Vec<usize>,
    action_sizes: Vec<usize>,
    kappa_r: usize,
    gamma: f64,
    mu: Mu,
    kernels: Vec<LocalKernel>,
    rewards: Vec<RewardRule>,
    /// Raw reward range `(lo, hi)` before the affine map.
    reward_range: (f64, f64),
    /// Affine post-map `r ↦ scale·r + shift` applied to every reward.
    reward_affine: (f64, f64),
    /// Present for congestion-built games; enables the stage potential,
    /// marginal evaluation, and structure-aware rewards.
    congestion: Option<congestion::CongestionStructure>,
    /// Optional per-agent local-state labels (for readable artifacts).
    state_labels: Option<Vec<Vec<String>>>,
}

impl NetworkedGame {
    /// Validates and assembles a game from parts.
    ///
    /// # Arguments
    ///
    /// * `graph` — communication graph on the agents.
    /// * `state_sizes`, `action_sizes` — per-agent cardinalities (all ≥ 1).
    /// * `kappa_r` — reward locality radius.
    /// * `gamma` — discount factor in `[0, 1)`.
    /// * `mu` — initial distribution.
    /// * `kernels` — factored transition kernels, dependency sets within
    ///   1 hop.
    /// * `rewards` — per-agent reward rules, dependency sets within
    ///   `kappa_r` hops.
    /// * `reward_range` — bounds `(lo, hi)` with `lo ≤ r_i ≤ hi` pointwise.
    pub fn new(
        graph: Graph,
        state_sizes: Vec<usize>,
        action_sizes: Vec<usize>,
        kappa_r: usize,
        gamma: f64,
        mu: Mu,
        kernels: Vec<LocalKernel>,
        rewards: Vec<RewardRule>,
        reward_range: (f64, f64),
    ) -> Result<Self, GameError> {
        let n = graph.n();
        let check_len = |what: &'static str, got: usize| {
            if got != n {
                Err(GameError::Length { what, got, expected: n })
            } else {
                Ok(())
            }
        };
        check_len("state_sizes", state_sizes.len())?;
        check_len("action_sizes", action_sizes.len())?;
        check_len("kernels", kernels.len())?;
        check_len("rewards", rewards.len())?;
        if !(0.0..1.0).contains(&gamma) {
            return Err(GameError::BadGamma(gamma));
        }
        assert!(
            state_sizes.iter().chain(&action_sizes).all(|&c| c >= 1),
            "cardinalities must be positive"
        );
        mu.validate(&state_sizes)?;

        let game = Self {
            graph,
            state_sizes,
            action_sizes,
            kappa_r,
            gamma,
            mu,
            kernels,
            rewards,
            reward_range,
            reward_affine: (1.0, 0.0),
            congestion: None,
            state_labels: None,
        };
        game.validate_kernels()?;
        game.validate_rewards()?;
        Ok(game)
    }

    fn validate_kernels(&self) -> Result<(), GameError> {
        for (i, kernel) in self.kernels.iter().enumerate() {
            let hood = self.graph.khop(i, 1);
            if !is_sorted_subset(&kernel.deps, &hood) {
                return Err(GameError::BadDeps { agent: i, deps: kernel.deps.clone(), hops: 1 });
            }
            let rows = self.kernel_radix(i).len() * self.action_sizes[i];
            let expected = rows * self.state_sizes[i];
            if kernel.table.len() != expected {
                return Err(GameError::TableShape {
                    agent: i,
                    what: "kernel",
                    got: kernel.table.len(),
                    expected,
                });
            }
            for row in 0..rows {
                let slice = &kernel.table[row * self.state_sizes[i]..(row + 1) * self.state_sizes[i]];
                check_distribution(slice).map_err(|sum| GameError::NotADistribution {
                    agent: i,
                    what: "kernel",
                    row,
                    sum,
                })?;
            }
        }
        Ok(())
    }

    fn validate_rewards(&self) -> Result<(), GameError> {
        for (i, rule) in self.rewards.iter().enumerate() {
            match rule {
                RewardRule::Table { state_deps, action_deps, table } => {
                    let hood = self.graph.khop(i, self.kappa_r);
                    if !is_sorted_subset(state_deps, &hood) {
                        return Err(GameError::BadDeps {
                            agent: i,
                            deps: state_deps.clone(),
                            hops: self.kappa_r,
                        });
                    }
                    if !is_sorted_subset(action_deps, &hood) {
                        return Err(GameError::BadDeps {
                            agent: i,
                            deps: action_deps.clone(),
                            hops: self.kappa_r,
                        });
                    }
                    let expected: usize = state_deps
                        .iter()
                        .map(|&j| self.state_sizes[j])
                        .chain(action_deps.iter().map(|&j| self.action_sizes[j]))
                        .product();
                    if table.len() != expected {
                        return Err(GameError::TableShape {
                            agent: i,
                            what: "reward",
                            got: table.len(),
                            expected,
                        });
                    }
                }
                RewardRule::Congestion => {
                    if self.congestion.is_none() {
                        return Err(GameError::NotCongestion);
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of agents.
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// The communication graph.
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Per-agent local state counts.
    pub fn state_sizes(&self) -> &[usize] {
        &self.state_sizes
    }

    /// Per-agent action counts.
    pub fn action_sizes(&self) -> &[usize] {
        &self.action_sizes
    }

    /// Reward locality radius κ_r.
    pub fn kappa_r(&self) -> usize {
        self.kappa_r
    }

    /// Discount factor γ.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Initial state distribution.
    pub fn mu(&self) -> &Mu {
        &self.mu
    }

    /// Agent `i`'s factored kernel.
    pub fn kernel(&self, i: usize) -> &LocalKernel {
        &self.kernels[i]
    }

    /// Agent `i`'s reward rule.
    pub fn reward_rule(&self, i: usize) -> &RewardRule {
        &self.rewards[i]
    }

    /// Effective reward bounds `(lo, hi)` after the affine map.
    pub fn reward_range(&self) -> (f64, f64) {
        let (scale, shift) = self.reward_affine;
        let (lo, hi) = self.reward_range;
        let (a, b) = (scale * lo + shift, scale * hi + shift);
        (a.min(b), a.max(b))
    }

    /// The affine reward post-map `(scale, shift)`.
    pub fn reward_affine(&self) -> (f64, f64) {
        self.reward_affine
    }

    /// Congestion structure, when this game was built by
    /// [`congestion::build_congestion_game`].
    pub fn congestion(&self) -> Option<&congestion::CongestionStructure> {
        self.congestion.as_ref()
    }

    /// Per-agent local-state labels, when available.
    pub fn state_labels(&self) -> Option<&[Vec<String>]> {
        self.state_labels.as_deref()
    }

    pub(crate) fn set_congestion(&mut self, cong: congestion::CongestionStructure) {
        self.congestion = Some(cong);
    }

    pub(crate) fn set_state_labels(&mut self, labels: Vec<Vec<String>>) {
        self.state_labels = Some(labels);
    }

    /// A copy of the game whose rewards are affinely rescaled to `[0, 1]`
    /// (the range used by the theoretical step sizes and decay bounds).
    pub fn rescaled_unit(&self) -> Self {
        let mut out = self.clone();
        let (lo, hi) = self.reward_range();
        if hi > lo {
            // Compose r ↦ (affine(r) − lo)/(hi − lo) with the existing map.
            let scale = 1.0 / (hi - lo);
            let (s0, t0) = self.reward_affine;
            out.reward_affine = (s0 * scale, (t0 - lo) * scale);
        } else {
            // Degenerate constant rewards: shift onto 0.
            out.reward_affine = (0.0, 0.0);
        }
        out
    }

    /// Mixed radix over the dependency states of agent `i`'s kernel.
    fn kernel_radix(&self, i: usize) -> MixedRadix {
        let sizes: Vec<usize> =
            self.kernels[i].deps.iter().map(|&j| self.state_sizes[j]).collect();
        MixedRadix::new(&sizes)
    }

    /// The next-state distribution `P_i(· | s_{D_i}, a_i)` for agent `i`,
    /// given the **global** state `s`.
    pub fn next_local_dist(&self, i: usize, s: &[usize], a_i: usize) -> &[f64] {
        let kernel = &self.kernels[i];
        let mut row = 0usize;
        for &j in &kernel.deps {
            row = row * self.state_sizes[j] + s[j];
        }
        row = row * self.action_sizes[i] + a_i;
        let c = self.state_sizes[i];
        &kernel.table[row * c..(row + 1) * c]
    }

    /// Samples `s' ∼ P(· | s, a)` by drawing each agent's next local state
    /// from its factored kernel.
    pub fn step<R: Rng + ?Sized>(&self, s: &[usize], a: &[usize], rng: &mut R) -> Vec<usize> {
        (0..self.n()).map(|i| sample_index(rng, self.next_local_dist(i, s, a[i]))).collect()
    }

    /// The full next-state distribution `P(· | s, a)` as a sparse list of
    /// `(s', probability)` pairs over the product of per-agent supports.
    ///
    /// # Errors
    ///
    /// Fails with [`GameError::Guard`] when the joint support would exceed
    /// [`GLOBAL_KERNEL_GUARD`] entries.
    pub fn global_kernel(
        &self,
        s: &[usize],
        a: &[usize],
    ) -> Result<Vec<(Vec<usize>, f64)>, GameError> {
        let supports: Vec<Vec<(usize, f64)>> = (0..self.n())
            .map(|i| {
                self.next_local_dist(i, s, a[i])
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(k, &p)| (k, p))
                    .collect()
            })
            .collect();
        let support_sizes: Vec<usize> = supports.iter().map(Vec::len).collect();
        let radix = MixedRadix::checked_new(&support_sizes, GLOBAL_KERNEL_GUARD)?;
        let mut out = Vec::with_capacity(radix.len());
        let mut digits = vec![0usize; self.n()];
        for idx in 0..radix.len() {
            radix.decode_into(idx, &mut digits);
            let mut state = Vec::with_capacity(self.n());
            let mut prob = 1.0;
            for (i, &k) in digits.iter().enumerate() {
                let (local, p) = supports[i][k];
                state.push(local);
                prob *= p;
            }
            out.push((state, prob));
        }
        Ok(out)
    }

    /// Agent `i`'s reward `r_i(s, a)` (after the affine post-map).
    pub fn reward(&self, i: usize, s: &[usize], a: &[usize]) -> f64 {
        let raw = match &self.rewards[i] {
            RewardRule::Table { state_deps, action_deps, table } => {
                let mut idx = 0usize;
                for &j in state_deps {
                    idx = idx * self.state_sizes[j] + s[j];
                }
                for &j in action_deps {
                    idx = idx * self.action_sizes[j] + a[j];
                }
                table[idx]
            }
            RewardRule::Congestion => {
                let cong = self.congestion.as_ref().expect("validated at construction");
                cong.reward(i, s, a)
            }
        };
        let (scale, shift) = self.reward_affine;
        scale * raw + shift
    }

    /// Rewards of all agents at `(s, a)`.
    pub fn rewards_all(&self, s: &[usize], a: &[usize]) -> Vec<f64> {
        (0..self.n()).map(|i| self.reward(i, s, a)).collect()
    }
}

/// Evaluates one agent's local potential at a policy profile.
pub type PotentialFn = Box<dyn Fn(&NetworkedGame, &crate::policy::PolicyProfile) -> f64 + Send + Sync>;

/// A κ-local potential structure for a networked game: per-agent potential
/// functions `Φ_i` over policy profiles such that for every agent `i`,
/// every `j ∈ N_i^{κ_G}`, and every unilateral deviation `ξ_j → ξ_j'`,
///
/// ```text
/// J_j(ξ_j', ξ_{−j}) − J_j(ξ_j, ξ_{−j}) = Φ_i(ξ_j', ξ_{−j}) − Φ_i(ξ_j, ξ_{−j}).
/// ```
///
/// A globally-potential game is the special case where all `Φ_i` coincide
/// (any κ_G). Verified numerically by [`crate::oracle::nmpg_check`].
pub struct NmpgDescriptor {
    /// Locality radius κ_G of the potential structure.
    pub kappa_g: usize,
    potentials: Vec<PotentialFn>,
}

impl NmpgDescriptor {
    /// Assembles a descriptor from per-agent potential evaluators.
    pub fn new(kappa_g: usize, potentials: Vec<PotentialFn>) -> Self {
        Self { kappa_g, potentials }
    }

    /// Number of agents covered.
    pub fn n(&self) -> usize {
        self.potentials.len()
    }

    /// Evaluates `Φ_i` at a profile.
    pub fn potential(
        &self,
        i: usize,
        game: &NetworkedGame,
        profile: &crate::policy::PolicyProfile,
    ) -> f64 {
        (self.potentials[i])(game, profile)
    }
}

impl std::fmt::Debug for NmpgDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NmpgDescriptor")
            .field("kappa_g", &self.kappa_g)
            .field("agents", &self.potentials.len())
            .finish()
    }
}

/// Samples an index from an unnormalized-tolerant probability row.
pub(crate) fn sample_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = k;
            if u < acc {
                return k;
            }
        }
    }
    last_positive
}

/// Returns `Ok(())` when `row` is entrywise ≥ 0 and sums to 1 ± 1e-12.
fn check_distribution(row: &[f64]) -> Result<(), f64> {
    let sum: f64 = row.iter().sum();
    if row.iter().all(|&p| p >= 0.0) && (sum - 1.0).abs() <= DIST_TOL {
        Ok(())
    } else {
        Err(sum)
    }
}

/// True when `sub` is sorted, duplicate-free, and a subset of the sorted
/// slice `superset`.
fn is_sorted_subset(sub: &[usize], superset: &[usize]) -> bool {
    sub.windows(2).all(|w| w[0] < w[1]) && sub.iter().all(|x| superset.contains(x))
}
