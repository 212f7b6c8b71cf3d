//! Localized softmax policies.
//!
//! Agent `i` acts on its own local state through a parameter table
//! `θ_i ∈ R^{|S_i|×|A_i|}` and the softmax rule
//!
//! ```text
//! ξ_i^θ(a | s_i) = exp(θ_{i,s_i,a}) / Σ_{a'} exp(θ_{i,s_i,a'}).
//! ```
//!
//! The score (log-policy gradient) with respect to row `s_i` is
//!
//! ```text
//! ∂ log ξ_i(a | s_i) / ∂θ_{i,s_i,a'} = 1{a' = a} − ξ_i(a' | s_i),
//! ```
//!
//! zero for every other row, and the policy derivative satisfies
//! `‖∇_{θ_i} ξ_i(a|s_i)‖₂ ≤ √2 · ξ_i(a|s_i)`.
//!
//! Exploration mixes each row with the uniform distribution,
//! `ξ̂ = (1−ε)·ξ + ε/|A_i|`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Numerical floor applied to softmax numerators before normalization, so
/// extreme parameter gaps cannot produce exact zeros or NaNs.
const SOFTMAX_FLOOR: f64 = 1e-300;

/// Errors raised by policy deserialization/validation.
#[derive(Debug, Error)]
pub enum PolicyError {
    /// A table's `data` length does not match `rows·cols`.
    #[error("agent {agent}: table data length {got} ≠ rows·cols = {expected}")]
    Shape { agent: usize, got: usize, expected: usize },
    /// A probability row does not sum to one (or has negative entries).
    #[error("agent {agent}: row {row} is not a distribution (sum {sum})")]
    NotADistribution { agent: usize, row: usize, sum: f64 },
    /// Table shapes do not match the game's state/action counts.
    #[error("profile has {got} agent tables, expected {expected}")]
    AgentCount { got: usize, expected: usize },
}

/// A dense row-major `rows × cols` table (one row per local state, one
/// column per action).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTable {
    /// Number of local states.
    pub rows: usize,
    /// Number of actions.
    pub cols: usize,
    /// Row-major data, `data[s·cols + a]`.
    pub data: Vec<f64>,
}

impl AgentTable {
    /// An all-zeros table.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Entry at `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    /// Mutable entry at `(row, col)`.
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.data[row * self.cols + col]
    }

    /// Row `row` as a slice of length `cols`.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Mutable row access.
    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    fn check_shape(&self, agent: usize) -> Result<(), PolicyError> {
        if self.data.len() != self.rows * self.cols {
            Err(PolicyError::Shape {
                agent,
                got: self.data.len(),
                expected: self.rows * self.cols,
            })
        } else {
            Ok(())
        }
    }
}

/// Softmax parameters for every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    /// One `|S_i| × |A_i|` parameter table per agent.
    pub tables: Vec<AgentTable>,
}

impl Theta {
    /// The all-zeros parameterization (uniform policies).
    pub fn zeros(state_sizes: &[usize], action_sizes: &[usize]) -> Self {
        let tables = state_sizes
            .iter()
            .zip(action_sizes)
            .map(|(&s, &a)| AgentTable::zeros(s, a))
            .collect();
        Self { tables }
    }

    /// Independent Gaussian entries `θ ∼ N(0, scale²)` (Box–Muller from the
    /// given stream).
    pub fn random<R: Rng + ?Sized>(
        state_sizes: &[usize],
        action_sizes: &[usize],
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut theta = Self::zeros(state_sizes, action_sizes);
        for table in &mut theta.tables {
            for v in &mut table.data {
                *v = scale * standard_normal(rng);
            }
        }
        theta
    }

    /// Number of agents.
    pub fn n(&self) -> usize {
        self.tables.len()
    }

    /// In-place AXPY update `θ ← θ + step·direction` (same shapes).
    pub fn axpy(&mut self, step: f64, direction: &Theta) {
        for (t, d) in self.tables.iter_mut().zip(&direction.tables) {
            for (x, g) in t.data.iter_mut().zip(&d.data) {
                *x += step * g;
            }
        }
    }

    /// Largest absolute parameter entry.
    pub fn max_abs(&self) -> f64 {
        self.tables
            .iter()
            .flat_map(|t| t.data.iter())
            .fold(0.0, |acc: f64, &v| acc.max(v.abs()))
    }
}

/// A full policy profile: one probability table per agent, rows summing to
/// one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyProfile {
    /// One `|S_i| × |A_i|` probability table per agent.
    pub tables: Vec<AgentTable>,
}

impl PolicyProfile {
    /// Uniform policies for the given shapes.
    pub fn uniform(state_sizes: &[usize], action_sizes: &[usize]) -> Self {
        let tables = state_sizes
            .iter()
            .zip(action_sizes)
            .map(|(&s, &a)| AgentTable {
                rows: s,
                cols: a,
                data: vec![1.0 / a as f64; s * a],
            })
            .collect();
        Self { tables }
    }

    /// `ξ_i(a_i | s_i)`.
    pub fn prob(&self, i: usize, s_i: usize, a_i: usize) -> f64 {
        self.tables[i].get(s_i, a_i)
    }

    /// The action distribution of agent `i` at local state `s_i`.
    pub fn row(&self, i: usize, s_i: usize) -> &[f64] {
        self.tables[i].row(s_i)
    }

    /// Number of agents.
    pub fn n(&self) -> usize {
        self.tables.len()
    }

    /// Joint probability of action profile `a` at global state `s`
    /// (product over agents).
    pub fn joint_prob(&self, s: &[usize], a: &[usize]) -> f64 {
        (0..self.n()).map(|i| self.prob(i, s[i], a[i])).product()
    }

    /// Samples one action per agent at global state `s`.
    pub fn sample_joint<R: Rng + ?Sized>(&self, s: &[usize], rng: &mut R) -> Vec<usize> {
        (0..self.n())
            .map(|i| crate::game::sample_index(rng, self.row(i, s[i])))
            .collect()
    }

    /// ε-exploration mixture `ξ̂ = (1−ε)·ξ + ε/|A_i|`, applied rowwise.
    pub fn epsilon_explore(&self, eps: f64) -> Self {
        assert!((0.0..=1.0).contains(&eps), "exploration rate outside [0, 1]");
        let tables = self
            .tables
            .iter()
            .map(|t| {
                let unif = eps / t.cols as f64;
                AgentTable {
                    rows: t.rows,
                    cols: t.cols,
                    data: t.data.iter().map(|&p| (1.0 - eps) * p + unif).collect(),
                }
            })
            .collect();
        Self { tables }
    }

    /// Replaces agent `i`'s table (used for unilateral deviations).
    pub fn with_agent_table(&self, i: usize, table: AgentTable) -> Self {
        let mut out = self.clone();
        out.tables[i] = table;
        out
    }

    /// Validates shapes and row sums against the given sizes.
    pub fn validate(&self, state_sizes: &[usize], action_sizes: &[usize]) -> Result<(), PolicyError> {
        if self.tables.len() != state_sizes.len() {
            return Err(PolicyError::AgentCount {
                got: self.tables.len(),
                expected: state_sizes.len(),
            });
        }
        for (i, t) in self.tables.iter().enumerate() {
            t.check_shape(i)?;
            if t.rows != state_sizes[i] || t.cols != action_sizes[i] {
                return Err(PolicyError::Shape {
                    agent: i,
                    got: t.rows * t.cols,
                    expected: state_sizes[i] * action_sizes[i],
                });
            }
            for row in 0..t.rows {
                let sum: f64 = t.row(row).iter().sum();
                if t.row(row).iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-12 {
                    return Err(PolicyError::NotADistribution { agent: i, row, sum });
                }
            }
        }
        Ok(())
    }
}

/// Row-wise softmax of a parameter table.
///
/// Each row subtracts its maximum before exponentiation; numerators are
/// floored at a tiny positive constant so rows remain valid distributions
/// for arbitrarily extreme parameters.
pub fn softmax_probs(theta_i: &AgentTable) -> AgentTable {
    let mut out = AgentTable::zeros(theta_i.rows, theta_i.cols);
    for s in 0..theta_i.rows {
        let row = theta_i.row(s);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let out_row = out.row_mut(s);
        let mut sum = 0.0;
        for (a, &v) in row.iter().enumerate() {
            let e = (v - max).exp().max(SOFTMAX_FLOOR);
            out_row[a] = e;
            sum += e;
        }
        for e in out_row.iter_mut() {
            *e /= sum;
        }
    }
    out
}

/// The softmax policy profile of a full parameter vector.
pub fn profile_from_theta(theta: &Theta) -> PolicyProfile {
    PolicyProfile { tables: theta.tables.iter().map(softmax_probs).collect() }
}

/// Score row of the softmax policy: the gradient of `log ξ_i(a_i | s_i)`
/// with respect to the parameter row `θ_{i, s_i, ·}`, namely
/// `e_{a_i} − ξ_i(· | s_i)`. All other parameter rows have zero gradient.
///
/// # Arguments
///
/// * `prob_row` — the action distribution `ξ_i(· | s_i)`.
/// * `a_i` — the action whose log-probability is differentiated.
pub fn score_row(prob_row: &[f64], a_i: usize) -> Vec<f64> {
    prob_row
        .iter()
        .enumerate()
        .map(|(a, &p)| if a == a_i { 1.0 - p } else { -p })
        .collect()
}

/// A standard normal draw via Box–Muller.
fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        if u1 > 0.0 {
            let u2: f64 = rng.gen();
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_matches_direct_computation() {
        let theta = AgentTable { rows: 1, cols: 3, data: vec![0.1, -0.4, 2.0] };
        let probs = softmax_probs(&theta);
        let z: f64 = theta.data.iter().map(|v| v.exp()).sum();
        for a in 0..3 {
            assert!((probs.get(0, a) - theta.data[a].exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_survives_extreme_parameters() {
        let theta = AgentTable { rows: 1, cols: 3, data: vec![1e8, -1e8, 0.0] };
        let probs = softmax_probs(&theta);
        let row = probs.row(0);
        assert!(row.iter().all(|p| p.is_finite() && *p > 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row[0] > 0.999_999);
    }

    #[test]
    fn zero_theta_is_uniform() {
        let theta = Theta::zeros(&[2, 3], &[2, 4]);
        let profile = profile_from_theta(&theta);
        assert_eq!(profile, PolicyProfile::uniform(&[2, 3], &[2, 4]));
        profile.validate(&[2, 3], &[2, 4]).unwrap();
    }

    #[test]
    fn epsilon_explore_mixes_with_uniform() {
        let theta = AgentTable { rows: 1, cols: 2, data: vec![3.0, 0.0] };
        let profile = PolicyProfile { tables: vec![softmax_probs(&theta)] };
        let mixed = profile.epsilon_explore(0.2);
        for a in 0..2 {
            let want = 0.8 * profile.prob(0, 0, a) + 0.1;
            assert!((mixed.prob(0, 0, a) - want).abs() < 1e-15);
        }
        // ε = 1 is exactly uniform; ε = 0 is the identity.
        assert_eq!(profile.epsilon_explore(0.0), profile);
        let unif = profile.epsilon_explore(1.0);
        assert!(unif.tables[0].data.iter().all(|&p| (p - 0.5).abs() < 1e-15));
    }

    #[test]
    fn score_row_sums_to_zero() {
        let probs = vec![0.2, 0.5, 0.3];
        let score = score_row(&probs, 1);
        assert!((score.iter().sum::<f64>()).abs() < 1e-15);
        assert!((score[1] - 0.5).abs() < 1e-15);
        assert!((score[0] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn sampling_follows_probabilities() {
        let profile = PolicyProfile {
            tables: vec![AgentTable { rows: 1, cols: 2, data: vec![0.25, 0.75] }],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let trials = 40_000;
        let ones: usize =
            (0..trials).filter(|_| profile.sample_joint(&[0], &mut rng)[0] == 1).count();
        let freq = ones as f64 / trials as f64;
        // 3σ band: σ = √(0.25·0.75/40000) ≈ 0.00217.
        assert!((freq - 0.75).abs() < 0.0065, "frequency {freq}");
    }

    #[test]
    fn random_theta_is_seed_deterministic() {
        let mut rng1 = ChaCha8Rng::seed_from_u64(9);
        let mut rng2 = ChaCha8Rng::seed_from_u64(9);
        let a = Theta::random(&[2, 2], &[3, 3], 0.5, &mut rng1);
        let b = Theta::random(&[2, 2], &[3, 3], 0.5, &mut rng2);
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let theta = Theta::random(&[2], &[3], 1.0, &mut rng);
        let json = serde_json::to_string(&theta).unwrap();
        let back: Theta = serde_json::from_str(&json).unwrap();
        assert_eq!(theta, back);
    }

    proptest! {
        /// Softmax rows are distributions and the finite-difference policy
        /// derivative matches ξ(a|s)·(1{a=a'} − ξ(a'|s)).
        #[test]
        fn softmax_derivative_identity(
            vals in proptest::collection::vec(-5.0f64..5.0, 3),
            a in 0usize..3,
            ap in 0usize..3,
        ) {
            let theta = AgentTable { rows: 1, cols: 3, data: vals.clone() };
            let probs = softmax_probs(&theta);
            prop_assert!((probs.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);

            let h = 1e-6;
            let mut bumped = theta.clone();
            *bumped.get_mut(0, ap) += h;
            let probs_b = softmax_probs(&bumped);
            let fd = (probs_b.get(0, a) - probs.get(0, a)) / h;
            let analytic = probs.get(0, a)
                * (if a == ap { 1.0 } else { 0.0 } - probs.get(0, ap));
            prop_assert!((fd - analytic).abs() < 1e-5);
        }

        /// ‖∇_{θ_i} ξ_i(a|s)‖₂ ≤ √2·ξ_i(a|s).
        #[test]
        fn policy_gradient_norm_bound(
            vals in proptest::collection::vec(-8.0f64..8.0, 4),
            a in 0usize..4,
        ) {
            let theta = AgentTable { rows: 1, cols: 4, data: vals };
            let probs = softmax_probs(&theta);
            let xi = probs.get(0, a);
            // Gradient of ξ (not log ξ): ξ(a)·score_row.
            let norm2: f64 = score_row(probs.row(0), a)
                .iter()
                .map(|g| (xi * g).powi(2))
                .sum();
            prop_assert!(norm2.sqrt() <= 2f64.sqrt() * xi + 1e-12);
        }
    }
}
