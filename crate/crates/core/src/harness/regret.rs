//! Prefix-averaged equilibrium-gap metrics.
//!
//! A learning run produces, on its evaluation schedule, one non-negative
//! equilibrium gap per agent. Two summary curves compress the record:
//!
//! * per-agent averaged regret `(1/K)·Σ_k gap_i(m_k)`, maximized over
//!   agents for the global value ("averaged Nash regret");
//! * the average of the per-iteration worst gap
//!   `(1/K)·Σ_k max_i gap_i(m_k)` ("Nash regret").
//!
//! At every prefix they satisfy
//! `(1/n)·NashRegret ≤ AvgNashRegret ≤ NashRegret`: the maximum of
//! averages is at most the average of maxima, and the average of maxima is
//! at most the sum of the per-agent averages, hence at most `n` times
//! their maximum.

use serde::Serialize;

use super::HarnessError;

/// Per-iteration per-agent equilibrium gaps recorded on an evaluation
/// schedule, with prefix-regret queries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretSeries {
    n_agents: usize,
    iterations: Vec<usize>,
    gaps: Vec<Vec<f64>>,
}

impl RegretSeries {
    /// An empty series for `n_agents` agents.
    pub fn new(n_agents: usize) -> Self {
        RegretSeries { n_agents, iterations: Vec::new(), gaps: Vec::new() }
    }

    /// Appends the gaps evaluated at outer iteration `iteration`.
    ///
    /// # Errors
    ///
    /// [`HarnessError::Config`] if the row length is wrong, a gap is
    /// negative or non-finite, or `iteration` does not increase strictly.
    pub fn push(&mut self, iteration: usize, gaps: Vec<f64>) -> Result<(), HarnessError> {
        if gaps.len() != self.n_agents {
            return Err(HarnessError::Config(format!(
                "gap row has {} entries, expected {}",
                gaps.len(),
                self.n_agents
            )));
        }
        if let Some(bad) = gaps.iter().find(|g| !g.is_finite() || **g < 0.0) {
            return Err(HarnessError::Config(format!(
                "gaps must be finite and non-negative, got {bad}"
            )));
        }
        if let Some(&last) = self.iterations.last() {
            if iteration <= last {
                return Err(HarnessError::Config(format!(
                    "iterations must increase strictly: {iteration} after {last}"
                )));
            }
        }
        self.iterations.push(iteration);
        self.gaps.push(gaps);
        Ok(())
    }

    /// Number of recorded evaluation points.
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    /// Whether nothing has been recorded.
    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Number of agents per row.
    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// The recorded outer-iteration indices, strictly increasing.
    pub fn iterations(&self) -> &[usize] {
        &self.iterations
    }

    /// The gap row recorded at position `k` of the schedule.
    pub fn gaps_at(&self, k: usize) -> &[f64] {
        &self.gaps[k]
    }

    /// Number of recorded points with iteration ≤ `upto_iteration`.
    fn prefix_len(&self, upto_iteration: usize) -> usize {
        self.iterations.iter().take_while(|&&m| m <= upto_iteration).count()
    }

    /// Averaged regret over the prefix of evaluated points with iteration
    /// ≤ `upto_iteration`: for `Some(i)` the time-average of agent `i`'s
    /// gaps, for `None` the maximum of those averages over agents.
    ///
    /// # Errors
    ///
    /// [`HarnessError::EmptySeries`] if the prefix holds no points;
    /// [`HarnessError::Config`] for an agent index out of range.
    pub fn avg_nash_regret(
        &self,
        agent: Option<usize>,
        upto_iteration: usize,
    ) -> Result<f64, HarnessError> {
        let k = self.prefix_len(upto_iteration);
        if k == 0 {
            return Err(HarnessError::EmptySeries);
        }
        let mean_of = |i: usize| -> f64 {
            self.gaps[..k].iter().map(|row| row[i]).sum::<f64>() / k as f64
        };
        match agent {
            Some(i) if i >= self.n_agents => Err(HarnessError::Config(format!(
                "agent {i} out of range for {} agents",
                self.n_agents
            ))),
            Some(i) => Ok(mean_of(i)),
            None => Ok((0..self.n_agents).map(mean_of).fold(0.0, f64::max)),
        }
    }

    /// Average of the per-iteration worst gap over the prefix of evaluated
    /// points with iteration ≤ `upto_iteration`.
    ///
    /// # Errors
    ///
    /// [`HarnessError::EmptySeries`] if the prefix holds no points.
    pub fn nash_regret(&self, upto_iteration: usize) -> Result<f64, HarnessError> {
        let k = self.prefix_len(upto_iteration);
        if k == 0 {
            return Err(HarnessError::EmptySeries);
        }
        let sum: f64 = self.gaps[..k]
            .iter()
            .map(|row| row.iter().copied().fold(0.0, f64::max))
            .sum();
        Ok(sum / k as f64)
    }

    /// The last recorded iteration, if any.
    pub fn last_iteration(&self) -> Option<usize> {
        self.iterations.last().copied()
    }
}
