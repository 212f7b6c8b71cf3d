//! Measured counterparts of the constants appearing in the convergence
//! guarantees: visitation coverage, greedy-action mass, stationary floor,
//! feature excitation, and the three critic error terms (approximation,
//! reduction, end-to-end).
//!
//! All quantities are evaluated at the supplied parameter θ (suprema over
//! the whole parameter space are not computable); the critic-side terms
//! are evaluated under the ε-mixed behavior policy that the localized
//! critic actually samples from.

use super::markov::ExactSolution;
use super::subchain::{build_zchain, feature_matrix, projected_fixed_point, subchain_from_zchain};
use super::{OracleError, ARGMAX_TOL};
use crate::critic::{FeatureMap, FeatureMode};
use crate::game::index::{gather, MixedRadix};
use crate::game::NetworkedGame;
use crate::policy::{profile_from_theta, PolicyProfile, Theta};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Measured constants at one parameter point.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    /// Coverage constant `1 / min_s d^θ(s)` of the discounted visitation
    /// distribution (infinite when some state is unreached).
    pub d_const: f64,
    /// Smallest greedy-action mass `min_{i,s} ξ_i(argmax row | s)`, ties
    /// within [`ARGMAX_TOL`] summed.
    pub c_theta: f64,
    /// Smallest stationary mass over every agent's restricted chain under
    /// the ε-mixed policy.
    pub pi_min_estimate: f64,
    /// Smallest eigenvalue of the feature excitation `ΩᵀDΩ` over agents
    /// (`D` = restricted stationary law).
    pub lambda_min: f64,
    /// End-to-end limiting critic error
    /// `max_i sup_{s,a_i} |⟨φ, w*⟩ − Q̄_i(s, a_i)|` against the ε-mixed
    /// policy's exact averaged values.
    pub eps_critic_measured: f64,
    /// Sup-error of the stationary-weighted least-squares fit of the
    /// restricted values — an upper bound on the best-approximation error
    /// (exact 0 for tabular features).
    pub eps_app_measured: f64,
    /// Largest reduction error `sup_z |⟨φ, w*⟩ − C̃(z)|` of the projected
    /// fixed point against the restricted values.
    pub eps_red_measured: f64,
}

/// Evaluates every diagnostic at parameter `theta` with features built at
/// radius `kappa_c` and behavior mixing `eps`.
///
/// # Errors
///
/// Enumeration guards, [`OracleError::NonErgodic`] when the mixed chains
/// fail to mix (raise `eps`), and feature-construction failures.
pub fn diagnostics(
    game: &NetworkedGame,
    theta: &Theta,
    mode: FeatureMode,
    kappa_c: usize,
    eps: f64,
) -> Result<Diagnostics, OracleError> {
    let profile = profile_from_theta(theta);
    let sol = ExactSolution::solve(game, &profile)?;
    let d_min = sol.d.iter().copied().fold(f64::INFINITY, f64::min);
    let d_const = if d_min > 0.0 { 1.0 / d_min } else { f64::INFINITY };

    let mut c_theta = f64::INFINITY;
    for i in 0..game.n() {
        for s_i in 0..game.state_sizes()[i] {
            let row = profile.row(i, s_i);
            let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mass: f64 = row.iter().filter(|&&p| p >= top - ARGMAX_TOL).sum();
            c_theta = c_theta.min(mass);
        }
    }

    let mixed = profile.epsilon_explore(eps);
    let mixed_sol = ExactSolution::solve(game, &mixed)?;
    let states = MixedRadix::new(game.state_sizes());

    let mut pi_min_estimate = f64::INFINITY;
    let mut lambda_min = f64::INFINITY;
    let mut eps_critic_measured = 0.0f64;
    let mut eps_app_measured = 0.0f64;
    let mut eps_red_measured = 0.0f64;
    let mut digits = vec![0usize; game.n()];
    let mut s_members = Vec::new();
    for i in 0..game.n() {
        let z = build_zchain(game, &mixed, i)?;
        let sub = subchain_from_zchain(game, &z, kappa_c)?;
        pi_min_estimate =
            pi_min_estimate.min(sub.pi_bar.iter().copied().fold(f64::INFINITY, f64::min));

        let fm = FeatureMap::new(game, i, kappa_c, mode)
            .map_err(|e| OracleError::BadInput(e.to_string()))?;
        let omega = feature_matrix(game, &sub, &fm)?;
        let d_omega =
            DMatrix::from_fn(omega.nrows(), omega.ncols(), |r, c| sub.pi_bar[r] * omega[(r, c)]);
        let gram = omega.tr_mul(&d_omega);
        let eigen = gram.symmetric_eigen();
        lambda_min =
            lambda_min.min(eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min));

        // Weighted least squares against the restricted values (rank-safe
        // via SVD so rank-deficient feature sets still get their bound).
        let sqrt_d = DMatrix::from_fn(omega.nrows(), omega.ncols(), |r, c| {
            sub.pi_bar[r].sqrt() * omega[(r, c)]
        });
        let target = DVector::from_fn(omega.nrows(), |r, _| sub.pi_bar[r].sqrt() * sub.value[r]);
        let w_ls = sqrt_d
            .svd(true, true)
            .solve(&target, 1e-13)
            .map_err(|e| OracleError::BadInput(format!("least-squares fit failed: {e}")))?;
        let fit = &omega * &w_ls;
        for (f, v) in fit.iter().zip(&sub.value) {
            eps_app_measured = eps_app_measured.max((f - v).abs());
        }

        // Rank-safe solve: block one-hot feature sets are structurally
        // rank deficient but still have unique fitted values on the span.
        let td = projected_fixed_point(&sub.kernel, &sub.pi_bar, &sub.r_tilde, sub.gamma, &omega)?;
        eps_red_measured = eps_red_measured.max(td.eps_red);

        let asz = game.action_sizes()[i];
        for s_idx in 0..states.len() {
            states.decode_into(s_idx, &mut digits);
            gather(&digits, &sub.members, &mut s_members);
            for a_i in 0..asz {
                let fitted = fm.dot(&td.w, &s_members, a_i);
                let exact = mixed_sol.q_bar_at(i, &digits, a_i);
                eps_critic_measured = eps_critic_measured.max((fitted - exact).abs());
            }
        }
    }

    Ok(Diagnostics {
        d_const,
        c_theta,
        pi_min_estimate,
        lambda_min,
        eps_critic_measured,
        eps_app_measured,
        eps_red_measured,
    })
}

/// Sup-error of an arbitrary critic weight vector against the exact
/// policy-averaged values: `sup_{s, a_i} |⟨φ(s_N, a_i), w⟩ − Q̄_i(s, a_i)|`
/// under `profile`.
///
/// # Errors
///
/// Enumeration guards and shape mismatches.
pub fn critic_error(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    features: &FeatureMap,
    w: &[f64],
) -> Result<f64, OracleError> {
    if w.len() != features.dim() {
        return Err(OracleError::BadInput(format!(
            "weight vector has {} entries, features have {}",
            w.len(),
            features.dim()
        )));
    }
    let sol = ExactSolution::solve(game, profile)?;
    let i = features.agent();
    let states = MixedRadix::new(game.state_sizes());
    let mut digits = vec![0usize; game.n()];
    let mut s_members = Vec::new();
    let mut sup = 0.0f64;
    for s_idx in 0..states.len() {
        states.decode_into(s_idx, &mut digits);
        gather(&digits, features.members(), &mut s_members);
        for a_i in 0..game.action_sizes()[i] {
            let fitted = features.dot(w, &s_members, a_i);
            let exact = sol.q_bar_at(i, &digits, a_i);
            sup = sup.max((fitted - exact).abs());
        }
    }
    Ok(sup)
}
