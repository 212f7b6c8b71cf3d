//! Numerical certification of localized potential structure.
//!
//! A potential descriptor claims that for every agent `i` and every
//! neighbor `j` within κ_G hops, a unilateral policy change by `j` moves
//! `Φ_i` by exactly the change in `J_j`. [`nmpg_check`] attacks that
//! identity with random profiles and random unilateral deviations,
//! evaluating both sides through independent routes (the game's own
//! objective solver vs. the descriptor's closed-form or series
//! potential).

use super::markov::objective;
use super::OracleError;
use crate::game::{NetworkedGame, NmpgDescriptor, PotentialFn};
use crate::policy::{softmax_probs, PolicyProfile, Theta};
use rand::Rng;
use serde::Serialize;

/// Absolute tolerance on `|ΔJ_j − ΔΦ_i|` for a sampled deviation.
const DEVIATION_TOL: f64 = 1e-8;
/// Series truncation for the congestion potential.
const POTENTIAL_TAIL: f64 = 1e-9;

/// Outcome of a randomized potential-structure check.
#[derive(Debug, Clone, Serialize)]
pub struct NmpgReport {
    /// Number of sampled (profile, deviation) pairs.
    pub samples: usize,
    /// Per-sample tolerance on the two-sided identity.
    pub tol: f64,
    /// Largest observed `|ΔJ_j − ΔΦ_i|`.
    pub max_violation: f64,
    /// The `(i, j)` pair attaining the largest violation.
    pub worst_pair: Option<(usize, usize)>,
    /// True when every sample stayed within tolerance.
    pub pass: bool,
}

/// Samples random softmax profiles and unilateral deviations by agents
/// `j ∈ N_i^{κ_G}`, and compares the objective change of `j` against the
/// potential change of `Φ_i` claimed by the descriptor.
///
/// # Errors
///
/// Propagates enumeration-size failures from the objective solver.
pub fn nmpg_check<R: Rng + ?Sized>(
    game: &NetworkedGame,
    desc: &NmpgDescriptor,
    samples: usize,
    rng: &mut R,
) -> Result<NmpgReport, OracleError> {
    let n = game.n();
    let mut max_violation = 0.0f64;
    let mut worst_pair = None;
    for _ in 0..samples {
        let theta = Theta::random(game.state_sizes(), game.action_sizes(), 1.0, rng);
        let profile = crate::policy::profile_from_theta(&theta);
        let i = rng.gen_range(0..n);
        let hood = game.graph().khop(i, desc.kappa_g);
        let j = hood[rng.gen_range(0..hood.len())];
        let fresh = Theta::random(
            &[game.state_sizes()[j]],
            &[game.action_sizes()[j]],
            1.0,
            rng,
        );
        let deviated = profile.with_agent_table(j, softmax_probs(&fresh.tables[0]));

        let dj = objective(game, &deviated, j)? - objective(game, &profile, j)?;
        let dphi = desc.potential(i, game, &deviated) - desc.potential(i, game, &profile);
        let violation = (dj - dphi).abs();
        if violation > max_violation {
            max_violation = violation;
            worst_pair = Some((i, j));
        }
    }
    Ok(NmpgReport {
        samples,
        tol: DEVIATION_TOL,
        max_violation,
        worst_pair,
        pass: max_violation <= DEVIATION_TOL,
    })
}

/// The discounted expected stage potential of a congestion game from the
/// deterministic start `s`:
///
/// ```text
/// Φ(ξ) = E_ξ Σ_t γ^t [ −ε̄·#travelling(t) − ½ Σ_e N_e(t)(N_e(t)+1) ],
/// ```
///
/// where `N_e` counts the agents traversing edge `e` (self-inclusive).
/// Evaluated by independent per-agent flows (series tail below 1e-9);
/// only the reward scaling applies — the additive reward shift cancels
/// from every deviation difference.
///
/// # Errors
///
/// [`OracleError::BadInput`] when the game has no congestion structure or
/// falls outside the independence class.
pub fn value_potential_congestion(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    s: &[usize],
) -> Result<f64, OracleError> {
    if s.len() != game.n() {
        return Err(OracleError::BadInput(format!(
            "start state has {} coordinates, expected {}",
            s.len(),
            game.n()
        )));
    }
    let starts: Vec<Vec<f64>> = s
        .iter()
        .zip(game.state_sizes())
        .map(|(&si, &c)| {
            let mut row = vec![0.0; c];
            row[si] = 1.0;
            row
        })
        .collect();
    super::marginal::potential_value_from(game, profile, &starts, POTENTIAL_TAIL)
}

/// A potential descriptor for a congestion game: every agent shares the
/// same global potential (κ_G = communication-graph diameter), evaluated
/// by [`value_potential_congestion`] from the game's deterministic start.
///
/// # Errors
///
/// [`OracleError::BadInput`] when the game has no congestion structure or
/// its start distribution is not a point mass.
pub fn congestion_descriptor(game: &NetworkedGame) -> Result<NmpgDescriptor, OracleError> {
    if game.congestion().is_none() {
        return Err(OracleError::BadInput("not a congestion game".into()));
    }
    let start = game
        .mu()
        .as_point(game.state_sizes())
        .ok_or_else(|| OracleError::BadInput("start distribution is not a point mass".into()))?;
    let kappa_g = game.graph().diameter();
    let potentials: Vec<PotentialFn> = (0..game.n())
        .map(|_| {
            let start = start.clone();
            let f: PotentialFn = Box::new(move |g: &NetworkedGame, p: &PolicyProfile| {
                value_potential_congestion(g, p, &start)
                    .expect("validated congestion game evaluates its own potential")
            });
            f
        })
        .collect();
    Ok(NmpgDescriptor::new(kappa_g, potentials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::chain::build_chain_example;
    use crate::game::congestion::{build_congestion_game, stage_potential, Commuter, TrafficNet};
    use crate::game::fixtures::two_commuter_game;
    use crate::game::index::MixedRadix;
    use crate::oracle::markov::GlobalView;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Brute-force discounted stage potential: builds the joint
    /// state–action chain and solves `Φ = p_0ᵀ(I − γP)⁻¹ φ` densely, as an
    /// independent cross-check of [`value_potential_congestion`].
    fn value_potential_bruteforce(
        game: &NetworkedGame,
        profile: &PolicyProfile,
        s0: &[usize],
    ) -> Result<f64, OracleError> {
        let view = GlobalView::new(game)?;
        let pair = view.pair_matrix(profile)?;
        let states = MixedRadix::new(game.state_sizes());
        let actions = MixedRadix::new(game.action_sizes());
        let (ns, na) = (states.len(), actions.len());
        let mut phi = DVector::zeros(ns * na);
        let mut s = vec![0usize; game.n()];
        let mut a = vec![0usize; game.n()];
        for si in 0..ns {
            states.decode_into(si, &mut s);
            for ai in 0..na {
                actions.decode_into(ai, &mut a);
                phi[si * na + ai] = stage_potential(game, &s, &a)?;
            }
        }
        let solved = (DMatrix::identity(ns * na, ns * na) - game.gamma() * pair)
            .lu()
            .solve(&phi)
            .ok_or(OracleError::RankDeficient("joint potential system"))?;
        let s0_idx = states.index(s0);
        let mut total = 0.0;
        for ai in 0..na {
            actions.decode_into(ai, &mut a);
            let w: f64 = (0..game.n()).map(|i| profile.prob(i, s0[i], a[i])).product();
            total += w * solved[s0_idx * na + ai];
        }
        Ok(total)
    }

    #[test]
    fn chain_descriptor_satisfies_the_deviation_identity() {
        let (game, desc) = build_chain_example(0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let report = nmpg_check(&game, &desc, 12, &mut rng).unwrap();
        assert!(report.pass, "max violation {:e}", report.max_violation);
    }

    #[test]
    fn zero_potential_fails_the_deviation_check() {
        let (game, _) = build_chain_example(0.9).unwrap();
        let zeros: Vec<PotentialFn> = (0..game.n())
            .map(|_| {
                let f: PotentialFn = Box::new(|_: &NetworkedGame, _: &PolicyProfile| 0.0);
                f
            })
            .collect();
        let broken = NmpgDescriptor::new(1, zeros);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let report = nmpg_check(&game, &broken, 60, &mut rng).unwrap();
        assert!(!report.pass);
        assert!(report.max_violation > 1e-3, "violation {:e}", report.max_violation);
    }

    #[test]
    fn congestion_descriptor_satisfies_the_deviation_identity() {
        let game = two_commuter_game(0.5, 0.9);
        let desc = congestion_descriptor(&game).unwrap();
        assert_eq!(desc.kappa_g, game.graph().diameter());
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let report = nmpg_check(&game, &desc, 10, &mut rng).unwrap();
        assert!(report.pass, "max violation {:e}", report.max_violation);
    }

    #[test]
    fn potential_series_matches_the_joint_chain_solve() {
        let game = two_commuter_game(0.5, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let theta = Theta::random(game.state_sizes(), game.action_sizes(), 1.0, &mut rng);
        let profile = crate::policy::profile_from_theta(&theta).epsilon_explore(0.1);
        let s0 = game.mu().as_point(game.state_sizes()).unwrap();
        let fast = value_potential_congestion(&game, &profile, &s0).unwrap();
        let brute = value_potential_bruteforce(&game, &profile, &s0).unwrap();
        assert_abs_diff_eq!(fast, brute, epsilon = 1e-7);
    }

    #[test]
    fn disjoint_routes_make_the_potential_the_welfare() {
        // Two commuters on edge-disjoint roads never share an edge, so
        // every per-edge count is 0 or 1 and the stage potential equals
        // the summed stage rewards pointwise; the discounted potential
        // must equal total welfare for any profile.
        let traffic = TrafficNet::from_labels(
            &["a0", "d0", "a1", "d1"],
            &[("a0", "d0"), ("a1", "d1")],
        )
        .unwrap();
        let d0 = traffic.node_id("d0").unwrap();
        let d1 = traffic.node_id("d1").unwrap();
        let game = build_congestion_game(
            traffic,
            vec![Commuter { start: 0, dest: d0 }, Commuter { start: 2, dest: d1 }],
            0.7,
            0.9,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let theta = Theta::random(game.state_sizes(), game.action_sizes(), 1.0, &mut rng);
        let profile = crate::policy::profile_from_theta(&theta).epsilon_explore(0.2);
        let s0 = game.mu().as_point(game.state_sizes()).unwrap();
        let phi = value_potential_congestion(&game, &profile, &s0).unwrap();
        let welfare: f64 =
            (0..game.n()).map(|i| objective(&game, &profile, i).unwrap()).sum();
        assert_abs_diff_eq!(phi, welfare, epsilon = 1e-8);
    }

    #[test]
    fn descriptor_requires_congestion_structure() {
        let (game, _) = build_chain_example(0.9).unwrap();
        assert!(matches!(
            congestion_descriptor(&game),
            Err(OracleError::BadInput(_))
        ));
    }
}
