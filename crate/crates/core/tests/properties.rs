//! Randomized invariants over the public API: graph neighborhoods, policy
//! normalization, exact-solver identities, gap non-negativity and purity,
//! regret inequalities, step-size schedules, and serialization round-trips.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netmarl::actor::{default_beta, BetaMode};
use netmarl::game::fixtures::{random_game, two_commuter_game};
use netmarl::game::congestion::stage_potential;
use netmarl::harness::{parse_seeds, RegretSeries};
use netmarl::netgraph::Graph;
use netmarl::oracle::{ne_gap, objective, BrMode, ExactSolution};
use netmarl::policy::{profile_from_theta, score_row, Theta};

/// A connected random graph: a path plus extra random chords.
fn arb_graph() -> impl Strategy<Value = Graph> {
    (2usize..7).prop_flat_map(|n| {
        let chords = proptest::collection::vec((0..n, 0..n), 0..4);
        chords.prop_map(move |extra| {
            let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
            for (a, b) in extra {
                if a != b {
                    edges.push((a.min(b), a.max(b)));
                }
            }
            edges.sort_unstable();
            edges.dedup();
            Graph::from_edges(n, &edges).expect("path base keeps the graph connected")
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn neighborhoods_grow_monotonically_and_cover_the_graph(g in arb_graph()) {
        let diam = g.diameter();
        for i in 0..g.n() {
            let mut prev: Vec<usize> = vec![i];
            prop_assert_eq!(g.khop(i, 0), prev.clone());
            for kappa in 1..=diam {
                let cur = g.khop(i, kappa);
                prop_assert!(prev.iter().all(|j| cur.contains(j)), "k-hop sets must be nested");
                prop_assert!(cur.windows(2).all(|w| w[0] < w[1]), "members must be sorted");
                prev = cur;
            }
            prop_assert_eq!(prev.len(), g.n(), "the diameter window must cover every agent");
        }
    }

    #[test]
    fn distances_are_symmetric_and_triangular(g in arb_graph()) {
        for i in 0..g.n() {
            prop_assert_eq!(g.dist(i, i), Some(0));
            for j in 0..g.n() {
                prop_assert_eq!(g.dist(i, j), g.dist(j, i));
                for k in 0..g.n() {
                    let (dij, djk, dik) = (g.dist(i, j), g.dist(j, k), g.dist(i, k));
                    if let (Some(a), Some(b), Some(c)) = (dij, djk, dik) {
                        prop_assert!(c <= a + b);
                    }
                }
            }
        }
    }

    #[test]
    fn softmax_profiles_are_row_stochastic_and_scores_integrate_to_zero(
        seed in any::<u64>(),
        scale in 0.0f64..5.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = Theta::random(&[3, 2, 4], &[2, 3, 2], scale, &mut rng);
        let profile = profile_from_theta(&theta);
        for i in 0..3 {
            for s in 0..[3, 2, 4][i] {
                let row = profile.row(i, s);
                let sum: f64 = row.iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
                prop_assert!(row.iter().all(|&p| p > 0.0));
                let scores: Vec<Vec<f64>> =
                    (0..row.len()).map(|a| score_row(row, a)).collect();
                for c in 0..row.len() {
                    let mean: f64 = row.iter().zip(&scores).map(|(p, g)| p * g[c]).sum();
                    prop_assert!(mean.abs() <= 1e-12, "E[score] must vanish, got {}", mean);
                }
            }
        }
    }

    #[test]
    fn policy_weighted_advantages_vanish(seed in any::<u64>(), gamma in 0.1f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let game = random_game(Graph::path(2), vec![2; 2], vec![2; 2], 1, gamma, &mut rng)
            .expect("fixture dimensions are valid");
        let theta = Theta::random(game.state_sizes(), game.action_sizes(), 0.8, &mut rng);
        let profile = profile_from_theta(&theta);
        let sol = ExactSolution::solve(&game, &profile).expect("within guards");
        for i in 0..game.n() {
            let asz = game.action_sizes()[i];
            for s0 in 0..2usize {
                for s1 in 0..2usize {
                    let s = [s0, s1];
                    // Global states are mixed-radix with the last agent fastest.
                    let s_idx = s0 * 2 + s1;
                    let mean: f64 = (0..asz)
                        .map(|a| profile.prob(i, s[i], a) * sol.adv_bar[i][s_idx * asz + a])
                        .sum();
                    prop_assert!(mean.abs() <= 1e-9, "policy mean of advantages was {}", mean);
                }
            }
        }
    }

    #[test]
    fn equilibrium_gaps_are_nonnegative_and_leave_the_profile_untouched(
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let game = random_game(Graph::path(2), vec![2; 2], vec![2; 2], 1, 0.8, &mut rng)
            .expect("fixture dimensions are valid");
        let theta = Theta::random(game.state_sizes(), game.action_sizes(), 0.6, &mut rng);
        let profile = profile_from_theta(&theta);
        let before = profile.clone();
        let gap = ne_gap(&game, &profile, 0, &BrMode::Local { restarts: 2, steps: 60 })
            .expect("within guards");
        prop_assert!(gap.gap >= 0.0);
        prop_assert!(gap.best_response >= gap.objective - 1e-12);
        for i in 0..2 {
            for s in 0..2 {
                prop_assert_eq!(profile.row(i, s), before.row(i, s), "evaluation must be pure");
            }
        }
    }

    #[test]
    fn regret_statistics_respect_the_sandwich_at_every_prefix(
        gaps in proptest::collection::vec(
            proptest::collection::vec(0.0f64..50.0, 1..5),
            1..30,
        ),
    ) {
        let n = gaps[0].len();
        let rows: Vec<Vec<f64>> = gaps.into_iter().map(|mut r| { r.resize(n, 0.0); r }).collect();
        let mut series = RegretSeries::new(n);
        for (t, row) in rows.iter().enumerate() {
            series.push(t, row.clone()).expect("rows are valid");
        }
        for p in 0..rows.len() {
            let nash = series.nash_regret(p).expect("non-empty prefix");
            let avg = series.avg_nash_regret(None, p).expect("non-empty prefix");
            prop_assert!(avg <= nash + 1e-12);
            prop_assert!(nash / n as f64 <= avg + 1e-12);
            // The averaged statistic must equal a direct recomputation.
            for i in 0..n {
                let direct: f64 =
                    rows[..=p].iter().map(|r| r[i]).sum::<f64>() / (p + 1) as f64;
                let reported = series.avg_nash_regret(Some(i), p).expect("non-empty prefix");
                prop_assert!((direct - reported).abs() <= 1e-15 * (1.0 + direct.abs()));
            }
        }
    }

    #[test]
    fn named_step_schedules_keep_their_exact_ratio(
        gamma in 0.0f64..0.99,
        n in 2usize..6,
    ) {
        let g = Graph::path(n);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let game = random_game(g, vec![2; n], vec![2; n], 1, gamma, &mut rng)
            .expect("fixture dimensions are valid");
        let exact = default_beta(&game, 1, BetaMode::PaperExact).expect("named schedule");
        let approx = default_beta(&game, 1, BetaMode::PaperApprox).expect("named schedule");
        prop_assert!(exact > 0.0 && exact.is_finite());
        prop_assert_eq!(exact, 4.0 * approx, "the conservative schedule is exactly a quarter");
        prop_assert_eq!(default_beta(&game, 1, BetaMode::Literal), None);
    }

    #[test]
    fn seed_ranges_parse_inclusively(a in 0u64..50, span in 0u64..20) {
        let b = a + span;
        let parsed = parse_seeds(&format!("{a}..{b}")).expect("well-formed range");
        let expected: Vec<u64> = (a..=b).collect();
        prop_assert_eq!(parsed, expected);
    }

    #[test]
    fn explicit_seed_lists_parse_in_order(seeds in proptest::collection::vec(0u64..1000, 1..8)) {
        let text = seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        prop_assert_eq!(parse_seeds(&text).expect("well-formed list"), seeds);
    }

    #[test]
    fn parameters_survive_json_round_trips_bitwise(seed in any::<u64>(), scale in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = Theta::random(&[2, 3], &[3, 2], scale, &mut rng);
        let json = serde_json::to_string(&theta).expect("serializable");
        let back: Theta = serde_json::from_str(&json).expect("deserializable");
        prop_assert_eq!(back, theta, "round-trip must be bit-exact");
    }

    #[test]
    fn unilateral_reward_changes_match_the_stage_potential(
        seed in any::<u64>(),
        eps_bar in 0.05f64..2.0,
    ) {
        let game = two_commuter_game(eps_bar, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<usize> =
            game.state_sizes().iter().map(|&k| rng.gen_range(0..k)).collect();
        let a: Vec<usize> =
            game.action_sizes().iter().map(|&k| rng.gen_range(0..k)).collect();
        let phi = stage_potential(&game, &s, &a).expect("congestion game");
        for i in 0..game.n() {
            for alt in 0..game.action_sizes()[i] {
                let mut a2 = a.clone();
                a2[i] = alt;
                let dr = game.reward(i, &s, &a2) - game.reward(i, &s, &a);
                let dphi = stage_potential(&game, &s, &a2).expect("congestion game") - phi;
                prop_assert!((dr - dphi).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn objectives_average_the_value_over_the_start_distribution() {
    // Cross-check `objective` against the full solver's per-state values.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let game = random_game(Graph::path(3), vec![2; 3], vec![2; 3], 1, 0.85, &mut rng)
        .expect("fixture dimensions are valid");
    let theta = Theta::random(game.state_sizes(), game.action_sizes(), 0.5, &mut rng);
    let profile = profile_from_theta(&theta);
    let sol = ExactSolution::solve(&game, &profile).expect("within guards");
    for i in 0..game.n() {
        let direct = objective(&game, &profile, i).expect("within guards");
        assert!((direct - sol.j[i]).abs() <= 1e-10);
    }
}
