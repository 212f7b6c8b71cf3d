//! Named self-check suites: fixed-seed numerical batteries over the core
//! guarantees, runnable from the CLI (`check --suite <name>`) and reused by
//! the integration tests.
//!
//! Every suite returns a [`CheckReport`] whose items carry the measured
//! quantity and the tolerance it must stay under, so failures are
//! diagnosable from the serialized report alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::critic::{td_lambda_local, CriticConfig, FeatureMap, FeatureMode};
use crate::game::chain::{build_chain_example, chain_payoff, global_potential_witness, BAD, GOOD};
use crate::game::congestion::stage_potential;
use crate::game::fixtures::{random_game, random_three_agent_game, two_commuter_game};
use crate::game::index::MixedRadix;
use crate::game::NetworkedGame;
use crate::netgraph::Graph;
use crate::oracle::{
    build_subchain, build_zchain, decay_gap, exact_policy_gradient_all, inner_conditional_gap,
    objective, subchain_checks, td0_for_subchain, value_potential_congestion, ExactSolution,
};
use crate::policy::{profile_from_theta, AgentTable, PolicyProfile, Theta};

use super::{HarnessError, RegretSeries};

/// Names accepted by [`run_check`].
pub const SUITES: &[&str] = &[
    "decay",
    "subchain",
    "potentials",
    "gradients",
    "regret-sandwich",
    "critic-fixed-point",
    "chain-example",
];

/// One measured quantity compared against its tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct CheckItem {
    /// What was measured.
    pub name: String,
    /// The measured value (an error, a gap, or a difference that must be
    /// non-positive for ordering checks).
    pub value: f64,
    /// The bound `value` must not exceed.
    pub tolerance: f64,
    /// `value <= tolerance`.
    pub pass: bool,
}

/// Outcome of one suite.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    /// Suite name (one of [`SUITES`]).
    pub suite: String,
    /// Every measurement the suite took.
    pub items: Vec<CheckItem>,
    /// True when every item passed.
    pub pass: bool,
}

fn item(name: String, value: f64, tolerance: f64) -> CheckItem {
    CheckItem { name, value, tolerance, pass: value <= tolerance }
}

/// Runs one named suite.
///
/// # Errors
///
/// [`HarnessError::UnknownSuite`] for names outside [`SUITES`]; setup
/// errors (game construction, oracle guards) propagate. Check
/// *violations* never error — they land in the report.
pub fn run_check(suite: &str) -> Result<CheckReport, HarnessError> {
    let items = match suite {
        "decay" => decay_suite()?,
        "subchain" => subchain_suite()?,
        "potentials" => potentials_suite()?,
        "gradients" => gradients_suite()?,
        "regret-sandwich" => regret_sandwich_suite()?,
        "critic-fixed-point" => critic_fixed_point_suite()?,
        "chain-example" => chain_example_suite()?,
        other => return Err(HarnessError::UnknownSuite(other.to_string())),
    };
    let pass = items.iter().all(|it| it.pass);
    Ok(CheckReport { suite: suite.to_string(), items, pass })
}

fn random_theta(game: &NetworkedGame, scale: f64, rng: &mut ChaCha8Rng) -> Theta {
    Theta::random(game.state_sizes(), game.action_sizes(), scale, rng)
}

/// Truncated-window value error against the geometric decay bound.
///
/// Four-agent path games with rewards in `[0, 1]`, reward radii 0 and 1,
/// two discount factors. For every window radius the worst truncation gap
/// over agents must respect `2·γ^{κ_c−κ_r+1}/(1−γ)`, and a window covering
/// the whole graph must be exact.
fn decay_suite() -> Result<Vec<CheckItem>, HarnessError> {
    let mut items = Vec::new();
    for (gi, &gamma) in [0.5, 0.9].iter().enumerate() {
        for kappa_r in [0usize, 1] {
            let mut rng = ChaCha8Rng::seed_from_u64(400 + 10 * kappa_r as u64 + gi as u64);
            let game =
                random_game(Graph::path(4), vec![2; 4], vec![2; 4], kappa_r, gamma, &mut rng)?;
            let theta = random_theta(&game, 1.0, &mut rng);
            let diam = game.graph().diameter();
            for kappa_c in 0..=diam {
                let mut worst = 0.0f64;
                for i in 0..game.n() {
                    worst = worst.max(decay_gap(&game, &theta, i, kappa_c)?);
                }
                let exponent = kappa_c as i32 - kappa_r as i32 + 1;
                let factor = if exponent <= 0 { 1.0 } else { gamma.powi(exponent) };
                let bound = 2.0 * factor / (1.0 - gamma);
                items.push(item(
                    format!("rewards{kappa_r}hop-gamma{gamma}-window{kappa_c}-bound"),
                    worst,
                    bound,
                ));
                if kappa_c == diam {
                    items.push(item(
                        format!("rewards{kappa_r}hop-gamma{gamma}-full-window-exact"),
                        worst,
                        1e-10,
                    ));
                }
            }
        }
    }
    Ok(items)
}

/// Structural checks of the restricted state–action chains.
///
/// A three-agent line game under an ε-mixed random policy: for every agent
/// and window radius the restricted kernel must be irreducible and
/// aperiodic, its stationary law must match the marginal of the full
/// chain's, the restricted value must respect the geometric gap bound, and
/// where the window splits the chain the inner conditional of the
/// stationary law must be policy-factored.
fn subchain_suite() -> Result<Vec<CheckItem>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let game = random_three_agent_game(1, 0.9, &mut rng);
    let theta = random_theta(&game, 1.0, &mut rng);
    let mixed = profile_from_theta(&theta).epsilon_explore(0.2);
    let diam = game.graph().diameter();
    let mut items = Vec::new();
    for i in 0..game.n() {
        let z = build_zchain(&game, &mixed, i)?;
        for kappa_c in 1..=diam {
            let sub = build_subchain(&game, &mixed, i, kappa_c)?;
            let report = subchain_checks(&game, &z, &sub)?;
            let tag = format!("agent{i}-window{kappa_c}");
            items.push(item(
                format!("{tag}-kernel-structure-failures"),
                report.failures.len() as f64,
                0.0,
            ));
            items.push(item(
                format!("{tag}-stationary-marginal"),
                report.stationary_marginal_gap,
                1e-8,
            ));
            items.push(item(format!("{tag}-value-gap"), report.value_gap, report.value_bound));
            if let Some(gap) = inner_conditional_gap(&game, &mixed, &z, &sub)? {
                items.push(item(format!("{tag}-inner-conditional"), gap, 1e-12));
            }
        }
    }
    Ok(items)
}

/// Stage and value potential identities on a two-commuter game.
///
/// Exhaustively over states, actions, agents, and unilateral deviations the
/// reward change must equal the stage-potential change; over randomized
/// policy deviations the objective change must equal the discounted
/// potential-value change.
fn potentials_suite() -> Result<Vec<CheckItem>, HarnessError> {
    let game = two_commuter_game(0.5, 0.9);
    let states = MixedRadix::new(game.state_sizes());
    let actions = MixedRadix::new(game.action_sizes());

    let mut stage_worst = 0.0f64;
    for (_, s) in states.iter() {
        for (_, a) in actions.iter() {
            let phi = stage_potential(&game, &s, &a)?;
            for i in 0..game.n() {
                for alt in 0..game.action_sizes()[i] {
                    if alt == a[i] {
                        continue;
                    }
                    let mut a2 = a.clone();
                    a2[i] = alt;
                    let dr = game.reward(i, &s, &a2) - game.reward(i, &s, &a);
                    let dphi = stage_potential(&game, &s, &a2)? - phi;
                    stage_worst = stage_worst.max((dr - dphi).abs());
                }
            }
        }
    }
    let mut items = vec![item("stage-deviation-identity".to_string(), stage_worst, 1e-12)];

    let s0 = game
        .mu()
        .as_point(game.state_sizes())
        .ok_or_else(|| HarnessError::Config("fixture must start from a point mass".to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut value_worst = 0.0f64;
    for trial in 0..6 {
        let theta = random_theta(&game, 0.8, &mut rng);
        let fresh = random_theta(&game, 0.8, &mut rng);
        let i = trial % game.n();
        let base = profile_from_theta(&theta);
        let mut dev_theta = theta.clone();
        dev_theta.tables[i] = fresh.tables[i].clone();
        let dev = profile_from_theta(&dev_theta);
        let dj = objective(&game, &dev, i)? - objective(&game, &base, i)?;
        let dphi = value_potential_congestion(&game, &dev, &s0)?
            - value_potential_congestion(&game, &base, &s0)?;
        value_worst = value_worst.max((dj - dphi).abs());
    }
    items.push(item("value-deviation-identity".to_string(), value_worst, 1e-8));
    Ok(items)
}

/// Exact policy gradients against central finite differences.
///
/// Twenty random three-agent games; per game the worst-entry difference
/// relative to the gradient's own magnitude must stay under `1e-5`.
fn gradients_suite() -> Result<Vec<CheckItem>, HarnessError> {
    let mut items = Vec::new();
    let h = 1e-4;
    for k in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + k);
        let game = random_three_agent_game(1, 0.9, &mut rng);
        let theta = random_theta(&game, 0.7, &mut rng);
        let exact = exact_policy_gradient_all(&game, &theta)?;
        let mut diff_max = 0.0f64;
        let mut grad_max = 0.0f64;
        for i in 0..game.n() {
            for s in 0..game.state_sizes()[i] {
                for a in 0..game.action_sizes()[i] {
                    let mut plus = theta.clone();
                    *plus.tables[i].get_mut(s, a) += h;
                    let mut minus = theta.clone();
                    *minus.tables[i].get_mut(s, a) -= h;
                    let jp = objective(&game, &profile_from_theta(&plus), i)?;
                    let jm = objective(&game, &profile_from_theta(&minus), i)?;
                    let fd = (jp - jm) / (2.0 * h);
                    diff_max = diff_max.max((fd - exact[i].get(s, a)).abs());
                    grad_max = grad_max.max(exact[i].get(s, a).abs());
                }
            }
        }
        let rel = diff_max / grad_max.max(1e-9);
        items.push(item(format!("game{k:02}-relative-error"), rel, 1e-5));
    }
    Ok(items)
}

/// The averaged and worst-case regret statistics obey
/// `nash/n ≤ avg ≤ nash` at every prefix of random gap series.
fn regret_sandwich_suite() -> Result<Vec<CheckItem>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=6);
        let len = rng.gen_range(1..=40usize);
        let mut series = RegretSeries::new(n);
        for t in 0..len {
            let gaps: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
            series.push(t, gaps)?;
        }
        for p in 0..len {
            let upto = series.iterations()[p];
            let nash = series.nash_regret(upto)?;
            let avg = series.avg_nash_regret(None, upto)?;
            worst = worst.max(avg - nash).max(nash / n as f64 - avg);
        }
    }
    Ok(vec![item("prefix-sandwich".to_string(), worst, 1e-12)])
}

/// Local temporal-difference learning against its projected fixed point.
///
/// Two-agent game, full-window tabular features, ε = 0.1: the projected
/// fixed point must reproduce the action-averaged values exactly, and the
/// stochastic iterates must approach it (median error over five seeds
/// decreasing from 5·10⁴ to 2·10⁵ steps, final worst entry within
/// `0.05/(1−γ)`).
fn critic_fixed_point_suite() -> Result<Vec<CheckItem>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let gamma = 0.9;
    let game = random_game(Graph::path(2), vec![2; 2], vec![2; 2], 1, gamma, &mut rng)?;
    let theta = random_theta(&game, 0.5, &mut rng);
    let eps = 0.1;
    let kappa_c = game.graph().diameter();
    let mixed = profile_from_theta(&theta).epsilon_explore(eps);
    let sol = ExactSolution::solve(&game, &mixed)?;

    let mut red_worst = 0.0f64;
    let mut fp_worst = 0.0f64;
    let mut wstar: Vec<Vec<f64>> = Vec::new();
    for i in 0..game.n() {
        let fm = FeatureMap::new(&game, i, kappa_c, FeatureMode::Tabular)?;
        let sub = build_subchain(&game, &mixed, i, kappa_c)?;
        let td = td0_for_subchain(&game, &sub, &fm)?;
        red_worst = red_worst.max(td.eps_red);
        let asz = game.action_sizes()[i];
        for s0 in 0..game.state_sizes()[0] {
            for s1 in 0..game.state_sizes()[1] {
                for ai in 0..asz {
                    // Sub-chain coordinates are the members' states in
                    // agent order, the distinguished agent's collapsed to
                    // `s_i·|A_i| + a_i`, last coordinate fastest.
                    let zn = if i == 0 {
                        (s0 * asz + ai) * game.state_sizes()[1] + s1
                    } else {
                        s0 * (game.state_sizes()[1] * asz) + s1 * asz + ai
                    };
                    let gap = (td.fitted[zn] - sol.q_bar_at(i, &[s0, s1], ai)).abs();
                    fp_worst = fp_worst.max(gap);
                }
            }
        }
        wstar.push(td.w);
    }
    let mut items = vec![
        item("tabular-projection-lossless".to_string(), red_worst, 1e-9),
        item("fixed-point-matches-averaged-values".to_string(), fp_worst, 1e-9),
    ];

    let err_against = |w: &[Vec<f64>]| -> f64 {
        w.iter()
            .zip(&wstar)
            .map(|(wi, si)| {
                wi.iter().zip(si).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    };
    let max_entry = |w: &[Vec<f64>]| -> f64 {
        w.iter()
            .zip(&wstar)
            .flat_map(|(wi, si)| wi.iter().zip(si).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    };

    let mut short_errs = Vec::new();
    let mut long_errs = Vec::new();
    let mut final_entry = 0.0f64;
    for seed in 0..5u64 {
        for k in [50_000usize, 200_000] {
            let cfg = CriticConfig { k, alpha: 0.01, lambda: 0.0, eps, kappa_c };
            let mut trng = ChaCha8Rng::seed_from_u64(9_000 + seed);
            let w = td_lambda_local(&game, &theta, FeatureMode::Tabular, &cfg, &mut trng)?;
            if k == 50_000 {
                short_errs.push(err_against(&w));
            } else {
                long_errs.push(err_against(&w));
                final_entry = final_entry.max(max_entry(&w));
            }
        }
    }
    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    items.push(item(
        "median-error-decreases-with-steps".to_string(),
        median(long_errs) - median(short_errs),
        0.0,
    ));
    items.push(item("final-worst-entry".to_string(), final_entry, 0.05 / (1.0 - gamma)));
    Ok(items)
}

/// The four-agent chain game against its closed forms.
///
/// Over all corner policies the dense solver must reproduce the closed-form
/// last-agent payoff, the first three agents' payoffs must vanish, and the
/// last agent's all-good deviation gain must equal the witness pair —
/// non-zero under a good leader, zero under a bad one, ruling out any
/// policy-independent global potential while the 1-hop local potentials
/// stand.
fn chain_example_suite() -> Result<Vec<CheckItem>, HarnessError> {
    let mut items = Vec::new();
    for gamma in [0.5, 0.9, 0.99] {
        let (game, _) = build_chain_example(gamma)?;
        let corner = |gb: f64, gg0: f64, g3: f64| -> PolicyProfile {
            let mut t0 = AgentTable::zeros(2, 2);
            *t0.get_mut(BAD, GOOD) = gb;
            *t0.get_mut(BAD, BAD) = 1.0 - gb;
            *t0.get_mut(GOOD, GOOD) = gg0;
            *t0.get_mut(GOOD, BAD) = 1.0 - gg0;
            let mut t3 = AgentTable::zeros(2, 2);
            *t3.get_mut(GOOD, GOOD) = g3;
            *t3.get_mut(GOOD, BAD) = 1.0 - g3;
            *t3.get_mut(BAD, GOOD) = 0.5;
            *t3.get_mut(BAD, BAD) = 0.5;
            PolicyProfile::uniform(game.state_sizes(), game.action_sizes())
                .with_agent_table(0, t0)
                .with_agent_table(3, t3)
        };
        let last = game.n() - 1;

        let mut closed_worst = 0.0f64;
        let mut spectator_worst = 0.0f64;
        for bits in 0..8u32 {
            let (gb, gg0, g3) =
                ((bits & 1) as f64, ((bits >> 1) & 1) as f64, ((bits >> 2) & 1) as f64);
            let prof = corner(gb, gg0, g3);
            let j_last = objective(&game, &prof, last)?;
            closed_worst = closed_worst.max((j_last - chain_payoff(gamma, gb, gg0, g3)).abs());
            for i in 0..last {
                spectator_worst = spectator_worst.max(objective(&game, &prof, i)?.abs());
            }
        }
        items.push(item(format!("gamma{gamma}-closed-form-payoff"), closed_worst, 1e-10));
        items.push(item(format!("gamma{gamma}-upstream-payoffs-zero"), spectator_worst, 1e-10));

        let anchor = objective(&game, &corner(1.0, 1.0, 1.0), last)?;
        items.push(item(
            format!("gamma{gamma}-all-good-anchor"),
            (anchor - gamma.powi(4) / (1.0 - gamma)).abs(),
            1e-10,
        ));

        let (w_good, w_bad) = global_potential_witness(gamma);
        let d_good = anchor - objective(&game, &corner(1.0, 1.0, 0.0), last)?;
        let d_bad = objective(&game, &corner(0.0, 0.0, 1.0), last)?
            - objective(&game, &corner(0.0, 0.0, 0.0), last)?;
        let witness_err = (d_good - w_good).abs().max((d_bad - w_bad).abs());
        items.push(item(format!("gamma{gamma}-deviation-witness-pair"), witness_err, 1e-10));
        items.push(item(
            format!("gamma{gamma}-witness-separation"),
            ((d_good - d_bad) - gamma.powi(4) / (1.0 - gamma)).abs(),
            1e-10,
        ));
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_named_suite_passes() {
        for &suite in SUITES {
            let report = run_check(suite).expect("suite must run");
            assert_eq!(report.items.is_empty(), false, "{suite} produced no items");
            for it in &report.items {
                assert!(
                    it.pass,
                    "suite {suite}, item {}: value {} exceeds tolerance {}",
                    it.name, it.value, it.tolerance
                );
            }
            assert!(report.pass);
        }
    }

    #[test]
    fn unknown_suites_are_rejected() {
        let err = run_check("no-such-suite").unwrap_err();
        assert!(matches!(err, HarnessError::UnknownSuite(_)));
    }

    #[test]
    fn reports_serialize_with_their_items() {
        let report = run_check("regret-sandwich").unwrap();
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["suite"], "regret-sandwich");
        assert!(json["items"].as_array().map(|a| !a.is_empty()).unwrap_or(false));
        assert!(json["items"][0]["tolerance"].is_number());
    }
}
