//! Small game instances shared by unit tests, property tests, and the
//! self-check suites.

use super::congestion::{build_congestion_game, Commuter, TrafficNet};
use super::{GameError, LocalKernel, Mu, NetworkedGame, RewardRule};
use crate::netgraph::Graph;
use rand::Rng;

/// Two commuters on four nodes: `a0 → m`, `a1 → m`, `m → d`; both travel to
/// `d` and share the contended edge `m → d`.
pub fn two_commuter_game(eps_bar: f64, gamma: f64) -> NetworkedGame {
    let traffic =
        TrafficNet::from_labels(&["a0", "a1", "m", "d"], &[("a0", "m"), ("a1", "m"), ("m", "d")])
            .expect("static fixture");
    let d = traffic.node_id("d").unwrap();
    build_congestion_game(
        traffic,
        vec![Commuter { start: 0, dest: d }, Commuter { start: 1, dest: d }],
        eps_bar,
        gamma,
    )
    .expect("static fixture")
}

/// Three commuters on eight nodes with asymmetric reachable sets
/// (4, 4, and 5 local states) and three actions each:
///
/// ```text
/// u0 → {v1, v2},  u1 → {v1, v2},  u2 → {v2, w1},
/// v1 → d,  v2 → d,  w1 → w2,  w2 → d.
/// ```
pub fn three_commuter_game(eps_bar: f64, gamma: f64) -> NetworkedGame {
    let traffic = TrafficNet::from_labels(
        &["u0", "u1", "u2", "v1", "v2", "w1", "w2", "d"],
        &[
            ("u0", "v1"),
            ("u0", "v2"),
            ("u1", "v1"),
            ("u1", "v2"),
            ("u2", "v2"),
            ("u2", "w1"),
            ("v1", "d"),
            ("v2", "d"),
            ("w1", "w2"),
            ("w2", "d"),
        ],
    )
    .expect("static fixture");
    let d = traffic.node_id("d").unwrap();
    let commuters = (0..3).map(|i| Commuter { start: i, dest: d }).collect();
    build_congestion_game(traffic, commuters, eps_bar, gamma).expect("static fixture")
}

/// A random dense game on the given graph: full-neighborhood kernels with
/// random transition rows, rewards uniform in `[0, 1]` over the full
/// κ_r-neighborhood dependencies, and a random dense initial distribution.
///
/// Only suitable for enumeration-scale instances.
pub fn random_game<R: Rng + ?Sized>(
    graph: Graph,
    state_sizes: Vec<usize>,
    action_sizes: Vec<usize>,
    kappa_r: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<NetworkedGame, GameError> {
    let n = graph.n();
    let mut kernels = Vec::with_capacity(n);
    for i in 0..n {
        let deps = graph.khop(i, 1);
        let dep_states: usize = deps.iter().map(|&j| state_sizes[j]).product();
        let rows = dep_states * action_sizes[i];
        let mut table = Vec::with_capacity(rows * state_sizes[i]);
        for _ in 0..rows {
            table.extend(random_distribution(state_sizes[i], rng));
        }
        kernels.push(LocalKernel { deps, table });
    }

    let mut rewards = Vec::with_capacity(n);
    for i in 0..n {
        let deps = graph.khop(i, kappa_r);
        let len: usize = deps
            .iter()
            .map(|&j| state_sizes[j])
            .chain(deps.iter().map(|&j| action_sizes[j]))
            .product();
        let table = (0..len).map(|_| rng.gen::<f64>()).collect();
        rewards.push(RewardRule::Table { state_deps: deps.clone(), action_deps: deps, table });
    }

    let total_states: usize = state_sizes.iter().product();
    let mu = Mu::Dense(random_distribution(total_states, rng));

    NetworkedGame::new(
        graph,
        state_sizes,
        action_sizes,
        kappa_r,
        gamma,
        mu,
        kernels,
        rewards,
        (0.0, 1.0),
    )
}

/// A random three-agent path game with binary states and actions — the
/// standard enumeration-scale fixture for gradient and value tests.
pub fn random_three_agent_game<R: Rng + ?Sized>(
    kappa_r: usize,
    gamma: f64,
    rng: &mut R,
) -> NetworkedGame {
    random_game(Graph::path(3), vec![2; 3], vec![2; 3], kappa_r, gamma, rng)
        .expect("path fixture dimensions are valid")
}

/// A random normalized distribution of the given length (exponential draws
/// normalized to one).
fn random_distribution<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut row: Vec<f64> = (0..len).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
    let sum: f64 = row.iter().sum();
    for v in &mut row {
        *v /= sum;
    }
    // Exact renormalization to absorb rounding: force the sum onto 1.
    let sum2: f64 = row.iter().sum();
    if let Some(last) = row.last_mut() {
        *last += 1.0 - sum2;
    }
    row
}
