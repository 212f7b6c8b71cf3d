//! Independence-preserving evaluators for congestion games.
//!
//! When every transition factor reads only the agent's own state and the
//! start distribution is a product, the agents' state processes stay
//! independent forever. Objectives, potentials, and per-agent best
//! responses then follow from per-agent occupancy flows instead of a
//! joint enumeration, which keeps the cost linear in the agent count —
//! the dense oracles above stop at a handful of agents, this path runs
//! the twelve-commuter benchmark comfortably.

use super::best_response::NeGap;
use super::OracleError;
use crate::game::congestion::{AgentMove, CongestionStructure};
use crate::game::{Mu, NetworkedGame};
use crate::policy::{softmax_probs, AgentTable, PolicyProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest admissible deterministic-policy enumeration (`|A_i|^{|S_i|}`)
/// in the best-response polish step.
const ENUM_POLISH_LIMIT: usize = 4096;
/// Step-size halvings before an ascent direction is abandoned.
const MAX_HALVINGS: usize = 45;

/// Number of series terms needed so the discounted tail
/// `γ^T·max_abs/(1−γ)` drops below `tol`.
pub(crate) fn series_horizon(gamma: f64, max_abs: f64, tol: f64) -> usize {
    if gamma <= 0.0 || max_abs <= 0.0 {
        return 1;
    }
    let x = (tol * (1.0 - gamma) / max_abs).ln() / gamma.ln();
    if x.is_finite() {
        (x.ceil() as isize).max(1) as usize
    } else {
        1
    }
}

/// Admission gate: a congestion structure, completely local transitions
/// (`D_i ⊆ {i}`), and a product start.
fn marginal_gate(game: &NetworkedGame) -> Result<&CongestionStructure, OracleError> {
    let cong = game
        .congestion()
        .ok_or_else(|| OracleError::BadInput("not a congestion game".into()))?;
    for i in 0..game.n() {
        let deps = &game.kernel(i).deps;
        if !(deps.is_empty() || deps.as_slice() == [i]) {
            return Err(OracleError::BadInput(format!(
                "agent {i} transition reads states {deps:?}; the independence path needs D_i ⊆ {{i}}"
            )));
        }
    }
    match game.mu() {
        Mu::Product(_) => Ok(cong),
        Mu::Dense(_) => Err(OracleError::BadInput(
            "dense (correlated) start distribution; the independence path needs a product".into(),
        )),
    }
}

fn start_rows(game: &NetworkedGame) -> Vec<Vec<f64>> {
    match game.mu() {
        Mu::Product(rows) => rows.clone(),
        Mu::Dense(_) => unreachable!("checked by marginal_gate"),
    }
}

/// Per-agent occupancy flows `q_t^i(s_i, a_i)` for `t = 0..horizon`,
/// stored as `q[t][i][s_i·|A_i| + a_i]`.
pub(crate) struct Flows {
    pub q: Vec<Vec<Vec<f64>>>,
}

/// Propagates every agent's local state marginal independently (valid
/// once [`marginal_gate`] holds) and records state–action flows.
pub(crate) fn propagate_flows(
    game: &NetworkedGame,
    rows: &dyn Fn(usize, usize) -> Vec<f64>,
    starts: &[Vec<f64>],
    horizon: usize,
) -> Flows {
    let n = game.n();
    let mut p: Vec<Vec<f64>> = starts.to_vec();
    let mut q = Vec::with_capacity(horizon);
    let mut s_full = vec![0usize; n];
    for _ in 0..horizon {
        let mut layer = Vec::with_capacity(n);
        for i in 0..n {
            let ssz = game.state_sizes()[i];
            let asz = game.action_sizes()[i];
            let mut qi = vec![0.0; ssz * asz];
            for s in 0..ssz {
                let mass = p[i][s];
                if mass == 0.0 {
                    continue;
                }
                let row = rows(i, s);
                for (a, &w) in row.iter().enumerate() {
                    qi[s * asz + a] = mass * w;
                }
            }
            layer.push(qi);
        }
        for i in 0..n {
            let ssz = game.state_sizes()[i];
            let asz = game.action_sizes()[i];
            let mut pnext = vec![0.0; ssz];
            for s in 0..ssz {
                s_full[i] = s;
                for a in 0..asz {
                    let w = layer[i][s * asz + a];
                    if w == 0.0 {
                        continue;
                    }
                    for (sp, &pr) in game.next_local_dist(i, &s_full, a).iter().enumerate() {
                        pnext[sp] += w * pr;
                    }
                }
            }
            p[i] = pnext;
        }
        q.push(layer);
    }
    Flows { q }
}

fn profile_rows<'a>(profile: &'a PolicyProfile) -> impl Fn(usize, usize) -> Vec<f64> + 'a {
    move |i, s| profile.row(i, s).to_vec()
}

/// Per-agent edge loads `u_i(e) = P(agent i traverses e)` in one layer.
fn edge_loads(cong: &CongestionStructure, game: &NetworkedGame, layer: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let ne = cong.traffic.edges.len();
    layer
        .iter()
        .enumerate()
        .map(|(i, qi)| {
            let asz = game.action_sizes()[i];
            let mut u = vec![0.0; ne];
            for s in 0..game.state_sizes()[i] {
                for a in 0..asz {
                    let w = qi[s * asz + a];
                    if w == 0.0 {
                        continue;
                    }
                    if let AgentMove::Traverse(e) = cong.agent_move(i, s, a) {
                        u[e] += w;
                    }
                }
            }
            u
        })
        .collect()
}

/// Probability that agent `i` is away from its destination in one layer.
fn travel_prob(cong: &CongestionStructure, game: &NetworkedGame, i: usize, qi: &[f64]) -> f64 {
    let asz = game.action_sizes()[i];
    let dest = cong.dest_state[i];
    let at_dest: f64 = (0..asz).map(|a| qi[dest * asz + a]).sum();
    (1.0 - at_dest).max(0.0)
}

/// Exact objectives `J_i` of a congestion game with completely local
/// transitions, by per-agent flow propagation (series truncated below
/// 1e-10). Each agent's expected stage reward couples to the others only
/// through their independent edge loads.
///
/// # Errors
///
/// [`OracleError::BadInput`] when the game is outside the independence
/// class.
pub fn marginal_objectives(
    game: &NetworkedGame,
    profile: &PolicyProfile,
) -> Result<Vec<f64>, OracleError> {
    let cong = marginal_gate(game)?;
    let n = game.n();
    let gamma = game.gamma();
    let (scale, shift) = game.reward_affine();
    let rmax = scale.abs() * (cong.eps_bar + n as f64);
    let horizon = series_horizon(gamma, rmax, 1e-10);
    let flows = propagate_flows(game, &profile_rows(profile), &start_rows(game), horizon);

    let mut j = vec![0.0; n];
    let mut disc = 1.0;
    for layer in &flows.q {
        let u = edge_loads(cong, game, layer);
        let per_edge_total: Vec<f64> = (0..cong.traffic.edges.len())
            .map(|e| (0..n).map(|i| u[i][e]).sum())
            .collect();
        for i in 0..n {
            let mut raw = -cong.eps_bar * travel_prob(cong, game, i, &layer[i]);
            for (e, &total) in per_edge_total.iter().enumerate() {
                let own = u[i][e];
                if own != 0.0 {
                    raw -= own * (1.0 + (total - own));
                }
            }
            j[i] += disc * scale * raw;
        }
        disc *= gamma;
    }
    let shift_total = shift / (1.0 - gamma);
    for v in &mut j {
        *v += shift_total;
    }
    Ok(j)
}

/// Discounted expected stage potential from explicit per-agent start
/// rows, truncated below `tol`. Expected pairwise edge overlap factors
/// into products of the independent per-agent loads.
pub(crate) fn potential_value_from(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    starts: &[Vec<f64>],
    tol: f64,
) -> Result<f64, OracleError> {
    let cong = marginal_gate(game)?;
    let n = game.n() as f64;
    let gamma = game.gamma();
    let (scale, _) = game.reward_affine();
    let phi_max = cong.eps_bar * n + cong.traffic.edges.len() as f64 * n * (n + 1.0) / 2.0;
    let horizon = series_horizon(gamma, scale.abs() * phi_max, tol);
    let flows = propagate_flows(game, &profile_rows(profile), starts, horizon);

    let mut total = 0.0;
    let mut disc = 1.0;
    for layer in &flows.q {
        let u = edge_loads(cong, game, layer);
        let mut phi = 0.0;
        for i in 0..game.n() {
            phi -= cong.eps_bar * travel_prob(cong, game, i, &layer[i]);
        }
        for e in 0..cong.traffic.edges.len() {
            let s1: f64 = (0..game.n()).map(|i| u[i][e]).sum();
            let s2: f64 = (0..game.n()).map(|i| u[i][e] * u[i][e]).sum();
            phi -= s1 + (s1 * s1 - s2) / 2.0;
        }
        total += disc * scale * phi;
        disc *= gamma;
    }
    Ok(total)
}

/// Best response of agent `i` within its local softmax policy class,
/// holding the other agents' (independent) edge loads fixed. Gradient
/// ascent with adaptive steps from `restarts` starting points, then an
/// exhaustive sweep over deterministic local policies when
/// `|A_i|^{|S_i|}` is small; returns the best value found.
///
/// # Errors
///
/// [`OracleError::BadInput`] when the game is outside the independence
/// class.
pub fn marginal_best_response(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    i: usize,
    restarts: usize,
    steps: usize,
    tol: f64,
) -> Result<f64, OracleError> {
    let cong = marginal_gate(game)?;
    let n = game.n();
    let gamma = game.gamma();
    let (scale, shift) = game.reward_affine();
    let ssz = game.state_sizes()[i];
    let asz = game.action_sizes()[i];
    let dest = cong.dest_state[i];
    let rmax = scale.abs() * (cong.eps_bar + n as f64);
    let horizon = series_horizon(gamma, rmax, (tol / 10.0).min(1e-10));

    // The other agents' loads are unaffected by agent i's deviation.
    let flows = propagate_flows(game, &profile_rows(profile), &start_rows(game), horizon);
    let ne = cong.traffic.edges.len();
    let mut coeff = Vec::with_capacity(horizon);
    for layer in &flows.q {
        let u = edge_loads(cong, game, layer);
        let mut others = vec![0.0; ne];
        for (j, uj) in u.iter().enumerate() {
            if j != i {
                for (e, &v) in uj.iter().enumerate() {
                    others[e] += v;
                }
            }
        }
        let mut c = vec![0.0; ssz * asz];
        for s in 0..ssz {
            if s == dest {
                continue;
            }
            for a in 0..asz {
                let mut raw = -cong.eps_bar;
                if let AgentMove::Traverse(e) = cong.agent_move(i, s, a) {
                    raw -= 1.0 + others[e];
                }
                c[s * asz + a] = scale * raw;
            }
        }
        coeff.push(c);
    }
    let start = start_rows(game)[i].clone();
    let shift_total = shift / (1.0 - gamma);

    // Value of a local policy (probability rows) against the fixed loads.
    let evaluate = |rows: &AgentTable| -> f64 {
        let mut p = start.clone();
        let mut s_full = vec![0usize; n];
        let mut value = 0.0;
        let mut disc = 1.0;
        for c in &coeff {
            let mut pnext = vec![0.0; ssz];
            for s in 0..ssz {
                let mass = p[s];
                if mass == 0.0 {
                    continue;
                }
                s_full[i] = s;
                for a in 0..asz {
                    let w = mass * rows.get(s, a);
                    if w == 0.0 {
                        continue;
                    }
                    value += disc * w * c[s * asz + a];
                    for (sp, &pr) in game.next_local_dist(i, &s_full, a).iter().enumerate() {
                        pnext[sp] += w * pr;
                    }
                }
            }
            p = pnext;
            disc *= gamma;
        }
        value + shift_total
    };

    // Softmax-parameter gradient by forward sensitivity of the state
    // marginal: ∂ξ(a|s)/∂θ(s°,b) = 1{s=s°}·ξ(a|s)·(1{a=b} − ξ(b|s)).
    let gradient = |theta: &AgentTable| -> AgentTable {
        let xi = softmax_probs(theta);
        let params = ssz * asz;
        let mut p = start.clone();
        let mut dp = vec![vec![0.0; ssz]; params];
        let mut g = AgentTable::zeros(ssz, asz);
        let mut s_full = vec![0usize; n];
        let mut disc = 1.0;
        for c in &coeff {
            let mut pnext = vec![0.0; ssz];
            let mut dpnext = vec![vec![0.0; ssz]; params];
            for s in 0..ssz {
                s_full[i] = s;
                for a in 0..asz {
                    let prob = xi.get(s, a);
                    let dist = game.next_local_dist(i, &s_full, a);
                    let flow = p[s] * prob;
                    if flow != 0.0 {
                        for (sp, &pr) in dist.iter().enumerate() {
                            pnext[sp] += flow * pr;
                        }
                    }
                    for k in 0..params {
                        let (s0, b) = (k / asz, k % asz);
                        let dxi = if s == s0 {
                            prob * (((a == b) as usize as f64) - xi.get(s, b))
                        } else {
                            0.0
                        };
                        let dflow = dp[k][s] * prob + p[s] * dxi;
                        if dflow == 0.0 {
                            continue;
                        }
                        g.data[k] += disc * dflow * c[s * asz + a];
                        for (sp, &pr) in dist.iter().enumerate() {
                            dpnext[k][sp] += dflow * pr;
                        }
                    }
                }
            }
            p = pnext;
            dp = dpnext;
            disc *= gamma;
        }
        g
    };

    let ascend = |theta0: AgentTable| -> f64 {
        let mut theta = theta0;
        let mut value = evaluate(&softmax_probs(&theta));
        let mut eta = 1.0;
        let mut halvings = 0usize;
        for _ in 0..steps {
            let g = gradient(&theta);
            let gmax = g.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            if gmax < 1e-13 {
                break;
            }
            loop {
                let mut cand = theta.clone();
                for (x, d) in cand.data.iter_mut().zip(&g.data) {
                    *x += eta * d;
                }
                let vc = evaluate(&softmax_probs(&cand));
                if vc > value {
                    theta = cand;
                    value = vc;
                    eta = (eta * 1.5).min(1e3);
                    break;
                }
                eta *= 0.5;
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    return value;
                }
            }
        }
        value
    };

    let mut best = f64::NEG_INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(0x0be5_7ace);
    for attempt in 0..restarts.max(1) {
        let theta0 = match attempt {
            0 => {
                // Warm start at the current policy.
                let mut t = AgentTable::zeros(ssz, asz);
                for (v, &p) in t.data.iter_mut().zip(&profile.tables[i].data) {
                    *v = p.max(1e-300).ln();
                }
                t
            }
            1 => AgentTable::zeros(ssz, asz),
            _ => {
                let mut t = AgentTable::zeros(ssz, asz);
                for v in &mut t.data {
                    *v = 2.0 * standard_normal(&mut rng);
                }
                t
            }
        };
        best = best.max(ascend(theta0));
    }

    // Deterministic-policy sweep: exact maximization over the corners of
    // the local policy class when the enumeration is small.
    if asz.checked_pow(ssz as u32).is_some_and(|count| count <= ENUM_POLISH_LIMIT) {
        let count = asz.pow(ssz as u32);
        for code in 0..count {
            let mut rows = AgentTable::zeros(ssz, asz);
            let mut rem = code;
            for s in 0..ssz {
                rows.data[s * asz + rem % asz] = 1.0;
                rem /= asz;
            }
            best = best.max(evaluate(&rows));
        }
    }
    Ok(best)
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box–Muller; matches the spread of the dense oracle's random restarts.
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Per-agent equilibrium gaps of a congestion game on the independence
/// path: `(max_i gap_i, per-agent details)`.
///
/// # Errors
///
/// [`OracleError::BadInput`] when the game is outside the independence
/// class.
pub fn marginal_ne_gap_global(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    restarts: usize,
    steps: usize,
    tol: f64,
) -> Result<(f64, Vec<NeGap>), OracleError> {
    let js = marginal_objectives(game, profile)?;
    let mut gaps = Vec::with_capacity(game.n());
    let mut global = 0.0f64;
    for (i, &objective) in js.iter().enumerate() {
        let best_response = marginal_best_response(game, profile, i, restarts, steps, tol)?;
        let raw = best_response - objective;
        let gap = raw.max(0.0);
        global = global.max(gap);
        gaps.push(NeGap { objective, best_response, raw, gap });
    }
    Ok((global, gaps))
}
