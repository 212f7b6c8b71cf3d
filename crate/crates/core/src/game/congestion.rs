//! Commuter (congestion) games on a directed road network.
//!
//! Each of `n` commuters travels from a start node to a destination node of
//! a directed traffic network. A commuter's local state is its current
//! node (restricted to the nodes it can reach before absorbing at its
//! destination); its actions are
//!
//! * action `0` — wait at the current node;
//! * action `k ≥ 1` — traverse the `k`-th outgoing edge of the current
//!   node. Every agent carries the same action count (one plus the largest
//!   out-degree in the network); at nodes with fewer outgoing edges, an
//!   out-of-range action is **aliased to the last available edge**, and at
//!   the destination (or a node with no outgoing edge) every action waits.
//!
//! With `N(e, t)` the number of commuters traversing edge `e` at step `t`
//! (the traverser itself included) and a per-step time cost `ε̄ > 0`,
//! rewards are
//!
//! ```text
//! r_i(t) = 0                     if s_i(t) = dest_i,
//! r_i(t) = −ε̄                   if commuter i waits,
//! r_i(t) = −ε̄ − N(a_i(t), t)    if commuter i traverses an edge.
//! ```
//!
//! Transitions are completely local (`s_i'` depends only on `(s_i, a_i)`),
//! so a unilateral policy change moves only the deviator's own state
//! marginals. The game is an exact potential game at every stage: with the
//! self-inclusive count convention above, the stage potential is
//!
//! ```text
//! φ(s, a) = −ε̄·|{j : s_j ≠ dest_j}| − (1/2)·Σ_e N(e)(N(e)+1),
//! ```
//!
//! i.e. a Rosenthal sum `−Σ_e Σ_{k=1}^{N(e)} k` plus one time-cost term per
//! commuter still travelling. Every unilateral deviation satisfies
//! `r_i(s,a) − r_i(s,a') = φ(s,a) − φ(s,a')` exactly: leaving an edge with
//! `k` other users changes both sides by `k + 1` (the pairwise part would
//! miss the traverser's own unit of congestion cost, and the time-cost term
//! is what lets the *value-level* potential track how long each commuter
//! keeps paying ε̄).
//!
//! ## Communication graph
//!
//! Two commuters are coupled iff they can simultaneously occupy the same
//! node while still travelling. Because waiting is always available, that
//! holds exactly when their reachable node sets minus their destinations
//! intersect; [`comm_graph_from_traffic`] applies this rule.

use super::{GameError, LocalKernel, Mu, NetworkedGame, RewardRule};
use crate::netgraph::Graph;
use serde::{Deserialize, Serialize};

/// A directed road network with labelled nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrafficNet {
    /// Node labels; node ids are indices into this list.
    pub labels: Vec<String>,
    /// Directed edges `(tail, head)` by node id, sorted lexicographically;
    /// edge ids are indices into this list.
    pub edges: Vec<(usize, usize)>,
}

impl TrafficNet {
    /// Builds a network from labels and directed `(tail, head)` edges.
    ///
    /// # Errors
    ///
    /// Rejects out-of-range endpoints, self-loops, and duplicate edges.
    pub fn new(labels: Vec<String>, mut edges: Vec<(usize, usize)>) -> Result<Self, GameError> {
        let n = labels.len();
        edges.sort_unstable();
        for w in edges.windows(2) {
            if w[0] == w[1] {
                return Err(GameError::Congestion(format!("duplicate edge {:?}", w[0])));
            }
        }
        for &(u, v) in &edges {
            if u >= n || v >= n {
                return Err(GameError::Congestion(format!("edge ({u}, {v}) out of range")));
            }
            if u == v {
                return Err(GameError::Congestion(format!("self-loop at node {u}")));
            }
        }
        Ok(Self { labels, edges })
    }

    /// Convenience constructor from labelled edges.
    pub fn from_labels(labels: &[&str], edges: &[(&str, &str)]) -> Result<Self, GameError> {
        let owned: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        let ids = |label: &str| {
            owned
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| GameError::UnknownLabel(label.to_string()))
        };
        let edge_ids = edges
            .iter()
            .map(|&(u, v)| Ok((ids(u)?, ids(v)?)))
            .collect::<Result<Vec<_>, GameError>>()?;
        Self::new(owned, edge_ids)
    }

    /// Node id of a label.
    pub fn node_id(&self, label: &str) -> Result<usize, GameError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| GameError::UnknownLabel(label.to_string()))
    }

    /// Number of nodes.
    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    /// Edge ids leaving `node`, in edge-id (hence head-sorted) order.
    pub fn out_edges(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, &(u, _))| u == node)
            .map(|(e, _)| e)
            .collect()
    }

    /// Largest out-degree over all nodes.
    pub fn max_out_degree(&self) -> usize {
        (0..self.n_nodes()).map(|u| self.out_edges(u).len()).max().unwrap_or(0)
    }

    /// Nodes reachable from `start` when `dest` is absorbing (includes
    /// `start` and, if reachable, `dest`), sorted by node id.
    pub fn reachable_from(&self, start: usize, dest: usize) -> Vec<usize> {
        let mut seen = vec![false; self.n_nodes()];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            if u == dest {
                continue; // destination is absorbing
            }
            for e in self.out_edges(u) {
                let v = self.edges[e].1;
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        (0..self.n_nodes()).filter(|&u| seen[u]).collect()
    }
}

/// One commuter's origin/destination pair (node ids).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Commuter {
    /// Start node.
    pub start: usize,
    /// Destination node (absorbing).
    pub dest: usize,
}

/// What a local action does at a given node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentMove {
    /// Stay at the current node.
    Wait,
    /// Traverse the edge with this id.
    Traverse(usize),
}

/// Structure attached to congestion-built games: the network, the
/// commuters, and per-agent decodings of local states and actions.
#[derive(Debug, Clone)]
pub struct CongestionStructure {
    /// The road network.
    pub traffic: TrafficNet,
    /// Per-step time cost ε̄.
    pub eps_bar: f64,
    /// Commuters (start/destination node ids).
    pub commuters: Vec<Commuter>,
    /// Per agent: local state index → traffic node id (sorted reachable set).
    pub node_of_state: Vec<Vec<usize>>,
    /// Per agent: destination's local state index.
    pub dest_state: Vec<usize>,
    /// Per agent, per local state: action index → move (aliased).
    pub move_of_action: Vec<Vec<Vec<AgentMove>>>,
}

impl CongestionStructure {
    /// The move agent `i` performs in local state `s_i` under action `a_i`.
    pub fn agent_move(&self, i: usize, s_i: usize, a_i: usize) -> AgentMove {
        if s_i == self.dest_state[i] {
            AgentMove::Wait
        } else {
            self.move_of_action[i][s_i][a_i]
        }
    }

    /// True when agent `i` has reached its destination in local state `s_i`.
    pub fn at_destination(&self, i: usize, s_i: usize) -> bool {
        s_i == self.dest_state[i]
    }

    /// The raw congestion reward of agent `i` at `(s, a)`.
    ///
    /// The edge count `N(e)` includes the traverser itself; only commuters
    /// that have not yet absorbed contribute.
    pub fn reward(&self, i: usize, s: &[usize], a: &[usize]) -> f64 {
        if self.at_destination(i, s[i]) {
            return 0.0;
        }
        match self.agent_move(i, s[i], a[i]) {
            AgentMove::Wait => -self.eps_bar,
            AgentMove::Traverse(e) => {
                let users = self.edge_users(s, a, e);
                -(self.eps_bar + users as f64)
            }
        }
    }

    /// Number of still-travelling commuters traversing edge `e` under
    /// `(s, a)`.
    pub fn edge_users(&self, s: &[usize], a: &[usize], e: usize) -> usize {
        (0..self.commuters.len())
            .filter(|&j| {
                !self.at_destination(j, s[j])
                    && self.agent_move(j, s[j], a[j]) == AgentMove::Traverse(e)
            })
            .count()
    }

    /// The raw stage potential
    /// `φ(s, a) = −ε̄·#travelling − (1/2)·Σ_e N(e)(N(e)+1)`.
    pub fn stage_potential(&self, s: &[usize], a: &[usize]) -> f64 {
        let travelling =
            (0..self.commuters.len()).filter(|&j| !self.at_destination(j, s[j])).count();
        let mut counts = vec![0usize; self.traffic.edges.len()];
        for j in 0..self.commuters.len() {
            if !self.at_destination(j, s[j]) {
                if let AgentMove::Traverse(e) = self.agent_move(j, s[j], a[j]) {
                    counts[e] += 1;
                }
            }
        }
        let congestion: f64 = counts.iter().map(|&n| (n * (n + 1)) as f64 / 2.0).sum();
        -self.eps_bar * travelling as f64 - congestion
    }
}

/// The stage potential of a congestion-built game, scaled consistently with
/// the game's affine reward map (the shift drops out of every deviation
/// difference, so only the scale is applied).
///
/// # Errors
///
/// Fails with [`GameError::NotCongestion`] on games without congestion
/// structure.
pub fn stage_potential(game: &NetworkedGame, s: &[usize], a: &[usize]) -> Result<f64, GameError> {
    let cong = game.congestion().ok_or(GameError::NotCongestion)?;
    let (scale, _) = game.reward_affine();
    Ok(scale * cong.stage_potential(s, a))
}

/// Builds the communication graph induced by a road network and a set of
/// commuters: `i ∼ j` iff some node other than their destinations is
/// reachable by both (equivalently, iff both can occupy the same node at
/// the same time with positive probability under some policies).
pub fn comm_graph_from_traffic(
    traffic: &TrafficNet,
    commuters: &[Commuter],
) -> Result<Graph, GameError> {
    let n = commuters.len();
    let live_sets: Vec<Vec<usize>> = commuters
        .iter()
        .map(|c| {
            traffic
                .reachable_from(c.start, c.dest)
                .into_iter()
                .filter(|&u| u != c.dest)
                .collect()
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if live_sets[i].iter().any(|u| live_sets[j].contains(u)) {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, &edges).map_err(|e| GameError::Congestion(e.to_string()))
}

/// Builds a congestion game.
///
/// # Arguments
///
/// * `traffic` — the road network.
/// * `commuters` — origin/destination pairs; the destination must be
///   reachable from the origin.
/// * `eps_bar` — per-step time cost ε̄ > 0.
/// * `gamma` — discount factor.
///
/// # Returns
///
/// A validated [`NetworkedGame`] with completely local deterministic
/// transitions, κ_r = 1 rewards computed from the congestion structure, a
/// point-mass initial distribution at the starts, and the communication
/// graph from [`comm_graph_from_traffic`].
pub fn build_congestion_game(
    traffic: TrafficNet,
    commuters: Vec<Commuter>,
    eps_bar: f64,
    gamma: f64,
) -> Result<NetworkedGame, GameError> {
    let n = commuters.len();
    if n == 0 {
        return Err(GameError::Congestion("no commuters".into()));
    }
    if !(eps_bar > 0.0) {
        return Err(GameError::Congestion(format!("eps_bar must be positive, got {eps_bar}")));
    }
    for (i, c) in commuters.iter().enumerate() {
        if c.start >= traffic.n_nodes() || c.dest >= traffic.n_nodes() {
            return Err(GameError::Congestion(format!("commuter {i} start/dest out of range")));
        }
    }
    let num_actions = 1 + traffic.max_out_degree().max(1);

    let mut node_of_state = Vec::with_capacity(n);
    let mut dest_state = Vec::with_capacity(n);
    let mut move_of_action = Vec::with_capacity(n);
    let mut start_state = Vec::with_capacity(n);
    for (i, c) in commuters.iter().enumerate() {
        let reach = traffic.reachable_from(c.start, c.dest);
        let dest_idx = reach.binary_search(&c.dest).map_err(|_| {
            GameError::Congestion(format!(
                "commuter {i}: destination {} unreachable from start {}",
                traffic.labels[c.dest], traffic.labels[c.start]
            ))
        })?;
        let start_idx = reach.binary_search(&c.start).expect("start is reachable");
        let moves: Vec<Vec<AgentMove>> = reach
            .iter()
            .map(|&node| {
                let out = traffic.out_edges(node);
                (0..num_actions)
                    .map(|a| {
                        if node == c.dest || a == 0 || out.is_empty() {
                            AgentMove::Wait
                        } else {
                            // Alias out-of-range actions to the last edge.
                            AgentMove::Traverse(out[(a - 1).min(out.len() - 1)])
                        }
                    })
                    .collect()
            })
            .collect();
        node_of_state.push(reach);
        dest_state.push(dest_idx);
        move_of_action.push(moves);
        start_state.push(start_idx);
    }

    let state_sizes: Vec<usize> = node_of_state.iter().map(Vec::len).collect();
    let action_sizes = vec![num_actions; n];
    let graph = comm_graph_from_traffic(&traffic, &commuters)?;

    // Deterministic, completely local kernels: deps = {i}.
    let mut kernels = Vec::with_capacity(n);
    for i in 0..n {
        let s_count = state_sizes[i];
        let mut table = vec![0.0; s_count * num_actions * s_count];
        for s_i in 0..s_count {
            for a_i in 0..num_actions {
                let next_node = match move_of_action[i][s_i][a_i] {
                    _ if s_i == dest_state[i] => node_of_state[i][s_i],
                    AgentMove::Wait => node_of_state[i][s_i],
                    AgentMove::Traverse(e) => traffic.edges[e].1,
                };
                let next_state = node_of_state[i]
                    .binary_search(&next_node)
                    .expect("edge heads stay within the reachable set");
                let row = s_i * num_actions + a_i;
                table[row * s_count + next_state] = 1.0;
            }
        }
        kernels.push(LocalKernel { deps: vec![i], table });
    }

    // Worst-case congestion: the most-contended edge and its potential users.
    let max_users = (0..traffic.edges.len())
        .map(|e| {
            (0..n)
                .filter(|&i| {
                    let tail = traffic.edges[e].0;
                    tail != commuters[i].dest && node_of_state[i].contains(&tail)
                })
                .count()
        })
        .max()
        .unwrap_or(0);
    let reward_range = (-(eps_bar + max_users as f64), 0.0);

    let labels: Vec<Vec<String>> = node_of_state
        .iter()
        .map(|reach| reach.iter().map(|&u| traffic.labels[u].clone()).collect())
        .collect();

    let mu = Mu::point(&start_state, &state_sizes);
    let rewards = vec![RewardRule::Congestion; n];

    let cong = CongestionStructure {
        traffic,
        eps_bar,
        commuters,
        node_of_state,
        dest_state,
        move_of_action,
    };

    // `NetworkedGame::new` validates reward rules, which for the congestion
    // variant requires the structure to be present; assemble in two steps.
    let mut game = NetworkedGame::new(
        graph,
        state_sizes,
        action_sizes,
        1,
        gamma,
        mu,
        kernels,
        vec![
            RewardRule::Table { state_deps: vec![], action_deps: vec![], table: vec![0.0] };
            n
        ],
        reward_range,
    )?;
    game.set_congestion(cong);
    game.rewards = rewards;
    game.validate_rewards()?;
    game.set_state_labels(labels);
    Ok(game)
}

/// The 12-commuter benchmark network: four origins `b1..b4` feed three
/// relays `c1..c3` which all feed the common destination `d`; three
/// commuters start at each origin.
///
/// ```text
/// b1 → c1,  b2 → {c1, c2},  b3 → {c2, c3},  b4 → c3,  c* → d
/// ```
pub fn reference_instance() -> (TrafficNet, Vec<Commuter>) {
    let traffic = TrafficNet::from_labels(
        &["b1", "b2", "b3", "b4", "c1", "c2", "c3", "d"],
        &[
            ("b1", "c1"),
            ("b2", "c1"),
            ("b2", "c2"),
            ("b3", "c2"),
            ("b3", "c3"),
            ("b4", "c3"),
            ("c1", "d"),
            ("c2", "d"),
            ("c3", "d"),
        ],
    )
    .expect("static instance is valid");
    let d = traffic.node_id("d").unwrap();
    let commuters = (0..12)
        .map(|i| Commuter { start: i / 3, dest: d })
        .collect();
    (traffic, commuters)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_game(gamma: f64) -> NetworkedGame {
        let (traffic, commuters) = reference_instance();
        build_congestion_game(traffic, commuters, 0.5, gamma).unwrap()
    }

    #[test]
    fn reference_instance_shapes() {
        let game = reference_game(0.7);
        assert_eq!(game.n(), 12);
        // Three actions everywhere: wait + up to two outgoing edges.
        assert!(game.action_sizes().iter().all(|&a| a == 3));
        // Commuters from b1 reach {b1, c1, d}; from b2 reach {b2, c1, c2, d}.
        assert_eq!(game.state_sizes()[0], 3);
        assert_eq!(game.state_sizes()[3], 4);
        let cong = game.congestion().unwrap();
        let labels: Vec<&str> = cong.node_of_state[3]
            .iter()
            .map(|&u| cong.traffic.labels[u].as_str())
            .collect();
        assert_eq!(labels, vec!["b2", "c1", "c2", "d"]);
    }

    #[test]
    fn reference_comm_graph_links_origin_groups() {
        let (traffic, commuters) = reference_instance();
        let g = comm_graph_from_traffic(&traffic, &commuters).unwrap();
        // Same-origin commuters always share nodes.
        assert_eq!(g.dist(0, 1), Some(1));
        // b1- and b2-commuters share c1.
        assert_eq!(g.dist(0, 3), Some(1));
        // b1- and b3-commuters share no non-destination node: 2 hops via b2.
        assert_eq!(g.dist(0, 6), Some(2));
        // b1 to b4: b1–b2–b3–b4 chain of overlaps.
        assert_eq!(g.dist(0, 9), Some(3));
    }

    #[test]
    fn action_aliasing_at_low_degree_nodes() {
        let game = reference_game(0.7);
        let cong = game.congestion().unwrap();
        // Agent 0 starts at b1 (out-degree 1): actions 1 and 2 both take
        // the single edge b1→c1.
        let s0 = 0; // b1 is agent 0's first local state
        assert_eq!(cong.agent_move(0, s0, 1), cong.agent_move(0, s0, 2));
        assert_eq!(cong.agent_move(0, s0, 0), AgentMove::Wait);
        // Agent 3 starts at b2 (out-degree 2): actions 1 and 2 differ.
        assert_ne!(cong.agent_move(3, 0, 1), cong.agent_move(3, 0, 2));
    }

    #[test]
    fn rewards_match_edge_counts() {
        let game = reference_game(0.7);
        let cong = game.congestion().unwrap();
        // All commuters at their start nodes; the three b1-commuters all
        // take b1→c1 while everyone else waits.
        let s: Vec<usize> = vec![0; 12];
        let mut a = vec![0usize; 12];
        for i in 0..3 {
            a[i] = 1;
        }
        for i in 0..3 {
            assert_eq!(game.reward(i, &s, &a), -(0.5 + 3.0));
        }
        assert_eq!(game.reward(3, &s, &a), -0.5);
        // A commuter that has absorbed earns zero.
        let mut s_done = s.clone();
        s_done[0] = cong.dest_state[0];
        assert_eq!(game.reward(0, &s_done, &a), 0.0);
    }

    #[test]
    fn stage_potential_matches_unilateral_deviations() {
        let game = reference_game(0.7);
        let s: Vec<usize> = vec![0; 12];
        let mut a = vec![0usize; 12];
        a[0] = 1;
        a[1] = 1;
        a[3] = 1; // b2-commuter joins c1 as well
        for i in 0..12 {
            for alt in 0..3 {
                let mut a2 = a.clone();
                a2[i] = alt;
                let dr = game.reward(i, &s, &a) - game.reward(i, &s, &a2);
                let dphi = stage_potential(&game, &s, &a).unwrap()
                    - stage_potential(&game, &s, &a2).unwrap();
                assert!(
                    (dr - dphi).abs() < 1e-12,
                    "agent {i} alt {alt}: Δr = {dr}, Δφ = {dphi}"
                );
            }
        }
    }

    #[test]
    fn single_commuter_single_edge() {
        let traffic = TrafficNet::from_labels(&["s", "d"], &[("s", "d")]).unwrap();
        let game =
            build_congestion_game(traffic, vec![Commuter { start: 0, dest: 1 }], 0.5, 0.9).unwrap();
        // Lone traversal still counts itself: r = −ε̄ − 1.
        assert_eq!(game.reward(0, &[0], &[1]), -1.5);
        assert_eq!(game.reward(0, &[0], &[0]), -0.5);
        assert_eq!(game.reward(0, &[1], &[1]), 0.0);
    }

    #[test]
    fn unreachable_destination_rejected() {
        let traffic = TrafficNet::from_labels(&["a", "b", "d"], &[("a", "b")]).unwrap();
        let err =
            build_congestion_game(traffic, vec![Commuter { start: 0, dest: 2 }], 0.5, 0.9);
        assert!(matches!(err, Err(GameError::Congestion(_))));
    }
}
