//! JSON-serializable game descriptions.
//!
//! A [`GameSpec`] is the on-disk form of a game used by experiment configs
//! and the CLI. Three canonical kinds — `chain`, `congestion`, `explicit` —
//! plus `congestion-reference`, a shorthand for the built-in 12-commuter
//! benchmark network. Unknown fields are rejected so config typos fail
//! loudly.

use super::chain;
use super::congestion::{self, build_congestion_game, Commuter, TrafficNet};
use super::{GameError, LocalKernel, Mu, NetworkedGame, RewardRule};
use crate::netgraph::Graph;
use serde::{Deserialize, Serialize};

/// A road network by node label.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficNetSpec {
    /// Node labels, in id order.
    pub nodes: Vec<String>,
    /// Directed edges as `(from, to)` label pairs.
    pub edges: Vec<(String, String)>,
}

/// One commuter by start/destination label.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommuterSpec {
    pub start: String,
    pub dest: String,
}

/// A JSON game description; build the runtime game with [`GameSpec::build`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GameSpec {
    /// The 4-agent chain game with closed-form objective ([`chain`]).
    Chain { gamma: f64 },
    /// A commuter congestion game on an arbitrary road network
    /// ([`congestion::build_congestion_game`]).
    Congestion {
        traffic_net: TrafficNetSpec,
        agents: Vec<CommuterSpec>,
        eps_bar: f64,
        gamma: f64,
    },
    /// The built-in 12-commuter benchmark instance
    /// ([`congestion::reference_instance`]); `eps_bar` defaults to 0.5.
    CongestionReference {
        gamma: f64,
        #[serde(default = "default_eps_bar")]
        eps_bar: f64,
    },
    /// Full tables: every field of [`NetworkedGame::new`] spelled out.
    Explicit {
        graph: Graph,
        state_sizes: Vec<usize>,
        action_sizes: Vec<usize>,
        kappa_r: usize,
        gamma: f64,
        mu: Mu,
        kernels: Vec<LocalKernel>,
        rewards: Vec<RewardRule>,
        reward_range: (f64, f64),
    },
}

fn default_eps_bar() -> f64 {
    0.5
}

impl GameSpec {
    /// Builds the described game, validating all tables.
    pub fn build(&self) -> Result<NetworkedGame, GameError> {
        match self {
            GameSpec::Chain { gamma } => chain::build_chain_example(*gamma).map(|(g, _)| g),
            GameSpec::Congestion { traffic_net, agents, eps_bar, gamma } => {
                let nodes: Vec<&str> = traffic_net.nodes.iter().map(String::as_str).collect();
                let edges: Vec<(&str, &str)> = traffic_net
                    .edges
                    .iter()
                    .map(|(u, v)| (u.as_str(), v.as_str()))
                    .collect();
                let net = TrafficNet::from_labels(&nodes, &edges)?;
                let commuters = agents
                    .iter()
                    .map(|c| {
                        Ok(Commuter { start: net.node_id(&c.start)?, dest: net.node_id(&c.dest)? })
                    })
                    .collect::<Result<Vec<_>, GameError>>()?;
                build_congestion_game(net, commuters, *eps_bar, *gamma)
            }
            GameSpec::CongestionReference { gamma, eps_bar } => {
                let (net, commuters) = congestion::reference_instance();
                build_congestion_game(net, commuters, *eps_bar, *gamma)
            }
            GameSpec::Explicit {
                graph,
                state_sizes,
                action_sizes,
                kappa_r,
                gamma,
                mu,
                kernels,
                rewards,
                reward_range,
            } => NetworkedGame::new(
                graph.clone(),
                state_sizes.clone(),
                action_sizes.clone(),
                *kappa_r,
                *gamma,
                mu.clone(),
                kernels.clone(),
                rewards.clone(),
                *reward_range,
            ),
        }
    }
}
