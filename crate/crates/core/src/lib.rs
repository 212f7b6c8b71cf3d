//! Networked multi-agent Markov games with localized learning.
//!
//! This crate models `n`-agent Markov games whose agents sit on the vertices
//! of an undirected communication graph. State transitions factor per agent,
//!
//! ```text
//! P(s' | s, a) = ∏_i P_i(s_i' | s_{N_i}, a_i),
//! ```
//!
//! rewards are κ_r-local (`r_i` reads only the states and actions of the
//! κ_r-hop neighborhood of agent `i`), and each agent runs a softmax policy
//! over its own local state. On top of that model the crate provides:
//!
//! * [`netgraph`] — the communication graph and hop-neighborhood queries;
//! * [`game`] — the game data model plus constructors for congestion
//!   (commuter) games and a four-agent chain game with a known closed-form
//!   objective;
//! * [`policy`] — softmax policy tables, score functions, ε-exploration;
//! * [`oracle`] — exact small-instance solvers: value functions, occupancy
//!   measures, exact policy gradients, best responses and Nash gaps,
//!   truncated value functions, state–action sub-chains, projected TD fixed
//!   points, and potential-game verification;
//! * [`critic`] — localized temporal-difference critics over truncated
//!   neighborhoods, with a generalized stochastic-approximation loop;
//! * [`actor`] — independent policy-gradient and localized actor–critic
//!   training loops;
//! * [`harness`] — experiment configs, regret series, deterministic seeded
//!   runs with CSV/JSON artifacts, and self-check suites.
//!
//! Numerical conventions used throughout:
//!
//! * agents, local states, actions, and graph vertices are 0-based indices;
//! * joint (global) states and actions are encoded in mixed radix with the
//!   **last agent varying fastest** (row-major over ascending agent index);
//! * discounted objectives use `J_i = E[Σ_t γ^t r_i(t)]` and the discounted
//!   visitation `d(s) = (1−γ) Σ_t γ^t Pr[s(t)=s]`.

pub mod actor;
pub mod critic;
pub mod game;
pub mod harness;
pub mod netgraph;
pub mod oracle;
pub mod policy;
