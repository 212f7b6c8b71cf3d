//! JSON experiment configuration.
//!
//! A configuration names a game, an algorithm, the actor/critic
//! hyperparameters, an evaluation schedule, and a seed batch. Unknown keys
//! are rejected everywhere so a typo cannot silently fall back to a
//! default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::actor::{default_beta, ActorConfig, BetaMode};
use crate::critic::FeatureMode;
use crate::game::congestion::{build_congestion_game, reference_instance};
use crate::game::fixtures::{three_commuter_game, two_commuter_game};
use crate::game::{chain::build_chain_example, NetworkedGame};

/// Which game a run is played on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GameSpec {
    /// Four agents on a path; only the last agent ever earns reward, with a
    /// closed-form objective. The canonical local-but-not-global potential
    /// example.
    Chain {
        /// Discount factor in `[0, 1)`.
        gamma: f64,
    },
    /// Two commuters sharing one edge of a four-node road network.
    TwoCommuter {
        /// Discount factor in `[0, 1)`.
        gamma: f64,
        /// Per-step travelling penalty, strictly positive.
        eps_bar: f64,
    },
    /// Three commuters on an eight-node road network.
    ThreeCommuter {
        /// Discount factor in `[0, 1)`.
        gamma: f64,
        /// Per-step travelling penalty, strictly positive.
        eps_bar: f64,
    },
    /// The 12-commuter benchmark network (four origins, three relay nodes,
    /// one shared destination).
    CongestionBenchmark {
        /// Discount factor in `[0, 1)`.
        gamma: f64,
        /// Per-step travelling penalty, strictly positive.
        eps_bar: f64,
    },
}

impl GameSpec {
    /// The discount factor of the spec.
    pub fn gamma(&self) -> f64 {
        match *self {
            GameSpec::Chain { gamma }
            | GameSpec::TwoCommuter { gamma, .. }
            | GameSpec::ThreeCommuter { gamma, .. }
            | GameSpec::CongestionBenchmark { gamma, .. } => gamma,
        }
    }

    /// Whether the game has congestion structure (marginal evaluation
    /// applies).
    pub fn is_congestion(&self) -> bool {
        !matches!(self, GameSpec::Chain { .. })
    }

    /// A short label for metadata and directory names.
    pub fn label(&self) -> &'static str {
        match self {
            GameSpec::Chain { .. } => "chain",
            GameSpec::TwoCommuter { .. } => "two-commuter",
            GameSpec::ThreeCommuter { .. } => "three-commuter",
            GameSpec::CongestionBenchmark { .. } => "congestion-benchmark",
        }
    }

    fn check_params(&self) -> Result<(), HarnessError> {
        let gamma = self.gamma();
        if !(0.0..1.0).contains(&gamma) {
            return Err(HarnessError::Config(format!(
                "gamma must lie in [0, 1), got {gamma}"
            )));
        }
        match *self {
            GameSpec::Chain { .. } => Ok(()),
            GameSpec::TwoCommuter { eps_bar, .. }
            | GameSpec::ThreeCommuter { eps_bar, .. }
            | GameSpec::CongestionBenchmark { eps_bar, .. } => {
                if eps_bar > 0.0 && eps_bar.is_finite() {
                    Ok(())
                } else {
                    Err(HarnessError::Config(format!(
                        "eps_bar must be positive and finite, got {eps_bar}"
                    )))
                }
            }
        }
    }

    /// Builds the configured game.
    ///
    /// # Errors
    ///
    /// [`HarnessError::Config`] for out-of-range parameters and
    /// [`HarnessError::Game`] if construction fails.
    pub fn build(&self) -> Result<NetworkedGame, HarnessError> {
        self.check_params()?;
        match *self {
            GameSpec::Chain { gamma } => Ok(build_chain_example(gamma)?.0),
            GameSpec::TwoCommuter { gamma, eps_bar } => Ok(two_commuter_game(eps_bar, gamma)),
            GameSpec::ThreeCommuter { gamma, eps_bar } => Ok(three_commuter_game(eps_bar, gamma)),
            GameSpec::CongestionBenchmark { gamma, eps_bar } => {
                let (traffic, commuters) = reference_instance();
                Ok(build_congestion_game(traffic, commuters, eps_bar, gamma)?)
            }
        }
    }
}

/// Which learning loop a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Exact independent policy gradient (dense solver per iteration).
    Ipg,
    /// Sample-based localized actor-critic.
    Lac,
}

/// How equilibrium gaps are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Dense enumeration when it fits the guard, otherwise the marginal
    /// fast path (congestion games only).
    Auto,
    /// Dense enumeration over the global state–action space.
    Oracle,
    /// Exact per-agent marginal propagation; requires congestion structure.
    Marginal,
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::Auto
    }
}

/// Best-response routine used inside the dense gap estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BrKind {
    /// Gradient ascent over the deviator's own softmax parameters (same
    /// policy class as the learner), with restarts and a greedy polish.
    Local,
    /// Full-observation value-iteration upper bound.
    Upper,
}

impl Default for BrKind {
    fn default() -> Self {
        BrKind::Local
    }
}

fn default_stride() -> usize {
    1
}

fn default_br_restarts() -> usize {
    5
}

fn default_br_steps() -> usize {
    300
}

/// Gap-evaluation schedule and best-response effort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Evaluate gaps every `stride` outer iterations (plus iteration 0 and
    /// the final one).
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Gap estimator selection.
    #[serde(default)]
    pub estimator: Estimator,
    /// Best-response ascent restarts.
    #[serde(default = "default_br_restarts")]
    pub br_restarts: usize,
    /// Best-response ascent steps per restart.
    #[serde(default = "default_br_steps")]
    pub br_steps: usize,
    /// Dense best-response routine ([`BrKind::Local`] matches the policy
    /// class; the marginal estimator always uses its local ascent).
    #[serde(default)]
    pub br_kind: BrKind,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            stride: default_stride(),
            estimator: Estimator::Auto,
            br_restarts: default_br_restarts(),
            br_steps: default_br_steps(),
            br_kind: BrKind::Local,
        }
    }
}

fn default_features() -> FeatureMode {
    FeatureMode::Tabular
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// A complete experiment: game, algorithm, hyperparameters, evaluation
/// schedule, seeds, and output placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Directory stem for the batch (`<out>/<name>/seed_<k>/…`).
    pub name: String,
    /// The game to play.
    pub game: GameSpec,
    /// The learning loop to run.
    pub algorithm: Algorithm,
    /// Actor/critic hyperparameters (the critic part is ignored by
    /// [`Algorithm::Ipg`]).
    pub actor: ActorConfig,
    /// Critic feature construction.
    #[serde(default = "default_features")]
    pub features: FeatureMode,
    /// Step-size schedule; non-literal modes overwrite `actor.beta` at run
    /// time from the game's discount and neighbourhood size.
    #[serde(default)]
    pub beta_mode: BetaMode,
    /// Gap-evaluation schedule.
    #[serde(default)]
    pub eval: EvalConfig,
    /// Seeds to run; each seed is an independent deterministic run.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Standard deviation of the Gaussian initial parameters (0 starts from
    /// the uniform policy).
    #[serde(default)]
    pub init_scale: f64,
    /// Write a parameter checkpoint every this many iterations (0 = only
    /// the final one).
    #[serde(default)]
    pub snapshot_every: usize,
    /// Output root override; the CLI flag and the `NETMARL_OUT` environment
    /// variable take and give precedence respectively.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses a configuration from JSON text.
    ///
    /// # Errors
    ///
    /// [`HarnessError::Json`] on malformed or unknown-key input.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Loads a configuration from a JSON file.
    ///
    /// # Errors
    ///
    /// I/O and JSON errors.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The step size the run will actually use, resolving the schedule
    /// against the game.
    pub fn resolved_beta(&self, game: &NetworkedGame) -> f64 {
        default_beta(game, self.actor.kappa_g, self.beta_mode).unwrap_or(self.actor.beta)
    }

    /// Validates the configuration, builds the game, and resolves the step
    /// size.
    ///
    /// Returns the game, the actor configuration with `beta` resolved, and
    /// advisory warnings.
    ///
    /// # Errors
    ///
    /// [`HarnessError::Config`] for structural problems; game and actor
    /// validation errors propagate.
    pub fn prepare(&self) -> Result<(NetworkedGame, ActorConfig, Vec<String>), HarnessError> {
        if self.name.is_empty()
            || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            || self.name.starts_with('.')
        {
            return Err(HarnessError::Config(format!(
                "name `{}` must be non-empty, use only [A-Za-z0-9._-], and not start with a dot",
                self.name
            )));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must not be empty".into()));
        }
        if self.eval.stride == 0 {
            return Err(HarnessError::Config("eval.stride must be at least 1".into()));
        }
        if self.eval.br_restarts == 0 || self.eval.br_steps == 0 {
            return Err(HarnessError::Config(
                "eval.br_restarts and eval.br_steps must be at least 1".into(),
            ));
        }
        if !self.init_scale.is_finite() || self.init_scale < 0.0 {
            return Err(HarnessError::Config(format!(
                "init_scale must be finite and non-negative, got {}",
                self.init_scale
            )));
        }
        if self.eval.estimator == Estimator::Marginal && !self.game.is_congestion() {
            return Err(HarnessError::Config(
                "the marginal estimator requires a congestion game".into(),
            ));
        }
        let game = self.game.build()?;
        let mut actor = self.actor.clone();
        actor.beta = self.resolved_beta(&game);
        if !actor.beta.is_finite() || actor.beta <= 0.0 {
            return Err(HarnessError::Config(format!(
                "resolved step size must be positive and finite, got {}",
                actor.beta
            )));
        }
        let warnings = match self.algorithm {
            Algorithm::Lac => actor.validate(&game)?,
            // The exact loop ignores the sampling and critic settings.
            Algorithm::Ipg => Vec::new(),
        };
        Ok((game, actor, warnings))
    }
}

/// Parses a seed list: `"7"`, `"0,2,5"`, or the inclusive range `"0..9"`
/// (which yields the ten seeds 0–9).
///
/// # Errors
///
/// [`HarnessError::Config`] on malformed input or a reversed range.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, HarnessError> {
    let text = text.trim();
    let bad = |detail: &str| {
        HarnessError::Config(format!(
            "cannot parse seeds `{text}`: {detail}; use N, N,M,…, or LO..HI (inclusive)"
        ))
    };
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad("bad range start"))?;
        let hi: u64 = hi.trim().parse().map_err(|_| bad("bad range end"))?;
        if lo > hi {
            return Err(bad("range start exceeds end"));
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|part| part.trim().parse::<u64>().map_err(|_| bad("bad number")))
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::critic::CriticConfig;

    pub(crate) fn tiny_chain_config() -> ExperimentConfig {
        ExperimentConfig {
            name: "chain-smoke".into(),
            game: GameSpec::Chain { gamma: 0.5 },
            algorithm: Algorithm::Ipg,
            actor: ActorConfig {
                m: 2,
                t: 1,
                h: 10,
                beta: 0.05,
                kappa_g: 1,
                kappa_c: 1,
                critic: CriticConfig { k: 50, alpha: 0.02, lambda: 0.0, eps: 0.2, kappa_c: 1 },
            },
            features: FeatureMode::Tabular,
            beta_mode: BetaMode::Literal,
            eval: EvalConfig { stride: 1, br_restarts: 2, br_steps: 60, ..EvalConfig::default() },
            seeds: vec![0],
            init_scale: 0.0,
            snapshot_every: 0,
            out_dir: None,
        }
    }

    #[test]
    fn seed_lists_parse_in_all_three_forms() {
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert_eq!(parse_seeds("1, 3,5").unwrap(), vec![1, 3, 5]);
        assert_eq!(parse_seeds("0..9").unwrap(), (0..=9).collect::<Vec<_>>());
        assert_eq!(parse_seeds(" 4..4 ").unwrap(), vec![4]);
        assert!(parse_seeds("9..0").is_err());
        assert!(parse_seeds("a,b").is_err());
        assert!(parse_seeds("").is_err());
    }

    #[test]
    fn json_round_trips_and_unknown_keys_are_rejected() {
        let cfg = tiny_chain_config();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg, back);

        let with_typo = text.replace("\"stride\"", "\"strode\"");
        assert!(ExperimentConfig::from_json(&with_typo).is_err());
        let with_extra = text.replacen('{', "{\"surprise\": 1,", 1);
        assert!(ExperimentConfig::from_json(&with_extra).is_err());
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let text = r#"{
            "name": "minimal",
            "game": {"kind": "chain", "gamma": 0.5},
            "algorithm": "ipg",
            "actor": {"m": 1, "t": 1, "h": 5, "beta": 0.01, "kappa_g": 1, "kappa_c": 1,
                      "critic": {"k": 10, "alpha": 0.01, "lambda": 0.0, "eps": 0.1, "kappa_c": 1}}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.eval, EvalConfig::default());
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.beta_mode, BetaMode::Literal);
        assert_eq!(cfg.features, FeatureMode::Tabular);
        assert_eq!(cfg.init_scale, 0.0);
        assert!(cfg.prepare().is_ok());
    }

    #[test]
    fn prepare_rejects_structural_problems() {
        let base = tiny_chain_config();

        let mut c = base.clone();
        c.name = "has/slash".into();
        assert!(matches!(c.prepare(), Err(HarnessError::Config(_))));
        let mut c = base.clone();
        c.name = "..".into();
        assert!(matches!(c.prepare(), Err(HarnessError::Config(_))));
        let mut c = base.clone();
        c.seeds.clear();
        assert!(matches!(c.prepare(), Err(HarnessError::Config(_))));
        let mut c = base.clone();
        c.eval.stride = 0;
        assert!(matches!(c.prepare(), Err(HarnessError::Config(_))));
        let mut c = base.clone();
        c.init_scale = -1.0;
        assert!(matches!(c.prepare(), Err(HarnessError::Config(_))));
        let mut c = base.clone();
        c.eval.estimator = Estimator::Marginal;
        assert!(matches!(c.prepare(), Err(HarnessError::Config(_))));
        let mut c = base.clone();
        c.game = GameSpec::Chain { gamma: 1.0 };
        assert!(matches!(c.prepare(), Err(HarnessError::Config(_))));
        let mut c = base.clone();
        c.game = GameSpec::TwoCommuter { gamma: 0.9, eps_bar: 0.0 };
        assert!(matches!(c.prepare(), Err(HarnessError::Config(_))));

        // A lac config is vetted through the full actor validation.
        let mut c = base;
        c.algorithm = Algorithm::Lac;
        c.actor.t = 0;
        assert!(c.prepare().is_err());
    }

    #[test]
    fn named_schedules_overwrite_the_literal_step() {
        let mut cfg = tiny_chain_config();
        cfg.beta_mode = BetaMode::PaperExact;
        let (game, actor, _) = cfg.prepare().unwrap();
        let expected = (1.0 - 0.5f64).powi(3) / (6.0 * 3.0);
        assert!((actor.beta - expected).abs() < 1e-15);
        assert!((cfg.resolved_beta(&game) - expected).abs() < 1e-15);
        cfg.beta_mode = BetaMode::Literal;
        assert_eq!(cfg.resolved_beta(&game), 0.05);
    }

    #[test]
    fn every_game_spec_builds() {
        for spec in [
            GameSpec::Chain { gamma: 0.5 },
            GameSpec::TwoCommuter { gamma: 0.9, eps_bar: 0.5 },
            GameSpec::ThreeCommuter { gamma: 0.9, eps_bar: 0.25 },
            GameSpec::CongestionBenchmark { gamma: 0.7, eps_bar: 0.5 },
        ] {
            let game = spec.build().unwrap();
            assert!(game.n() >= 2);
            assert_eq!(spec.is_congestion(), spec.label() != "chain");
        }
    }
}
