//! Deterministic experiment execution and artifact persistence.
//!
//! One run = one config + one seed. Artifacts land in
//! `<out>/<name>/seed_<k>/`:
//!
//! * `config.json` — the exact configuration that produced the run;
//! * `metadata.json` — resolved settings, the evaluation schedule, status,
//!   final gap, wall clock;
//! * `regret.csv` — per evaluated iteration and agent: the equilibrium gap,
//!   the objective, and both prefix-regret curves (schema below);
//! * `checkpoints/checkpoint_<m>.json` — policy parameters at the
//!   checkpoint stride and the final iterate.
//!
//! A batch additionally writes `<out>/<name>/plotdata.csv` with the
//! mean/standard deviation across seeds of the two regret curves.
//!
//! Everything that lands in a CSV is a deterministic function of the
//! configuration and the seed, so re-running a seed reproduces the files
//! byte for byte.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{Algorithm, BrKind, Estimator, EvalConfig, ExperimentConfig};
use super::regret::RegretSeries;
use super::{HarnessError, THETA_STREAM};
use crate::actor::{ipg_exact, localized_actor_critic, ActorError, LearningLog};
use crate::game::NetworkedGame;
use crate::oracle::{marginal_ne_gap_global, ne_gap_global, BrMode, NeGap, ENUM_GUARD};
use crate::policy::{profile_from_theta, PolicyProfile, Theta};

/// Column order of `regret.csv`.
pub(crate) const REGRET_COLUMNS: [&str; 6] =
    ["m", "agent", "ne_gap", "j_i", "avg_regret_prefix", "nash_regret_prefix"];

/// Series tail tolerance of the marginal estimator's objective sums.
const MARGINAL_TOL: f64 = 1e-10;

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunStatus {
    /// All iterations and evaluations finished.
    Completed,
    /// A quantity left the finite range; the run stopped and was recorded.
    Diverged {
        /// Which quantity diverged.
        what: String,
        /// One-based outer iteration of the divergence.
        iteration: usize,
    },
}

/// The in-memory result of one seeded run.
#[derive(Debug)]
pub struct RunOutcome {
    /// Directory holding this run's artifacts.
    pub dir: PathBuf,
    /// The seed that produced it.
    pub seed: u64,
    /// Completion or recorded divergence.
    pub status: RunStatus,
    /// Gap series over the evaluation schedule (empty if diverged).
    pub series: RegretSeries,
    /// Per evaluated iteration, per agent: objective `J_i`.
    pub objectives: Vec<Vec<f64>>,
    /// Which estimator evaluated the gaps (`"oracle"` or `"marginal"`).
    pub estimator: &'static str,
    /// Global gap at the last evaluated iterate, if any.
    pub final_global_gap: Option<f64>,
    /// Wall-clock seconds for learning plus evaluation.
    pub wall_clock_secs: f64,
}

/// The result of running every seed of a config.
#[derive(Debug)]
pub struct BatchOutcome {
    /// `<out>/<name>`.
    pub batch_dir: PathBuf,
    /// Per-seed outcomes in the order of the seed list.
    pub runs: Vec<RunOutcome>,
    /// Cross-seed curve file, present when at least one run completed.
    pub plotdata: Option<PathBuf>,
    /// Whether every run completed without divergence.
    pub ok: bool,
}

/// Iterations at which gaps are evaluated: 0, every `stride`, and the last.
fn eval_points(m_total: usize, stride: usize) -> Vec<usize> {
    let mut points: Vec<usize> = (0..=m_total).step_by(stride.max(1)).collect();
    if points.last() != Some(&m_total) {
        points.push(m_total);
    }
    points
}

/// Whether the dense estimator's joint enumeration fits its guard.
fn enumeration_fits(game: &NetworkedGame) -> bool {
    let mut size: usize = 1;
    for &k in game.state_sizes().iter().chain(game.action_sizes()) {
        size = match size.checked_mul(k) {
            Some(v) if v <= ENUM_GUARD => v,
            _ => return false,
        };
    }
    true
}

/// The estimator [`evaluate_profile`] will actually use for this game.
pub(crate) fn effective_estimator(game: &NetworkedGame, eval: &EvalConfig) -> &'static str {
    match eval.estimator {
        Estimator::Oracle => "oracle",
        Estimator::Marginal => "marginal",
        Estimator::Auto => {
            if enumeration_fits(game) {
                "oracle"
            } else {
                "marginal"
            }
        }
    }
}

/// Evaluates every agent's equilibrium gap at `profile`.
///
/// Returns the per-agent gap records and the estimator label that produced
/// them. The dense path enumerates the joint space; the marginal path
/// propagates exact per-agent marginals (congestion games only).
///
/// # Errors
///
/// Estimator failures propagate; asking for `marginal` on a game without
/// congestion structure is rejected by the underlying routine.
pub fn evaluate_profile(
    game: &NetworkedGame,
    profile: &PolicyProfile,
    eval: &EvalConfig,
) -> Result<(Vec<NeGap>, &'static str), HarnessError> {
    let which = effective_estimator(game, eval);
    let gaps = match which {
        "marginal" => {
            marginal_ne_gap_global(game, profile, eval.br_restarts, eval.br_steps, MARGINAL_TOL)?.1
        }
        _ => {
            let mode = match eval.br_kind {
                BrKind::Local => {
                    BrMode::Local { restarts: eval.br_restarts, steps: eval.br_steps }
                }
                BrKind::Upper => BrMode::Upper,
            };
            ne_gap_global(game, profile, &mode)?.1
        }
    };
    Ok((gaps, which))
}

fn initial_theta(config: &ExperimentConfig, game: &NetworkedGame, seed: u64) -> Theta {
    if config.init_scale == 0.0 {
        Theta::zeros(game.state_sizes(), game.action_sizes())
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(THETA_STREAM);
        Theta::random(game.state_sizes(), game.action_sizes(), config.init_scale, &mut rng)
    }
}

fn float_cell(v: f64) -> String {
    // `Display` prints the shortest decimal that round-trips, so equal
    // floats yield byte-equal cells.
    format!("{v}")
}

fn write_regret_csv(
    path: &Path,
    series: &RegretSeries,
    objectives: &[Vec<f64>],
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REGRET_COLUMNS)?;
    for (k, &m) in series.iterations().iter().enumerate() {
        let nash_prefix = series.nash_regret(m)?;
        for agent in 0..series.n_agents() {
            let avg_prefix = series.avg_nash_regret(Some(agent), m)?;
            w.write_record([
                m.to_string(),
                agent.to_string(),
                float_cell(series.gaps_at(k)[agent]),
                float_cell(objectives[k][agent]),
                float_cell(avg_prefix),
                float_cell(nash_prefix),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_checkpoints(
    dir: &Path,
    log: &LearningLog,
    snapshot_every: usize,
) -> Result<(), HarnessError> {
    #[derive(Serialize)]
    struct Checkpoint<'a> {
        iteration: usize,
        theta: &'a Theta,
    }
    fs::create_dir_all(dir)?;
    let last = log.snapshots.last().map(|(m, _)| *m).unwrap_or(0);
    for (m, theta) in &log.snapshots {
        let keep = *m == last || (snapshot_every > 0 && *m % snapshot_every == 0);
        if !keep {
            continue;
        }
        let path = dir.join(format!("checkpoint_{m:06}.json"));
        fs::write(
            path,
            serde_json::to_string_pretty(&Checkpoint { iteration: *m, theta })?,
        )?;
    }
    Ok(())
}

/// Executes one seed of `config`, writing artifacts under
/// `out_root/<name>/seed_<k>/`.
///
/// Learning-loop divergence is recorded in the metadata and the outcome
/// (status `diverged`) instead of failing, so a batch continues past a bad
/// seed. All other errors abort.
///
/// # Errors
///
/// Configuration, estimator, and I/O failures.
pub fn run_experiment(
    config: &ExperimentConfig,
    seed: u64,
    out_root: &Path,
) -> Result<RunOutcome, HarnessError> {
    let (game, actor, warnings) = config.prepare()?;
    let start = Instant::now();
    let theta0 = initial_theta(config, &game, seed);

    // Snapshot every iterate; evaluation subsamples and checkpointing
    // filters to the configured strides.
    let trained = match config.algorithm {
        Algorithm::Ipg => ipg_exact(&game, &theta0, actor.beta, actor.m, 1),
        Algorithm::Lac => {
            localized_actor_critic(&game, &actor, config.features, &theta0, seed, 1)
        }
    };
    let (status, log) = match trained {
        Ok((_, log)) => (RunStatus::Completed, Some(log)),
        Err(ActorError::Diverged { what, iteration }) => {
            (RunStatus::Diverged { what: what.to_string(), iteration }, None)
        }
        Err(e) => return Err(e.into()),
    };

    let mut series = RegretSeries::new(game.n());
    let mut objectives: Vec<Vec<f64>> = Vec::new();
    let mut estimator = effective_estimator(&game, &config.eval);
    if let Some(log) = &log {
        for &m in &eval_points(actor.m, config.eval.stride) {
            let (m_logged, theta) = &log.snapshots[m];
            debug_assert_eq!(*m_logged, m);
            let profile = profile_from_theta(theta);
            let (gaps, which) = evaluate_profile(&game, &profile, &config.eval)?;
            estimator = which;
            series.push(m, gaps.iter().map(|g| g.gap).collect())?;
            objectives.push(gaps.iter().map(|g| g.objective).collect());
        }
    }

    let dir = out_root.join(&config.name).join(format!("seed_{seed:04}"));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(config)?)?;
    write_regret_csv(dir.join("regret.csv").as_path(), &series, &objectives)?;
    if let Some(log) = &log {
        write_checkpoints(&dir.join("checkpoints"), log, config.snapshot_every)?;
    }

    let final_global_gap = if series.is_empty() {
        None
    } else {
        Some(series.gaps_at(series.len() - 1).iter().copied().fold(0.0, f64::max))
    };
    let wall_clock_secs = start.elapsed().as_secs_f64();
    let metadata = serde_json::json!({
        "name": config.name,
        "seed": seed,
        "game": config.game.label(),
        "algorithm": config.algorithm,
        "estimator": estimator,
        "eval_stride": config.eval.stride,
        "br_restarts": config.eval.br_restarts,
        "br_steps": config.eval.br_steps,
        "br_kind": config.eval.br_kind,
        "beta_mode": config.beta_mode,
        "beta_resolved": actor.beta,
        "init_scale": config.init_scale,
        "snapshot_every": config.snapshot_every,
        "evaluated_iterations": series.iterations(),
        "regret_csv_columns": REGRET_COLUMNS,
        "status": status,
        "warnings": warnings,
        "final_global_gap": final_global_gap,
        "wall_clock_secs": wall_clock_secs,
    });
    fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&metadata)?)?;

    Ok(RunOutcome {
        dir,
        seed,
        status,
        series,
        objectives,
        estimator,
        final_global_gap,
        wall_clock_secs,
    })
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

fn write_plotdata(path: &Path, completed: &[&RunOutcome]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "m",
        "avg_nash_regret_mean",
        "avg_nash_regret_std",
        "nash_regret_mean",
        "nash_regret_std",
    ])?;
    let schedule = completed[0].series.iterations().to_vec();
    for &m in &schedule {
        let avg: Vec<f64> = completed
            .iter()
            .map(|r| r.series.avg_nash_regret(None, m))
            .collect::<Result<_, _>>()?;
        let nash: Vec<f64> =
            completed.iter().map(|r| r.series.nash_regret(m)).collect::<Result<_, _>>()?;
        let avg_mean = avg.iter().sum::<f64>() / avg.len() as f64;
        let nash_mean = nash.iter().sum::<f64>() / nash.len() as f64;
        w.write_record([
            m.to_string(),
            float_cell(avg_mean),
            float_cell(sample_std(&avg, avg_mean)),
            float_cell(nash_mean),
            float_cell(sample_std(&nash, nash_mean)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every seed of `config` and aggregates the cross-seed curves.
///
/// # Errors
///
/// Per-run errors abort the batch (a recorded divergence does not).
pub fn run_batch(config: &ExperimentConfig, out_root: &Path) -> Result<BatchOutcome, HarnessError> {
    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        runs.push(run_experiment(config, seed, out_root)?);
    }
    let batch_dir = out_root.join(&config.name);
    let completed: Vec<&RunOutcome> =
        runs.iter().filter(|r| r.status == RunStatus::Completed).collect();
    let plotdata = if completed.is_empty() {
        None
    } else {
        let path = batch_dir.join("plotdata.csv");
        write_plotdata(&path, &completed)?;
        Some(path)
    };
    let ok = completed.len() == runs.len();
    Ok(BatchOutcome { batch_dir, runs, plotdata, ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::fixtures::two_commuter_game;
    use crate::harness::config::GameSpec;
    use crate::policy::Theta;
    use rand::SeedableRng;

    fn tiny_chain_config() -> ExperimentConfig {
        // Re-use the config fixture from the config tests.
        crate::harness::config::tests::tiny_chain_config()
    }

    #[test]
    fn evaluation_schedule_includes_endpoints() {
        assert_eq!(eval_points(0, 1), vec![0]);
        assert_eq!(eval_points(5, 1), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(eval_points(10, 4), vec![0, 4, 8, 10]);
        assert_eq!(eval_points(8, 4), vec![0, 4, 8]);
        assert_eq!(eval_points(3, 100), vec![0, 3]);
    }

    #[test]
    fn estimator_selection_respects_the_guard() {
        let chain = GameSpec::Chain { gamma: 0.5 }.build().unwrap();
        let eval = EvalConfig::default();
        assert_eq!(effective_estimator(&chain, &eval), "oracle");

        let big = GameSpec::CongestionBenchmark { gamma: 0.7, eps_bar: 0.5 }.build().unwrap();
        assert_eq!(effective_estimator(&big, &eval), "marginal");

        let forced = EvalConfig { estimator: Estimator::Marginal, ..eval };
        let small = GameSpec::TwoCommuter { gamma: 0.9, eps_bar: 0.5 }.build().unwrap();
        assert_eq!(effective_estimator(&small, &forced), "marginal");
    }

    #[test]
    fn dense_and_marginal_gap_estimates_agree_on_a_small_congestion_game() {
        let game = two_commuter_game(0.5, 0.9);
        let theta = Theta::random(
            game.state_sizes(),
            game.action_sizes(),
            0.6,
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(15),
        );
        let profile = profile_from_theta(&theta);
        let eval = EvalConfig { br_restarts: 3, br_steps: 200, ..EvalConfig::default() };
        let (dense, _) =
            evaluate_profile(&game, &profile, &EvalConfig { estimator: Estimator::Oracle, ..eval })
                .unwrap();
        let (marginal, _) = evaluate_profile(
            &game,
            &profile,
            &EvalConfig { estimator: Estimator::Marginal, ..eval },
        )
        .unwrap();
        for (d, m) in dense.iter().zip(&marginal) {
            assert!(
                (d.objective - m.objective).abs() <= 1e-8,
                "objectives disagree: {} vs {}",
                d.objective,
                m.objective
            );
            assert!(
                (d.gap - m.gap).abs() <= 1e-6,
                "gaps disagree: {} vs {}",
                d.gap,
                m.gap
            );
        }
    }

    #[test]
    fn a_run_writes_the_complete_artifact_set() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny_chain_config();
        let outcome = run_experiment(&cfg, 0, tmp.path()).unwrap();
        assert_eq!(outcome.status, RunStatus::Completed);
        assert_eq!(outcome.estimator, "oracle");
        assert_eq!(outcome.series.iterations(), &[0, 1, 2]);
        assert_eq!(outcome.objectives.len(), 3);

        let dir = &outcome.dir;
        assert!(dir.ends_with("chain-smoke/seed_0000"));
        for f in ["config.json", "metadata.json", "regret.csv"] {
            assert!(dir.join(f).is_file(), "missing {f}");
        }
        // snapshot_every = 0 keeps only the final checkpoint.
        let checkpoints: Vec<_> = std::fs::read_dir(dir.join("checkpoints"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(checkpoints, vec!["checkpoint_000002.json"]);

        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("metadata.json")).unwrap())
                .unwrap();
        assert_eq!(meta["seed"], 0);
        assert_eq!(meta["status"]["status"], "completed");
        assert_eq!(meta["evaluated_iterations"], serde_json::json!([0, 1, 2]));

        // The regret CSV prefix columns must match the series arithmetic.
        let text = std::fs::read_to_string(dir.join("regret.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), REGRET_COLUMNS.join(","));
        for line in lines {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells.len(), 6);
            let m: usize = cells[0].parse().unwrap();
            let agent: usize = cells[1].parse().unwrap();
            let avg: f64 = cells[4].parse().unwrap();
            let nash: f64 = cells[5].parse().unwrap();
            assert_eq!(avg, outcome.series.avg_nash_regret(Some(agent), m).unwrap());
            assert_eq!(nash, outcome.series.nash_regret(m).unwrap());
        }
    }

    #[test]
    fn reruns_reproduce_csv_bytes_and_batches_aggregate() {
        let tmp_a = tempfile::tempdir().unwrap();
        let tmp_b = tempfile::tempdir().unwrap();
        let mut cfg = tiny_chain_config();
        cfg.seeds = vec![0, 1];
        cfg.init_scale = 0.4;
        cfg.algorithm = Algorithm::Lac;

        let batch_a = run_batch(&cfg, tmp_a.path()).unwrap();
        let batch_b = run_batch(&cfg, tmp_b.path()).unwrap();
        assert!(batch_a.ok && batch_b.ok);
        assert_eq!(batch_a.runs.len(), 2);

        for (ra, rb) in batch_a.runs.iter().zip(&batch_b.runs) {
            let bytes_a = std::fs::read(ra.dir.join("regret.csv")).unwrap();
            let bytes_b = std::fs::read(rb.dir.join("regret.csv")).unwrap();
            assert_eq!(bytes_a, bytes_b, "seed {} CSV not reproducible", ra.seed);
        }
        let plot_a = std::fs::read(batch_a.plotdata.unwrap()).unwrap();
        let plot_b = std::fs::read(batch_b.plotdata.unwrap()).unwrap();
        assert_eq!(plot_a, plot_b);

        // Different seeds explore differently.
        let a0 = std::fs::read(batch_a.runs[0].dir.join("regret.csv")).unwrap();
        let a1 = std::fs::read(batch_a.runs[1].dir.join("regret.csv")).unwrap();
        assert_ne!(a0, a1);
    }

    #[test]
    fn plotdata_matches_the_series_statistics() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny_chain_config();
        cfg.seeds = vec![0, 1, 2];
        cfg.init_scale = 0.4;
        let batch = run_batch(&cfg, tmp.path()).unwrap();
        let text = std::fs::read_to_string(batch.plotdata.unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "m,avg_nash_regret_mean,avg_nash_regret_std,nash_regret_mean,nash_regret_std"
        );
        for line in lines {
            let cells: Vec<&str> = line.split(',').collect();
            let m: usize = cells[0].parse().unwrap();
            let avg: Vec<f64> = batch
                .runs
                .iter()
                .map(|r| r.series.avg_nash_regret(None, m).unwrap())
                .collect();
            let mean = avg.iter().sum::<f64>() / avg.len() as f64;
            let got: f64 = cells[1].parse().unwrap();
            assert_eq!(got, mean);
            let std: f64 = cells[2].parse().unwrap();
            assert_eq!(std, sample_std(&avg, mean));
        }
    }

    #[test]
    fn checkpoints_follow_the_snapshot_stride_and_reload() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny_chain_config();
        cfg.actor.m = 5;
        cfg.snapshot_every = 2;
        let outcome = run_experiment(&cfg, 3, tmp.path()).unwrap();
        let mut names: Vec<_> = std::fs::read_dir(outcome.dir.join("checkpoints"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(
            names,
            vec![
                "checkpoint_000000.json",
                "checkpoint_000002.json",
                "checkpoint_000004.json",
                "checkpoint_000005.json"
            ]
        );
        let value: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(outcome.dir.join("checkpoints/checkpoint_000005.json"))
                .unwrap(),
        )
        .unwrap();
        assert_eq!(value["iteration"], 5);
        let theta: Theta = serde_json::from_value(value["theta"].clone()).unwrap();
        assert_eq!(theta.tables.len(), 4);
    }
}
