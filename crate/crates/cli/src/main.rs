//! Command-line driver: `run` trains from a JSON experiment description,
//! `eval` re-scores a saved checkpoint, `check` executes a named self-check
//! suite. All output is JSON on stdout; the exit code is 0 exactly when
//! every requested run completed (or every check passed).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use netmarl::actor::BetaMode;
use netmarl::harness::{evaluate_profile, run_batch, run_check, ExperimentConfig, SUITES};
use netmarl::policy::{profile_from_theta, Theta};

/// Environment variable naming the default output root for `run`.
const OUT_ENV: &str = "NETMARL_OUT";

#[derive(Parser)]
#[command(name = "netmarl", version, about = "Networked multi-agent learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train per the JSON config and write run artifacts per seed.
    Run(RunArgs),
    /// Evaluate equilibrium gaps of a saved parameter checkpoint.
    Eval(EvalArgs),
    /// Run a named self-check suite (or `all`) and print its report.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment description (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Seeds overriding the config: `7`, `1,3,5`, or an inclusive `0..9`.
    #[arg(long)]
    seeds: Option<String>,
    /// Output root (falls back to the config's `out_dir`, then $NETMARL_OUT,
    /// then `runs`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override: outer policy iterations.
    #[arg(long = "M", value_name = "M")]
    m: Option<usize>,
    /// Override: gradient rollouts per iteration.
    #[arg(long = "T", value_name = "T")]
    t: Option<usize>,
    /// Override: rollout horizon.
    #[arg(long = "H", value_name = "H")]
    h: Option<usize>,
    /// Override: literal policy step size.
    #[arg(long)]
    beta: Option<f64>,
    /// Step-size schedule: paper-exact, paper-approx, or literal.
    #[arg(long = "beta-mode", value_name = "MODE")]
    beta_mode: Option<String>,
    /// Override: critic trajectory length.
    #[arg(long = "K", value_name = "K")]
    k: Option<usize>,
    /// Override: critic step size.
    #[arg(long)]
    alpha: Option<f64>,
    /// Override: critic eligibility-trace decay.
    #[arg(long)]
    lambda: Option<f64>,
    /// Override: critic exploration mix.
    #[arg(long)]
    eps: Option<f64>,
    /// Override: observation window radius (actor and critic share it).
    #[arg(long = "kappa-c")]
    kappa_c: Option<usize>,
    /// Override: checkpoint stride (0 = final only).
    #[arg(long = "snapshot-every")]
    snapshot_every: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Parameter checkpoint written by `run` (`checkpoint_*.json`).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Experiment description supplying the game and evaluation settings.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// Suite name, or `all` for every suite.
    #[arg(long)]
    suite: String,
}

fn parse_beta_mode(s: &str) -> anyhow::Result<BetaMode> {
    match s {
        "paper-exact" => Ok(BetaMode::PaperExact),
        "paper-approx" => Ok(BetaMode::PaperApprox),
        "literal" => Ok(BetaMode::Literal),
        other => anyhow::bail!(
            "unknown step-size mode `{other}` (expected paper-exact, paper-approx, or literal)"
        ),
    }
}

fn apply_overrides(config: &mut ExperimentConfig, args: &RunArgs) -> anyhow::Result<()> {
    if let Some(seeds) = &args.seeds {
        config.seeds = netmarl::harness::parse_seeds(seeds)?;
    }
    if let Some(m) = args.m {
        config.actor.m = m;
    }
    if let Some(t) = args.t {
        config.actor.t = t;
    }
    if let Some(h) = args.h {
        config.actor.h = h;
    }
    if let Some(beta) = args.beta {
        config.actor.beta = beta;
    }
    if let Some(mode) = &args.beta_mode {
        config.beta_mode = parse_beta_mode(mode)?;
    }
    if let Some(k) = args.k {
        config.actor.critic.k = k;
    }
    if let Some(alpha) = args.alpha {
        config.actor.critic.alpha = alpha;
    }
    if let Some(lambda) = args.lambda {
        config.actor.critic.lambda = lambda;
    }
    if let Some(eps) = args.eps {
        config.actor.critic.eps = eps;
    }
    if let Some(kappa_c) = args.kappa_c {
        config.actor.kappa_c = kappa_c;
        config.actor.critic.kappa_c = kappa_c;
    }
    if let Some(every) = args.snapshot_every {
        config.snapshot_every = every;
    }
    Ok(())
}

fn out_root(cli: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = cli {
        return dir.to_path_buf();
    }
    if let Some(dir) = &config.out_dir {
        return dir.clone();
    }
    if let Some(dir) = std::env::var_os(OUT_ENV) {
        return PathBuf::from(dir);
    }
    PathBuf::from("runs")
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<bool> {
    let mut config = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    apply_overrides(&mut config, args)?;
    let root = out_root(args.out.as_deref(), &config);
    let batch = run_batch(&config, &root)?;
    let runs: Vec<_> = batch
        .runs
        .iter()
        .map(|r| {
            serde_json::json!({
                "seed": r.seed,
                "status": r.status,
                "estimator": r.estimator,
                "final_global_gap": r.final_global_gap,
                "wall_clock_secs": r.wall_clock_secs,
                "dir": r.dir,
            })
        })
        .collect();
    let summary = serde_json::json!({
        "batch_dir": batch.batch_dir,
        "ok": batch.ok,
        "plotdata": batch.plotdata,
        "runs": runs,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(batch.ok)
}

fn cmd_eval(args: &EvalArgs) -> anyhow::Result<bool> {
    let config = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let (game, _, _) = config.prepare()?;
    let raw = std::fs::read_to_string(&args.checkpoint)
        .with_context(|| format!("reading {}", args.checkpoint.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&raw)?;
    let theta: Theta = serde_json::from_value(
        doc.get("theta").cloned().context("checkpoint has no `theta` field")?,
    )
    .context("checkpoint `theta` does not match the expected layout")?;
    let profile = profile_from_theta(&theta);
    let (gaps, estimator) = evaluate_profile(&game, &profile, &config.eval)?;
    let global = gaps.iter().map(|g| g.gap).fold(0.0f64, f64::max);
    let per_agent: Vec<_> = gaps
        .iter()
        .enumerate()
        .map(|(i, g)| {
            serde_json::json!({
                "agent": i,
                "objective": g.objective,
                "best_response": g.best_response,
                "gap": g.gap,
            })
        })
        .collect();
    let report = serde_json::json!({
        "checkpoint": args.checkpoint,
        "iteration": doc.get("iteration"),
        "estimator": estimator,
        "global_gap": global,
        "agents": per_agent,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(true)
}

fn cmd_check(args: &CheckArgs) -> anyhow::Result<bool> {
    if args.suite == "all" {
        let reports =
            SUITES.iter().map(|s| run_check(s)).collect::<Result<Vec<_>, _>>()?;
        let ok = reports.iter().all(|r| r.pass);
        println!("{}", serde_json::to_string_pretty(&reports)?);
        return Ok(ok);
    }
    let report = run_check(&args.suite)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Check(args) => cmd_check(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
