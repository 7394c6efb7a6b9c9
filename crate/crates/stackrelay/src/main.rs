//! Command-line front end: solve equilibria, train and evaluate policies,
//! run sweeps and comparisons, and audit the solvers against grids.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use stackrelay::baselines::{train_dqn, train_lgms};
use stackrelay::harness::{
    compare_settings, load_config, oracle_check, run_scenario, run_sweep, solve_draws,
    summarize_tests, write_metrics, write_oracle, write_solve, write_training_curve, Policy,
    ScenarioConfig,
};
use stackrelay::nn::save_checkpoint;
use stackrelay::rl::train::train;
use stackrelay::{Error, Result};

#[derive(Parser)]
#[command(
    name = "stackrelay",
    version,
    about = "Power pricing on two-hop relay networks: exact game solvers, \
             learned agents, baselines, and deterministic experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve both pricing regimes on each seed's first channel draw
    Solve(CommonArgs),
    /// Train a learning policy; write training curves and checkpoints
    Train(CommonArgs),
    /// Train if the policy learns, then evaluate without exploration
    Evaluate(CommonArgs),
    /// Run the sweep configured in [sweep] over every seed
    Sweep(CommonArgs),
    /// Compare alliance and competitive pricing on identical channel draws
    Compare(CommonArgs),
    /// Audit the exact solvers against brute-force action grids
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML scenario configuration file
    #[arg(long)]
    config: PathBuf,
    /// Run exactly this seed, overriding the configured list
    #[arg(long)]
    seed: Option<u64>,
    /// Run an inclusive seed range like 0..4, overriding the configured list
    #[arg(long)]
    seeds: Option<String>,
    /// Directory for CSV files and checkpoints
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the configured policy: gbs | lgms | dqn | random | proposed
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Stationary channel draws to audit
    #[arg(long, default_value_t = 100)]
    draws: usize,
    /// Price grid resolution
    #[arg(long, default_value_t = 1e-3)]
    c_step: f64,
    /// Power grid resolution
    #[arg(long, default_value_t = 1e-3)]
    p_step: f64,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::OracleCheck(args) => cmd_oracle_check(&args),
    }
}

/// Loads the config and applies command-line overrides.
fn load(args: &CommonArgs) -> Result<ScenarioConfig> {
    let mut cfg = load_config(&args.config)?;
    if args.seed.is_some() && args.seeds.is_some() {
        return Err(Error::Config("--seed and --seeds are mutually exclusive".to_string()));
    }
    if let Some(seed) = args.seed {
        cfg.run.seeds = vec![seed];
    }
    if let Some(range) = &args.seeds {
        cfg.run.seeds = parse_seed_range(range)?;
    }
    if let Some(policy) = &args.policy {
        cfg.run.policy = policy.parse()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses an inclusive seed range written `first..last`.
fn parse_seed_range(text: &str) -> Result<Vec<u64>> {
    let parse = |s: &str| -> Result<u64> {
        s.trim()
            .parse()
            .map_err(|_| Error::Config(format!("invalid seed {s:?} in range {text:?}")))
    };
    let (first, last) = text
        .split_once("..")
        .ok_or_else(|| Error::Config(format!("seed range {text:?} must look like 0..4")))?;
    let (first, last) = (parse(first)?, parse(last)?);
    if first > last {
        return Err(Error::Config(format!("seed range {text:?} is empty")));
    }
    Ok((first..=last).collect())
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn cmd_solve(args: &CommonArgs) -> Result<()> {
    let cfg = load(args)?;
    prepare_out(&args.out)?;
    let rows = solve_draws(&cfg)?;
    let path = args.out.join(format!("{}_solve.csv", cfg.run.id));
    write_solve(&path, &rows)?;
    for row in &rows {
        println!(
            "seed {:>3}  {:<11}  relay {}  price {:.6}  power {:.6}  u_relay {:.6}  \
             u_source {:.6}  capacity {:.6}{}",
            row.seed,
            row.mode,
            row.relay,
            row.price,
            row.power,
            row.u_relay,
            row.u_source,
            row.capacity,
            if row.cap_unbounded { "  (price cap outside box)" } else { "" },
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_train(args: &CommonArgs) -> Result<()> {
    let cfg = load(args)?;
    if !cfg.run.policy.is_learning() {
        return Err(Error::Config(format!(
            "policy {} does not train; choose proposed, lgms, or dqn",
            cfg.run.policy
        )));
    }
    prepare_out(&args.out)?;
    let params = cfg.channel_params();
    let game = cfg.game_config();
    let schedule = cfg.train_schedule();
    for &seed in &cfg.run.seeds {
        let stem = format!("{}_{}_seed{}", cfg.run.id, cfg.run.policy, seed);
        let curve = args.out.join(format!("{stem}_train.csv"));
        let save = |name: &str, net| -> Result<()> {
            save_checkpoint(net, args.out.join(format!("{stem}_{name}.txt")))
        };
        let log = match cfg.run.policy {
            Policy::Proposed => {
                let (agents, log) = train(&params, &game, &cfg.agent_config(), &schedule, seed)?;
                for (role, agent) in [("leader", &agents.leader), ("follower", &agents.follower)] {
                    save(&format!("{role}_actor"), &agent.actor)?;
                    save(&format!("{role}_actor_target"), &agent.target_actor)?;
                    save(&format!("{role}_critic"), &agent.critic)?;
                    save(&format!("{role}_critic_target"), &agent.target_critic)?;
                }
                log
            }
            Policy::Lgms => {
                let (leader, log) =
                    train_lgms(&params, &game, &cfg.agent_config(), &schedule, seed)?;
                save("leader_actor", &leader.actor)?;
                save("leader_actor_target", &leader.target_actor)?;
                save("leader_critic", &leader.critic)?;
                save("leader_critic_target", &leader.target_critic)?;
                log
            }
            Policy::Dqn => {
                let (agents, log) = train_dqn(&params, &game, &cfg.dqn_config(), &schedule, seed)?;
                save("leader_q", &agents.leader.q)?;
                save("leader_q_target", &agents.leader.target)?;
                save("follower_q", &agents.follower.q)?;
                save("follower_q_target", &agents.follower.target)?;
                log
            }
            Policy::Gbs | Policy::Random => unreachable!("rejected above"),
        };
        write_training_curve(&curve, &log)?;
        let last = log.episodes.last().expect("validated schedule has episodes");
        println!(
            "seed {:>3}  trained {} episodes  final mean capacity {:.6}  wrote {}",
            seed,
            log.episodes.len(),
            last.mean_capacity,
            curve.display(),
        );
    }
    Ok(())
}

fn cmd_evaluate(args: &CommonArgs) -> Result<()> {
    let cfg = load(args)?;
    prepare_out(&args.out)?;
    let rows = run_scenario(&cfg, 0.0)?;
    let stem = format!("{}_{}", cfg.run.id, cfg.run.policy);
    if !rows.train.is_empty() {
        let path = args.out.join(format!("{stem}_train.csv"));
        write_metrics(&path, &rows.train)?;
        println!("wrote {}", path.display());
    }
    let path = args.out.join(format!("{stem}_test.csv"));
    write_metrics(&path, &rows.test)?;
    println!("wrote {}", path.display());
    if let Some(summary) = summarize_tests(&rows.test) {
        println!("{summary}");
    }
    Ok(())
}

fn cmd_sweep(args: &CommonArgs) -> Result<()> {
    let cfg = load(args)?;
    prepare_out(&args.out)?;
    let report = run_sweep(&cfg)?;
    let stem = format!("{}_{}", cfg.run.id, cfg.run.policy);
    if !report.rows.train.is_empty() {
        let path = args.out.join(format!("{stem}_train.csv"));
        write_metrics(&path, &report.rows.train)?;
        println!("wrote {}", path.display());
    }
    let path = args.out.join(format!("{stem}_test.csv"));
    write_metrics(&path, &report.rows.test)?;
    println!("wrote {}", path.display());
    for (value, median) in report.values.iter().zip(&report.capacity_medians) {
        println!("value {:>8}: capacity median {:.6}", value, median);
    }
    println!(
        "capacity medians {} along the sweep",
        if report.monotone_capacity { "are non-decreasing" } else { "are NOT monotone" }
    );
    Ok(())
}

fn cmd_compare(args: &CommonArgs) -> Result<()> {
    let cfg = load(args)?;
    prepare_out(&args.out)?;
    let report = compare_settings(&cfg)?;
    let path = args.out.join(format!("{}_compare.csv", cfg.run.id));
    write_metrics(&path, &report.rows)?;
    for pair in report.rows.chunks(2) {
        println!(
            "p_s {:>6}  seed {:>3}  alliance u_relay {:.6} u_source {:.6}  |  \
             competitive u_relay {:.6} u_source {:.6}",
            pair[0].sweep_value,
            pair[0].seed,
            pair[0].mean_u_relay,
            pair[0].mean_u_source,
            pair[1].mean_u_relay,
            pair[1].mean_u_source,
        );
    }
    println!(
        "alliance revenue dominated on all {} draws; source preferred competition on {}",
        report.pairs, report.source_prefers_competition
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_oracle_check(args: &OracleArgs) -> Result<()> {
    let cfg = load(&args.common)?;
    prepare_out(&args.common.out)?;
    let params = cfg.channel_params();
    let game = cfg.game_config();
    let seed = cfg.run.seeds[0];
    let report = oracle_check(&params, &game, args.draws, args.c_step, args.p_step, seed)?;
    let path = args.common.out.join(format!("{}_oracle.csv", cfg.run.id));
    write_oracle(&path, &report)?;
    println!(
        "alliance:    max gap {:.3e} <= bound {:.3e} over {} draws",
        report.max_alliance_gap,
        report.alliance_bound,
        report.rows.len(),
    );
    println!(
        "competitive: max gap {:.3e} <= bound {:.3e} over {} draws",
        report.max_competitive_gap,
        report.competitive_bound,
        report.rows.len(),
    );
    println!("wrote {}", path.display());
    Ok(())
}
