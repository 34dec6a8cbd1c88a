use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use healrl::agents::{train_dqn, train_ppo, Agent, AgentKind, ReplayBuffer};
use healrl::envs::drift::{load_drifts, save_drifts};
use healrl::envs::{evaluate, is_solved, sample_drifts, EnvKind, EnvSpec, Intensity};
use healrl::harness::config::{documented_default, Config};
use healrl::harness::records::read_summaries;
use healrl::harness::report::render_report;
use healrl::harness::run_experiment;
use healrl::healing::{heal_drdrl, heal_vanilla_cl, HealMethod};
use healrl::seed;
use healrl::tracing::{collect_observations, compute_agent_trace, TraceSet};

#[derive(Parser)]
#[command(name = "healrl", version, about = "Self-healing deep reinforcement learning")]
struct Cli {
    /// TOML config; defaults apply to every key it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the default config with every key documented.
    Config,
    /// Train an agent on the original environment; writes agent.bin,
    /// trace.bin and, for DQN, replay.bin.
    Train(TrainArgs),
    /// Sample drifted environments into a TOML file.
    Drift(DriftArgs),
    /// Heal a trained agent on one drifted environment.
    Heal(HealArgs),
    /// Mean greedy return of an agent on the original or a drifted env.
    Evaluate(EvaluateArgs),
    /// Run the full comparison matrix and write CSV artifacts.
    Compare(CompareArgs),
    /// Render the comparison tables from a summary.csv.
    Report(ReportArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    env: EnvKind,
    #[arg(long)]
    agent: AgentKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DriftArgs {
    #[arg(long)]
    env: EnvKind,
    /// Defaults to `drift.count`.
    #[arg(long)]
    count: Option<usize>,
    /// Defaults to `drift.intensity`.
    #[arg(long)]
    intensity: Option<Intensity>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DriftTarget {
    /// Drift file from `healrl drift`; the original env is used without it.
    #[arg(long)]
    drifts: Option<PathBuf>,
    /// Which drift of the file.
    #[arg(long, default_value_t = 0)]
    index: usize,
}

impl DriftTarget {
    fn spec(&self, kind: EnvKind) -> Result<EnvSpec> {
        let original = EnvSpec::new(kind);
        let Some(path) = &self.drifts else { return Ok(original) };
        let drifts = load_drifts(path).with_context(|| format!("reading {}", path.display()))?;
        let drift = drifts
            .get(self.index)
            .with_context(|| format!("{} holds {} drifts, no index {}", path.display(), drifts.len(), self.index))?;
        Ok(drift.apply(&original)?)
    }
}

#[derive(Args)]
struct HealArgs {
    /// Directory written by `healrl train`.
    #[arg(long)]
    from: PathBuf,
    #[command(flatten)]
    target: DriftTarget,
    #[arg(long, default_value = "drdrl")]
    method: HealMethod,
    /// Percentage of least active neurons to forget per hidden layer.
    #[arg(long)]
    forget_rate: Option<f64>,
    #[arg(long)]
    scale_rate: Option<f64>,
    /// Maximum fine-tuning episodes.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the healed agent checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Agent checkpoint.
    #[arg(long)]
    agent: PathBuf,
    #[command(flatten)]
    target: DriftTarget,
    /// Defaults to the environment's evaluation window.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    out: PathBuf,
    /// Overrides `experiment.envs`.
    #[arg(long, value_delimiter = ',')]
    envs: Vec<EnvKind>,
    /// Overrides `experiment.agents`.
    #[arg(long, value_delimiter = ',')]
    agents: Vec<AgentKind>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    drifts: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// A `compare` output directory or a summary.csv.
    path: PathBuf,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn train(config: &Config, a: &TrainArgs) -> Result<()> {
    let spec = EnvSpec::new(a.env);
    std::fs::create_dir_all(&a.out)?;
    let (agent, outcome) = match a.agent {
        AgentKind::Dqn => {
            let (agent, outcome, replay) = train_dqn(&spec, &config.dqn, a.seed)?;
            replay.save(&a.out.join("replay.bin"))?;
            (agent, outcome)
        }
        AgentKind::Ppo => train_ppo(&spec, &config.ppo, a.seed)?,
    };
    let obs = collect_observations(&agent, &spec, config.trace.sample_count, seed::derive(a.seed, "trace"))?;
    let traces = compute_agent_trace(&agent, &obs)?;
    agent.save(&a.out.join("agent.bin"))?;
    traces.save(&a.out.join("trace.bin"))?;
    println!(
        "{} {} seed {}: {} after {} episodes, final avg reward {:.2}",
        a.agent,
        a.env,
        a.seed,
        if outcome.solved { "solved" } else { "not solved" },
        outcome.episodes_used,
        outcome.final_avg_reward,
    );
    Ok(())
}

fn drift(config: &Config, a: &DriftArgs) -> Result<()> {
    let spec = EnvSpec::new(a.env);
    let drifts = sample_drifts(
        a.env,
        &spec.params,
        config.drift.ranges.get(a.env),
        a.intensity.unwrap_or(config.drift.intensity),
        a.count.unwrap_or(config.drift.count),
        a.seed,
    )?;
    save_drifts(&a.out, &drifts)?;
    println!("wrote {} {} drifts to {}", drifts.len(), a.env, a.out.display());
    Ok(())
}

fn heal(config: &Config, a: &HealArgs) -> Result<()> {
    let mut agent = Agent::load(&a.from.join("agent.bin")).context("loading agent.bin")?;
    let kind = agent.env_kind();
    if let Agent::Dqn(d) = &mut agent {
        let path = a.from.join("replay.bin");
        if path.exists() {
            d.set_replay(ReplayBuffer::load(&path)?)?;
        }
    }
    let mut hc = config.healing.get(kind).clone();
    if let Some(f) = a.forget_rate {
        hc.forget_rate = f;
    }
    if let Some(s) = a.scale_rate {
        hc.scale_rate = s;
    }
    if let Some(b) = a.budget.or(config.experiment.heal_budget) {
        hc.max_heal_episodes = b;
    }
    let original = EnvSpec::new(kind);
    let drifted = a.target.spec(kind)?;
    let report = match a.method {
        HealMethod::DrDrl => {
            let traces = TraceSet::load(&a.from.join("trace.bin"), &agent).context("loading trace.bin")?;
            heal_drdrl(&mut agent, &original, &drifted, &traces, &hc, a.seed)?
        }
        HealMethod::VanillaCl => heal_vanilla_cl(&mut agent, &drifted, &hc, a.seed)?,
    };
    println!(
        "{}: {} after {} episodes in {:.2}s, avg reward {:.2} (before {:.2}), {} neurons forgotten",
        report.method,
        if report.adapted { "adapted" } else { "not adapted" },
        report.fine_tune_episodes,
        report.wall_time_seconds,
        report.final_avg_reward,
        report.pre_heal_reward,
        report.forgotten_neurons,
    );
    if let Some(e) = &report.error {
        log::warn!("{e}");
    }
    if let Some(out) = &a.out {
        agent.save(out)?;
    }
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let agent = Agent::load(&a.agent)?;
    let spec = a.target.spec(agent.env_kind())?;
    let episodes = a.episodes.unwrap_or(spec.eval_window);
    let avg = evaluate(&spec, &agent, episodes, a.seed)?;
    let solved = is_solved(&spec, avg, true);
    println!("avg reward {avg:.2} over {episodes} episodes: {}", if solved { "solved" } else { "not solved" });
    Ok(())
}

fn compare(config: &Config, a: &CompareArgs) -> Result<()> {
    let mut plan = config.plan();
    if !a.envs.is_empty() {
        plan.envs = a.envs.clone();
    }
    if !a.agents.is_empty() {
        plan.agents = a.agents.clone();
    }
    if let Some(s) = a.seeds {
        plan.seeds = s;
    }
    if let Some(d) = a.drifts {
        plan.drifts = d;
    }
    if a.budget.is_some() {
        plan.heal_budget = a.budget;
    }
    let result = run_experiment(&plan)?;
    result.write(&a.out)?;
    for f in &result.failures {
        log::error!("{} {} seed {}: {}", f.key.env, f.key.agent, f.key.seed_index, f.message);
    }
    print!("{}", render_report(&result.summaries));
    if result.summaries.is_empty() {
        bail!("every cell failed; see {}", a.out.join("failures.csv").display());
    }
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let path = if a.path.is_dir() { a.path.join("summary.csv") } else { a.path.clone() };
    let summaries = read_summaries(&path).with_context(|| format!("reading {}", path.display()))?;
    print!("{}", render_report(&summaries));
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Command::Config = cli.command {
        print!("{}", documented_default());
        return Ok(());
    }
    let config = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Config => unreachable!(),
        Command::Train(a) => train(&config, a),
        Command::Drift(a) => drift(&config, a),
        Command::Heal(a) => heal(&config, a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Compare(a) => compare(&config, a),
        Command::Report(a) => report(a),
    }
}
