//! Healing a trained agent after an environmental drift.
//!
//! [`heal_drdrl`] detects the failure, erases the hypoactive neurons of every
//! behavior network by re-initializing their incoming weights at a reduced
//! scale, restarts exploration and fine-tunes on the drifted environment.
//! [`heal_vanilla_cl`] runs the same pipeline without the forgetting step.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{continue_training, Agent, EpsilonSchedule, SessionConfig};
use crate::envs::{self, is_solved, EnvKind, EnvSpec, Policy};
use crate::error::{Error, Result};
use crate::nn::{InitializerSpec, MlpNetwork};
use crate::seed;
use crate::tracing::{detect_minor_regions, HypoactiveMask, TraceSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HealingConfig {
    /// Percentage of each hidden layer to forget.
    pub forget_rate: f64,
    /// Multiplier on re-initialized weights, in (0, 1].
    pub scale_rate: f64,
    /// Fine-tuning budget in episodes.
    pub max_heal_episodes: usize,
    pub dqn_epsilon_start: f64,
    pub dqn_epsilon_end: f64,
    /// Episodes over which ε decays; half the budget when unset.
    pub dqn_epsilon_anneal_episodes: Option<u64>,
    pub ppo_entropy_coef: f64,
    /// Keep the agent's replay memory for fine-tuning (DQN only).
    pub reload_replay: bool,
    pub eval_window: usize,
    pub eval_interval: usize,
    pub use_tolerance: bool,
    /// Also re-initialize the outgoing weights of forgotten neurons.
    pub reset_outgoing: bool,
}

impl Default for HealingConfig {
    fn default() -> Self {
        Self::for_env(EnvKind::CartPole)
    }
}

impl HealingConfig {
    /// Defaults tuned per environment: 50% / 0.1 on CartPole, 10% / 1e-4
    /// on MountainCar and Acrobot.
    pub fn for_env(kind: EnvKind) -> Self {
        let (forget_rate, scale_rate) = match kind {
            EnvKind::CartPole => (50.0, 0.1),
            EnvKind::MountainCar | EnvKind::Acrobot => (10.0, 1e-4),
        };
        Self {
            forget_rate,
            scale_rate,
            max_heal_episodes: 1000,
            dqn_epsilon_start: 0.5,
            dqn_epsilon_end: 0.05,
            dqn_epsilon_anneal_episodes: None,
            ppo_entropy_coef: 0.02,
            reload_replay: true,
            eval_window: 100,
            eval_interval: 20,
            use_tolerance: true,
            reset_outgoing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("healing: {m}")));
        if !(self.scale_rate > 0.0 && self.scale_rate <= 1.0) {
            return bad(format!("scale rate {} outside (0, 1]", self.scale_rate));
        }
        if !(0.0..=100.0).contains(&self.forget_rate) {
            return bad(format!("forget rate {} outside [0, 100]", self.forget_rate));
        }
        if self.max_heal_episodes == 0 {
            return bad("max_heal_episodes must be at least 1".into());
        }
        if self.eval_window == 0 || self.eval_interval == 0 {
            return bad("eval_window and eval_interval must be at least 1".into());
        }
        if !(self.ppo_entropy_coef >= 0.0 && self.ppo_entropy_coef.is_finite()) {
            return bad("ppo_entropy_coef must be finite and >= 0".into());
        }
        self.epsilon_schedule().validate()
    }

    /// Exploration schedule installed on a DQN agent at heal start.
    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        let episodes = self
            .dqn_epsilon_anneal_episodes
            .unwrap_or((self.max_heal_episodes / 2) as u64);
        EpsilonSchedule::by_episodes(self.dqn_epsilon_start, self.dqn_epsilon_end, episodes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HealMethod {
    DrDrl,
    VanillaCl,
}

impl HealMethod {
    pub const ALL: [HealMethod; 2] = [HealMethod::DrDrl, HealMethod::VanillaCl];

    pub fn name(self) -> &'static str {
        match self {
            HealMethod::DrDrl => "drdrl",
            HealMethod::VanillaCl => "vanilla_cl",
        }
    }
}

impl fmt::Display for HealMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HealMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drdrl" => Ok(HealMethod::DrDrl),
            "vanilla_cl" | "cl" => Ok(HealMethod::VanillaCl),
            other => Err(Error::InvalidArgument(format!("unknown healing method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HealingReport {
    pub method: HealMethod,
    pub adapted: bool,
    pub fine_tune_episodes: usize,
    /// Time spent in fine-tuning episodes.
    pub wall_time_seconds: f64,
    /// Average reward of the last evaluation.
    pub final_avg_reward: f64,
    /// Average reward measured by failure detection.
    pub pre_heal_reward: f64,
    pub reward_curve: Vec<f64>,
    pub evaluations: Vec<(usize, f64)>,
    /// Neurons re-initialized across all networks.
    pub forgotten_neurons: usize,
    pub drifted: EnvSpec,
    pub seed: u64,
    /// Why the run stopped early, if it did.
    pub error: Option<String>,
}

impl HealingReport {
    fn immediate(method: HealMethod, drifted: &EnvSpec, seed: u64, avg: f64) -> Self {
        Self {
            method,
            adapted: true,
            fine_tune_episodes: 0,
            wall_time_seconds: 0.0,
            final_avg_reward: avg,
            pre_heal_reward: avg,
            reward_curve: Vec::new(),
            evaluations: vec![(0, avg)],
            forgotten_neurons: 0,
            drifted: drifted.clone(),
            seed,
            error: None,
        }
    }
}

/// Greedy evaluation on the drifted environment; `failed` when the average
/// misses the tolerance-adjusted threshold.
pub fn detect_failure<P: Policy + ?Sized>(
    policy: &P,
    drifted: &EnvSpec,
    eval_episodes: usize,
    seed: u64,
) -> Result<(bool, f64)> {
    let avg = envs::evaluate(drifted, policy, eval_episodes, seed)?;
    Ok((!is_solved(drifted, avg, true), avg))
}

/// Re-initializes the incoming weights of every masked neuron with fresh
/// `initializer` samples scaled by `scale_rate` and zeroes its bias. All
/// other parameters are copied unchanged.
pub fn forget_minor_behavior(
    net: &MlpNetwork,
    mask: &HypoactiveMask,
    scale_rate: f64,
    initializer: InitializerSpec,
) -> Result<MlpNetwork> {
    reinitialize_neurons(net, mask, scale_rate, initializer, false)
}

/// [`forget_minor_behavior`], optionally also replacing each masked
/// neuron's outgoing weights (its column in the next layer) with scaled
/// samples.
pub fn reinitialize_neurons(
    net: &MlpNetwork,
    mask: &HypoactiveMask,
    scale_rate: f64,
    initializer: InitializerSpec,
    reset_outgoing: bool,
) -> Result<MlpNetwork> {
    if !(scale_rate > 0.0 && scale_rate <= 1.0) {
        return Err(Error::InvalidArgument(format!("scale rate {scale_rate} outside (0, 1]")));
    }
    if mask.network_hash() != net.hash() {
        return Err(Error::Binding(format!(
            "mask built for network {}, applied to {}",
            mask.network_hash(),
            net.hash()
        )));
    }
    if mask.layers().len() != net.hidden_layer_count() {
        return Err(Error::Dimension { expected: net.hidden_layer_count(), got: mask.layers().len() });
    }
    let shapes = net.shapes();
    let mut out = net.clone();
    for (l, neurons) in mask.layers().iter().enumerate() {
        if neurons.is_empty() {
            continue;
        }
        let mut rng = seed::rng(seed::derive_indexed(initializer.seed, "forget-rows", l as u64));
        let rows: Vec<Vec<f64>> = neurons
            .iter()
            .map(|_| initializer.sample_row(&shapes[l], &mut rng).into_iter().map(|w| w * scale_rate).collect())
            .collect();
        out.set_layer_weights(l, neurons, &rows, &vec![0.0; neurons.len()])?;
    }
    if reset_outgoing {
        for (l, neurons) in mask.layers().iter().enumerate() {
            let mut rng = seed::rng(seed::derive_indexed(initializer.seed, "forget-columns", l as u64));
            for &j in neurons {
                let col: Vec<f64> = initializer
                    .sample_column(&shapes[l + 1], &mut rng)
                    .into_iter()
                    .map(|w| w * scale_rate)
                    .collect();
                out.set_layer_column(l + 1, j, &col)?;
            }
        }
    }
    Ok(out)
}

/// Mean absolute change of incoming weights between two networks of the
/// same shape, split into `(masked rows, unmasked rows)` of the hidden
/// layers covered by `mask`.
pub fn update_magnitudes(before: &MlpNetwork, after: &MlpNetwork, mask: &HypoactiveMask) -> Result<(f64, f64)> {
    if before.shapes() != after.shapes() {
        return Err(Error::Schema("networks differ in shape".into()));
    }
    if mask.layers().len() != before.hidden_layer_count() {
        return Err(Error::Dimension { expected: before.hidden_layer_count(), got: mask.layers().len() });
    }
    let (mut masked, mut unmasked) = ((0.0, 0usize), (0.0, 0usize));
    for (l, neurons) in mask.layers().iter().enumerate() {
        let (a, b) = (&before.layers()[l].weights, &after.layers()[l].weights);
        for j in 0..a.nrows() {
            let d: f64 = a.row(j).iter().zip(b.row(j)).map(|(x, y)| (x - y).abs()).sum();
            let acc = if neurons.binary_search(&j).is_ok() { &mut masked } else { &mut unmasked };
            acc.0 += d;
            acc.1 += a.ncols();
        }
    }
    let mean = |(s, n): (f64, usize)| if n == 0 { f64::NAN } else { s / n as f64 };
    Ok((mean(masked), mean(unmasked)))
}

/// Fine-tunes an agent (already passed through forgetting) on the drifted
/// environment with fresh optimizer moments, checking for adaptation before
/// the first episode and every `eval_interval` episodes.
pub fn dual_speed_cl(agent: &mut Agent, drifted: &EnvSpec, config: &HealingConfig, seed: u64) -> Result<HealingReport> {
    config.validate()?;
    let spec = heal_spec(drifted, config);
    let mut report = fine_tune(agent, &spec, config, seed, true, HealMethod::DrDrl)?;
    report.pre_heal_reward = report.evaluations.first().map_or(f64::NAN, |e| e.1);
    Ok(report)
}

/// The full pipeline: failure detection, forgetting of every behavior
/// network, exploration restart, replay policy, dual-speed fine-tuning.
/// The agent is healed in place.
pub fn heal_drdrl(
    agent: &mut Agent,
    original: &EnvSpec,
    drifted: &EnvSpec,
    traces: &TraceSet,
    config: &HealingConfig,
    seed: u64,
) -> Result<HealingReport> {
    heal(agent, Some((original, traces)), drifted, config, seed)
}

/// Continual learning without forgetting; otherwise identical to
/// [`heal_drdrl`].
pub fn heal_vanilla_cl(agent: &mut Agent, drifted: &EnvSpec, config: &HealingConfig, seed: u64) -> Result<HealingReport> {
    heal(agent, None, drifted, config, seed)
}

fn heal(
    agent: &mut Agent,
    forgetting: Option<(&EnvSpec, &TraceSet)>,
    drifted: &EnvSpec,
    config: &HealingConfig,
    seed: u64,
) -> Result<HealingReport> {
    config.validate()?;
    drifted.validate()?;
    if drifted.kind != agent.env_kind() {
        return Err(Error::Schema(format!("agent built for {} healed on {}", agent.env_kind(), drifted.kind)));
    }
    let method = if forgetting.is_some() { HealMethod::DrDrl } else { HealMethod::VanillaCl };
    if let Some((original, traces)) = forgetting {
        if original.kind != drifted.kind {
            return Err(Error::Schema("original and drifted specs differ in kind".into()));
        }
        traces.check_binding(agent)?;
        let digest = original.digest();
        if traces.traces.iter().any(|(_, t)| t.env_digest() != digest) {
            return Err(Error::Binding("trace was not collected on the original environment".into()));
        }
    }
    let spec = heal_spec(drifted, config);
    let (failed, pre) = detect_failure(agent, &spec, config.eval_window, seed::derive(seed, "detect"))?;
    // Detection always applies the tolerance; the report's adapted flag
    // follows the configured one, so a stricter config still heals.
    if !failed && is_solved(&spec, pre, config.use_tolerance) {
        return Ok(HealingReport::immediate(method, &spec, seed, pre));
    }
    let mut forgotten = 0;
    if let Some((_, traces)) = forgetting {
        let names: Vec<&'static str> = agent.networks().iter().map(|(n, _)| *n).collect();
        for name in names {
            let trace = traces.get(name).expect("binding checked");
            let mask = detect_minor_regions(trace, config.forget_rate)?;
            forgotten += mask.total();
            let net = agent.network_mut(name)?;
            let init = InitializerSpec::new(net.initializer().scheme, seed::derive(seed, &format!("forget-{name}")));
            *net = reinitialize_neurons(net, &mask, config.scale_rate, init, config.reset_outgoing)?;
        }
    }
    restart_exploration(agent, config)?;
    let mut report = fine_tune(agent, &spec, config, seed, false, method)?;
    report.pre_heal_reward = pre;
    report.forgotten_neurons = forgotten;
    Ok(report)
}

fn heal_spec(drifted: &EnvSpec, config: &HealingConfig) -> EnvSpec {
    EnvSpec { eval_window: config.eval_window, ..drifted.clone() }
}

fn restart_exploration(agent: &mut Agent, config: &HealingConfig) -> Result<()> {
    match agent {
        Agent::Dqn(a) => {
            a.set_schedule(config.epsilon_schedule())?;
            if !config.reload_replay {
                a.clear_replay();
            }
            Ok(())
        }
        Agent::Ppo(a) => a.set_entropy_coef(config.ppo_entropy_coef),
    }
}

fn fine_tune(
    agent: &mut Agent,
    spec: &EnvSpec,
    config: &HealingConfig,
    seed: u64,
    check_at_start: bool,
    method: HealMethod,
) -> Result<HealingReport> {
    agent.reset_optimizers();
    if let Agent::Dqn(a) = agent {
        a.sync_target();
    }
    agent.reseed(seed::derive(seed, "heal-agent"));
    let session = SessionConfig {
        max_episodes: config.max_heal_episodes,
        eval_interval: config.eval_interval,
        check_at_start,
        use_tolerance: config.use_tolerance,
        seed: seed::derive(seed, "heal-session"),
    };
    let outcome = continue_training(agent, spec, &session)?;
    Ok(HealingReport {
        method,
        adapted: outcome.solved && outcome.aborted.is_none(),
        fine_tune_episodes: outcome.episodes_used,
        wall_time_seconds: outcome.wall_time_seconds,
        final_avg_reward: outcome.final_avg_reward,
        pre_heal_reward: f64::NAN,
        reward_curve: outcome.reward_curve,
        evaluations: outcome.evaluations,
        forgotten_neurons: 0,
        drifted: spec.clone(),
        seed,
        error: outcome.aborted,
    })
}
