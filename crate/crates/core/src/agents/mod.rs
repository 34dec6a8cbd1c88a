//! DQN and PPO agents.
//!
//! Both agents share one training driver ([`continue_training`]): episodes
//! are played on a seeded environment, a greedy evaluation over the spec's
//! evaluation window runs every `eval_interval` episodes, and training stops
//! at the first evaluation that passes the solve criterion.

mod checkpoint;
pub mod dqn;
pub mod ppo;
pub mod replay;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{self, check_policy_dims, is_solved, make_env, EnvKind, EnvSpec, Policy};
use crate::error::{Error, Result};
use crate::nn::MlpNetwork;
use crate::seed;

pub use dqn::{DqnAgent, DqnHyperparams, EpsilonSchedule};
pub use ppo::{clipped_surrogate, gae, normalize_advantages, PpoAgent, PpoHyperparams};
pub use replay::{ReplayBuffer, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Dqn,
    Ppo,
}

impl AgentKind {
    pub const ALL: [AgentKind; 2] = [AgentKind::Dqn, AgentKind::Ppo];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Dqn => "dqn",
            AgentKind::Ppo => "ppo",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => Ok(AgentKind::Dqn),
            "ppo" => Ok(AgentKind::Ppo),
            other => Err(Error::InvalidArgument(format!("unknown agent kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Agent {
    Dqn(DqnAgent),
    Ppo(PpoAgent),
}

/// Result of one training (or fine-tuning) session.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub solved: bool,
    pub episodes_used: usize,
    /// Time spent in training episodes; evaluations are excluded.
    pub wall_time_seconds: f64,
    pub final_avg_reward: f64,
    /// Return of every training episode, in order.
    pub reward_curve: Vec<f64>,
    /// `(episodes trained so far, average evaluation reward)` per check.
    pub evaluations: Vec<(usize, f64)>,
    /// Set when a non-finite loss stopped the session early.
    pub aborted: Option<String>,
}

/// Parameters of one run of the training driver.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub max_episodes: usize,
    /// Episodes between solve checks.
    pub eval_interval: usize,
    /// Whether to check before the first episode.
    pub check_at_start: bool,
    pub use_tolerance: bool,
    pub seed: u64,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Draws an index from a probability vector.
pub(crate) fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` just below 1: pick the last action with mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

impl Agent {
    pub fn new_dqn(env_kind: EnvKind, hyperparams: DqnHyperparams, seed: u64) -> Result<Self> {
        Ok(Agent::Dqn(DqnAgent::new(env_kind, hyperparams, seed)?))
    }

    pub fn new_ppo(env_kind: EnvKind, hyperparams: PpoHyperparams, seed: u64) -> Result<Self> {
        Ok(Agent::Ppo(PpoAgent::new(env_kind, hyperparams, seed)?))
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Dqn(_) => AgentKind::Dqn,
            Agent::Ppo(_) => AgentKind::Ppo,
        }
    }

    pub fn env_kind(&self) -> EnvKind {
        match self {
            Agent::Dqn(a) => a.env_kind,
            Agent::Ppo(a) => a.env_kind,
        }
    }

    /// Training episodes played over the agent's lifetime.
    pub fn episodes_trained(&self) -> u64 {
        match self {
            Agent::Dqn(a) => a.episodes_trained,
            Agent::Ppo(a) => a.episodes_trained,
        }
    }

    /// Named networks that carry behavior: `q` for DQN; `policy` and
    /// `value` for PPO. The DQN target network is a copy and is not listed.
    pub fn networks(&self) -> Vec<(&'static str, &MlpNetwork)> {
        match self {
            Agent::Dqn(a) => vec![("q", &a.online)],
            Agent::Ppo(a) => vec![("policy", &a.policy), ("value", &a.value)],
        }
    }

    pub fn network_mut(&mut self, name: &str) -> Result<&mut MlpNetwork> {
        match (self, name) {
            (Agent::Dqn(a), "q") => Ok(&mut a.online),
            (Agent::Ppo(a), "policy") => Ok(&mut a.policy),
            (Agent::Ppo(a), "value") => Ok(&mut a.value),
            (agent, _) => Err(Error::InvalidArgument(format!(
                "{} agent has no network `{name}`",
                agent.kind()
            ))),
        }
    }

    /// Fresh optimizer moments for every network.
    pub fn reset_optimizers(&mut self) {
        match self {
            Agent::Dqn(a) => a.optimizer.reset(),
            Agent::Ppo(a) => {
                a.policy_opt.reset();
                a.value_opt.reset();
            }
        }
    }

    /// Reseeds the agent's own random stream (exploration, minibatches).
    pub fn reseed(&mut self, seed: u64) {
        let rng = seed::rng(seed);
        match self {
            Agent::Dqn(a) => a.rng = rng,
            Agent::Ppo(a) => a.rng = rng,
        }
    }

    /// Picks an action. Greedy: argmax of Q-values or policy probabilities.
    /// Exploring: ε-greedy for DQN, a policy sample for PPO.
    pub fn act(&mut self, obs: &[f64], explore: bool) -> Result<usize> {
        if !explore {
            return self.greedy_action(obs);
        }
        match self {
            Agent::Dqn(a) => a.explore_action(obs),
            Agent::Ppo(a) => a.sample_action(obs).map(|(action, _)| action),
        }
    }

    fn begin_session(&mut self) -> Result<()> {
        match self {
            Agent::Dqn(_) => Ok(()),
            Agent::Ppo(a) => {
                a.clear_rollout();
                Ok(())
            }
        }
    }

    fn play_episode(&mut self, env: &mut envs::Environment) -> Result<f64> {
        match self {
            Agent::Dqn(a) => a.play_episode(env),
            Agent::Ppo(a) => a.play_episode(env),
        }
    }
}

impl Policy for Agent {
    fn obs_dim(&self) -> usize {
        self.env_kind().obs_dim()
    }

    fn n_actions(&self) -> usize {
        self.env_kind().n_actions()
    }

    fn greedy_action(&self, obs: &[f64]) -> Result<usize> {
        let out = match self {
            Agent::Dqn(a) => a.online.predict(obs)?,
            Agent::Ppo(a) => a.policy.predict(obs)?,
        };
        Ok(argmax(&out))
    }
}

/// Trains `agent` on `spec` until a solve check passes or
/// `session.max_episodes` episodes have been played. A non-finite loss ends
/// the session with [`TrainOutcome::aborted`] set instead of an error.
pub fn continue_training(agent: &mut Agent, spec: &EnvSpec, session: &SessionConfig) -> Result<TrainOutcome> {
    spec.validate()?;
    check_policy_dims(spec.kind, agent)?;
    if spec.kind != agent.env_kind() {
        return Err(Error::Schema(format!(
            "agent built for {} trained on {}",
            agent.env_kind(),
            spec.kind
        )));
    }
    if session.eval_interval == 0 {
        return Err(Error::InvalidArgument("eval_interval must be at least 1".into()));
    }
    agent.begin_session()?;
    let mut env = make_env(spec, seed::derive(session.seed, "train-env"))?;
    let mut checks = 0u64;
    let mut check = |agent: &Agent| -> Result<f64> {
        let eval_seed = seed::derive_indexed(session.seed, "eval", checks);
        checks += 1;
        envs::evaluate(spec, agent, spec.eval_window, eval_seed)
    };
    let mut out = TrainOutcome {
        solved: false,
        episodes_used: 0,
        wall_time_seconds: 0.0,
        final_avg_reward: f64::NAN,
        reward_curve: Vec::new(),
        evaluations: Vec::new(),
        aborted: None,
    };
    let mut last_eval_at = None;
    if session.check_at_start {
        let avg = check(agent)?;
        out.evaluations.push((0, avg));
        last_eval_at = Some(0);
        out.final_avg_reward = avg;
        if is_solved(spec, avg, session.use_tolerance) {
            out.solved = true;
            return Ok(out);
        }
    }
    let mut elapsed = Duration::ZERO;
    while out.episodes_used < session.max_episodes {
        let started = Instant::now();
        let ret = match agent.play_episode(&mut env) {
            Ok(ret) => ret,
            Err(Error::TrainingAborted(msg)) => {
                elapsed += started.elapsed();
                out.aborted = Some(msg);
                out.solved = false;
                out.wall_time_seconds = elapsed.as_secs_f64();
                return Ok(out);
            }
            Err(e) => return Err(e),
        };
        elapsed += started.elapsed();
        out.reward_curve.push(ret);
        out.episodes_used += 1;
        if out.episodes_used % session.eval_interval == 0 {
            let avg = check(agent)?;
            out.evaluations.push((out.episodes_used, avg));
            last_eval_at = Some(out.episodes_used);
            out.final_avg_reward = avg;
            if is_solved(spec, avg, session.use_tolerance) {
                out.solved = true;
                break;
            }
        }
    }
    if last_eval_at != Some(out.episodes_used) {
        let avg = check(agent)?;
        out.evaluations.push((out.episodes_used, avg));
        out.final_avg_reward = avg;
        out.solved = is_solved(spec, avg, session.use_tolerance);
    }
    out.wall_time_seconds = elapsed.as_secs_f64();
    Ok(out)
}

fn finished(outcome: TrainOutcome) -> Result<TrainOutcome> {
    match outcome.aborted {
        Some(msg) => Err(Error::TrainingAborted(msg)),
        None => Ok(outcome),
    }
}

/// Trains a fresh DQN agent on `spec`; also returns its final replay buffer.
pub fn train_dqn(spec: &EnvSpec, hyperparams: &DqnHyperparams, seed: u64) -> Result<(Agent, TrainOutcome, ReplayBuffer)> {
    let mut agent = Agent::new_dqn(spec.kind, hyperparams.clone(), seed::derive(seed, "agent"))?;
    let session = SessionConfig {
        max_episodes: hyperparams.max_train_episodes,
        eval_interval: hyperparams.eval_interval,
        check_at_start: false,
        use_tolerance: false,
        seed: seed::derive(seed, "session"),
    };
    let outcome = finished(continue_training(&mut agent, spec, &session)?)?;
    let replay = match &agent {
        Agent::Dqn(a) => a.replay.clone(),
        Agent::Ppo(_) => unreachable!(),
    };
    Ok((agent, outcome, replay))
}

pub fn train_ppo(spec: &EnvSpec, hyperparams: &PpoHyperparams, seed: u64) -> Result<(Agent, TrainOutcome)> {
    let mut agent = Agent::new_ppo(spec.kind, hyperparams.clone(), seed::derive(seed, "agent"))?;
    let session = SessionConfig {
        max_episodes: hyperparams.max_train_episodes,
        eval_interval: hyperparams.eval_interval,
        check_at_start: false,
        use_tolerance: false,
        seed: seed::derive(seed, "session"),
    };
    let outcome = finished(continue_training(&mut agent, spec, &session)?)?;
    Ok((agent, outcome))
}
