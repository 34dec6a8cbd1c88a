//! Deep Q-learning with a replay buffer and a periodically synced target
//! network.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::argmax;
use super::replay::{ReplayBuffer, Transition};
use crate::envs::{EnvKind, Environment, Observation, StepResult};
use crate::error::{Error, Result};
use crate::nn::{init_network, mlp_shapes, Activation, InitializerSpec, MlpNetwork, Optimizer, OptimizerConfig};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnHyperparams {
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_update_interval_steps: u64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_anneal_steps: u64,
    pub learning_rate: f64,
    pub max_train_episodes: usize,
    /// Transitions collected before the first gradient step.
    pub warmup_steps: usize,
    pub hidden: Vec<usize>,
    #[serde(with = "crate::nn::grad_clip")]
    pub max_grad_norm: Option<f64>,
    pub eval_interval: usize,
}

impl Default for DqnHyperparams {
    fn default() -> Self {
        Self {
            replay_capacity: 50_000,
            batch_size: 64,
            target_update_interval_steps: 500,
            discount: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_anneal_steps: 10_000,
            learning_rate: 1e-3,
            max_train_episodes: 1000,
            warmup_steps: 1000,
            hidden: vec![64, 64],
            max_grad_norm: Some(10.0),
            eval_interval: 20,
        }
    }
}

impl DqnHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("dqn: {m}")));
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        if !(self.epsilon_start <= 1.0 && self.epsilon_start >= self.epsilon_end && self.epsilon_end >= 0.0) {
            return bad("need 1 >= epsilon_start >= epsilon_end >= 0");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("need replay_capacity >= batch_size >= 1");
        }
        if self.target_update_interval_steps == 0 {
            return bad("target_update_interval_steps must be at least 1");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden widths must be positive");
        }
        if self.eval_interval == 0 {
            return bad("eval_interval must be at least 1");
        }
        self.optimizer_config().validate()
    }

    pub(crate) fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig { max_grad_norm: self.max_grad_norm, ..OptimizerConfig::adam(self.learning_rate) }
    }
}

/// Linear ε decay from `start` to `end` over `anneal_steps` environment
/// steps or `anneal_episodes` episodes (whichever is set; zero means the
/// schedule sits at `end`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
    pub anneal_episodes: u64,
}

impl EpsilonSchedule {
    pub fn by_steps(start: f64, end: f64, steps: u64) -> Self {
        Self { start, end, anneal_steps: steps, anneal_episodes: 0 }
    }

    pub fn by_episodes(start: f64, end: f64, episodes: u64) -> Self {
        Self { start, end, anneal_steps: 0, anneal_episodes: episodes }
    }

    pub fn value(&self, steps: u64, episodes: u64) -> f64 {
        let frac = if self.anneal_episodes > 0 {
            episodes as f64 / self.anneal_episodes as f64
        } else if self.anneal_steps > 0 {
            steps as f64 / self.anneal_steps as f64
        } else {
            1.0
        };
        if frac >= 1.0 {
            self.end
        } else {
            self.start + (self.end - self.start) * frac
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start <= 1.0 && self.start >= self.end && self.end >= 0.0) {
            return Err(Error::InvalidArgument("need 1 >= epsilon start >= end >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub(crate) env_kind: EnvKind,
    pub(crate) hp: DqnHyperparams,
    pub(crate) online: MlpNetwork,
    pub(crate) target: MlpNetwork,
    pub(crate) optimizer: Optimizer,
    pub(crate) replay: ReplayBuffer,
    pub(crate) schedule: EpsilonSchedule,
    /// Steps and episodes since `schedule` was installed.
    pub(crate) schedule_steps: u64,
    pub(crate) schedule_episodes: u64,
    pub(crate) env_steps: u64,
    pub(crate) grad_steps: u64,
    pub(crate) episodes_trained: u64,
    pub(crate) rng: ChaCha8Rng,
}

impl DqnAgent {
    pub fn new(env_kind: EnvKind, hp: DqnHyperparams, seed: u64) -> Result<Self> {
        hp.validate()?;
        let shapes = mlp_shapes(env_kind.obs_dim(), &hp.hidden, env_kind.n_actions(), Activation::Linear);
        let online = init_network(&shapes, InitializerSpec::glorot(seed::derive(seed, "init-q")))?;
        Ok(Self {
            env_kind,
            target: online.clone(),
            online,
            optimizer: Optimizer::new(hp.optimizer_config())?,
            replay: ReplayBuffer::new(env_kind.obs_dim(), hp.replay_capacity)?,
            schedule: EpsilonSchedule::by_steps(hp.epsilon_start, hp.epsilon_end, hp.epsilon_anneal_steps),
            schedule_steps: 0,
            schedule_episodes: 0,
            env_steps: 0,
            grad_steps: 0,
            episodes_trained: 0,
            rng: seed::rng(seed::derive(seed, "rng")),
            hp,
        })
    }

    pub fn hyperparams(&self) -> &DqnHyperparams {
        &self.hp
    }

    pub fn online(&self) -> &MlpNetwork {
        &self.online
    }

    pub fn target(&self) -> &MlpNetwork {
        &self.target
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    /// Replaces the replay memory (for instance with one reloaded from disk).
    pub fn set_replay(&mut self, replay: ReplayBuffer) -> Result<()> {
        if replay.obs_dim() != self.env_kind.obs_dim() {
            return Err(Error::Dimension { expected: self.env_kind.obs_dim(), got: replay.obs_dim() });
        }
        self.replay = replay;
        Ok(())
    }

    pub fn clear_replay(&mut self) {
        self.replay.clear();
    }

    pub fn epsilon(&self) -> f64 {
        self.schedule.value(self.schedule_steps, self.schedule_episodes)
    }

    /// Installs a new exploration schedule, restarting its clock.
    pub fn set_schedule(&mut self, schedule: EpsilonSchedule) -> Result<()> {
        schedule.validate()?;
        self.schedule = schedule;
        self.schedule_steps = 0;
        self.schedule_episodes = 0;
        Ok(())
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.online.predict(obs)
    }

    pub(crate) fn explore_action(&mut self, obs: &[f64]) -> Result<usize> {
        let q = self.online.predict(obs)?;
        if self.rng.gen::<f64>() < self.epsilon() {
            Ok(self.rng.gen_range(0..q.len()))
        } else {
            Ok(argmax(&q))
        }
    }

    pub(crate) fn play_episode(&mut self, env: &mut Environment) -> Result<f64> {
        let mut obs = env.reset(None);
        let mut total = 0.0;
        loop {
            let step = self.step_once(env, obs)?;
            total += step.reward;
            if step.done() {
                break;
            }
            obs = step.next_obs;
        }
        self.episodes_trained += 1;
        self.schedule_episodes += 1;
        Ok(total)
    }

    /// Acts, stores the transition, learns and syncs the target as due.
    pub(crate) fn step_once(&mut self, env: &mut Environment, obs: Observation) -> Result<StepResult> {
        let action = self.explore_action(&obs)?;
        let step = env.step(action)?;
        self.replay.push(Transition {
            obs: obs.0,
            action,
            reward: step.reward,
            next_obs: step.next_obs.0.clone(),
            done: step.terminated,
        })?;
        self.env_steps += 1;
        self.schedule_steps += 1;
        if self.replay.len() >= self.hp.warmup_steps.max(self.hp.batch_size) {
            self.learn()?;
        }
        if self.env_steps % self.hp.target_update_interval_steps == 0 {
            self.sync_target();
        }
        Ok(step)
    }

    /// One Huber-loss gradient step on a uniformly sampled minibatch.
    fn learn(&mut self) -> Result<()> {
        let idx = self.replay.sample_indices(self.hp.batch_size, &mut self.rng)?;
        let d = self.replay.obs_dim();
        let b = idx.len();
        let obs = Array2::from_shape_fn((b, d), |(i, j)| self.replay.obs_row(idx[i])[j]);
        let next = Array2::from_shape_fn((b, d), |(i, j)| self.replay.next_obs_row(idx[i])[j]);
        let next_q = self.target.predict_batch(&next)?;
        let trace = self.online.forward_batch(&obs)?;
        let q = trace.output();
        let mut grad = Array2::zeros(q.dim());
        let mut loss = 0.0;
        for (i, &slot) in idx.iter().enumerate() {
            let a = self.replay.action(slot);
            let y = td_target(
                self.replay.reward(slot),
                self.hp.discount,
                self.replay.done(slot),
                next_q.row(i).as_slice().unwrap(),
            );
            let diff = q[[i, a]] - y;
            loss += if diff.abs() <= 1.0 { 0.5 * diff * diff } else { diff.abs() - 0.5 };
            grad[[i, a]] = diff.clamp(-1.0, 1.0) / b as f64;
        }
        if !loss.is_finite() {
            return Err(Error::TrainingAborted(format!(
                "non-finite DQN loss at gradient step {}",
                self.grad_steps
            )));
        }
        let grads = self.online.backward_batch(&trace, &grad)?;
        self.optimizer.apply(&mut self.online, &grads)?;
        self.grad_steps += 1;
        Ok(())
    }
}

/// Bellman target `r + γ max_a Q_target(s', a)`, or `r` at a terminal.
pub fn td_target(reward: f64, discount: f64, terminal: bool, next_q: &[f64]) -> f64 {
    if terminal {
        reward
    } else {
        reward + discount * next_q[argmax(next_q)]
    }
}
