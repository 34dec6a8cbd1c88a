//! Proximal policy optimization with a clipped surrogate, GAE advantages and
//! separate policy and value networks.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sample_categorical;
use crate::envs::{EnvKind, Environment};
use crate::error::{Error, Result};
use crate::nn::{init_network, mlp_shapes, Activation, InitializerSpec, MlpNetwork, Optimizer, OptimizerConfig};
use crate::seed;

/// Floor on probabilities inside logarithms and ratios.
const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoHyperparams {
    pub clip_ratio: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    pub rollout_steps: usize,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    pub max_train_episodes: usize,
    pub hidden: Vec<usize>,
    #[serde(with = "crate::nn::grad_clip")]
    pub max_grad_norm: Option<f64>,
    pub eval_interval: usize,
}

impl Default for PpoHyperparams {
    fn default() -> Self {
        Self {
            clip_ratio: 0.2,
            discount: 0.99,
            gae_lambda: 0.95,
            rollout_steps: 2048,
            epochs_per_update: 10,
            minibatch_size: 64,
            entropy_coef: 0.01,
            value_coef: 0.5,
            learning_rate: 3e-4,
            max_train_episodes: 1000,
            hidden: vec![64, 64],
            max_grad_norm: Some(0.5),
            eval_interval: 20,
        }
    }
}

impl PpoHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("ppo: {m}")));
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return bad("clip_ratio must lie in (0, 1)");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if self.rollout_steps == 0 || self.epochs_per_update == 0 || self.minibatch_size == 0 {
            return bad("rollout_steps, epochs_per_update and minibatch_size must be positive");
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef > 0.0) {
            return bad("need entropy_coef >= 0 and value_coef > 0");
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

/// `min(r A, clip(r, 1 - ε, 1 + ε) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// Generalized advantage estimates and returns for one rollout.
///
/// `next_values[t]` is V(s_{t+1}) for step `t`; it is ignored where
/// `terminated[t]`. `episode_end[t]` marks the last step of an episode
/// (terminated or truncated), where the recursion restarts.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    terminated: &[bool],
    episode_end: &[bool],
    discount: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if [values.len(), next_values.len(), terminated.len(), episode_end.len()].iter().any(|&l| l != n) {
        return Err(Error::InvalidArgument("gae inputs differ in length".into()));
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        if episode_end[t] {
            running = 0.0;
        }
        let bootstrap = if terminated[t] { 0.0 } else { discount * next_values[t] };
        let delta = rewards[t] + bootstrap - values[t];
        running = delta + discount * lambda * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts advantages to zero mean and scales them to unit variance; a
/// constant batch maps to all zeros.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    for a in adv.iter_mut() {
        *a = if sd > 0.0 { (*a - mean) / (sd + 1e-8) } else { 0.0 };
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Rollout {
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    actions: Vec<usize>,
    old_probs: Vec<f64>,
    rewards: Vec<f64>,
    terminated: Vec<bool>,
    episode_end: Vec<bool>,
}

impl Rollout {
    fn len(&self) -> usize {
        self.actions.len()
    }
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub(crate) env_kind: EnvKind,
    pub(crate) hp: PpoHyperparams,
    pub(crate) policy: MlpNetwork,
    pub(crate) value: MlpNetwork,
    pub(crate) policy_opt: Optimizer,
    pub(crate) value_opt: Optimizer,
    pub(crate) rollout: Rollout,
    pub(crate) updates: u64,
    pub(crate) episodes_trained: u64,
    pub(crate) rng: ChaCha8Rng,
}

impl PpoAgent {
    pub fn new(env_kind: EnvKind, hp: PpoHyperparams, seed: u64) -> Result<Self> {
        hp.validate()?;
        let (d, a) = (env_kind.obs_dim(), env_kind.n_actions());
        let policy = init_network(
            &mlp_shapes(d, &hp.hidden, a, Activation::Softmax),
            InitializerSpec::glorot(seed::derive(seed, "init-policy")),
        )?;
        let value = init_network(
            &mlp_shapes(d, &hp.hidden, 1, Activation::Linear),
            InitializerSpec::glorot(seed::derive(seed, "init-value")),
        )?;
        Ok(Self {
            env_kind,
            policy,
            value,
            policy_opt: Optimizer::new(hp.optimizer_config())?,
            value_opt: Optimizer::new(hp.optimizer_config())?,
            rollout: Rollout::default(),
            updates: 0,
            episodes_trained: 0,
            rng: seed::rng(seed::derive(seed, "rng")),
            hp,
        })
    }

    pub fn hyperparams(&self) -> &PpoHyperparams {
        &self.hp
    }

    pub fn policy(&self) -> &MlpNetwork {
        &self.policy
    }

    pub fn value(&self) -> &MlpNetwork {
        &self.value
    }

    pub fn set_entropy_coef(&mut self, coef: f64) -> Result<()> {
        if !(coef >= 0.0 && coef.is_finite()) {
            return Err(Error::InvalidArgument("entropy coefficient must be finite and >= 0".into()));
        }
        self.hp.entropy_coef = coef;
        Ok(())
    }

    /// Policy update count so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub(crate) fn clear_rollout(&mut self) {
        self.rollout = Rollout::default();
    }

    pub(crate) fn sample_action(&mut self, obs: &[f64]) -> Result<(usize, f64)> {
        let probs = self.policy.predict(obs)?;
        let a = sample_categorical(&probs, &mut self.rng);
        Ok((a, probs[a]))
    }

    pub(crate) fn play_episode(&mut self, env: &mut Environment) -> Result<f64> {
        let mut obs = env.reset(None);
        let mut total = 0.0;
        loop {
            let (action, prob) = self.sample_action(&obs)?;
            let step = env.step(action)?;
            total += step.reward;
            let r = &mut self.rollout;
            r.obs.extend_from_slice(&obs);
            r.next_obs.extend_from_slice(&step.next_obs);
            r.actions.push(action);
            r.old_probs.push(prob);
            r.rewards.push(step.reward);
            r.terminated.push(step.terminated);
            r.episode_end.push(step.done());
            if self.rollout.len() >= self.hp.rollout_steps {
                self.update()?;
            }
            if step.done() {
                break;
            }
            obs = step.next_obs;
        }
        self.episodes_trained += 1;
        Ok(total)
    }

    /// Consumes the current rollout: GAE, then `epochs_per_update` passes of
    /// shuffled minibatches, then the rollout is discarded.
    fn update(&mut self) -> Result<()> {
        let rollout = std::mem::take(&mut self.rollout);
        let n = rollout.len();
        let d = self.env_kind.obs_dim();
        let obs = Array2::from_shape_vec((n, d), rollout.obs).expect("rollout rows");
        let next_obs = Array2::from_shape_vec((n, d), rollout.next_obs).expect("rollout rows");
        let values = self.value.predict_batch(&obs)?.column(0).to_vec();
        let next_values = self.value.predict_batch(&next_obs)?.column(0).to_vec();
        let (mut adv, returns) = gae(
            &rollout.rewards,
            &values,
            &next_values,
            &rollout.terminated,
            &rollout.episode_end,
            self.hp.discount,
            self.hp.gae_lambda,
        )?;
        normalize_advantages(&mut adv);
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..self.hp.epochs_per_update {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.hp.minibatch_size) {
                let mb = Array2::from_shape_fn((chunk.len(), d), |(i, j)| obs[[chunk[i], j]]);
                let actions: Vec<usize> = chunk.iter().map(|&i| rollout.actions[i]).collect();
                let old: Vec<f64> = chunk.iter().map(|&i| rollout.old_probs[i]).collect();
                let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
                let ret: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();
                self.policy_step(&mb, &actions, &old, &a)?;
                self.value_step(&mb, &ret)?;
            }
        }
        self.updates += 1;
        Ok(())
    }

    fn policy_step(&mut self, obs: &Array2<f64>, actions: &[usize], old: &[f64], adv: &[f64]) -> Result<()> {
        let trace = self.policy.forward_batch(obs)?;
        let (loss, grad) =
            policy_loss(trace.output(), actions, old, adv, self.hp.clip_ratio, self.hp.entropy_coef);
        if !loss.is_finite() {
            return Err(Error::TrainingAborted(format!("non-finite PPO objective at update {}", self.updates)));
        }
        let grads = self.policy.backward_batch(&trace, &grad)?;
        self.policy_opt.apply(&mut self.policy, &grads)
    }

    fn value_step(&mut self, obs: &Array2<f64>, returns: &[f64]) -> Result<()> {
        let trace = self.value.forward_batch(obs)?;
        let v = trace.output();
        let b = returns.len() as f64;
        let mut grad = Array2::zeros(v.dim());
        let mut loss = 0.0;
        for (i, r) in returns.iter().enumerate() {
            let diff = v[[i, 0]] - r;
            loss += diff * diff;
            grad[[i, 0]] = 2.0 * self.hp.value_coef * diff / b;
        }
        if !loss.is_finite() {
            return Err(Error::TrainingAborted(format!("non-finite PPO value loss at update {}", self.updates)));
        }
        let grads = self.value.backward_batch(&trace, &grad)?;
        self.value_opt.apply(&mut self.value, &grads)
    }
}

/// Minibatch policy loss `-(mean surrogate) - c·(mean entropy)` and its
/// gradient with respect to the action probabilities.
pub(crate) fn policy_loss(
    probs: &Array2<f64>,
    actions: &[usize],
    old: &[f64],
    adv: &[f64],
    clip: f64,
    entropy_coef: f64,
) -> (f64, Array2<f64>) {
    let (b, k) = probs.dim();
    let n = b as f64;
    let mut grad = Array2::zeros((b, k));
    let mut loss = 0.0;
    for i in 0..b {
        let a = actions[i];
        let p_old = old[i].max(PROB_FLOOR);
        let ratio = probs[[i, a]] / p_old;
        loss -= clipped_surrogate(ratio, adv[i], clip) / n;
        // The min is flat in r wherever its clipped branch is strictly smaller.
        let clipped_active = ratio.clamp(1.0 - clip, 1.0 + clip) * adv[i] < ratio * adv[i];
        if !clipped_active {
            grad[[i, a]] -= adv[i] / p_old / n;
        }
        for j in 0..k {
            let p = probs[[i, j]].max(PROB_FLOOR);
            // H = -Σ p ln p, dH/dp = -(ln p + 1).
            loss += entropy_coef * p * p.ln() / n;
            grad[[i, j]] += entropy_coef * (p.ln() + 1.0) / n;
        }
    }
    (loss, grad)
}
