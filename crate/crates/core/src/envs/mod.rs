//! Parameterized classic-control environments.
//!
//! Each [`EnvKind`] declares a fixed parameter schema. An [`EnvSpec`] binds a
//! kind to concrete parameter values, an episode step limit and a solve
//! criterion; [`make_env`] turns it into a seeded [`Environment`] handle whose
//! trajectories are a pure function of `(spec, seed, actions)`.

mod acrobot;
mod cartpole;
pub mod drift;
mod mountain_car;

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::seed;

pub use acrobot::Acrobot;
pub use cartpole::CartPole;
pub use drift::{sample_drifts, DriftRanges, DriftSpec, Intensity};
pub use mountain_car::MountainCar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvKind {
    #[serde(rename = "cartpole")]
    CartPole,
    #[serde(rename = "mountain_car")]
    MountainCar,
    #[serde(rename = "acrobot")]
    Acrobot,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::CartPole, EnvKind::MountainCar, EnvKind::Acrobot];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::CartPole => "cartpole",
            EnvKind::MountainCar => "mountain_car",
            EnvKind::Acrobot => "acrobot",
        }
    }

    /// Parameter names in schema order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            EnvKind::CartPole => &["masspole", "lengthpole", "masscart", "friction"],
            EnvKind::MountainCar => &["force", "gravity", "goal_velocity"],
            EnvKind::Acrobot => &["link_length_1", "link_com_pos_1", "link_mass_1", "link_mass_2"],
        }
    }

    /// Parameters allowed to be zero; every other parameter must be positive.
    fn zero_allowed(self, name: &str) -> bool {
        matches!((self, name), (EnvKind::CartPole, "friction") | (EnvKind::MountainCar, "goal_velocity"))
    }

    pub fn default_params(self) -> EnvParams {
        let values: &[f64] = match self {
            EnvKind::CartPole => &[0.1, 0.5, 1.0, 0.0],
            EnvKind::MountainCar => &[1e-3, 2.5e-3, 0.0],
            EnvKind::Acrobot => &[1.0, 0.5, 1.0, 1.0],
        };
        EnvParams {
            entries: self
                .param_names()
                .iter()
                .zip(values)
                .map(|(n, v)| (n.to_string(), *v))
                .collect(),
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            EnvKind::CartPole => 4,
            EnvKind::MountainCar => 2,
            EnvKind::Acrobot => 6,
        }
    }

    pub fn n_actions(self) -> usize {
        match self {
            EnvKind::CartPole => 2,
            EnvKind::MountainCar | EnvKind::Acrobot => 3,
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cartpole" => Ok(EnvKind::CartPole),
            "mountain_car" | "mountaincar" => Ok(EnvKind::MountainCar),
            "acrobot" => Ok(EnvKind::Acrobot),
            other => Err(Error::InvalidArgument(format!("unknown environment `{other}`"))),
        }
    }
}

/// Named parameter vector of an environment, in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnvParams {
    pub entries: IndexMap<String, f64>,
}

impl EnvParams {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.get(name).copied()
    }

    /// Value of a parameter known to be in the validated schema.
    pub(crate) fn value(&self, name: &str) -> f64 {
        self.entries[name]
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match self.entries.get_mut(name) {
            Some(v) => {
                *v = value;
                Ok(())
            }
            None => Err(Error::Schema(format!("unknown parameter `{name}`"))),
        }
    }

    /// Checks the schema and value domain for `kind`.
    pub fn validate(&self, kind: EnvKind) -> Result<()> {
        let names = kind.param_names();
        if self.entries.len() != names.len() || names.iter().any(|n| !self.entries.contains_key(*n)) {
            let got: Vec<&str> = self.entries.keys().map(String::as_str).collect();
            return Err(Error::Schema(format!(
                "{kind} expects parameters {names:?}, got {got:?}"
            )));
        }
        for (name, &v) in &self.entries {
            if !v.is_finite() {
                return Err(Error::Schema(format!("{kind}.{name} is not finite")));
            }
            let ok = if kind.zero_allowed(name) { v >= 0.0 } else { v > 0.0 };
            if !ok {
                return Err(Error::Schema(format!("{kind}.{name} = {v} is out of domain")));
            }
        }
        Ok(())
    }

    /// Returns the entries reordered to schema order.
    pub(crate) fn in_schema_order(&self, kind: EnvKind) -> EnvParams {
        EnvParams {
            entries: kind
                .param_names()
                .iter()
                .filter_map(|n| self.entries.get(*n).map(|v| (n.to_string(), *v)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub params: EnvParams,
    pub max_steps_per_episode: usize,
    pub solve_threshold: f64,
    pub eval_window: usize,
    pub tolerance_ratio: f64,
}

impl EnvSpec {
    pub fn new(kind: EnvKind) -> Self {
        let (max_steps, threshold, tolerance) = match kind {
            EnvKind::CartPole => (200, 195.0, 0.0),
            EnvKind::MountainCar => (200, -110.0, 0.20),
            EnvKind::Acrobot => (500, -100.0, 0.20),
        };
        Self {
            kind,
            params: kind.default_params(),
            max_steps_per_episode: max_steps,
            solve_threshold: threshold,
            eval_window: 100,
            tolerance_ratio: tolerance,
        }
    }

    /// Same spec with replaced parameters.
    pub fn with_params(&self, params: EnvParams) -> Result<Self> {
        params.validate(self.kind)?;
        Ok(Self { params: params.in_schema_order(self.kind), ..self.clone() })
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate(self.kind)?;
        if self.max_steps_per_episode == 0 {
            return Err(Error::InvalidArgument("max_steps_per_episode must be positive".into()));
        }
        if self.eval_window == 0 {
            return Err(Error::InvalidArgument("eval_window must be positive".into()));
        }
        if !self.solve_threshold.is_finite() {
            return Err(Error::InvalidArgument("solve_threshold must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.tolerance_ratio) {
            return Err(Error::InvalidArgument("tolerance_ratio must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Threshold an average reward must reach; tolerance lowers it by
    /// `tolerance_ratio * |threshold|`.
    pub fn effective_threshold(&self, use_tolerance: bool) -> f64 {
        if use_tolerance {
            self.solve_threshold - self.tolerance_ratio * self.solve_threshold.abs()
        } else {
            self.solve_threshold
        }
    }

    /// Stable digest of the spec, used to bind traces to their source env.
    pub fn digest(&self) -> [u8; 32] {
        let mut w = codec::Writer::new();
        w.str(self.kind.name());
        for (name, v) in &self.params.in_schema_order(self.kind).entries {
            w.str(name).f64(*v);
        }
        w.u64(self.max_steps_per_episode as u64)
            .f64(self.solve_threshold)
            .u64(self.eval_window as u64)
            .f64(self.tolerance_ratio);
        codec::digest(&w.finish(b"HRLE", 1))
    }
}

/// `average_reward >= effective_threshold`; inclusive.
pub fn is_solved(spec: &EnvSpec, average_reward: f64, use_tolerance: bool) -> bool {
    average_reward >= spec.effective_threshold(use_tolerance)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl std::ops::Deref for Observation {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_obs: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone)]
enum Dynamics {
    CartPole(CartPole),
    MountainCar(MountainCar),
    Acrobot(Acrobot),
}

impl Dynamics {
    fn new(spec: &EnvSpec) -> Self {
        let p = &spec.params;
        match spec.kind {
            EnvKind::CartPole => Dynamics::CartPole(CartPole::new(p)),
            EnvKind::MountainCar => Dynamics::MountainCar(MountainCar::new(p)),
            EnvKind::Acrobot => Dynamics::Acrobot(Acrobot::new(p)),
        }
    }
}

/// A seeded environment instance. Single owner; RNG state lives inside.
#[derive(Debug, Clone)]
pub struct Environment {
    spec: EnvSpec,
    dynamics: Dynamics,
    rng: ChaCha8Rng,
    steps: usize,
    episode_over: bool,
    started: bool,
}

pub fn make_env(spec: &EnvSpec, seed: u64) -> Result<Environment> {
    spec.validate()?;
    let spec = EnvSpec { params: spec.params.in_schema_order(spec.kind), ..spec.clone() };
    Ok(Environment {
        dynamics: Dynamics::new(&spec),
        spec,
        rng: seed::rng(seed),
        steps: 0,
        episode_over: true,
        started: false,
    })
}

impl Environment {
    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn kind(&self) -> EnvKind {
        self.spec.kind
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Starts a new episode. `Some(seed)` reseeds the handle first.
    pub fn reset(&mut self, seed: Option<u64>) -> Observation {
        if let Some(s) = seed {
            self.rng = seed::rng(s);
        }
        match &mut self.dynamics {
            Dynamics::CartPole(d) => d.reset(&mut self.rng),
            Dynamics::MountainCar(d) => d.reset(&mut self.rng),
            Dynamics::Acrobot(d) => d.reset(&mut self.rng),
        }
        self.steps = 0;
        self.episode_over = false;
        self.started = true;
        self.observe()
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        let n = self.spec.kind.n_actions();
        if action >= n {
            return Err(Error::InvalidArgument(format!(
                "action {action} outside {} action set of size {n}",
                self.spec.kind
            )));
        }
        if !self.started || self.episode_over {
            return Err(Error::State("step called without an active episode; call reset".into()));
        }
        let (reward, terminated) = match &mut self.dynamics {
            Dynamics::CartPole(d) => d.step(action),
            Dynamics::MountainCar(d) => d.step(action),
            Dynamics::Acrobot(d) => d.step(action),
        };
        self.steps += 1;
        let truncated = !terminated && self.steps >= self.spec.max_steps_per_episode;
        self.episode_over = terminated || truncated;
        Ok(StepResult { next_obs: self.observe(), reward, terminated, truncated })
    }

    pub fn observe(&self) -> Observation {
        Observation(match &self.dynamics {
            Dynamics::CartPole(d) => d.observe(),
            Dynamics::MountainCar(d) => d.observe(),
            Dynamics::Acrobot(d) => d.observe(),
        })
    }

    /// Raw physical state (Acrobot: angles and velocities, not the
    /// cos/sin observation).
    pub fn state(&self) -> Vec<f64> {
        match &self.dynamics {
            Dynamics::CartPole(d) => d.state.to_vec(),
            Dynamics::MountainCar(d) => d.state.to_vec(),
            Dynamics::Acrobot(d) => d.state.to_vec(),
        }
    }

    /// Overwrites the physical state and starts an episode from it.
    pub fn set_state(&mut self, state: &[f64]) -> Result<()> {
        let expected = match self.spec.kind {
            EnvKind::CartPole | EnvKind::Acrobot => 4,
            EnvKind::MountainCar => 2,
        };
        if state.len() != expected {
            return Err(Error::Dimension { expected, got: state.len() });
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("environment state".into()));
        }
        match &mut self.dynamics {
            Dynamics::CartPole(d) => d.state.copy_from_slice(state),
            Dynamics::MountainCar(d) => d.state.copy_from_slice(state),
            Dynamics::Acrobot(d) => d.state.copy_from_slice(state),
        }
        self.steps = 0;
        self.episode_over = false;
        self.started = true;
        Ok(())
    }
}

/// Anything that can pick a greedy action for an observation.
pub trait Policy {
    fn obs_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn greedy_action(&self, obs: &[f64]) -> Result<usize>;
}

/// Runs one greedy episode and returns its undiscounted return.
pub fn run_episode<P: Policy + ?Sized>(env: &mut Environment, policy: &P) -> Result<f64> {
    let mut obs = env.reset(None);
    let mut total = 0.0;
    loop {
        let step = env.step(policy.greedy_action(&obs)?)?;
        total += step.reward;
        if step.done() {
            return Ok(total);
        }
        obs = step.next_obs;
    }
}

/// Mean return of `episodes` exploration-free rollouts.
pub fn evaluate<P: Policy + ?Sized>(
    spec: &EnvSpec,
    policy: &P,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    Ok(evaluate_returns(spec, policy, episodes, seed)?.iter().sum::<f64>() / episodes as f64)
}

/// Per-episode returns of `episodes` exploration-free rollouts.
pub fn evaluate_returns<P: Policy + ?Sized>(
    spec: &EnvSpec,
    policy: &P,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    check_policy_dims(spec.kind, policy)?;
    let mut env = make_env(spec, seed)?;
    (0..episodes).map(|_| run_episode(&mut env, policy)).collect()
}

pub(crate) fn check_policy_dims<P: Policy + ?Sized>(kind: EnvKind, policy: &P) -> Result<()> {
    if policy.obs_dim() != kind.obs_dim() {
        return Err(Error::Dimension { expected: kind.obs_dim(), got: policy.obs_dim() });
    }
    if policy.n_actions() != kind.n_actions() {
        return Err(Error::Dimension { expected: kind.n_actions(), got: policy.n_actions() });
    }
    Ok(())
}
