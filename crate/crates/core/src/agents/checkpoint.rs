//! Agent checkpoints: embedded network checkpoints, hyperparameters,
//! counters and the random stream position. Optimizer moments are not
//! stored; a restored agent starts with fresh moments.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::dqn::{DqnAgent, DqnHyperparams, EpsilonSchedule};
use super::ppo::{PpoAgent, PpoHyperparams, Rollout};
use super::replay::ReplayBuffer;
use super::{Agent, AgentKind};
use crate::codec::{Reader, Writer};
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::nn::{MlpNetwork, Optimizer};
use std::path::Path;

const MAGIC: &[u8; 4] = b"HRLA";
const VERSION: u32 = 1;

fn write_rng(w: &mut Writer, rng: &ChaCha8Rng) {
    let pos = rng.get_word_pos();
    w.raw(&rng.get_seed()).u64(rng.get_stream()).u64(pos as u64).u64((pos >> 64) as u64);
}

fn read_rng(r: &mut Reader<'_>) -> Result<ChaCha8Rng> {
    let seed: [u8; 32] = r.raw(32)?.try_into().expect("32 bytes");
    let stream = r.u64()?;
    let lo = r.u64()? as u128;
    let hi = r.u64()? as u128;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(lo | (hi << 64));
    Ok(rng)
}

fn corrupt(e: impl std::fmt::Display) -> Error {
    Error::Corrupt(format!("agent checkpoint: {e}"))
}

fn read_net(r: &mut Reader<'_>) -> Result<MlpNetwork> {
    MlpNetwork::from_bytes(r.blob()?)
}

impl Agent {
    /// Layout: kind str, env kind str, hyperparameters as TOML str,
    /// episodes u64, rng (seed 32 bytes, stream u64, word position u128 as
    /// two u64), then per kind:
    /// dqn: online blob, target blob, schedule f64 f64 u64 u64, schedule
    /// steps u64, schedule episodes u64, env steps u64, gradient steps u64;
    /// ppo: policy blob, value blob, updates u64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(self.kind().name()).str(self.env_kind().name());
        match self {
            Agent::Dqn(a) => {
                w.str(&toml::to_string(&a.hp).expect("hyperparams serialize"));
                w.u64(a.episodes_trained);
                write_rng(&mut w, &a.rng);
                w.blob(&a.online.to_bytes()).blob(&a.target.to_bytes());
                let s = a.schedule;
                w.f64(s.start).f64(s.end).u64(s.anneal_steps).u64(s.anneal_episodes);
                w.u64(a.schedule_steps).u64(a.schedule_episodes).u64(a.env_steps).u64(a.grad_steps);
            }
            Agent::Ppo(a) => {
                w.str(&toml::to_string(&a.hp).expect("hyperparams serialize"));
                w.u64(a.episodes_trained);
                write_rng(&mut w, &a.rng);
                w.blob(&a.policy.to_bytes()).blob(&a.value.to_bytes());
                w.u64(a.updates);
            }
        }
        w.finish(MAGIC, VERSION)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, _) = Reader::open(bytes, MAGIC, VERSION, "agent checkpoint")?;
        let kind: AgentKind = r.str()?.parse().map_err(corrupt)?;
        let env_kind: EnvKind = r.str()?.parse().map_err(corrupt)?;
        let hp_text = r.str()?;
        let episodes_trained = r.u64()?;
        let rng = read_rng(&mut r)?;
        let agent = match kind {
            AgentKind::Dqn => {
                let hp: DqnHyperparams = toml::from_str(&hp_text).map_err(corrupt)?;
                hp.validate().map_err(corrupt)?;
                let online = read_net(&mut r)?;
                let target = read_net(&mut r)?;
                let schedule = EpsilonSchedule {
                    start: r.f64()?,
                    end: r.f64()?,
                    anneal_steps: r.u64()?,
                    anneal_episodes: r.u64()?,
                };
                schedule.validate().map_err(corrupt)?;
                let fresh = DqnAgent::new(env_kind, hp.clone(), 0)?;
                if online.shapes() != fresh.online.shapes() || target.shapes() != online.shapes() {
                    return Err(corrupt("network shapes do not match the hyperparameters"));
                }
                Agent::Dqn(DqnAgent {
                    env_kind,
                    optimizer: Optimizer::new(hp.optimizer_config())?,
                    replay: ReplayBuffer::new(env_kind.obs_dim(), hp.replay_capacity)?,
                    online,
                    target,
                    schedule,
                    schedule_steps: r.u64()?,
                    schedule_episodes: r.u64()?,
                    env_steps: r.u64()?,
                    grad_steps: r.u64()?,
                    episodes_trained,
                    rng,
                    hp,
                })
            }
            AgentKind::Ppo => {
                let hp: PpoHyperparams = toml::from_str(&hp_text).map_err(corrupt)?;
                hp.validate().map_err(corrupt)?;
                let policy = read_net(&mut r)?;
                let value = read_net(&mut r)?;
                let fresh = PpoAgent::new(env_kind, hp.clone(), 0)?;
                if policy.shapes() != fresh.policy.shapes() || value.shapes() != fresh.value.shapes() {
                    return Err(corrupt("network shapes do not match the hyperparameters"));
                }
                Agent::Ppo(PpoAgent {
                    env_kind,
                    policy_opt: Optimizer::new(hp.optimizer_config())?,
                    value_opt: Optimizer::new(hp.optimizer_config())?,
                    rollout: Rollout::default(),
                    policy,
                    value,
                    updates: r.u64()?,
                    episodes_trained,
                    rng,
                    hp,
                })
            }
        };
        r.finish()?;
        Ok(agent)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

impl ReplayBuffer {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
