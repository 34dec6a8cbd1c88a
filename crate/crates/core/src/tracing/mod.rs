//! Activation traces and hypoactive-neuron detection.
//!
//! Before deployment the agent is rolled out on its original environment and
//! the visited observations are saved. A trace scores every hidden neuron of
//! a network by its mean absolute activation over those observations; the
//! lowest-scoring fraction of each hidden layer forms the hypoactive mask.

use std::path::Path;

use crate::agents::Agent;
use crate::codec::{Reader, Writer};
use crate::envs::{check_policy_dims, make_env, EnvSpec, Policy};
use crate::error::{Error, Result};
use crate::nn::{MlpNetwork, NetworkHash};
use crate::seed;

/// Default number of observations gathered for a trace.
pub const DEFAULT_SAMPLE_COUNT: usize = 2000;

const MAGIC: &[u8; 4] = b"HRLT";
const VERSION: u32 = 1;

/// Observations visited by a greedy policy on one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    obs_dim: usize,
    /// Row-major, `len() * obs_dim` values.
    data: Vec<f64>,
    /// Episode index of each observation.
    episodes: Vec<u32>,
    env_digest: [u8; 32],
    seed: u64,
}

impl ObservationSet {
    pub fn from_rows(rows: &[Vec<f64>], env_digest: [u8; 32], seed: u64) -> Result<Self> {
        let obs_dim = rows.first().map(Vec::len).ok_or_else(|| {
            Error::InvalidArgument("observation set must not be empty".into())
        })?;
        if obs_dim == 0 {
            return Err(Error::InvalidArgument("observations must have at least one dimension".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != obs_dim) {
            return Err(Error::Dimension { expected: obs_dim, got: bad.len() });
        }
        Ok(Self {
            obs_dim,
            data: rows.concat(),
            episodes: vec![0; rows.len()],
            env_digest,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn episode_of(&self, i: usize) -> u32 {
        self.episodes[i]
    }

    pub fn env_digest(&self) -> [u8; 32] {
        self.env_digest
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The set concatenated with itself.
    pub fn duplicated(&self) -> Self {
        let mut out = self.clone();
        out.data.extend_from_slice(&self.data);
        out.episodes.extend_from_slice(&self.episodes);
        out
    }
}

/// Gathers `sample_count` observations by rolling out `policy` greedily on
/// `spec`, starting a new episode whenever one ends. Each episode's initial
/// observation is included.
pub fn collect_observations<P: Policy + ?Sized>(
    policy: &P,
    spec: &EnvSpec,
    sample_count: usize,
    seed: u64,
) -> Result<ObservationSet> {
    if sample_count < 1 {
        return Err(Error::InvalidArgument("sample_count must be at least 1".into()));
    }
    check_policy_dims(spec.kind, policy)?;
    let mut env = make_env(spec, seed::derive(seed, "trace-env"))?;
    let d = spec.kind.obs_dim();
    let mut data = Vec::with_capacity(sample_count * d);
    let mut episodes = Vec::with_capacity(sample_count);
    let mut episode = 0u32;
    let mut obs = env.reset(None);
    while episodes.len() < sample_count {
        data.extend_from_slice(&obs);
        episodes.push(episode);
        let step = env.step(policy.greedy_action(&obs)?)?;
        obs = if step.done() {
            episode += 1;
            env.reset(None)
        } else {
            step.next_obs
        };
    }
    Ok(ObservationSet { obs_dim: d, data, episodes, env_digest: spec.digest(), seed })
}

/// Per-neuron mean absolute activation of every hidden layer of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    network: NetworkHash,
    env_digest: [u8; 32],
    observation_count: u64,
    /// `scores[l][j]` for hidden layer `l`, neuron `j`.
    scores: Vec<Vec<f64>>,
}

impl ActivationTrace {
    pub fn network_hash(&self) -> NetworkHash {
        self.network
    }

    pub fn env_digest(&self) -> [u8; 32] {
        self.env_digest
    }

    pub fn observation_count(&self) -> u64 {
        self.observation_count
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn check_binding(&self, net: &MlpNetwork) -> Result<()> {
        let h = net.hash();
        if h != self.network {
            return Err(Error::Binding(format!(
                "trace belongs to network {}, not {h}",
                self.network
            )));
        }
        Ok(())
    }
}

/// Sum in a fixed halving order, so a set concatenated with itself sums to
/// exactly twice the original.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn compute_activation_trace(net: &MlpNetwork, obs: &ObservationSet) -> Result<ActivationTrace> {
    if obs.is_empty() {
        return Err(Error::InvalidArgument("observation set is empty".into()));
    }
    if obs.obs_dim() != net.input_dim() {
        return Err(Error::Dimension { expected: net.input_dim(), got: obs.obs_dim() });
    }
    if net.hidden_layer_count() == 0 {
        return Err(Error::InvalidArgument("network has no hidden layers to trace".into()));
    }
    let hidden = net.hidden_layer_count();
    // Column-major |a| per layer: magnitudes[l][j * n + i] for observation i.
    let n = obs.len();
    let mut magnitudes: Vec<Vec<f64>> =
        net.layers()[..hidden].iter().map(|l| vec![0.0; l.weights.nrows() * n]).collect();
    for i in 0..n {
        let f = net.forward(obs.get(i))?;
        for (l, a) in f.post[..hidden].iter().enumerate() {
            for (j, v) in a.iter().enumerate() {
                magnitudes[l][j * n + i] = v.abs();
            }
        }
    }
    let scores = magnitudes
        .iter()
        .map(|m| m.chunks(n).map(|col| pairwise_sum(col) / n as f64).collect())
        .collect();
    Ok(ActivationTrace {
        network: net.hash(),
        env_digest: obs.env_digest(),
        observation_count: obs.len() as u64,
        scores,
    })
}

/// Number of neurons to forget in a layer of `width`:
/// `floor(forget_rate * width / 100 + 1/2)`.
pub fn hypoactive_count(forget_rate: f64, width: usize) -> usize {
    (forget_rate * width as f64 / 100.0 + 0.5).floor() as usize
}

/// Minor-behavior neurons of each hidden layer of one network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypoactiveMask {
    network: NetworkHash,
    /// Sorted neuron indices per hidden layer.
    layers: Vec<Vec<usize>>,
}

impl HypoactiveMask {
    pub fn new(network: NetworkHash, layers: Vec<Vec<usize>>) -> Self {
        let layers = layers
            .into_iter()
            .map(|mut l| {
                l.sort_unstable();
                l.dedup();
                l
            })
            .collect();
        Self { network, layers }
    }

    pub fn network_hash(&self) -> NetworkHash {
        self.network
    }

    pub fn layers(&self) -> &[Vec<usize>] {
        &self.layers
    }

    pub fn is_empty(&self) -> bool {
        self.layers.iter().all(Vec::is_empty)
    }

    pub fn total(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }
}

/// Selects, per hidden layer, the `hypoactive_count` lowest-scoring neurons;
/// ties go to the lower index.
pub fn detect_minor_regions(trace: &ActivationTrace, forget_rate: f64) -> Result<HypoactiveMask> {
    if !(0.0..=100.0).contains(&forget_rate) {
        return Err(Error::InvalidArgument(format!("forget rate {forget_rate} outside [0, 100]")));
    }
    let layers = trace
        .scores
        .iter()
        .map(|scores| {
            let k = hypoactive_count(forget_rate, scores.len());
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
            order.truncate(k);
            order
        })
        .collect();
    Ok(HypoactiveMask::new(trace.network, layers))
}

/// Traces of every behavior network of an agent, by network name.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub traces: Vec<(String, ActivationTrace)>,
}

impl TraceSet {
    pub fn get(&self, name: &str) -> Option<&ActivationTrace> {
        self.traces.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Checks every trace against the agent network of the same name.
    pub fn check_binding(&self, agent: &Agent) -> Result<()> {
        let nets = agent.networks();
        if nets.len() != self.traces.len() {
            return Err(Error::Binding(format!(
                "trace set covers {} networks, agent has {}",
                self.traces.len(),
                nets.len()
            )));
        }
        for (name, net) in nets {
            let t = self
                .get(name)
                .ok_or_else(|| Error::Binding(format!("no trace for network `{name}`")))?;
            t.check_binding(net)?;
        }
        Ok(())
    }

    /// Layout: u32 trace count, then per trace: str name, 32-byte network
    /// hash, 32-byte env digest, u64 observation count, u32 hidden layer
    /// count, f64s scores per layer.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.traces.len() as u32);
        for (name, t) in &self.traces {
            w.str(name).raw(&t.network.0).raw(&t.env_digest).u64(t.observation_count);
            w.u32(t.scores.len() as u32);
            for s in &t.scores {
                w.f64s(s);
            }
        }
        w.finish(MAGIC, VERSION)
    }

    /// Decodes without binding checks; see [`load_trace`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, _) = Reader::open(bytes, MAGIC, VERSION, "trace")?;
        let count = r.u32()?;
        if count == 0 {
            return Err(Error::Corrupt("trace: no networks".into()));
        }
        let mut traces = Vec::new();
        for _ in 0..count {
            let name = r.str()?;
            let network = NetworkHash(r.raw(32)?.try_into().expect("32 bytes"));
            let env_digest: [u8; 32] = r.raw(32)?.try_into().expect("32 bytes");
            let observation_count = r.u64()?;
            let layers = r.u32()?;
            let scores = (0..layers).map(|_| r.f64s()).collect::<Result<Vec<_>>>()?;
            let empty = observation_count == 0 || scores.is_empty() || scores.iter().any(Vec::is_empty);
            if empty {
                return Err(Error::Corrupt(format!("trace `{name}` is empty")));
            }
            if scores.iter().flatten().any(|s| !s.is_finite() || *s < 0.0) {
                return Err(Error::Corrupt(format!("trace `{name}` has invalid scores")));
            }
            traces.push((name, ActivationTrace { network, env_digest, observation_count, scores }));
        }
        r.finish()?;
        Ok(Self { traces })
    }
}

/// Traces every behavior network of `agent` over `obs`.
pub fn compute_agent_trace(agent: &Agent, obs: &ObservationSet) -> Result<TraceSet> {
    let traces = agent
        .networks()
        .into_iter()
        .map(|(name, net)| Ok((name.to_string(), compute_activation_trace(net, obs)?)))
        .collect::<Result<_>>()?;
    Ok(TraceSet { traces })
}

pub fn save_trace(set: &TraceSet) -> Vec<u8> {
    set.to_bytes()
}

/// Decodes a trace file and checks that it belongs to `agent`.
pub fn load_trace(bytes: &[u8], agent: &Agent) -> Result<TraceSet> {
    let set = TraceSet::from_bytes(bytes)?;
    set.check_binding(agent)?;
    Ok(set)
}

impl TraceSet {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path, agent: &Agent) -> Result<Self> {
        load_trace(&std::fs::read(path)?, agent)
    }
}

#[cfg(test)]
mod tests;
