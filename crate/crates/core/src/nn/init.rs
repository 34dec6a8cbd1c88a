use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LayerShape;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    GlorotUniform,
    HeUniform,
}

impl InitScheme {
    pub fn name(self) -> &'static str {
        match self {
            InitScheme::GlorotUniform => "glorot_uniform",
            InitScheme::HeUniform => "he_uniform",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "glorot_uniform" => Ok(InitScheme::GlorotUniform),
            "he_uniform" => Ok(InitScheme::HeUniform),
            other => Err(Error::InvalidArgument(format!("unknown initializer `{other}`"))),
        }
    }

    /// Half-width of the uniform sampling interval.
    pub fn bound(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            InitScheme::GlorotUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            InitScheme::HeUniform => (6.0 / fan_in as f64).sqrt(),
        }
    }

    /// Standard deviation of a freshly sampled weight.
    pub fn std_dev(self, fan_in: usize, fan_out: usize) -> f64 {
        self.bound(fan_in, fan_out) / 3f64.sqrt()
    }
}

/// Weight initializer. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitializerSpec {
    pub scheme: InitScheme,
    pub seed: u64,
}

impl InitializerSpec {
    pub fn new(scheme: InitScheme, seed: u64) -> Self {
        Self { scheme, seed }
    }

    pub fn glorot(seed: u64) -> Self {
        Self::new(InitScheme::GlorotUniform, seed)
    }

    /// One incoming-weight row for a neuron of `shape`.
    pub fn sample_row(&self, shape: &LayerShape, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let b = self.scheme.bound(shape.in_dim, shape.out_dim);
        let dist = Uniform::new_inclusive(-b, b);
        (0..shape.in_dim).map(|_| dist.sample(rng)).collect()
    }

    /// Incoming-weight entries for one column (outgoing weights of an input
    /// neuron) of a layer of `shape`.
    pub fn sample_column(&self, shape: &LayerShape, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let b = self.scheme.bound(shape.in_dim, shape.out_dim);
        let dist = Uniform::new_inclusive(-b, b);
        (0..shape.out_dim).map(|_| dist.sample(rng)).collect()
    }
}
