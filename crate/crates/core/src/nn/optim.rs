//! First-order optimizers: `W <- W - lr * step(grad)`.

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::{GradientSet, MlpNetwork};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum OptimizerScheme {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerScheme {
    pub fn adam() -> Self {
        OptimizerScheme::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(flatten)]
    pub scheme: OptimizerScheme,
    pub learning_rate: f64,
    /// Rescale gradients whose global L2 norm exceeds this.
    #[serde(default)]
    pub max_grad_norm: Option<f64>,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self { scheme: OptimizerScheme::Sgd, learning_rate, max_grad_norm: None }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self { scheme: OptimizerScheme::adam(), learning_rate, max_grad_norm: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if let OptimizerScheme::Adam { beta1, beta2, epsilon } = self.scheme {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 {
                return Err(Error::InvalidArgument("Adam needs beta1, beta2 in [0, 1) and epsilon > 0".into()));
            }
        }
        if matches!(self.max_grad_norm, Some(n) if !(n > 0.0)) {
            return Err(Error::InvalidArgument("max_grad_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Serde form of an optional gradient clip in config files: `0` disables
/// clipping, since TOML has no null.
pub(crate) mod grad_clip {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(v.unwrap_or(0.0))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let v = f64::deserialize(d)?;
        Ok((v != 0.0).then_some(v))
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    first: GradientSet,
    second: GradientSet,
    step: u64,
}

/// Optimizer state bound to one network's shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    config: OptimizerConfig,
    moments: Option<Moments>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, moments: None })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Adam timestep (0 before the first update).
    pub fn step_count(&self) -> u64 {
        self.moments.as_ref().map_or(0, |m| m.step)
    }

    /// Forgets accumulated moments.
    pub fn reset(&mut self) {
        self.moments = None;
    }

    /// Applies one update. Non-finite gradients abort without touching the
    /// network.
    pub fn apply(&mut self, net: &mut MlpNetwork, grads: &GradientSet) -> Result<()> {
        grads.check_shapes(net)?;
        if !grads.is_finite() {
            return Err(Error::TrainingAborted("non-finite gradient".into()));
        }
        let clipped;
        let grads = match self.config.max_grad_norm {
            Some(max) => {
                let norm = grads.global_norm();
                if norm > max {
                    let mut g = grads.clone();
                    g.scale(max / norm);
                    clipped = g;
                    &clipped
                } else {
                    grads
                }
            }
            None => grads,
        };
        let lr = self.config.learning_rate;
        match self.config.scheme {
            OptimizerScheme::Sgd => {
                for (layer, (gw, gb)) in net.layers_mut().iter_mut().zip(grads.weights.iter().zip(&grads.biases)) {
                    layer.weights.scaled_add(-lr, gw);
                    layer.biases.scaled_add(-lr, gb);
                }
            }
            OptimizerScheme::Adam { beta1, beta2, epsilon } => {
                let m = self.moments.get_or_insert_with(|| Moments {
                    first: GradientSet::zeros_like(net),
                    second: GradientSet::zeros_like(net),
                    step: 0,
                });
                m.step += 1;
                let t = m.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let update = |p: &mut f64, g: &f64, m1: &mut f64, m2: &mut f64| {
                    *m1 = beta1 * *m1 + (1.0 - beta1) * g;
                    *m2 = beta2 * *m2 + (1.0 - beta2) * g * g;
                    let m_hat = *m1 / c1;
                    let v_hat = *m2 / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
                };
                for (l, layer) in net.layers_mut().iter_mut().enumerate() {
                    Zip::from(&mut layer.weights)
                        .and(&grads.weights[l])
                        .and(&mut m.first.weights[l])
                        .and(&mut m.second.weights[l])
                        .for_each(update);
                    Zip::from(&mut layer.biases)
                        .and(&grads.biases[l])
                        .and(&mut m.first.biases[l])
                        .and(&mut m.second.biases[l])
                        .for_each(update);
                }
            }
        }
        if !net.is_finite() {
            return Err(Error::TrainingAborted("update produced non-finite parameters".into()));
        }
        Ok(())
    }
}
