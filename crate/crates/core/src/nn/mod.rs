//! Dense multilayer perceptrons.
//!
//! A network is a chain of [`Dense`] layers, `a[l] = g(W[l] a[l-1] + b[l])`,
//! with `W[l]` stored `out_dim x in_dim` so that row `j` holds the incoming
//! weights of neuron `j`. Forward passes record pre-activations and
//! activations; backward passes are exact reverse-mode gradients over those
//! records. All arithmetic is `f64`.

mod checkpoint;
mod init;
mod optim;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use checkpoint::NetworkHash;
pub use init::{InitScheme, InitializerSpec};
pub(crate) use optim::grad_clip;
pub use optim::{Optimizer, OptimizerConfig, OptimizerScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
            Activation::Softmax => "softmax",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }

    fn apply_in_place(self, z: &mut [f64]) {
        match self {
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Linear => {}
            Activation::Softmax => softmax_in_place(z),
        }
    }
}

/// Max-subtracted softmax.
pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerShape {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self { in_dim, out_dim, activation }
    }
}

/// `[in] -> hidden... (relu) -> out (output activation)`.
pub fn mlp_shapes(input: usize, hidden: &[usize], output: usize, out_act: Activation) -> Vec<LayerShape> {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(output);
    let last = dims.len() - 2;
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| {
            LayerShape::new(w[0], w[1], if i == last { out_act } else { Activation::Relu })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out_dim x in_dim`; row `j` is neuron `j`'s incoming weights.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn shape(&self) -> LayerShape {
        LayerShape::new(self.weights.ncols(), self.weights.nrows(), self.activation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<Dense>,
    initializer: InitializerSpec,
}

/// Pre-activations `z[l]` and activations `a[l]` of one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("network has at least one layer")
    }
}

/// Row-per-sample version of [`ForwardTrace`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTrace {
    pub input: Array2<f64>,
    pub pre: Vec<Array2<f64>>,
    pub post: Vec<Array2<f64>>,
}

impl BatchTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("network has at least one layer")
    }
}

/// Gradients shaped like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl GradientSet {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.biases.raw_dim())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn global_norm(&self) -> f64 {
        let w: f64 = self.weights.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum();
        let b: f64 = self.biases.iter().map(|b| b.iter().map(|v| v * v).sum::<f64>()).sum();
        (w + b).sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        self.weights.iter_mut().for_each(|w| *w *= k);
        self.biases.iter_mut().for_each(|b| *b *= k);
    }

    fn check_shapes(&self, net: &MlpNetwork) -> Result<()> {
        let ok = self.weights.len() == net.layers.len()
            && self.biases.len() == net.layers.len()
            && net.layers.iter().zip(&self.weights).all(|(l, w)| l.weights.dim() == w.dim())
            && net.layers.iter().zip(&self.biases).all(|(l, b)| l.biases.dim() == b.dim());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("gradient shapes do not match the network".into()))
        }
    }
}

/// Builds a network with initializer-sampled weights and zero biases.
pub fn init_network(shapes: &[LayerShape], initializer: InitializerSpec) -> Result<MlpNetwork> {
    validate_shapes(shapes)?;
    let mut rng = seed::rng(initializer.seed);
    let layers = shapes
        .iter()
        .map(|s| {
            let mut w = Array2::zeros((s.out_dim, s.in_dim));
            for mut row in w.rows_mut() {
                row.assign(&ArrayView1::from(&initializer.sample_row(s, &mut rng)));
            }
            Dense { weights: w, biases: Array1::zeros(s.out_dim), activation: s.activation }
        })
        .collect();
    Ok(MlpNetwork { layers, initializer })
}

fn validate_shapes(shapes: &[LayerShape]) -> Result<()> {
    if shapes.is_empty() {
        return Err(Error::InvalidArgument("network needs at least one layer".into()));
    }
    for (i, s) in shapes.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::InvalidArgument(format!("layer {i} has a zero dimension")));
        }
        if s.activation == Activation::Softmax && i + 1 != shapes.len() {
            return Err(Error::InvalidArgument(format!("softmax on hidden layer {i}")));
        }
    }
    for w in shapes.windows(2) {
        if w[0].out_dim != w[1].in_dim {
            return Err(Error::Dimension { expected: w[0].out_dim, got: w[1].in_dim });
        }
    }
    Ok(())
}

impl MlpNetwork {
    /// Assembles a network from explicit layers.
    pub fn from_layers(layers: Vec<Dense>, initializer: InitializerSpec) -> Result<Self> {
        let shapes: Vec<LayerShape> = layers.iter().map(Dense::shape).collect();
        validate_shapes(&shapes)?;
        for (i, l) in layers.iter().enumerate() {
            if l.biases.len() != l.weights.nrows() {
                return Err(Error::Dimension { expected: l.weights.nrows(), got: l.biases.len() });
            }
            if !l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
        }
        let layers = layers
            .into_iter()
            .map(|l| Dense {
                weights: l.weights.as_standard_layout().into_owned(),
                biases: l.biases,
                activation: l.activation,
            })
            .collect();
        Ok(Self { layers, initializer })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        self.layers.iter().map(Dense::shape).collect()
    }

    pub fn initializer(&self) -> InitializerSpec {
        self.initializer
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.nrows()
    }

    /// Every layer but the last.
    pub fn hidden_layer_count(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: input.len() });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let prev = post.last().map_or(input, Vec::as_slice);
            let z = affine(layer, prev);
            let mut a = z.clone();
            layer.activation.apply_in_place(&mut a);
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardTrace { input: input.to_vec(), pre, post })
    }

    /// Output activation only.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut a = input.to_vec();
        for layer in &self.layers {
            a = affine(layer, &a);
            layer.activation.apply_in_place(&mut a);
        }
        Ok(a)
    }

    pub fn forward_batch(&self, inputs: &Array2<f64>) -> Result<BatchTrace> {
        self.check_batch(inputs)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let prev = post.last().unwrap_or(inputs);
            let z = affine_batch(layer, prev);
            let a = activate_batch(layer.activation, &z);
            pre.push(z);
            post.push(a);
        }
        Ok(BatchTrace { input: inputs.clone(), pre, post })
    }

    pub fn predict_batch(&self, inputs: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_batch(inputs)?;
        let mut a = affine_batch(&self.layers[0], inputs);
        activate_batch_in_place(self.layers[0].activation, &mut a);
        for layer in &self.layers[1..] {
            a = affine_batch(layer, &a);
            activate_batch_in_place(layer.activation, &mut a);
        }
        Ok(a)
    }

    fn check_batch(&self, inputs: &Array2<f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: inputs.ncols() });
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input batch".into()));
        }
        Ok(())
    }

    /// Gradients of a loss given `dL/da[L]` at the output of `trace`.
    pub fn backward(&self, trace: &ForwardTrace, loss_grad_at_output: &[f64]) -> Result<GradientSet> {
        if trace.pre.len() != self.layers.len()
            || trace.input.len() != self.input_dim()
            || trace.pre.iter().zip(&self.layers).any(|(z, l)| z.len() != l.weights.nrows())
        {
            return Err(Error::InvalidArgument("trace was not produced by this network".into()));
        }
        let row = |v: &[f64]| Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap();
        let batch = BatchTrace {
            input: row(&trace.input),
            pre: trace.pre.iter().map(|z| row(z)).collect(),
            post: trace.post.iter().map(|a| row(a)).collect(),
        };
        self.backward_batch(&batch, &row(loss_grad_at_output))
    }

    /// Batched backward pass; gradients are summed over the rows.
    pub fn backward_batch(&self, trace: &BatchTrace, grad_out: &Array2<f64>) -> Result<GradientSet> {
        let n = self.layers.len();
        if trace.pre.len() != n || trace.post.len() != n || trace.input.ncols() != self.input_dim() {
            return Err(Error::InvalidArgument("trace was not produced by this network".into()));
        }
        if grad_out.dim() != trace.output().dim() {
            return Err(Error::Dimension { expected: trace.output().ncols(), got: grad_out.ncols() });
        }
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut delta_a = grad_out.clone();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let dz = activation_backward(layer.activation, &trace.pre[l], &trace.post[l], delta_a);
            let prev = if l == 0 { &trace.input } else { &trace.post[l - 1] };
            weights.push(dz.t().dot(prev));
            biases.push(dz.sum_axis(Axis(0)));
            delta_a = if l > 0 { dz.dot(&layer.weights) } else { Array2::zeros((0, 0)) };
        }
        weights.reverse();
        biases.reverse();
        Ok(GradientSet { weights, biases })
    }

    /// Replaces the incoming rows and biases of `row_indices` in one layer.
    pub fn set_layer_weights(
        &mut self,
        layer_index: usize,
        row_indices: &[usize],
        new_rows: &[Vec<f64>],
        new_biases: &[f64],
    ) -> Result<()> {
        let n_layers = self.layers.len();
        let layer = self.layers.get_mut(layer_index).ok_or_else(|| {
            Error::IndexOutOfRange(format!("layer {layer_index} of {n_layers}"))
        })?;
        if new_rows.len() != row_indices.len() || new_biases.len() != row_indices.len() {
            return Err(Error::InvalidArgument(
                "row_indices, new_rows and new_biases differ in length".into(),
            ));
        }
        let (out_dim, in_dim) = layer.weights.dim();
        for (k, &r) in row_indices.iter().enumerate() {
            if r >= out_dim {
                return Err(Error::IndexOutOfRange(format!("row {r} of layer with {out_dim} neurons")));
            }
            if new_rows[k].len() != in_dim {
                return Err(Error::Dimension { expected: in_dim, got: new_rows[k].len() });
            }
            if !new_rows[k].iter().all(|v| v.is_finite()) || !new_biases[k].is_finite() {
                return Err(Error::NonFinite(format!("replacement row {r}")));
            }
        }
        for (k, &r) in row_indices.iter().enumerate() {
            layer.weights.row_mut(r).assign(&ArrayView1::from(&new_rows[k]));
            layer.biases[r] = new_biases[k];
        }
        Ok(())
    }

    /// Replaces outgoing weights of `neuron` (column `neuron` of the next
    /// layer's weight matrix).
    pub fn set_layer_column(&mut self, layer_index: usize, column: usize, values: &[f64]) -> Result<()> {
        let n_layers = self.layers.len();
        let layer = self.layers.get_mut(layer_index).ok_or_else(|| {
            Error::IndexOutOfRange(format!("layer {layer_index} of {n_layers}"))
        })?;
        let (out_dim, in_dim) = layer.weights.dim();
        if column >= in_dim {
            return Err(Error::IndexOutOfRange(format!("column {column} of layer with {in_dim} inputs")));
        }
        if values.len() != out_dim {
            return Err(Error::Dimension { expected: out_dim, got: values.len() });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("replacement column {column}")));
        }
        layer.weights.column_mut(column).assign(&ArrayView1::from(values));
        Ok(())
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
    }
}

fn affine(layer: &Dense, x: &[f64]) -> Vec<f64> {
    let w = layer.weights.as_slice().expect("standard layout");
    let in_dim = x.len();
    w.chunks_exact(in_dim)
        .zip(layer.biases.iter())
        .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, x)| acc + w * x))
        .collect()
}

fn affine_batch(layer: &Dense, x: &Array2<f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weights.t());
    z += &layer.biases;
    z
}

fn activate_batch(act: Activation, z: &Array2<f64>) -> Array2<f64> {
    let mut a = z.clone();
    activate_batch_in_place(act, &mut a);
    a
}

fn activate_batch_in_place(act: Activation, a: &mut Array2<f64>) {
    match act {
        Activation::Relu => a.mapv_inplace(|v| v.max(0.0)),
        Activation::Tanh => a.mapv_inplace(f64::tanh),
        Activation::Linear => {}
        Activation::Softmax => {
            for mut row in a.rows_mut() {
                softmax_in_place(row.as_slice_mut().expect("standard layout"));
            }
        }
    }
}

/// `dL/dz` from `dL/da`.
fn activation_backward(act: Activation, z: &Array2<f64>, a: &Array2<f64>, mut da: Array2<f64>) -> Array2<f64> {
    match act {
        Activation::Relu => {
            ndarray::Zip::from(&mut da).and(z).for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            da
        }
        Activation::Tanh => {
            ndarray::Zip::from(&mut da).and(a).for_each(|d, &a| *d *= 1.0 - a * a);
            da
        }
        Activation::Linear => da,
        Activation::Softmax => {
            for (mut d, a) in da.rows_mut().into_iter().zip(a.rows()) {
                let dot: f64 = d.iter().zip(a.iter()).map(|(d, a)| d * a).sum();
                d.iter_mut().zip(a.iter()).for_each(|(d, a)| *d = a * (*d - dot));
            }
            da
        }
    }
}

#[cfg(test)]
mod tests;
