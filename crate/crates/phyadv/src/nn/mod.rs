//! Minimal deterministic tensor/layer/loss/optimizer engine with
//! reverse-mode gradients.
//!
//! Models are strictly sequential stacks of layers, so gradients are computed
//! by a per-layer taped backward pass rather than a general autodiff graph.
//! A [`ModelState`] is immutable after training and may be shared read-only
//! across concurrent evaluation workers; training mutates it single-threaded.

pub mod io;
pub mod layers;
pub mod loss;
pub mod optim;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::Rng;

/// One layer of a sequential model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    Conv1d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize },
    Relu,
    Softmax,
    EnergyNorm { dim: usize },
    Flatten,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Relu => "relu",
            LayerSpec::Softmax => "softmax",
            LayerSpec::EnergyNorm { .. } => "energy-norm",
            LayerSpec::Flatten => "flatten",
        }
    }

    fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv1d { .. })
    }

    /// Output shape for a given input shape, or a configuration error when
    /// the shapes are incompatible.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Dense { input: in_dim, output } => {
                if input != [in_dim] {
                    return Err(Error::Config(format!(
                        "dense({in_dim}->{output}) cannot accept input shape {input:?}"
                    )));
                }
                Ok(vec![output])
            }
            LayerSpec::Conv1d { in_channels, out_channels, kernel, stride } => {
                if input.len() != 2 || input[0] != in_channels {
                    return Err(Error::Config(format!(
                        "conv1d({in_channels}->{out_channels}) cannot accept input shape {input:?}"
                    )));
                }
                let len = input[1];
                if len < kernel {
                    return Err(Error::Config(format!(
                        "conv1d kernel {kernel} longer than input length {len}"
                    )));
                }
                Ok(vec![out_channels, (len - kernel) / stride + 1])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Softmax => {
                if input.len() != 1 {
                    return Err(Error::Config(format!(
                        "softmax expects a 1-D input, got {input:?}"
                    )));
                }
                Ok(input.to_vec())
            }
            LayerSpec::EnergyNorm { dim } => {
                if input != [dim] {
                    return Err(Error::Config(format!(
                        "energy-norm({dim}) cannot accept input shape {input:?}"
                    )));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    fn validate_sizes(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Dense { input, output } => input > 0 && output > 0,
            LayerSpec::Conv1d { in_channels, out_channels, kernel, stride } => {
                in_channels > 0 && out_channels > 0 && kernel > 0 && stride > 0
            }
            LayerSpec::EnergyNorm { dim } => dim > 0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("layer {self:?} has a zero-sized dimension")))
        }
    }
}

/// Ordered stack of layers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Self {
        Self { layers }
    }

    /// Walk the shape chain from `input_shape`, returning the output shape.
    pub fn infer_output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input_shape.to_vec();
        for layer in &self.layers {
            shape = layer.output_shape(&shape)?;
        }
        Ok(shape)
    }

    /// Consistency checks that do not require knowing the input shape:
    /// positive sizes plus whatever cross-layer chaining is statically known.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("model spec has no layers".to_string()));
        }
        for layer in &self.layers {
            layer.validate_sizes()?;
        }
        // Track the statically known part of the shape chain.
        let mut known: Option<Vec<usize>> = None;
        for layer in &self.layers {
            known = match (&known, layer) {
                (Some(shape), _) => Some(layer.output_shape(shape)?),
                (None, LayerSpec::Dense { input, output }) => {
                    let _ = (input, output);
                    Some(layer.output_shape(&[*input])?)
                }
                (None, _) => None,
            };
        }
        Ok(())
    }

    /// True when the final layer is softmax; such models support a
    /// logits-mode forward pass that stops before it.
    pub fn ends_with_softmax(&self) -> bool {
        matches!(self.layers.last(), Some(LayerSpec::Softmax))
    }
}

/// Per-layer trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams<T: Scalar> {
    None,
    WeightsBias { weights: Tensor<T>, bias: Tensor<T> },
}

/// A model spec plus its parameters and the seed they were initialized from.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<T: Scalar> {
    spec: ModelSpec,
    params: Vec<LayerParams<T>>,
    seed: u64,
}

/// Recorded activations of a forward pass: the input and output of every
/// executed layer, in execution order.
#[derive(Clone, Debug)]
pub struct Tape<T: Scalar> {
    layer_inputs: Vec<Tensor<T>>,
    layer_outputs: Vec<Tensor<T>>,
}

impl<T: Scalar> Tape<T> {
    /// Number of layers recorded (a logits-mode pass records one fewer than
    /// the full stack).
    pub fn recorded_layers(&self) -> usize {
        self.layer_inputs.len()
    }

    pub fn layer_output(&self, index: usize) -> &Tensor<T> {
        &self.layer_outputs[index]
    }

    pub fn layer_input(&self, index: usize) -> &Tensor<T> {
        &self.layer_inputs[index]
    }
}

/// Gradients for every parameterized layer plus the model input.
#[derive(Clone, Debug)]
pub struct Gradients<T: Scalar> {
    pub per_layer: Vec<Option<(Tensor<T>, Tensor<T>)>>,
    pub input: Tensor<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(model: &ModelState<T>, input_shape: &[usize]) -> Self {
        let per_layer = model
            .params
            .iter()
            .map(|p| match p {
                LayerParams::None => None,
                LayerParams::WeightsBias { weights, bias } => Some((
                    Tensor::zeros(weights.shape().to_vec()),
                    Tensor::zeros(bias.shape().to_vec()),
                )),
            })
            .collect();
        Self { per_layer, input: Tensor::zeros(input_shape.to_vec()) }
    }

    /// Accumulate another gradient set scaled by `s`.
    pub fn accumulate(&mut self, other: &Gradients<T>, s: T) {
        for (dst, src) in self.per_layer.iter_mut().zip(&other.per_layer) {
            if let (Some((dw, db)), Some((sw, sb))) = (dst.as_mut(), src.as_ref()) {
                crate::util::axpy(dw.data_mut(), s, sw.data());
                crate::util::axpy(db.data_mut(), s, sb.data());
            }
        }
        crate::util::axpy(self.input.data_mut(), s, other.input.data());
    }

    pub fn is_finite(&self) -> bool {
        self.per_layer.iter().all(|p| match p {
            None => true,
            Some((w, b)) => w.is_finite() && b.is_finite(),
        }) && self.input.is_finite()
    }
}

/// Glorot-uniform initialization: weights from U(±sqrt(6/(fan_in+fan_out))),
/// zero biases. Bit-reproducible for a given seed.
pub fn init_model<T: Scalar>(spec: &ModelSpec, seed: u64) -> Result<ModelState<T>> {
    spec.validate()?;
    let mut rng = crate::util::rng_for(seed, &[0x6d6f_6465_6c5f_696e]);
    let mut params = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        let p = match *layer {
            LayerSpec::Dense { input, output } => {
                let bound = (6.0 / (input + output) as f64).sqrt();
                let weights = glorot_tensor(&mut rng, vec![output, input], bound);
                let bias = Tensor::zeros(vec![output]);
                LayerParams::WeightsBias { weights, bias }
            }
            LayerSpec::Conv1d { in_channels, out_channels, kernel, .. } => {
                let fan_in = in_channels * kernel;
                let fan_out = out_channels * kernel;
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights =
                    glorot_tensor(&mut rng, vec![out_channels, in_channels, kernel], bound);
                let bias = Tensor::zeros(vec![out_channels]);
                LayerParams::WeightsBias { weights, bias }
            }
            _ => LayerParams::None,
        };
        params.push(p);
    }
    Ok(ModelState { spec: spec.clone(), params, seed })
}

fn glorot_tensor<T: Scalar>(
    rng: &mut rand_chacha::ChaCha8Rng,
    shape: Vec<usize>,
    bound: f64,
) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64_c(rng.random_range(-bound..bound)))
        .collect();
    Tensor::from_vec(shape, data).expect("init shape")
}

impl<T: Scalar> ModelState<T> {
    /// Reassemble a model from a spec and explicit parameters (used by the
    /// weight-file loader and by tests).
    pub fn from_parts(spec: ModelSpec, params: Vec<LayerParams<T>>, seed: u64) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.layers.len() {
            return Err(Error::Config(format!(
                "{} parameter slots for {} layers",
                params.len(),
                spec.layers.len()
            )));
        }
        for (layer, p) in spec.layers.iter().zip(&params) {
            match (layer, p) {
                (LayerSpec::Dense { input, output }, LayerParams::WeightsBias { weights, bias }) => {
                    if weights.shape() != [*output, *input] || bias.shape() != [*output] {
                        return Err(Error::Config(format!(
                            "dense({input}->{output}) has mismatched parameter shapes"
                        )));
                    }
                }
                (
                    LayerSpec::Conv1d { in_channels, out_channels, kernel, .. },
                    LayerParams::WeightsBias { weights, bias },
                ) => {
                    if weights.shape() != [*out_channels, *in_channels, *kernel]
                        || bias.shape() != [*out_channels]
                    {
                        return Err(Error::Config(
                            "conv1d has mismatched parameter shapes".to_string(),
                        ));
                    }
                }
                (l, LayerParams::None) if !l.has_params() => {}
                (l, _) => {
                    return Err(Error::Config(format!(
                        "layer {} has wrong parameter kind",
                        l.kind_name()
                    )));
                }
            }
        }
        Ok(Self { spec, params, seed })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[LayerParams<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams<T>] {
        &mut self.params
    }

    /// Forward pass over `layers[..layer_count]`.
    fn forward_range(
        &self,
        input: &Tensor<T>,
        layer_count: usize,
        record: bool,
    ) -> Result<(Tensor<T>, Option<Tape<T>>)> {
        let mut tape = record.then(|| Tape {
            layer_inputs: Vec::with_capacity(layer_count),
            layer_outputs: Vec::with_capacity(layer_count),
        });
        let mut current = input.clone();
        for (layer, params) in self.spec.layers[..layer_count].iter().zip(&self.params) {
            layer.output_shape(current.shape())?;
            let output = match (layer, params) {
                (LayerSpec::Dense { .. }, LayerParams::WeightsBias { weights, bias }) => {
                    layers::dense_forward(weights, bias, &current)?
                }
                (
                    LayerSpec::Conv1d { stride, .. },
                    LayerParams::WeightsBias { weights, bias },
                ) => layers::conv1d_forward(weights, bias, &current, *stride)?,
                (LayerSpec::Relu, _) => layers::relu_forward(&current),
                (LayerSpec::Softmax, _) => layers::softmax_forward(&current)?,
                (LayerSpec::EnergyNorm { dim }, _) => {
                    layers::energy_norm_forward(&current, *dim)?
                }
                (LayerSpec::Flatten, _) => current.flattened(),
                _ => unreachable!("params validated against spec"),
            };
            if let Some(t) = tape.as_mut() {
                t.layer_inputs.push(current.clone());
                t.layer_outputs.push(output.clone());
            }
            current = output;
        }
        Ok((current, tape))
    }

    /// Full forward pass. With `record` set, every intermediate activation is
    /// retained for [`backward`] and for activation-maximization attacks.
    pub fn forward(&self, input: &Tensor<T>, record: bool) -> Result<(Tensor<T>, Option<Tape<T>>)> {
        self.forward_range(input, self.spec.layers.len(), record)
    }

    /// Forward pass that stops before a trailing softmax, yielding logits.
    /// Falls back to the full pass when the model does not end in softmax.
    pub fn forward_logits(
        &self,
        input: &Tensor<T>,
        record: bool,
    ) -> Result<(Tensor<T>, Option<Tape<T>>)> {
        let count = if self.spec.ends_with_softmax() {
            self.spec.layers.len() - 1
        } else {
            self.spec.layers.len()
        };
        self.forward_range(input, count, record)
    }

    /// Reverse pass seeded with a gradient at the final recorded output.
    pub fn backward(&self, tape: &Tape<T>, loss_grad: &Tensor<T>) -> Result<Gradients<T>> {
        let n = tape.recorded_layers();
        let mut grads: Vec<Option<&Tensor<T>>> = vec![None; n];
        grads[n - 1] = Some(loss_grad);
        self.backward_multi(tape, &grads)
    }

    /// Reverse pass with gradient contributions injected at arbitrary layer
    /// outputs (needed by activation-maximization objectives that sum terms
    /// from several hidden layers).
    pub fn backward_multi(
        &self,
        tape: &Tape<T>,
        output_grads: &[Option<&Tensor<T>>],
    ) -> Result<Gradients<T>> {
        let n = tape.recorded_layers();
        if n == 0 {
            return Err(Error::State("backward called on an empty tape".to_string()));
        }
        if output_grads.len() != n {
            return Err(Error::Config(format!(
                "{} output gradient slots for {n} recorded layers",
                output_grads.len()
            )));
        }
        let mut per_layer: Vec<Option<(Tensor<T>, Tensor<T>)>> = vec![None; self.params.len()];
        let mut grad = Tensor::zeros(tape.layer_outputs[n - 1].shape().to_vec());
        for idx in (0..n).rev() {
            if let Some(inject) = output_grads[idx] {
                if inject.shape() != grad.shape() {
                    return Err(Error::Config(format!(
                        "injected gradient shape {:?} does not match layer {idx} output {:?}",
                        inject.shape(),
                        grad.shape()
                    )));
                }
                grad = grad.add(inject)?;
            }
            let input = &tape.layer_inputs[idx];
            let output = &tape.layer_outputs[idx];
            grad = match (&self.spec.layers[idx], &self.params[idx]) {
                (LayerSpec::Dense { .. }, LayerParams::WeightsBias { weights, .. }) => {
                    let (gw, gb, gx) = layers::dense_backward(weights, input, &grad);
                    per_layer[idx] = Some((gw, gb));
                    gx
                }
                (
                    LayerSpec::Conv1d { stride, .. },
                    LayerParams::WeightsBias { weights, .. },
                ) => {
                    let (gw, gb, gx) = layers::conv1d_backward(weights, input, &grad, *stride);
                    per_layer[idx] = Some((gw, gb));
                    gx
                }
                (LayerSpec::Relu, _) => layers::relu_backward(input, &grad),
                (LayerSpec::Softmax, _) => layers::softmax_backward(output, &grad),
                (LayerSpec::EnergyNorm { dim }, _) => {
                    layers::energy_norm_backward(input, &grad, *dim)
                }
                (LayerSpec::Flatten, _) => grad.reshaped(input.shape().to_vec())?,
                _ => unreachable!("params validated against spec"),
            };
        }
        Ok(Gradients { per_layer, input: grad })
    }
}

/// Convenience wrapper pairing a model with the tape of its last recorded
/// forward pass. Calling [`GradSession::backward`] before a recorded forward
/// is a state error.
pub struct GradSession<'a, T: Scalar> {
    model: &'a ModelState<T>,
    tape: Option<Tape<T>>,
    last_input: Option<Tensor<T>>,
}

impl<'a, T: Scalar> GradSession<'a, T> {
    pub fn new(model: &'a ModelState<T>) -> Self {
        Self { model, tape: None, last_input: None }
    }

    pub fn forward(&mut self, input: &Tensor<T>, record: bool) -> Result<Tensor<T>> {
        let (out, tape) = self.model.forward(input, record)?;
        self.tape = tape;
        self.last_input = record.then(|| input.clone());
        Ok(out)
    }

    /// Backward through the recorded pass; also attaches the input gradient
    /// to a copy of the input tensor's grad slot.
    pub fn backward(&mut self, loss_grad: &Tensor<T>) -> Result<Gradients<T>> {
        let tape = self.tape.as_ref().ok_or_else(|| {
            Error::State("backward called without a recorded forward pass".to_string())
        })?;
        let grads = self.model.backward(tape, loss_grad)?;
        if let Some(input) = self.last_input.as_mut() {
            input.set_grad(grads.input.data().to_vec())?;
        }
        Ok(grads)
    }

    pub fn recorded_input(&self) -> Option<&Tensor<T>> {
        self.last_input.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ModelSpec {
        ModelSpec::new(vec![
            LayerSpec::Dense { input: 3, output: 4 },
            LayerSpec::Relu,
            LayerSpec::Dense { input: 4, output: 2 },
            LayerSpec::Softmax,
        ])
    }

    #[test]
    fn same_seed_reproduces_weights_bit_for_bit() {
        let a: ModelState<f32> = init_model(&tiny_spec(), 7).unwrap();
        let b: ModelState<f32> = init_model(&tiny_spec(), 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a: ModelState<f32> = init_model(&tiny_spec(), 7).unwrap();
        let b: ModelState<f32> = init_model(&tiny_spec(), 8).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn glorot_variance_matches_fan_formula() {
        // dense(100->100): weight variance within ±20% of 2/(100+100) = 0.01.
        let spec = ModelSpec::new(vec![LayerSpec::Dense { input: 100, output: 100 }]);
        let model: ModelState<f64> = init_model(&spec, 11).unwrap();
        let LayerParams::WeightsBias { weights, .. } = &model.params()[0] else {
            panic!("dense layer has params")
        };
        let n = weights.len() as f64;
        let mean: f64 = weights.data().iter().sum::<f64>() / n;
        let var: f64 = weights.data().iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
        assert!((var - 0.01).abs() < 0.002, "variance {var} outside ±20% of 0.01");
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let model: ModelState<f32> = init_model(&tiny_spec(), 1).unwrap();
        let bad = Tensor::vector(vec![1.0f32; 5]);
        assert!(matches!(model.forward(&bad, false), Err(Error::Config(_))));
    }

    #[test]
    fn zero_loss_grad_gives_zero_gradients() {
        let model: ModelState<f64> = init_model(&tiny_spec(), 3).unwrap();
        let x = Tensor::vector(vec![0.3, -0.2, 0.9]);
        let (_, tape) = model.forward(&x, true).unwrap();
        let grads = model.backward(&tape.unwrap(), &Tensor::zeros(vec![2])).unwrap();
        assert!(grads.input.data().iter().all(|&g| g == 0.0));
        for p in grads.per_layer.iter().flatten() {
            assert!(p.0.data().iter().all(|&g| g == 0.0));
            assert!(p.1.data().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let model: ModelState<f32> = init_model(&tiny_spec(), 3).unwrap();
        let mut session = GradSession::new(&model);
        let err = session.backward(&Tensor::zeros(vec![2])).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn forward_logits_stops_before_softmax() {
        let model: ModelState<f64> = init_model(&tiny_spec(), 5).unwrap();
        let x = Tensor::vector(vec![0.1, 0.2, 0.3]);
        let (logits, _) = model.forward_logits(&x, false).unwrap();
        let (probs, _) = model.forward(&x, false).unwrap();
        let softmaxed = layers::softmax_forward(&logits).unwrap();
        for (a, b) in softmaxed.data().iter().zip(probs.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
