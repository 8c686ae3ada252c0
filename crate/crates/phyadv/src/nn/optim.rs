//! SGD and Adam parameter updates.

use super::{Gradients, LayerParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Algorithm {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

/// Optimizer state: algorithm, learning rate, step counter and (for Adam)
/// per-parameter moment estimates, lazily sized on the first step.
#[derive(Clone, Debug)]
pub struct OptimState<T: Scalar> {
    algorithm: Algorithm,
    learning_rate: f64,
    step: u64,
    moments: Vec<Option<(Vec<T>, Vec<T>)>>,
}

impl<T: Scalar> OptimState<T> {
    pub fn sgd(learning_rate: f64) -> Self {
        Self { algorithm: Algorithm::Sgd, learning_rate, step: 0, moments: Vec::new() }
    }

    /// Adam with the standard defaults β1=0.9, β2=0.999, ε=1e-8.
    pub fn adam(learning_rate: f64) -> Self {
        Self {
            algorithm: Algorithm::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 },
            learning_rate,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Apply one update. SGD computes exactly `param' = param − lr·grad`;
    /// Adam keeps bias-corrected moment estimates. Non-finite gradients are
    /// surfaced as a numeric error without touching the parameters.
    pub fn step(&mut self, params: &mut [LayerParams<T>], grads: &Gradients<T>) -> Result<()> {
        if params.len() != grads.per_layer.len() {
            return Err(Error::Config(format!(
                "{} gradient slots for {} parameter slots",
                grads.per_layer.len(),
                params.len()
            )));
        }
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradients in optimizer step".to_string()));
        }
        if self.moments.is_empty() {
            self.moments = vec![None; params.len()];
        }
        self.step += 1;
        let lr = T::from_f64_c(self.learning_rate);
        for (slot, (param, grad)) in params.iter_mut().zip(&grads.per_layer).enumerate() {
            let LayerParams::WeightsBias { weights, bias } = param else { continue };
            let Some((gw, gb)) = grad else {
                return Err(Error::Config(format!("missing gradient for layer slot {slot}")));
            };
            match self.algorithm {
                Algorithm::Sgd => {
                    sgd_update(weights.data_mut(), gw.data(), lr);
                    sgd_update(bias.data_mut(), gb.data(), lr);
                }
                Algorithm::Adam { beta1, beta2, epsilon } => {
                    let n = weights.len() + bias.len();
                    let (m, v) = self.moments[slot]
                        .get_or_insert_with(|| (vec![T::zero(); n], vec![T::zero(); n]));
                    let (mw, mb) = m.split_at_mut(weights.len());
                    let (vw, vb) = v.split_at_mut(weights.len());
                    adam_update(
                        weights.data_mut(),
                        gw.data(),
                        mw,
                        vw,
                        lr,
                        beta1,
                        beta2,
                        epsilon,
                        self.step,
                    );
                    adam_update(
                        bias.data_mut(),
                        gb.data(),
                        mb,
                        vb,
                        lr,
                        beta1,
                        beta2,
                        epsilon,
                        self.step,
                    );
                }
            }
        }
        Ok(())
    }
}

fn sgd_update<T: Scalar>(param: &mut [T], grad: &[T], lr: T) {
    for (p, &g) in param.iter_mut().zip(grad) {
        *p = *p - lr * g;
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    lr: T,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
) {
    let b1 = T::from_f64_c(beta1);
    let b2 = T::from_f64_c(beta2);
    let eps = T::from_f64_c(epsilon);
    let corr1 = T::from_f64_c(1.0 - beta1.powi(step as i32));
    let corr2 = T::from_f64_c(1.0 - beta2.powi(step as i32));
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let m_hat = m[i] / corr1;
        let v_hat = v[i] / corr2;
        param[i] = param[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Standalone Adam state over a flat vector, used by attack inner loops that
/// optimize a perturbation rather than model parameters.
#[derive(Clone, Debug)]
pub struct VecAdam<T: Scalar> {
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
    lr: f64,
}

impl<T: Scalar> VecAdam<T> {
    pub fn new(len: usize, lr: f64) -> Self {
        Self { m: vec![T::zero(); len], v: vec![T::zero(); len], step: 0, lr }
    }

    pub fn step(&mut self, param: &mut [T], grad: &[T]) {
        self.step += 1;
        adam_update(param, grad, &mut self.m, &mut self.v, T::from_f64_c(self.lr), 0.9, 0.999, 1e-8, self.step);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_model, LayerSpec, ModelSpec, ModelState};
    use crate::tensor::Tensor;

    fn one_param_model(value: f64) -> ModelState<f64> {
        let spec = ModelSpec::new(vec![LayerSpec::Dense { input: 1, output: 1 }]);
        let mut model: ModelState<f64> = init_model(&spec, 0).unwrap();
        if let LayerParams::WeightsBias { weights, .. } = &mut model.params_mut()[0] {
            weights.data_mut()[0] = value;
        }
        model
    }

    fn grads_with(model: &ModelState<f64>, w_grad: f64) -> Gradients<f64> {
        let mut g = Gradients::zeros_like(model, &[1]);
        if let Some((gw, _)) = g.per_layer[0].as_mut() {
            gw.data_mut()[0] = w_grad;
        }
        g
    }

    #[test]
    fn sgd_step_is_exact() {
        let mut model = one_param_model(1.0);
        let g = grads_with(&model, 2.0);
        let mut opt = OptimState::sgd(0.1);
        opt.step(model.params_mut(), &g).unwrap();
        let LayerParams::WeightsBias { weights, .. } = &model.params()[0] else { panic!() };
        assert_eq!(weights.data()[0], 0.8);
    }

    #[test]
    fn zero_grads_leave_sgd_params_unchanged_and_advance_adam_counter() {
        let mut model = one_param_model(0.5);
        let zeros = grads_with(&model, 0.0);

        let mut sgd = OptimState::sgd(0.1);
        sgd.step(model.params_mut(), &zeros).unwrap();
        let LayerParams::WeightsBias { weights, .. } = &model.params()[0] else { panic!() };
        assert_eq!(weights.data()[0], 0.5);

        let mut adam = OptimState::<f64>::adam(0.1);
        assert_eq!(adam.step_count(), 0);
        adam.step(model.params_mut(), &zeros).unwrap();
        assert_eq!(adam.step_count(), 1);
        let LayerParams::WeightsBias { weights, .. } = &model.params()[0] else { panic!() };
        assert_eq!(weights.data()[0], 0.5);
    }

    #[test]
    fn non_finite_grads_are_a_numeric_error() {
        let mut model = one_param_model(0.5);
        let g = grads_with(&model, f64::NAN);
        let mut opt = OptimState::sgd(0.1);
        assert!(matches!(opt.step(model.params_mut(), &g), Err(Error::Numeric(_))));
    }

    #[test]
    fn adam_minimizes_quadratic() {
        // f(w) = w² from w=5: |w| < 1e-2 within 2000 steps at lr = 0.05.
        let mut model = one_param_model(5.0);
        let mut opt = OptimState::adam(0.05);
        for _ in 0..2000 {
            let w = {
                let LayerParams::WeightsBias { weights, .. } = &model.params()[0] else {
                    panic!()
                };
                weights.data()[0]
            };
            let g = grads_with(&model, 2.0 * w);
            opt.step(model.params_mut(), &g).unwrap();
        }
        let LayerParams::WeightsBias { weights, .. } = &model.params()[0] else { panic!() };
        assert!(
            weights.data()[0].abs() < 1e-2,
            "adam did not converge: w = {}",
            weights.data()[0]
        );
    }

    #[test]
    fn vec_adam_minimizes_quadratic() {
        let mut w = vec![5.0f64];
        let mut opt = VecAdam::new(1, 0.05);
        for _ in 0..2000 {
            let g = vec![2.0 * w[0]];
            opt.step(&mut w, &g);
        }
        assert!(w[0].abs() < 1e-2);
    }

    #[test]
    fn deterministic_given_state() {
        let run = || {
            let mut model = one_param_model(1.0);
            let mut opt = OptimState::adam(0.01);
            for i in 0..50 {
                let g = grads_with(&model, (i as f64 * 0.1).sin());
                opt.step(model.params_mut(), &g).unwrap();
            }
            let LayerParams::WeightsBias { weights, .. } = &model.params()[0] else { panic!() };
            weights.data()[0]
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn missing_gradient_slot_is_config_error() {
        let spec = ModelSpec::new(vec![LayerSpec::Dense { input: 1, output: 1 }]);
        let mut model: ModelState<f64> = init_model(&spec, 0).unwrap();
        let g = Gradients { per_layer: vec![None], input: Tensor::zeros(vec![1]) };
        let mut opt = OptimState::sgd(0.1);
        assert!(matches!(opt.step(model.params_mut(), &g), Err(Error::Config(_))));
    }
}
