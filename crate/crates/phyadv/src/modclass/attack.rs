//! White-box evasion attacks on the classifier: C&W L2 and FGSM.
//!
//! The C&W attack is adapted to the unbounded IQ-sample domain: there is no
//! box constraint or change of variables; instead the perturbation is
//! optimized directly and hard-projected onto the configured
//! perturbation-to-signal power-ratio ball after every step.

use crate::error::{Error, Result};
use crate::nn::{loss, optim::VecAdam, ModelState};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::util;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct CwAttackConfig {
    /// Confidence margin κ ≥ 0 in the hinge objective.
    pub confidence: f64,
    pub inner_steps: usize,
    pub inner_learning_rate: f64,
    /// Trade-off constant search interval (geometric binary search).
    pub c_range: (f64, f64),
    pub binary_search_steps: usize,
    /// Hard cap on ‖δ‖²/‖x‖².
    pub max_power_ratio: f64,
    pub seed: u64,
}

impl Default for CwAttackConfig {
    fn default() -> Self {
        Self {
            confidence: 0.0,
            inner_steps: 200,
            inner_learning_rate: 0.01,
            c_range: (1e-3, 1e2),
            binary_search_steps: 6,
            max_power_ratio: 0.1,
            seed: 0,
        }
    }
}

impl CwAttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.confidence < 0.0 {
            return Err(Error::Config("C&W confidence κ must be ≥ 0".to_string()));
        }
        if !(self.c_range.0 > 0.0 && self.c_range.1 >= self.c_range.0) {
            return Err(Error::Config(format!(
                "C&W c search range must be positive and ordered, got {:?}",
                self.c_range
            )));
        }
        if self.binary_search_steps == 0 || self.inner_steps == 0 {
            return Err(Error::Config("C&W step counts must be ≥ 1".to_string()));
        }
        if !(self.max_power_ratio > 0.0) {
            return Err(Error::Config("C&W power-ratio budget must be positive".to_string()));
        }
        Ok(())
    }
}

/// One point of the binary-search trace: the trade-off constant tried and
/// the smallest successful ‖δ‖₂ found at that constant (if any).
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct CwTracePoint {
    pub c: f64,
    pub success: bool,
    pub l2: Option<f64>,
}

/// Outcome of one attack on one frame. A failed attack is a record, not an
/// error.
#[derive(Clone, Debug)]
pub struct AttackRecord<T: Scalar> {
    pub success: bool,
    /// Minimum-norm successful perturbation, when one was found.
    pub delta: Option<Tensor<T>>,
    pub l2: f64,
    /// ‖δ‖²/‖x‖² actually used (0 for a clean success).
    pub power_ratio: f64,
    /// Total inner optimization steps executed.
    pub iterations: usize,
    pub trace: Vec<CwTracePoint>,
}

/// Carlini&Wagner-style minimum-L2 evasion: minimize
/// `‖δ‖₂² + c·max(Z_true − max_{i≠true} Z_i, −κ)` over the logits `Z`,
/// with Adam on δ and a geometric binary search over `c`. Deterministic:
/// δ starts at zero and the optimizer has no random state.
pub fn cw_l2_attack<T: Scalar>(
    model: &ModelState<T>,
    input: &Tensor<T>,
    true_label: usize,
    config: &CwAttackConfig,
) -> Result<AttackRecord<T>> {
    config.validate()?;
    let (logits, _) = model.forward_logits(input, false)?;
    if true_label >= logits.len() {
        return Err(Error::Config(format!(
            "true label {true_label} out of range for {} classes",
            logits.len()
        )));
    }
    // Already misclassified: the objective is satisfied by δ = 0.
    if util::argmax(logits.data()) != true_label {
        return Ok(AttackRecord {
            success: true,
            delta: Some(Tensor::zeros(input.shape().to_vec())),
            l2: 0.0,
            power_ratio: 0.0,
            iterations: 0,
            trace: Vec::new(),
        });
    }

    let x_energy = input.energy();
    let max_norm_sq = config.max_power_ratio * x_energy;
    let n = input.len();
    let kappa = T::from_f64_c(config.confidence);

    let (mut c_lo, mut c_hi) = config.c_range;
    let mut best: Option<(Vec<T>, f64)> = None;
    let mut iterations = 0usize;
    let mut trace = Vec::with_capacity(config.binary_search_steps);

    for _ in 0..config.binary_search_steps {
        let c = (c_lo * c_hi).sqrt();
        let c_t = T::from_f64_c(c);
        let mut delta = vec![T::zero(); n];
        let mut adam = VecAdam::new(n, config.inner_learning_rate);
        let mut best_at_c: Option<f64> = None;

        for _ in 0..config.inner_steps {
            iterations += 1;
            let adv = add_flat(input, &delta)?;
            let (z, tape) = model.forward_logits(&adv, true)?;
            let zd = z.data();
            let runner_up = argmax_excluding(zd, true_label);
            if util::argmax(zd) != true_label {
                let norm = util::l2_norm(&delta);
                if best_at_c.is_none_or(|b| norm < b) {
                    best_at_c = Some(norm);
                }
                if best.as_ref().is_none_or(|(_, b)| norm < *b) {
                    best = Some((delta.clone(), norm));
                }
            }
            let margin = zd[true_label] - zd[runner_up];
            // d/dδ ‖δ‖² = 2δ; hinge is active while margin > −κ.
            let mut grad: Vec<T> = delta.iter().map(|&d| d + d).collect();
            if margin > -kappa {
                let mut out_grad = vec![T::zero(); zd.len()];
                out_grad[true_label] = c_t;
                out_grad[runner_up] = -c_t;
                let g = model.backward(tape.as_ref().unwrap(), &Tensor::vector(out_grad))?;
                for (gd, &gi) in grad.iter_mut().zip(g.input.data()) {
                    *gd = *gd + gi;
                }
            }
            adam.step(&mut delta, &grad);
            project_l2(&mut delta, max_norm_sq);
        }

        trace.push(CwTracePoint { c, success: best_at_c.is_some(), l2: best_at_c });
        if best_at_c.is_some() {
            // Success: try a smaller c to shrink the perturbation.
            c_hi = c;
        } else {
            c_lo = c;
        }
    }

    Ok(match best {
        Some((delta, norm)) => AttackRecord {
            success: true,
            power_ratio: norm * norm / x_energy,
            delta: Some(Tensor::from_vec(input.shape().to_vec(), delta)?),
            l2: norm,
            iterations,
            trace,
        },
        None => AttackRecord {
            success: false,
            delta: None,
            l2: f64::NAN,
            power_ratio: f64::NAN,
            iterations,
            trace,
        },
    })
}

/// FGSM: `δ = ε · sign(∇ₓ loss)`, so every component is ±ε (or 0 where the
/// gradient is exactly zero).
pub fn fgsm_attack<T: Scalar>(
    model: &ModelState<T>,
    input: &Tensor<T>,
    true_label: usize,
    epsilon: f64,
) -> Result<Tensor<T>> {
    let (logits, tape) = model.forward_logits(input, true)?;
    let (_, grad) = loss::cross_entropy_logits(&logits, true_label)?;
    let grads = model.backward(tape.as_ref().unwrap(), &grad)?;
    let eps = T::from_f64_c(epsilon);
    let data = grads
        .input
        .data()
        .iter()
        .map(|&g| {
            if g > T::zero() {
                eps
            } else if g < T::zero() {
                -eps
            } else {
                T::zero()
            }
        })
        .collect();
    Tensor::from_vec(input.shape().to_vec(), data)
}

/// ε such that a full-sign FGSM perturbation carries
/// `power_ratio × input energy`: `ε = sqrt(ratio · ‖x‖² / n)`.
pub fn fgsm_epsilon_for_power_ratio<T: Scalar>(input: &Tensor<T>, power_ratio: f64) -> f64 {
    (power_ratio * input.energy() / input.len() as f64).sqrt()
}

/// White Gaussian perturbation rescaled to exactly the target L2 norm; the
/// matched-energy random baseline for attacked-vs-jammed comparisons.
pub fn matched_norm_noise<T: Scalar>(shape: &[usize], target_l2: f64, seed: u64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let mut rng = util::rng_for(seed, &[0x6e6f_6973_6500]);
    let draws: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = draws.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = if norm == 0.0 { 0.0 } else { target_l2 / norm };
    let data = draws.into_iter().map(|v| T::from_f64_c(v * scale)).collect();
    Tensor::from_vec(shape.to_vec(), data).expect("noise shape")
}

fn add_flat<T: Scalar>(input: &Tensor<T>, delta: &[T]) -> Result<Tensor<T>> {
    let data = input.data().iter().zip(delta).map(|(&x, &d)| x + d).collect();
    Tensor::from_vec(input.shape().to_vec(), data)
}

fn argmax_excluding<T: Scalar>(values: &[T], excluded: usize) -> usize {
    let mut best = usize::MAX;
    for (i, &v) in values.iter().enumerate() {
        if i == excluded {
            continue;
        }
        if best == usize::MAX || v > values[best] {
            best = i;
        }
    }
    best
}

fn project_l2<T: Scalar>(delta: &mut [T], max_norm_sq: f64) {
    let norm_sq: f64 = delta.iter().map(|&d| d.to_f64_c() * d.to_f64_c()).sum();
    if norm_sq > max_norm_sq {
        let s = T::from_f64_c((max_norm_sq / norm_sq).sqrt());
        util::scale_in_place(delta, s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_model, LayerSpec, ModelSpec};

    fn toy_model(seed: u64) -> ModelState<f64> {
        let spec = ModelSpec::new(vec![
            LayerSpec::Dense { input: 6, output: 8 },
            LayerSpec::Relu,
            LayerSpec::Dense { input: 8, output: 3 },
            LayerSpec::Softmax,
        ]);
        init_model(&spec, seed).unwrap()
    }

    fn toy_input() -> Tensor<f64> {
        Tensor::vector(vec![0.4, -0.3, 0.8, 0.1, -0.6, 0.2])
    }

    #[test]
    fn already_misclassified_input_succeeds_with_zero_delta() {
        let model = toy_model(5);
        let x = toy_input();
        let pred = util::argmax(model.forward(&x, false).unwrap().0.data());
        let wrong_label = (pred + 1) % 3;
        let record = cw_l2_attack(&model, &x, wrong_label, &CwAttackConfig::default()).unwrap();
        assert!(record.success);
        assert_eq!(record.l2, 0.0);
        assert_eq!(record.iterations, 0);
        assert!(record.delta.unwrap().data().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn cw_flips_a_toy_model_within_budget() {
        let model = toy_model(5);
        let x = toy_input();
        let true_label = util::argmax(model.forward(&x, false).unwrap().0.data());
        let cfg = CwAttackConfig { max_power_ratio: 4.0, ..CwAttackConfig::default() };
        let record = cw_l2_attack(&model, &x, true_label, &cfg).unwrap();
        assert!(record.success, "toy attack should succeed: {:?}", record.trace);
        let delta = record.delta.unwrap();
        let adv = x.add(&delta).unwrap();
        let adv_pred = util::argmax(model.forward(&adv, false).unwrap().0.data());
        assert_ne!(adv_pred, true_label, "stored δ must actually flip the model");
        assert!(record.power_ratio <= cfg.max_power_ratio + 1e-9);
    }

    #[test]
    fn cw_is_deterministic() {
        let model = toy_model(9);
        let x = toy_input();
        let true_label = util::argmax(model.forward(&x, false).unwrap().0.data());
        let cfg = CwAttackConfig { max_power_ratio: 4.0, ..CwAttackConfig::default() };
        let a = cw_l2_attack(&model, &x, true_label, &cfg).unwrap();
        let b = cw_l2_attack(&model, &x, true_label, &cfg).unwrap();
        match (a.delta, b.delta) {
            (Some(da), Some(db)) => assert_eq!(da, db),
            (None, None) => {}
            _ => panic!("non-deterministic success flag"),
        }
    }

    #[test]
    fn fgsm_zero_epsilon_changes_nothing() {
        let model = toy_model(2);
        let x = toy_input();
        let pred_before = util::argmax(model.forward(&x, false).unwrap().0.data());
        let delta = fgsm_attack(&model, &x, 0, 0.0).unwrap();
        assert!(delta.data().iter().all(|&d| d == 0.0));
        let pred_after =
            util::argmax(model.forward(&x.add(&delta).unwrap(), false).unwrap().0.data());
        assert_eq!(pred_before, pred_after);
    }

    #[test]
    fn fgsm_components_are_signed_epsilon() {
        let model = toy_model(2);
        let x = toy_input();
        let eps = 0.05;
        let delta = fgsm_attack(&model, &x, 1, eps).unwrap();
        for &d in delta.data() {
            assert!(
                d == eps || d == -eps || d == 0.0,
                "component {d} not in {{±ε, 0}}"
            );
        }
        let linf = delta.data().iter().fold(0.0f64, |m, &d| m.max(d.abs()));
        assert!((linf - eps).abs() < 1e-15);
    }

    #[test]
    fn matched_noise_hits_target_norm_exactly() {
        let noise = matched_norm_noise::<f64>(&[2, 128], 3.5, 7);
        assert!((noise.l2_norm() - 3.5).abs() < 1e-9);
        assert_eq!(
            matched_norm_noise::<f64>(&[2, 128], 3.5, 7),
            matched_norm_noise::<f64>(&[2, 128], 3.5, 7)
        );
    }

    #[test]
    fn epsilon_for_power_ratio_carries_budget() {
        let x = Tensor::vector(vec![1.0f64; 64]);
        let eps = fgsm_epsilon_for_power_ratio(&x, 0.05);
        // Full-sign δ has energy n·ε² = ratio·‖x‖².
        assert!((64.0 * eps * eps - 0.05 * 64.0).abs() < 1e-12);
    }
}
