//! Data-independent universal perturbation against the decoder.
//!
//! Two-step procedure: draw δ from a Gaussian (scaled onto the budget
//! sphere), then run projected gradient ascent on the summed mean hidden
//! activations of the decoder evaluated *at δ itself* — no dataset examples
//! are consulted. The crafted δ is later added to every received block.

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, ModelState, Tape};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::util;
use rand::Rng;
use rand_distr::StandardNormal;

/// Which decoder activations the crafting objective sums.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationObjective {
    /// Mean activation of every hidden (pre-softmax) layer output.
    AllHidden,
    /// Mean activation of the final pre-softmax layer only.
    FinalPreSoftmax,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct CraftConfig {
    /// ‖δ‖² budget relative to the per-block codeword energy n.
    pub budget_power_ratio: f64,
    pub steps: usize,
    /// Ascent step size as a fraction of the budget norm.
    pub step_fraction: f64,
    pub objective: ActivationObjective,
    /// Independent Gaussian restarts; the δ with the best final objective
    /// wins. Still a pure function of (decoder, seed, budget).
    pub restarts: usize,
    pub seed: u64,
}

impl Default for CraftConfig {
    fn default() -> Self {
        Self {
            budget_power_ratio: 0.25,
            steps: 500,
            step_fraction: 0.01,
            objective: ActivationObjective::AllHidden,
            restarts: 3,
            seed: 0,
        }
    }
}

/// A single input-agnostic perturbation, with its crafting evidence.
#[derive(Clone, Debug)]
pub struct UniversalPerturbation<T: Scalar> {
    pub delta: Vec<T>,
    /// ‖δ‖² / n.
    pub power_ratio: f64,
    pub seed: u64,
    /// Objective value after every accepted ascent step (non-decreasing).
    pub trace: Vec<f64>,
    /// Mean activation of each objective layer at the final δ — the
    /// spurious-activation evidence stored with the attack record.
    pub layer_activations: Vec<f64>,
    pub warning: Option<String>,
}

impl<T: Scalar> UniversalPerturbation<T> {
    pub fn l2_norm(&self) -> f64 {
        util::l2_norm(&self.delta)
    }
}

/// Layer-output indices that participate in the objective, over the
/// logits-mode (softmax-free) pass of the decoder.
fn objective_layers(decoder_spec: &[LayerSpec], objective: ActivationObjective) -> Vec<usize> {
    let recorded = if matches!(decoder_spec.last(), Some(LayerSpec::Softmax)) {
        decoder_spec.len() - 1
    } else {
        decoder_spec.len()
    };
    match objective {
        ActivationObjective::FinalPreSoftmax => vec![recorded - 1],
        ActivationObjective::AllHidden => {
            let mut layers: Vec<usize> = (0..recorded)
                .filter(|&i| matches!(decoder_spec[i], LayerSpec::Relu))
                .collect();
            layers.push(recorded - 1);
            layers.sort_unstable();
            layers.dedup();
            layers
        }
    }
}

fn layer_means<T: Scalar>(tape: &Tape<T>, layers: &[usize]) -> Vec<f64> {
    layers
        .iter()
        .map(|&i| {
            let out = tape.layer_output(i);
            out.data().iter().map(|v| v.to_f64_c()).sum::<f64>() / out.len() as f64
        })
        .collect()
}

fn objective_value<T: Scalar>(tape: &Tape<T>, layers: &[usize]) -> f64 {
    layer_means(tape, layers).iter().sum()
}

struct RestartOutcome<T: Scalar> {
    delta: Vec<T>,
    objective: f64,
    trace: Vec<f64>,
    layer_activations: Vec<f64>,
}

fn run_restart<T: Scalar>(
    decoder: &ModelState<T>,
    layers: &[usize],
    n: usize,
    budget_norm: f64,
    steps: usize,
    step_fraction: f64,
    restart_seed: u64,
) -> Result<RestartOutcome<T>> {
    let mut rng = util::rng_for(restart_seed, &[0x6372_6166_7400]);
    // Step 1: Gaussian init, scaled onto the budget sphere.
    let mut delta: Vec<T> = {
        let draws: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = draws.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        draws.into_iter().map(|v| T::from_f64_c(v * budget_norm / norm)).collect()
    };

    let eval = |d: &[T]| -> Result<(f64, Tape<T>)> {
        let (_, tape) = decoder.forward_logits(&Tensor::vector(d.to_vec()), true)?;
        let tape = tape.expect("recorded pass");
        Ok((objective_value(&tape, layers), tape))
    };

    let (mut obj, mut tape) = eval(&delta)?;
    let mut trace = vec![obj];

    // Step 2: projected normalized-gradient ascent with backtracking, so the
    // objective never decreases across accepted steps.
    for _ in 1..steps {
        let mut out_grads: Vec<Option<Tensor<T>>> = vec![None; tape.recorded_layers()];
        for &i in layers {
            let len = tape.layer_output(i).len();
            out_grads[i] = Some(Tensor::vector(vec![T::from_f64_c(1.0 / len as f64); len]));
        }
        let grad_refs: Vec<Option<&Tensor<T>>> = out_grads.iter().map(|g| g.as_ref()).collect();
        let grads = decoder.backward_multi(&tape, &grad_refs)?;
        let g = grads.input.data();
        let g_norm = util::l2_norm(g).max(1e-300);

        let mut step = step_fraction * budget_norm;
        for _ in 0..20 {
            let mut candidate: Vec<T> = delta
                .iter()
                .zip(g)
                .map(|(&d, &gi)| d + T::from_f64_c(step / g_norm) * gi)
                .collect();
            project_ball(&mut candidate, budget_norm);
            let (cand_obj, cand_tape) = eval(&candidate)?;
            if cand_obj >= obj {
                delta = candidate;
                obj = cand_obj;
                tape = cand_tape;
                break;
            }
            step *= 0.5;
        }
        trace.push(obj);
    }

    let layer_activations = layer_means(&tape, layers);
    Ok(RestartOutcome { delta, objective: obj, trace, layer_activations })
}

/// Maximize the summed mean activations of the decoder at input δ by
/// projected gradient ascent on the L2 budget ball. Crafting consumes only
/// (decoder weights, seed, budget) — it is independent of any dataset.
pub fn craft_universal_perturbation<T: Scalar>(
    decoder: &ModelState<T>,
    config: &CraftConfig,
) -> Result<UniversalPerturbation<T>> {
    let n = match decoder.spec().layers.first() {
        Some(&LayerSpec::Dense { input, .. }) => input,
        _ => {
            return Err(Error::Config(
                "decoder must start with a dense layer over the received vector".to_string(),
            ))
        }
    };
    if config.budget_power_ratio < 0.0 {
        return Err(Error::Config("perturbation budget must be ≥ 0".to_string()));
    }
    if config.budget_power_ratio == 0.0 {
        return Ok(UniversalPerturbation {
            delta: vec![T::zero(); n],
            power_ratio: 0.0,
            seed: config.seed,
            trace: Vec::new(),
            layer_activations: Vec::new(),
            warning: Some("zero budget: returning δ = 0 (no attack power)".to_string()),
        });
    }
    if config.steps == 0 || config.restarts == 0 {
        return Err(Error::Config("crafting needs ≥ 1 step and ≥ 1 restart".to_string()));
    }

    let budget_norm = (config.budget_power_ratio * n as f64).sqrt();
    let layers = objective_layers(&decoder.spec().layers, config.objective);

    let mut best: Option<RestartOutcome<T>> = None;
    for restart in 0..config.restarts {
        let outcome = run_restart(
            decoder,
            &layers,
            n,
            budget_norm,
            config.steps,
            config.step_fraction,
            util::derive_seed(config.seed, &[restart as u64]),
        )?;
        if best.as_ref().is_none_or(|b| outcome.objective > b.objective) {
            best = Some(outcome);
        }
    }
    let best = best.expect("at least one restart");
    let power_ratio = util::l2_norm(&best.delta).powi(2) / n as f64;
    Ok(UniversalPerturbation {
        delta: best.delta,
        power_ratio,
        seed: config.seed,
        trace: best.trace,
        layer_activations: best.layer_activations,
        warning: None,
    })
}

/// Project onto the closed L2 ball of the given radius.
fn project_ball<T: Scalar>(v: &mut [T], radius: f64) {
    let norm = util::l2_norm(v);
    if norm > radius {
        let s = T::from_f64_c(radius / norm);
        util::scale_in_place(v, s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanauto::AutoencoderConfig;
    use crate::nn::init_model;

    fn random_decoder(seed: u64) -> ModelState<f64> {
        init_model(&AutoencoderConfig::default().decoder_spec(), seed).unwrap()
    }

    #[test]
    fn zero_budget_returns_zero_delta_with_warning() {
        let decoder = random_decoder(1);
        let cfg = CraftConfig { budget_power_ratio: 0.0, ..CraftConfig::default() };
        let p = craft_universal_perturbation(&decoder, &cfg).unwrap();
        assert!(p.delta.iter().all(|&d| d == 0.0));
        assert!(p.warning.is_some());
        assert_eq!(p.power_ratio, 0.0);
    }

    #[test]
    fn objective_trace_is_non_decreasing() {
        let decoder = random_decoder(2);
        let cfg = CraftConfig { steps: 120, restarts: 1, ..CraftConfig::default() };
        let p = craft_universal_perturbation(&decoder, &cfg).unwrap();
        assert!(!p.trace.is_empty());
        for w in p.trace.windows(2) {
            assert!(w[1] >= w[0], "objective decreased: {} -> {}", w[0], w[1]);
        }
        // The ascent should actually make progress from the Gaussian init.
        assert!(p.trace.last().unwrap() > p.trace.first().unwrap());
    }

    #[test]
    fn budget_is_respected() {
        let decoder = random_decoder(3);
        let cfg = CraftConfig { budget_power_ratio: 0.25, ..CraftConfig::default() };
        let p = craft_universal_perturbation(&decoder, &cfg).unwrap();
        let n = 7.0;
        assert!(p.l2_norm() <= (0.25f64 * n).sqrt() + 1e-9);
        assert!(p.power_ratio <= 0.25 + 1e-12);
    }

    #[test]
    fn crafting_is_pure_in_decoder_seed_budget() {
        let decoder = random_decoder(4);
        let cfg = CraftConfig { steps: 50, ..CraftConfig::default() };
        let a = craft_universal_perturbation(&decoder, &cfg).unwrap();
        let b = craft_universal_perturbation(&decoder, &cfg).unwrap();
        assert_eq!(a.delta, b.delta);
        let other_seed = CraftConfig { seed: 9, steps: 50, ..CraftConfig::default() };
        let c = craft_universal_perturbation(&decoder, &other_seed).unwrap();
        assert_ne!(a.delta, c.delta);
    }

    #[test]
    fn objective_layer_selection() {
        let spec = AutoencoderConfig::default().decoder_spec();
        // [dense, relu, dense, softmax] -> logits pass records 3 layers.
        assert_eq!(objective_layers(&spec.layers, ActivationObjective::AllHidden), vec![1, 2]);
        assert_eq!(
            objective_layers(&spec.layers, ActivationObjective::FinalPreSoftmax),
            vec![2]
        );
    }
}
