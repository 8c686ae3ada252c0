//! Case study A: CNN automatic modulation classification and the evasion
//! attacks against it.

pub mod attack;
pub mod evaluation;

use crate::error::{Error, Result};
use crate::nn::{init_model, loss, optim::OptimState, LayerSpec, ModelSpec, ModelState};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::util;
use crate::wireless::{Dataset, IqFrame, ModulationScheme, FRAME_LEN};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

pub use attack::{cw_l2_attack, fgsm_attack, fgsm_epsilon_for_power_ratio, matched_norm_noise,
                  AttackRecord, CwAttackConfig, CwTracePoint};
pub use evaluation::{accuracy_vs_snr, evaluate_attacks, AttackEvaluation, AttackSuiteConfig,
                      CurveRow, SnrAccuracyCurve};

pub const NUM_CLASSES: usize = 8;

/// Adversary knowledge level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Knowledge {
    WhiteBox,
    GreyBox,
    BlackBox,
}

impl Knowledge {
    pub fn name(self) -> &'static str {
        match self {
            Knowledge::WhiteBox => "white-box",
            Knowledge::GreyBox => "grey-box",
            Knowledge::BlackBox => "black-box",
        }
    }
}

/// Threat model declared by an experiment before any attack runs: adversary
/// knowledge, attack phase (evasion only — training-time poisoning is out of
/// scope), goal, the declared success metric, and explicit assumptions.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ThreatModel {
    pub knowledge: Knowledge,
    pub attack_phase: String,
    pub goal: String,
    pub success_metric: String,
    #[serde(default)]
    pub assumptions: Vec<String>,
}

impl ThreatModel {
    /// A complete threat model states its assumptions, the adversary type,
    /// and the metric used; incomplete declarations are rejected before any
    /// attack executes.
    pub fn validate(&self) -> Result<()> {
        if self.attack_phase != "evasion" {
            return Err(Error::Config(format!(
                "threat model attack_phase must be \"evasion\" (poisoning is out of scope), got {:?}",
                self.attack_phase
            )));
        }
        if self.success_metric.trim().is_empty() || self.goal.trim().is_empty() {
            return Err(Error::Config(
                "threat model must name its goal and success metric".to_string(),
            ));
        }
        if self.assumptions.is_empty() {
            return Err(Error::Config(
                "threat model must state its assumptions (evaluation guideline: threat models \
                 must clearly state the assumptions taken, type of the adversary, and the \
                 metrics used)"
                    .to_string(),
            ));
        }
        Ok(())
    }
}

/// Training-time augmentation for optionally hardened classifiers.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Augmentation {
    None,
    /// Add white Gaussian noise at the given perturbation-to-signal power
    /// ratio to every training frame.
    Gaussian { power_ratio: f64 },
    /// One-step adversarial training: perturb each training frame with FGSM
    /// at the given power ratio before the update.
    Fgsm { power_ratio: f64 },
}

#[derive(Clone, Debug)]
pub struct ClassifierConfig {
    pub spec: ModelSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub augment: Augmentation,
    /// Train with one modulation scheme held out (for out-of-distribution
    /// probes); the output layer keeps all 8 classes.
    pub exclude_scheme: Option<ModulationScheme>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            spec: default_architecture(),
            epochs: 12,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            augment: Augmentation::None,
            exclude_scheme: None,
        }
    }
}

/// The default classifier: a small two-stage CNN over the 2×128 IQ frame.
pub fn default_architecture() -> ModelSpec {
    // [2,128] -> conv(k7,s2) -> [16,61] -> conv(k5,s2) -> [32,29] -> 928
    ModelSpec::new(vec![
        LayerSpec::Conv1d { in_channels: 2, out_channels: 16, kernel: 7, stride: 2 },
        LayerSpec::Relu,
        LayerSpec::Conv1d { in_channels: 16, out_channels: 32, kernel: 5, stride: 2 },
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense { input: 928, output: 128 },
        LayerSpec::Relu,
        LayerSpec::Dense { input: 128, output: NUM_CLASSES },
        LayerSpec::Softmax,
    ])
}

/// Read-only prediction access: class scores only, no weights, no gradients.
/// Black-box attacks are written against this trait, which makes the
/// oracle-only contract a type-level guarantee.
pub trait PredictionOracle<T: Scalar> {
    fn num_classes(&self) -> usize;
    fn scores(&self, input: &Tensor<T>) -> Result<Vec<T>>;
    fn predict(&self, input: &Tensor<T>) -> Result<usize> {
        Ok(util::argmax(&self.scores(input)?))
    }
}

impl<T: Scalar> PredictionOracle<T> for ModelState<T> {
    fn num_classes(&self) -> usize {
        output_dim(self.spec()).unwrap_or(0)
    }

    fn scores(&self, input: &Tensor<T>) -> Result<Vec<T>> {
        Ok(self.forward(input, false)?.0.into_data())
    }
}

/// Output dimension of a sequential model, from the last size-determining layer.
pub fn output_dim(spec: &ModelSpec) -> Option<usize> {
    spec.layers.iter().rev().find_map(|l| match *l {
        LayerSpec::Dense { output, .. } => Some(output),
        LayerSpec::EnergyNorm { dim } => Some(dim),
        _ => None,
    })
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,test_loss,test_acc\n");
        for (i, e) in self.epochs.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i, e.train_loss, e.train_accuracy, e.test_loss, e.test_accuracy
            ));
        }
        out
    }
}

/// Mean loss and accuracy of a model over labeled frames.
pub fn evaluate_frames<T: Scalar>(
    model: &ModelState<T>,
    frames: &[&IqFrame<T>],
) -> Result<(f64, f64)> {
    if frames.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty frame set".to_string()));
    }
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for frame in frames {
        let (logits, _) = model.forward_logits(&frame.samples, false)?;
        let label = frame.label.class_index();
        let (l, _) = loss::cross_entropy_logits(&logits, label)?;
        loss_sum += l.to_f64_c();
        if util::argmax(logits.data()) == label {
            correct += 1;
        }
    }
    Ok((loss_sum / frames.len() as f64, correct as f64 / frames.len() as f64))
}

/// Train the CNN classifier on the dataset's train split. Single-threaded
/// and bit-reproducible for a given (dataset, config).
pub fn train_classifier<T: Scalar>(
    dataset: &Dataset<T>,
    config: &ClassifierConfig,
) -> Result<(ModelState<T>, TrainingHistory)> {
    let keep = |f: &&IqFrame<T>| Some(f.label) != config.exclude_scheme;
    let train: Vec<&IqFrame<T>> = dataset.train_frames().into_iter().filter(keep).collect();
    let test: Vec<&IqFrame<T>> = dataset.test_frames().into_iter().filter(keep).collect();
    if train.is_empty() {
        return Err(Error::Config("training split is empty".to_string()));
    }
    let mut present = [false; NUM_CLASSES];
    for f in &train {
        present[f.label.class_index()] = true;
    }
    let expected = NUM_CLASSES - usize::from(config.exclude_scheme.is_some());
    if present.iter().filter(|&&p| p).count() < expected {
        return Err(Error::Config(
            "training split must contain every (non-excluded) modulation class".to_string(),
        ));
    }
    if output_dim(&config.spec) != Some(NUM_CLASSES) {
        return Err(Error::Config(format!(
            "classifier architecture must output {NUM_CLASSES} classes"
        )));
    }

    let mut model = init_model::<T>(&config.spec, config.seed)?;
    let mut optimizer = OptimState::adam(config.learning_rate);
    let mut history = TrainingHistory::default();

    let mut indices: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = util::rng_for(config.seed, &[0x7472_6169_6e00, epoch as u64]);
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in indices.chunks(config.batch_size) {
            let mut grads = crate::nn::Gradients::zeros_like(&model, &[2, FRAME_LEN]);
            let scale = T::from_f64_c(1.0 / batch.len() as f64);
            for &i in batch {
                let frame = train[i];
                let input = augment_input(&model, frame, config.augment, &mut rng)?;
                let label = frame.label.class_index();
                let (logits, tape) = model.forward_logits(&input, true)?;
                let (l, grad) = loss::cross_entropy_logits(&logits, label)?;
                loss_sum += l.to_f64_c();
                if util::argmax(logits.data()) == label {
                    correct += 1;
                }
                let sample_grads = model.backward(tape.as_ref().unwrap(), &grad)?;
                grads.accumulate(&sample_grads, scale);
            }
            optimizer.step(model.params_mut(), &grads).map_err(|e| match e {
                Error::Numeric(msg) => Error::Training { epoch, message: msg },
                other => other,
            })?;
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("non-finite training loss {train_loss}"),
            });
        }
        let (test_loss, test_accuracy) = if test.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            evaluate_frames(&model, &test)?
        };
        history.epochs.push(EpochStats {
            train_loss,
            train_accuracy: correct as f64 / train.len() as f64,
            test_loss,
            test_accuracy,
        });
    }
    Ok((model, history))
}

fn augment_input<T: Scalar>(
    model: &ModelState<T>,
    frame: &IqFrame<T>,
    augment: Augmentation,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Tensor<T>> {
    match augment {
        Augmentation::None => Ok(frame.samples.clone()),
        Augmentation::Gaussian { power_ratio } => {
            let sigma =
                (power_ratio * frame.samples.energy() / frame.samples.len() as f64).sqrt();
            let mut data = frame.samples.data().to_vec();
            for v in data.iter_mut() {
                let n: f64 = rng.sample(StandardNormal);
                *v = *v + T::from_f64_c(n * sigma);
            }
            Tensor::from_vec(frame.samples.shape().to_vec(), data)
        }
        Augmentation::Fgsm { power_ratio } => {
            let eps = fgsm_epsilon_for_power_ratio(&frame.samples, power_ratio);
            let delta = fgsm_attack(model, &frame.samples, frame.label.class_index(), eps)?;
            frame.samples.add(&delta)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wireless::{synthesize_dataset, DatasetConfig};

    #[test]
    fn default_architecture_is_shape_consistent() {
        let spec = default_architecture();
        let out = spec.infer_output_shape(&[2, FRAME_LEN]).unwrap();
        assert_eq!(out, vec![NUM_CLASSES]);
    }

    #[test]
    fn smoke_training_runs_to_completion() {
        // 1 short epoch on a tiny dataset: finishes with a finite loss.
        let ds = synthesize_dataset::<f32>(
            &DatasetConfig { frames_per_cell: 1, train_fraction: 1.0, ..DatasetConfig::default() },
            400,
        )
        .unwrap();
        let cfg = ClassifierConfig { epochs: 1, batch_size: 16, ..ClassifierConfig::default() };
        let (_, history) = train_classifier(&ds, &cfg).unwrap();
        assert_eq!(history.epochs.len(), 1);
        assert!(history.epochs[0].train_loss.is_finite());
    }

    #[test]
    fn training_is_deterministic() {
        let ds = synthesize_dataset::<f32>(
            &DatasetConfig { frames_per_cell: 1, train_fraction: 1.0, ..DatasetConfig::default() },
            401,
        )
        .unwrap();
        let cfg = ClassifierConfig { epochs: 1, batch_size: 16, ..ClassifierConfig::default() };
        let (a, _) = train_classifier(&ds, &cfg).unwrap();
        let (b, _) = train_classifier(&ds, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn threat_model_validation_requires_assumptions() {
        let mut tm = ThreatModel {
            knowledge: Knowledge::WhiteBox,
            attack_phase: "evasion".to_string(),
            goal: "integrity".to_string(),
            success_metric: "classification accuracy decay".to_string(),
            assumptions: vec!["full knowledge of the deployed classifier".to_string()],
        };
        assert!(tm.validate().is_ok());
        tm.assumptions.clear();
        assert!(tm.validate().is_err());
        tm.assumptions.push("x".to_string());
        tm.attack_phase = "poisoning".to_string();
        assert!(tm.validate().is_err());
    }
}
