//! Case study C: policy-gradient autoencoder with noisy feedback, attacked
//! black-box during a scheduled window with perturbations transferred from a
//! surrogate system.
//!
//! Each time step is one communication round: an RL transmitter update from
//! noisy per-example feedback losses, then one supervised receiver update.
//! The adversary only adds a perturbation to the broadcast channel — it
//! never touches the live models' weights or gradients, which the simulation
//! makes checkable by counting every model access it performs.

use crate::chanauto::{
    bler_curve, craft_universal_perturbation, Autoencoder, AutoencoderConfig,
    ChannelModifier, CraftConfig, UniversalPerturbation,
};
use crate::error::{Error, Result};
use crate::nn::{init_model, loss, optim::OptimState, ModelState};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::util;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct DrlConfig {
    /// Architecture, operating Eb/N0 (`train_ebno_db`) and learning rate.
    pub autoenc: AutoencoderConfig,
    /// Exploration stddev σ_π of the Gaussian action policy.
    pub exploration_stddev: f64,
    /// Stddev σ_f of the additive Gaussian noise on fed-back losses.
    pub feedback_noise_stddev: f64,
    /// Messages per communication round.
    pub batch_size: usize,
    pub receiver_inner_epochs: usize,
    pub total_steps: usize,
    /// When set, receiver-round predictions inside this step range are
    /// accumulated into a confusion matrix (for report metric tables).
    pub confusion_range: Option<(usize, usize)>,
    pub seed: u64,
}

impl Default for DrlConfig {
    fn default() -> Self {
        Self {
            autoenc: AutoencoderConfig { train_ebno_db: 4.0, ..AutoencoderConfig::default() },
            exploration_stddev: 0.15,
            feedback_noise_stddev: 0.1,
            batch_size: 256,
            receiver_inner_epochs: 1,
            total_steps: 600,
            confusion_range: None,
            seed: 0,
        }
    }
}

impl DrlConfig {
    pub fn validate(&self, schedule: Option<&AttackSchedule<impl Scalar>>) -> Result<()> {
        self.autoenc.validate()?;
        if !(self.exploration_stddev > 0.0) {
            return Err(Error::Config(
                "exploration stddev must be positive (the policy is degenerate otherwise)"
                    .to_string(),
            ));
        }
        if self.feedback_noise_stddev < 0.0 {
            return Err(Error::Config("feedback noise stddev must be ≥ 0".to_string()));
        }
        if self.batch_size == 0 || self.total_steps == 0 {
            return Err(Error::Config("batch size and total steps must be positive".to_string()));
        }
        if let Some(s) = schedule {
            s.validate(self.total_steps)?;
        }
        Ok(())
    }
}

/// How window steps pick a perturbation from the pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolPolicy {
    /// One pool member drawn uniformly per time step.
    UniformDraw,
    /// Pool members applied in order, wrapping around.
    RoundRobin,
}

/// Attack window plus the transferred perturbation pool.
#[derive(Clone, Debug)]
pub struct AttackSchedule<T: Scalar> {
    pub window_start: usize,
    pub window_end: usize,
    pub pool: Vec<UniversalPerturbation<T>>,
    pub policy: PoolPolicy,
}

impl<T: Scalar> AttackSchedule<T> {
    pub fn new(pool: Vec<UniversalPerturbation<T>>) -> Self {
        Self { window_start: 200, window_end: 400, pool, policy: PoolPolicy::UniformDraw }
    }

    pub fn validate(&self, total_steps: usize) -> Result<()> {
        if self.window_start >= self.window_end || self.window_end > total_steps {
            return Err(Error::Config(format!(
                "attack window [{}, {}) must fit inside {total_steps} steps",
                self.window_start, self.window_end
            )));
        }
        if self.pool.is_empty() {
            return Err(Error::Config("attack schedule needs a nonempty pool".to_string()));
        }
        Ok(())
    }

    fn active(&self, step: usize) -> bool {
        (self.window_start..self.window_end).contains(&step)
    }

    fn pick(&self, step: usize, seed: u64) -> &UniversalPerturbation<T> {
        match self.policy {
            PoolPolicy::RoundRobin => &self.pool[(step - self.window_start) % self.pool.len()],
            PoolPolicy::UniformDraw => {
                let mut rng = util::rng_for(seed, &[0x706f_6f6c, step as u64]);
                &self.pool[rng.random_range(0..self.pool.len())]
            }
        }
    }
}

/// Per-round receiver accuracy over the whole simulation.
#[derive(Clone, Debug, serde::Serialize)]
pub struct AccuracyTrace {
    pub accuracy: Vec<f64>,
    pub window: Option<(usize, usize)>,
}

impl AccuracyTrace {
    pub fn mean_over(&self, range: std::ops::Range<usize>) -> f64 {
        let slice = &self.accuracy[range];
        slice.iter().sum::<f64>() / slice.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_step,accuracy,attacked_flag\n");
        for (t, a) in self.accuracy.iter().enumerate() {
            let attacked = self.window.is_some_and(|(s, e)| (s..e).contains(&t));
            out.push_str(&format!("{},{},{}\n", t, a, u8::from(attacked)));
        }
        out
    }
}

/// Pointwise aggregate over replicate traces.
pub fn aggregate_traces_csv(traces: &[AccuracyTrace]) -> String {
    let mut out = String::from("time_step,mean,std,n\n");
    if traces.is_empty() {
        return out;
    }
    let steps = traces[0].accuracy.len();
    let n = traces.len() as f64;
    for t in 0..steps {
        let vals: Vec<f64> = traces.iter().map(|tr| tr.accuracy[t]).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        out.push_str(&format!("{},{},{},{}\n", t, mean, var.sqrt(), traces.len()));
    }
    out
}

/// Model-access counters for the black-box contract: an attacked run must
/// perform exactly as many model calls as a clean run with the same config.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct SimStats {
    pub model_forward_calls: u64,
    pub model_backward_calls: u64,
    pub skipped_feedback_rounds: u64,
}

#[derive(Clone, Debug)]
pub struct ReceiverStepStats {
    pub pre_update_accuracy: f64,
    pub mean_loss: f64,
    pub forwards: u64,
    pub backwards: u64,
}

/// One supervised receiver round: accuracy is computed on the incoming batch
/// *before* the update, so the trace reflects deployed performance.
pub fn train_step_receiver<T: Scalar>(
    decoder: &mut ModelState<T>,
    optimizer: &mut OptimState<T>,
    received: &[Tensor<T>],
    labels: &[usize],
    inner_epochs: usize,
) -> Result<ReceiverStepStats> {
    if received.is_empty() || received.len() != labels.len() {
        return Err(Error::Config("receiver batch must be nonempty and aligned".to_string()));
    }
    let mut forwards = 0u64;
    let mut backwards = 0u64;
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    for (y, &m) in received.iter().zip(labels) {
        let (logits, _) = decoder.forward_logits(y, false)?;
        forwards += 1;
        if util::argmax(logits.data()) == m {
            correct += 1;
        }
        loss_sum += loss::cross_entropy_logits(&logits, m)?.0.to_f64_c();
    }
    let pre_update_accuracy = correct as f64 / received.len() as f64;
    let mean_loss = loss_sum / received.len() as f64;
    if !mean_loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite receiver loss {mean_loss}")));
    }

    let n_in = received[0].len();
    for _ in 0..inner_epochs {
        let mut grads = crate::nn::Gradients::zeros_like(decoder, &[n_in]);
        let scale = T::from_f64_c(1.0 / received.len() as f64);
        for (y, &m) in received.iter().zip(labels) {
            let (logits, tape) = decoder.forward_logits(y, true)?;
            forwards += 1;
            let (_, grad) = loss::cross_entropy_logits(&logits, m)?;
            let sample = decoder.backward(tape.as_ref().unwrap(), &grad)?;
            backwards += 1;
            grads.accumulate(&sample, scale);
        }
        optimizer.step(decoder.params_mut(), &grads)?;
    }
    Ok(ReceiverStepStats { pre_update_accuracy, mean_loss, forwards, backwards })
}

#[derive(Clone, Debug)]
pub struct TransmitterStepStats {
    /// Set when non-finite feedback losses made the round unusable (models a
    /// lost feedback report); no update was applied.
    pub skipped: bool,
    /// L2 norm of the applied parameter-gradient estimate.
    pub grad_norm: f64,
    pub forwards: u64,
    pub backwards: u64,
}

/// One policy-gradient transmitter round. The explored outputs are
/// `x_p = x + w`, `w ~ N(0, σ_π² I)`; the per-example losses arrive through
/// the noisy feedback link. The gradient estimate is
/// `(L̃_i − mean L̃) · ∇_θ log π(x_p,i | m_i)` with a per-round mean baseline,
/// which for the Gaussian policy is `(L̃_i − b)·(x_p,i − x_i)/σ_π²` seeded at
/// the encoder output. The encoder's energy normalization is part of the
/// model, so updated codewords remain unit power.
pub fn train_step_transmitter<T: Scalar>(
    encoder: &mut ModelState<T>,
    optimizer: &mut OptimState<T>,
    messages: &[usize],
    explored_outputs: &[Tensor<T>],
    noisy_losses: &[f64],
    sigma_pi: f64,
) -> Result<TransmitterStepStats> {
    if messages.is_empty()
        || messages.len() != explored_outputs.len()
        || messages.len() != noisy_losses.len()
    {
        return Err(Error::Config("transmitter batch must be nonempty and aligned".to_string()));
    }
    if !(sigma_pi > 0.0) {
        return Err(Error::Config("σ_π must be positive".to_string()));
    }
    if noisy_losses.iter().any(|l| !l.is_finite()) {
        return Ok(TransmitterStepStats {
            skipped: true,
            grad_norm: 0.0,
            forwards: 0,
            backwards: 0,
        });
    }
    let m_classes = explored_outputs[0].len().max(1);
    let m_in = match encoder.spec().layers.first() {
        Some(&crate::nn::LayerSpec::Dense { input, .. }) => input,
        _ => m_classes,
    };
    let baseline = noisy_losses.iter().sum::<f64>() / noisy_losses.len() as f64;
    let inv_var = 1.0 / (sigma_pi * sigma_pi);
    let batch_scale = 1.0 / messages.len() as f64;

    let mut grads = crate::nn::Gradients::zeros_like(encoder, &[m_in]);
    let mut forwards = 0u64;
    let mut backwards = 0u64;
    for ((&msg, explored), &loss_fb) in messages.iter().zip(explored_outputs).zip(noisy_losses) {
        let one_hot = Tensor::one_hot(msg, m_in)?;
        let (x, tape) = encoder.forward(&one_hot, true)?;
        forwards += 1;
        let coeff = (loss_fb - baseline) * inv_var * batch_scale;
        let out_grad: Vec<T> = explored
            .data()
            .iter()
            .zip(x.data())
            .map(|(&xp, &xi)| T::from_f64_c((xp - xi).to_f64_c() * coeff))
            .collect();
        let sample = encoder.backward(tape.as_ref().unwrap(), &Tensor::vector(out_grad))?;
        backwards += 1;
        grads.accumulate(&sample, T::one());
    }
    let grad_norm = grads
        .per_layer
        .iter()
        .flatten()
        .map(|(w, b)| w.energy() + b.energy())
        .sum::<f64>()
        .sqrt();
    optimizer.step(encoder.params_mut(), &grads)?;
    Ok(TransmitterStepStats { skipped: false, grad_norm, forwards, backwards })
}

/// Everything one simulation run produces.
#[derive(Clone, Debug)]
pub struct SimOutput {
    pub trace: AccuracyTrace,
    pub stats: SimStats,
    /// Receiver-round confusion over `config.confusion_range`, when set.
    pub confusion: Option<crate::wireless::ConfusionMatrix>,
}

/// Run the alternating-training simulation for `total_steps` communication
/// rounds, applying one pool-drawn perturbation to every received vector of
/// a round inside the attack window. Bit-reproducible from (config,
/// schedule, seed).
pub fn run_simulation<T: Scalar>(
    config: &DrlConfig,
    schedule: Option<&AttackSchedule<T>>,
) -> Result<SimOutput> {
    config.validate(schedule)?;
    let m = config.autoenc.messages();
    let n = config.autoenc.channel_uses;
    let sigma_ch = config.autoenc.noise_sigma(config.autoenc.train_ebno_db);
    let sigma_pi = config.exploration_stddev;
    let sigma_f = config.feedback_noise_stddev;

    let mut encoder = init_model::<T>(&config.autoenc.encoder_spec(), config.seed)?;
    let mut decoder =
        init_model::<T>(&config.autoenc.decoder_spec(), util::derive_seed(config.seed, &[1]))?;
    let mut enc_opt = OptimState::adam(config.autoenc.learning_rate);
    let mut dec_opt = OptimState::adam(config.autoenc.learning_rate);

    let mut stats = SimStats::default();
    let mut accuracy = Vec::with_capacity(config.total_steps);
    let mut confusion = config
        .confusion_range
        .map(|_| crate::wireless::ConfusionMatrix::new(m));

    for step in 0..config.total_steps {
        let delta = schedule
            .filter(|s| s.active(step))
            .map(|s| s.pick(step, config.seed).delta.clone());

        // Transmitter round: explore, broadcast, receive noisy feedback.
        {
            let mut rng = util::rng_for(config.seed, &[0x7478_0000, step as u64]);
            let mut messages = Vec::with_capacity(config.batch_size);
            let mut explored = Vec::with_capacity(config.batch_size);
            let mut losses = Vec::with_capacity(config.batch_size);
            for _ in 0..config.batch_size {
                let msg = rng.random_range(0..m);
                let one_hot = Tensor::one_hot(msg, m)?;
                let (x, _) = encoder.forward(&one_hot, false)?;
                stats.model_forward_calls += 1;
                let x_p: Vec<T> = x
                    .data()
                    .iter()
                    .map(|&v| {
                        let w: f64 = rng.sample(StandardNormal);
                        v + T::from_f64_c(w * sigma_pi)
                    })
                    .collect();
                let x_p = Tensor::vector(x_p);
                let mut y: Vec<T> = x_p
                    .data()
                    .iter()
                    .map(|&v| {
                        let ch: f64 = rng.sample(StandardNormal);
                        v + T::from_f64_c(ch * sigma_ch)
                    })
                    .collect();
                if let Some(d) = &delta {
                    for (yv, &dv) in y.iter_mut().zip(d.iter()) {
                        *yv = *yv + dv;
                    }
                }
                let (logits, _) = decoder.forward_logits(&Tensor::vector(y), false)?;
                stats.model_forward_calls += 1;
                let (l, _) = loss::cross_entropy_logits(&logits, msg)?;
                let fb: f64 = rng.sample(StandardNormal);
                losses.push(l.to_f64_c() + fb * sigma_f);
                messages.push(msg);
                explored.push(x_p);
            }
            let _ = n;
            let tx = train_step_transmitter(
                &mut encoder,
                &mut enc_opt,
                &messages,
                &explored,
                &losses,
                sigma_pi,
            )?;
            stats.model_forward_calls += tx.forwards;
            stats.model_backward_calls += tx.backwards;
            if tx.skipped {
                stats.skipped_feedback_rounds += 1;
            }
        }

        // Receiver round: deployed (exploration-free) transmission, accuracy
        // before the supervised update.
        {
            let mut rng = util::rng_for(config.seed, &[0x7278_0000, step as u64]);
            let mut labels = Vec::with_capacity(config.batch_size);
            let mut received = Vec::with_capacity(config.batch_size);
            for _ in 0..config.batch_size {
                let msg = rng.random_range(0..m);
                let one_hot = Tensor::one_hot(msg, m)?;
                let (x, _) = encoder.forward(&one_hot, false)?;
                stats.model_forward_calls += 1;
                let mut y: Vec<T> = x
                    .data()
                    .iter()
                    .map(|&v| {
                        let ch: f64 = rng.sample(StandardNormal);
                        v + T::from_f64_c(ch * sigma_ch)
                    })
                    .collect();
                if let Some(d) = &delta {
                    for (yv, &dv) in y.iter_mut().zip(d.iter()) {
                        *yv = *yv + dv;
                    }
                }
                labels.push(msg);
                received.push(Tensor::vector(y));
            }
            if let (Some(cm), Some((lo, hi))) = (confusion.as_mut(), config.confusion_range) {
                if (lo..hi).contains(&step) {
                    for (y, &m_true) in received.iter().zip(&labels) {
                        let (logits, _) = decoder.forward_logits(y, false)?;
                        stats.model_forward_calls += 1;
                        cm.record(m_true, util::argmax(logits.data()))?;
                    }
                }
            }
            let rx = train_step_receiver(
                &mut decoder,
                &mut dec_opt,
                &received,
                &labels,
                config.receiver_inner_epochs,
            )?;
            stats.model_forward_calls += rx.forwards;
            stats.model_backward_calls += rx.backwards;
            accuracy.push(rx.pre_update_accuracy);
        }
    }

    let window = schedule.map(|s| (s.window_start, s.window_end));
    Ok(SimOutput { trace: AccuracyTrace { accuracy, window }, stats, confusion })
}

// ---------------------------------------------------------------------------
// Transfer from the surrogate system
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct SurrogateEvidence {
    pub clean_bler: f64,
    pub attacked_bler: f64,
}

impl SurrogateEvidence {
    /// A candidate is successful when it raises the surrogate's BLER above
    /// clean operation.
    pub fn successful(&self) -> bool {
        self.attacked_bler > self.clean_bler
    }
}

#[derive(Clone, Debug)]
pub struct SurrogateAttackRun<T: Scalar> {
    pub candidates: Vec<(UniversalPerturbation<T>, SurrogateEvidence)>,
    pub eval_ebno_db: f64,
    pub eval_trials: u64,
}

/// Craft `n_candidates` perturbations against a surrogate autoencoder (one
/// crafting seed each) and record each candidate's measured BLER impact.
pub fn run_surrogate_attack<T: Scalar>(
    surrogate: &Autoencoder<T>,
    n_candidates: usize,
    craft: &CraftConfig,
    eval_ebno_db: f64,
    eval_trials: u64,
    seed: u64,
) -> Result<SurrogateAttackRun<T>> {
    let clean =
        bler_curve(surrogate, &[eval_ebno_db], eval_trials, ChannelModifier::None, seed)?[0].bler;
    let mut candidates = Vec::with_capacity(n_candidates);
    for i in 0..n_candidates {
        let cfg = CraftConfig { seed: util::derive_seed(seed, &[0x6361_6e64, i as u64]), ..craft.clone() };
        let perturbation = craft_universal_perturbation(&surrogate.decoder, &cfg)?;
        let attacked = bler_curve(
            surrogate,
            &[eval_ebno_db],
            eval_trials,
            ChannelModifier::Adversarial { delta: &perturbation.delta },
            seed,
        )?[0]
            .bler;
        candidates.push((perturbation, SurrogateEvidence { clean_bler: clean, attacked_bler: attacked }));
    }
    Ok(SurrogateAttackRun { candidates, eval_ebno_db, eval_trials })
}

/// Select the `count` strongest surrogate-successful perturbations, ordered
/// by surrogate BLER impact. Errors with the shortfall when fewer succeeded.
pub fn transfer_perturbations<T: Scalar>(
    run: &SurrogateAttackRun<T>,
    count: usize,
) -> Result<Vec<UniversalPerturbation<T>>> {
    let mut successful: Vec<&(UniversalPerturbation<T>, SurrogateEvidence)> =
        run.candidates.iter().filter(|(_, e)| e.successful()).collect();
    if successful.len() < count {
        return Err(Error::Config(format!(
            "requested {count} transferable perturbations but only {} of {} candidates \
             succeeded on the surrogate (shortfall {})",
            successful.len(),
            run.candidates.len(),
            count - successful.len()
        )));
    }
    successful.sort_by(|a, b| {
        b.1.attacked_bler
            .partial_cmp(&a.1.attacked_bler)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(successful.into_iter().take(count).map(|(p, _)| p.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_drl() -> DrlConfig {
        DrlConfig {
            batch_size: 32,
            total_steps: 8,
            ..DrlConfig::default()
        }
    }

    #[test]
    fn receiver_accuracy_is_exact_on_correct_batch() {
        // A decoder trained enough to classify a noiseless batch correctly
        // is overkill here: instead check the bookkeeping on a handmade
        // case where predictions already match.
        let cfg = AutoencoderConfig::default();
        let mut decoder = init_model::<f64>(&cfg.decoder_spec(), 3).unwrap();
        let mut opt = OptimState::adam(1e-3);
        // Find the decoder's current argmax for a fixed input and label the
        // batch with it: pre-update accuracy must be exactly 1.
        let y = Tensor::vector(vec![0.5, -0.2, 0.8, 0.1, -0.4, 0.3, 0.9]);
        let pred = util::argmax(decoder.forward(&y, false).unwrap().0.data());
        let received = vec![y.clone(), y.clone()];
        let labels = vec![pred, pred];
        let stats =
            train_step_receiver(&mut decoder, &mut opt, &received, &labels, 1).unwrap();
        assert_eq!(stats.pre_update_accuracy, 1.0);
    }

    #[test]
    fn untrained_decoder_sits_near_chance() {
        let cfg = AutoencoderConfig::default();
        let encoder = init_model::<f64>(&cfg.encoder_spec(), 10).unwrap();
        let mut decoder = init_model::<f64>(&cfg.decoder_spec(), 11).unwrap();
        let mut opt = OptimState::adam(1e-9);
        let sigma = cfg.noise_sigma(4.0);
        let mut rng = util::rng_for(12, &[]);
        let mut received = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..2048 {
            let msg = rng.random_range(0..16);
            let (x, _) = encoder.forward(&Tensor::one_hot(msg, 16).unwrap(), false).unwrap();
            let y: Vec<f64> = x
                .data()
                .iter()
                .map(|&v| v + rng.sample::<f64, _>(StandardNormal) * sigma)
                .collect();
            received.push(Tensor::vector(y));
            labels.push(msg);
        }
        let stats =
            train_step_receiver(&mut decoder, &mut opt, &received, &labels, 1).unwrap();
        assert!(
            (stats.pre_update_accuracy - 1.0 / 16.0).abs() < 0.05,
            "untrained accuracy {} not near 1/16",
            stats.pre_update_accuracy
        );
    }

    #[test]
    fn receiver_loss_decreases_on_fixed_noiseless_batch() {
        let cfg = AutoencoderConfig::default();
        let encoder = init_model::<f64>(&cfg.encoder_spec(), 20).unwrap();
        let mut decoder = init_model::<f64>(&cfg.decoder_spec(), 21).unwrap();
        let mut opt = OptimState::adam(5e-3);
        let mut received = Vec::new();
        let mut labels = Vec::new();
        for msg in 0..16 {
            let (x, _) = encoder.forward(&Tensor::one_hot(msg, 16).unwrap(), false).unwrap();
            received.push(x);
            labels.push(msg);
        }
        let mut losses = Vec::new();
        for _ in 0..10 {
            let stats =
                train_step_receiver(&mut decoder, &mut opt, &received, &labels, 1).unwrap();
            losses.push(stats.mean_loss);
        }
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "loss did not decrease: {losses:?}");
        }
    }

    #[test]
    fn equal_losses_cancel_exactly_under_mean_baseline() {
        let cfg = AutoencoderConfig::default();
        let mut encoder = init_model::<f64>(&cfg.encoder_spec(), 30).unwrap();
        let before = encoder.clone();
        let mut opt = OptimState::adam(1e-3);
        let mut rng = util::rng_for(31, &[]);
        let mut messages = Vec::new();
        let mut explored = Vec::new();
        for _ in 0..64 {
            let msg = rng.random_range(0..16usize);
            let (x, _) = encoder.forward(&Tensor::one_hot(msg, 16).unwrap(), false).unwrap();
            let x_p: Vec<f64> = x
                .data()
                .iter()
                .map(|&v| v + rng.sample::<f64, _>(StandardNormal) * 0.15)
                .collect();
            messages.push(msg);
            explored.push(Tensor::vector(x_p));
        }
        let losses = vec![2.5; 64];
        let stats = train_step_transmitter(
            &mut encoder,
            &mut opt,
            &messages,
            &explored,
            &losses,
            0.15,
        )
        .unwrap();
        assert_eq!(stats.grad_norm, 0.0);
        assert_eq!(encoder, before, "zero gradient must not move parameters");
    }

    #[test]
    fn non_finite_feedback_skips_the_round() {
        let cfg = AutoencoderConfig::default();
        let mut encoder = init_model::<f64>(&cfg.encoder_spec(), 32).unwrap();
        let before = encoder.clone();
        let mut opt = OptimState::adam(1e-3);
        let messages = vec![0usize];
        let explored = vec![Tensor::vector(vec![0.1; 7])];
        let losses = vec![f64::NAN];
        let stats = train_step_transmitter(
            &mut encoder,
            &mut opt,
            &messages,
            &explored,
            &losses,
            0.15,
        )
        .unwrap();
        assert!(stats.skipped);
        assert_eq!(encoder, before);
    }

    #[test]
    fn simulation_trace_has_full_length_and_unit_range() {
        let cfg = tiny_drl();
        let out = run_simulation::<f64>(&cfg, None).unwrap();
        assert_eq!(out.trace.accuracy.len(), cfg.total_steps);
        assert!(out.trace.accuracy.iter().all(|&a| (0.0..=1.0).contains(&a)));
    }

    #[test]
    fn simulation_is_deterministic() {
        let cfg = tiny_drl();
        let a = run_simulation::<f64>(&cfg, None).unwrap();
        let b = run_simulation::<f64>(&cfg, None).unwrap();
        assert_eq!(a.trace.accuracy, b.trace.accuracy);
    }

    #[test]
    fn adversary_consumes_no_extra_model_access() {
        let cfg = tiny_drl();
        let pool = vec![UniversalPerturbation {
            delta: vec![0.3f64; 7],
            power_ratio: 0.09,
            seed: 0,
            trace: Vec::new(),
            layer_activations: Vec::new(),
            warning: None,
        }];
        let schedule =
            AttackSchedule { window_start: 2, window_end: 6, pool, policy: PoolPolicy::RoundRobin };
        let clean = run_simulation::<f64>(&cfg, None).unwrap();
        let attacked = run_simulation::<f64>(&cfg, Some(&schedule)).unwrap();
        assert_eq!(clean.stats, attacked.stats);
    }

    #[test]
    fn schedule_validation() {
        let pool = vec![UniversalPerturbation::<f64> {
            delta: vec![0.0; 7],
            power_ratio: 0.0,
            seed: 0,
            trace: Vec::new(),
            layer_activations: Vec::new(),
            warning: None,
        }];
        let bad = AttackSchedule { window_start: 5, window_end: 5, pool: pool.clone(), policy: PoolPolicy::UniformDraw };
        assert!(bad.validate(10).is_err());
        let empty = AttackSchedule::<f64> { window_start: 1, window_end: 3, pool: Vec::new(), policy: PoolPolicy::UniformDraw };
        assert!(empty.validate(10).is_err());
        let good = AttackSchedule { window_start: 1, window_end: 3, pool, policy: PoolPolicy::UniformDraw };
        assert!(good.validate(10).is_ok());
    }
}
