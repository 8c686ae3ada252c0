//! Case study B: end-to-end channel autoencoder over AWGN, its BLER curves,
//! and the data-independent universal perturbation attack on its decoder.

pub mod craft;

use crate::error::{Error, Result};
use crate::nn::{init_model, loss, optim::OptimState, LayerSpec, ModelSpec, ModelState};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::util;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

pub use craft::{craft_universal_perturbation, ActivationObjective, CraftConfig,
                 UniversalPerturbation};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AutoencoderConfig {
    /// Bits per message; the message set has M = 2^k entries.
    pub bits_per_message: usize,
    /// Real channel uses per message.
    pub channel_uses: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    /// Eb/N0 the end-to-end system is trained at, in dB.
    pub train_ebno_db: f64,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            bits_per_message: 4,
            channel_uses: 7,
            encoder_hidden: 16,
            decoder_hidden: 16,
            train_ebno_db: 7.0,
            epochs: 40,
            batches_per_epoch: 50,
            batch_size: 256,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl AutoencoderConfig {
    pub fn messages(&self) -> usize {
        1 << self.bits_per_message
    }

    /// Information rate in bits per (real) channel use.
    pub fn rate(&self) -> f64 {
        self.bits_per_message as f64 / self.channel_uses as f64
    }

    /// Noise stddev per real channel use for a given Eb/N0. With unit
    /// average power per channel use, Eb = 1/R and N0 = 2σ², so
    /// σ² = 1 / (2·R·Eb/N0).
    pub fn noise_sigma(&self, ebno_db: f64) -> f64 {
        let ebno = 10f64.powf(ebno_db / 10.0);
        (1.0 / (2.0 * self.rate() * ebno)).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits_per_message == 0 || self.channel_uses == 0 {
            return Err(Error::Config("k and n must be positive".to_string()));
        }
        if self.encoder_hidden == 0 || self.decoder_hidden == 0 {
            return Err(Error::Config("hidden sizes must be positive".to_string()));
        }
        if self.batch_size == 0 || self.batches_per_epoch == 0 {
            return Err(Error::Config("batch configuration must be positive".to_string()));
        }
        Ok(())
    }

    /// Encoder: one-hot message → dense(M→hidden) → relu → dense(→n) →
    /// energy-norm(n), so every codeword has unit average power.
    pub fn encoder_spec(&self) -> ModelSpec {
        let m = self.messages();
        ModelSpec::new(vec![
            LayerSpec::Dense { input: m, output: self.encoder_hidden },
            LayerSpec::Relu,
            LayerSpec::Dense { input: self.encoder_hidden, output: self.channel_uses },
            LayerSpec::EnergyNorm { dim: self.channel_uses },
        ])
    }

    /// Decoder: received n-vector → dense(n→hidden) → relu → dense(→M) →
    /// softmax.
    pub fn decoder_spec(&self) -> ModelSpec {
        let m = self.messages();
        ModelSpec::new(vec![
            LayerSpec::Dense { input: self.channel_uses, output: self.decoder_hidden },
            LayerSpec::Relu,
            LayerSpec::Dense { input: self.decoder_hidden, output: m },
            LayerSpec::Softmax,
        ])
    }
}

/// Both halves of a trained system, kept separate so attacks can target the
/// decoder alone.
#[derive(Clone, Debug)]
pub struct Autoencoder<T: Scalar> {
    pub encoder: ModelState<T>,
    pub decoder: ModelState<T>,
    pub config: AutoencoderConfig,
}

impl<T: Scalar> Autoencoder<T> {
    /// All M codewords, in message order.
    pub fn codeword_table(&self) -> Result<Vec<Vec<T>>> {
        let m = self.config.messages();
        (0..m)
            .map(|msg| {
                let x = Tensor::one_hot(msg, m)?;
                Ok(self.encoder.forward(&x, false)?.0.into_data())
            })
            .collect()
    }

    pub fn decode(&self, received: &Tensor<T>) -> Result<usize> {
        let (probs, _) = self.decoder.forward(received, false)?;
        Ok(util::argmax(probs.data()))
    }
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct AutoencoderHistory {
    pub epoch_loss: Vec<f64>,
    pub epoch_accuracy: Vec<f64>,
}

/// Train encoder and decoder end-to-end through the AWGN channel (noise
/// resampled for every example). Deterministic per config.
pub fn train_autoencoder<T: Scalar>(
    config: &AutoencoderConfig,
) -> Result<(Autoencoder<T>, AutoencoderHistory)> {
    config.validate()?;
    let m = config.messages();
    let n = config.channel_uses;
    let sigma = config.noise_sigma(config.train_ebno_db);

    let mut encoder = init_model::<T>(&config.encoder_spec(), config.seed)?;
    let mut decoder =
        init_model::<T>(&config.decoder_spec(), util::derive_seed(config.seed, &[1]))?;
    let mut enc_opt = OptimState::adam(config.learning_rate);
    let mut dec_opt = OptimState::adam(config.learning_rate);
    let mut history = AutoencoderHistory::default();

    for epoch in 0..config.epochs {
        let mut rng = util::rng_for(config.seed, &[0x6165_7472, epoch as u64]);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut count = 0usize;
        for _ in 0..config.batches_per_epoch {
            let mut enc_grads = crate::nn::Gradients::zeros_like(&encoder, &[m]);
            let mut dec_grads = crate::nn::Gradients::zeros_like(&decoder, &[n]);
            let scale = T::from_f64_c(1.0 / config.batch_size as f64);
            for _ in 0..config.batch_size {
                let msg = rng.random_range(0..m);
                let one_hot = Tensor::one_hot(msg, m)?;
                let (codeword, enc_tape) = encoder.forward(&one_hot, true)?;
                let mut y = codeword.data().to_vec();
                for v in y.iter_mut() {
                    let noise: f64 = rng.sample(StandardNormal);
                    *v = *v + T::from_f64_c(noise * sigma);
                }
                let received = Tensor::vector(y);
                let (logits, dec_tape) = decoder.forward_logits(&received, true)?;
                let (l, grad) = loss::cross_entropy_logits(&logits, msg)?;
                loss_sum += l.to_f64_c();
                if util::argmax(logits.data()) == msg {
                    correct += 1;
                }
                count += 1;
                let dec_sample = decoder.backward(dec_tape.as_ref().unwrap(), &grad)?;
                // The channel is additive, so the gradient at the decoder
                // input is the gradient at the encoder output.
                let enc_sample =
                    encoder.backward(enc_tape.as_ref().unwrap(), &dec_sample.input)?;
                dec_grads.accumulate(&dec_sample, scale);
                enc_grads.accumulate(&enc_sample, scale);
            }
            let map_err = |e: Error| match e {
                Error::Numeric(msg) => Error::Training { epoch, message: msg },
                other => other,
            };
            enc_opt.step(encoder.params_mut(), &enc_grads).map_err(map_err)?;
            dec_opt.step(decoder.params_mut(), &dec_grads).map_err(map_err)?;
        }
        let epoch_loss = loss_sum / count as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("non-finite autoencoder loss {epoch_loss}"),
            });
        }
        history.epoch_loss.push(epoch_loss);
        history.epoch_accuracy.push(correct as f64 / count as f64);
    }
    Ok((Autoencoder { encoder, decoder, config: config.clone() }, history))
}

/// Additive receiver-side impairment applied after the AWGN channel.
#[derive(Clone, Copy, Debug)]
pub enum ChannelModifier<'a, T: Scalar> {
    None,
    /// White Gaussian jamming with exactly `power_ratio × n` energy per
    /// block (energy parity with an adversarial δ of the same ratio).
    Jam { power_ratio: f64 },
    /// The same universal δ added to every received block.
    Adversarial { delta: &'a [T] },
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct BlerPoint {
    pub ebno_db: f64,
    pub errors: u64,
    pub trials: u64,
    pub bler: f64,
    /// Set when fewer than 10 errors were observed; the point estimate is
    /// then statistically weak.
    pub low_confidence: bool,
}

/// Monte-Carlo BLER over an Eb/N0 grid. Trials are split into chunks run in
/// parallel with per-chunk derived seeds and merged by summing error counts,
/// so results do not depend on thread scheduling.
pub fn bler_curve<T: Scalar>(
    autoencoder: &Autoencoder<T>,
    ebno_grid_db: &[f64],
    trials: u64,
    modifier: ChannelModifier<'_, T>,
    seed: u64,
) -> Result<Vec<BlerPoint>> {
    if trials == 0 {
        return Err(Error::Config("bler_curve needs at least one trial".to_string()));
    }
    if let ChannelModifier::Adversarial { delta } = modifier {
        if delta.len() != autoencoder.config.channel_uses {
            return Err(Error::Config(format!(
                "perturbation length {} does not match {} channel uses",
                delta.len(),
                autoencoder.config.channel_uses
            )));
        }
    }
    let codewords = autoencoder.codeword_table()?;
    let n = autoencoder.config.channel_uses;
    let m = autoencoder.config.messages();
    const CHUNK: u64 = 8192;

    ebno_grid_db
        .iter()
        .enumerate()
        .map(|(point_idx, &ebno_db)| {
            let sigma = autoencoder.config.noise_sigma(ebno_db);
            let chunks: Vec<(u64, u64)> = (0..trials.div_ceil(CHUNK))
                .map(|c| (c, CHUNK.min(trials - c * CHUNK)))
                .collect();
            let errors: Result<u64> = chunks
                .par_iter()
                .map(|&(chunk_idx, chunk_trials)| {
                    let mut rng =
                        util::rng_for(seed, &[0x626c_6572, point_idx as u64, chunk_idx]);
                    let mut jam_rng =
                        util::rng_for(seed, &[0x6a61_6d32, point_idx as u64, chunk_idx]);
                    let mut errors = 0u64;
                    for _ in 0..chunk_trials {
                        let msg = rng.random_range(0..m);
                        let mut y: Vec<T> = codewords[msg].clone();
                        for v in y.iter_mut() {
                            let noise: f64 = rng.sample(StandardNormal);
                            *v = *v + T::from_f64_c(noise * sigma);
                        }
                        match modifier {
                            ChannelModifier::None => {}
                            ChannelModifier::Jam { power_ratio } => {
                                let target = (power_ratio * n as f64).sqrt();
                                let draws: Vec<f64> =
                                    (0..n).map(|_| jam_rng.sample(StandardNormal)).collect();
                                let norm =
                                    draws.iter().map(|v| v * v).sum::<f64>().sqrt();
                                if norm > 0.0 {
                                    let s = target / norm;
                                    for (v, d) in y.iter_mut().zip(&draws) {
                                        *v = *v + T::from_f64_c(d * s);
                                    }
                                }
                            }
                            ChannelModifier::Adversarial { delta } => {
                                for (v, &d) in y.iter_mut().zip(delta) {
                                    *v = *v + d;
                                }
                            }
                        }
                        let decoded = autoencoder.decode(&Tensor::vector(y))?;
                        if decoded != msg {
                            errors += 1;
                        }
                    }
                    Ok(errors)
                })
                .try_reduce(|| 0, |a, b| Ok(a + b));
            let errors = errors?;
            Ok(BlerPoint {
                ebno_db,
                errors,
                trials,
                bler: errors as f64 / trials as f64,
                low_confidence: errors < 10,
            })
        })
        .collect()
}

/// CSV with one row per grid point: clean, jammed and adversarial BLER at
/// matched energy.
pub fn curves_csv(clean: &[BlerPoint], jam: &[BlerPoint], adv: &[BlerPoint]) -> String {
    let mut out = String::from("ebno_db,bler_clean,bler_jam,bler_adv,trials\n");
    for ((c, j), a) in clean.iter().zip(jam).zip(adv) {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.ebno_db, c.bler, j.bler, a.bler, c.trials
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> AutoencoderConfig {
        AutoencoderConfig {
            epochs: 6,
            batches_per_epoch: 30,
            batch_size: 64,
            ..AutoencoderConfig::default()
        }
    }

    #[test]
    fn noise_sigma_matches_rate_formula() {
        let cfg = AutoencoderConfig::default();
        // At Eb/N0 = 0 dB with R = 4/7: σ² = 7/8.
        let sigma = cfg.noise_sigma(0.0);
        assert!((sigma * sigma - 7.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn encoder_output_is_unit_power_for_every_message() {
        let cfg = tiny_config();
        let (ae, _) = train_autoencoder::<f64>(&cfg).unwrap();
        for cw in ae.codeword_table().unwrap() {
            let mean_power =
                cw.iter().map(|v| v * v).sum::<f64>() / cfg.channel_uses as f64;
            assert!((mean_power - 1.0).abs() < 1e-6, "codeword power {mean_power}");
        }
    }

    #[test]
    fn training_improves_with_channel_quality() {
        let cfg = tiny_config();
        let (ae, history) = train_autoencoder::<f64>(&cfg).unwrap();
        assert!(history.epoch_loss.last().unwrap() < history.epoch_loss.first().unwrap());
        let at_train = bler_curve(&ae, &[cfg.train_ebno_db], 20_000, ChannelModifier::None, 3)
            .unwrap()[0]
            .bler;
        let degraded =
            bler_curve(&ae, &[cfg.train_ebno_db - 4.0], 20_000, ChannelModifier::None, 3)
                .unwrap()[0]
                .bler;
        assert!(
            at_train < degraded,
            "bler at train Eb/N0 {at_train} should beat train−4dB {degraded}"
        );
    }

    #[test]
    fn zero_delta_curve_equals_clean_curve() {
        let cfg = tiny_config();
        let (ae, _) = train_autoencoder::<f32>(&cfg).unwrap();
        let grid = [2.0, 6.0];
        let zeros = vec![0.0f32; cfg.channel_uses];
        let clean = bler_curve(&ae, &grid, 5_000, ChannelModifier::None, 11).unwrap();
        let adv =
            bler_curve(&ae, &grid, 5_000, ChannelModifier::Adversarial { delta: &zeros }, 11)
                .unwrap();
        for (c, a) in clean.iter().zip(&adv) {
            assert_eq!(c.errors, a.errors);
        }
    }

    #[test]
    fn jam_blocks_carry_exact_energy() {
        // Checked indirectly through the modifier math: target norm is
        // sqrt(ratio·n) per block by construction; here we verify the curve
        // runs and degrades relative to clean.
        let cfg = tiny_config();
        let (ae, _) = train_autoencoder::<f32>(&cfg).unwrap();
        let clean = bler_curve(&ae, &[6.0], 20_000, ChannelModifier::None, 5).unwrap();
        let jam =
            bler_curve(&ae, &[6.0], 20_000, ChannelModifier::Jam { power_ratio: 0.5 }, 5)
                .unwrap();
        assert!(jam[0].bler > clean[0].bler);
    }

    #[test]
    fn deterministic_curves_per_seed() {
        let cfg = tiny_config();
        let (ae, _) = train_autoencoder::<f32>(&cfg).unwrap();
        let a = bler_curve(&ae, &[4.0], 10_000, ChannelModifier::None, 9).unwrap();
        let b = bler_curve(&ae, &[4.0], 10_000, ChannelModifier::None, 9).unwrap();
        assert_eq!(a[0].errors, b[0].errors);
    }
}
