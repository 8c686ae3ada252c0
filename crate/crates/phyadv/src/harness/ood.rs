//! Out-of-distribution probe sets: unseen SNRs (off the training grid), a
//! held-out modulation scheme, and pure-noise frames.

use crate::error::{Error, Result};
use crate::modclass::PredictionOracle;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::util;
use crate::wireless::channel::{awgn_with_power, measure_power};
use crate::wireless::{modulate, DatasetConfig, IqFrame, ModulationScheme, FRAME_LEN};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use std::collections::HashSet;

/// A probe frame. Unlike dataset frames, the SNR may sit off the training
/// grid, and pure-noise probes carry a uniformly random label.
#[derive(Clone, Debug)]
pub struct ProbeFrame<T: Scalar> {
    pub samples: Tensor<T>,
    pub label: usize,
    pub snr_db: f64,
}

#[derive(Clone, Debug)]
pub struct OutOfDistributionSuite<T: Scalar> {
    /// Frames at odd-dB SNRs between the training grid points.
    pub unseen_snr: Vec<ProbeFrame<T>>,
    /// Frames of a modulation the probed model was trained without.
    pub unseen_scheme: Vec<ProbeFrame<T>>,
    /// Normalized white noise with uniformly random labels.
    pub pure_noise: Vec<ProbeFrame<T>>,
    pub heldout_scheme: Option<ModulationScheme>,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct OodConfig {
    pub frames_per_set: usize,
    pub heldout_scheme: Option<ModulationScheme>,
    /// Off-grid SNRs to probe (defaults to odd values −19..17 dB).
    pub unseen_snrs_db: Vec<f64>,
}

impl Default for OodConfig {
    fn default() -> Self {
        Self {
            frames_per_set: 160,
            heldout_scheme: Some(ModulationScheme::Gfsk),
            unseen_snrs_db: (-19..=17).step_by(2).map(|v| v as f64).collect(),
        }
    }
}

/// Synthesize one probe window at an arbitrary (possibly off-grid) SNR,
/// using the same burst/window/normalization pipeline as the dataset
/// generator.
fn synthesize_probe<T: Scalar>(
    scheme: ModulationScheme,
    snr_db: f64,
    dataset_cfg: &DatasetConfig,
    seed: u64,
) -> Result<ProbeFrame<T>> {
    let sps = dataset_cfg.samples_per_symbol;
    let burst_symbols = 2 * (FRAME_LEN / sps) + 2;
    let bits_needed = burst_symbols * scheme.bits_per_symbol();
    let mut rng = util::rng_for(seed, &[0x6f6f_6400]);
    let bits: Vec<u8> = (0..bits_needed).map(|_| rng.random_range(0..=1u8)).collect();
    let mut burst = modulate::<f64>(scheme, &bits, sps)?;
    if dataset_cfg.random_phase {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let rot = Complex::from_polar(1.0, theta);
        for s in burst.iter_mut() {
            *s *= rot;
        }
    }
    let start = rng.random_range(0..=burst.len() - FRAME_LEN);
    let window: Vec<Complex<f64>> = burst[start..start + FRAME_LEN].to_vec();
    let noisy = awgn_with_power(&window, measure_power(&window), snr_db, rng.random::<u64>());
    let scale = 1.0 / measure_power(&noisy).sqrt();
    let mut data = Vec::with_capacity(2 * FRAME_LEN);
    data.extend(noisy.iter().map(|c| T::from_f64_c(c.re * scale)));
    data.extend(noisy.iter().map(|c| T::from_f64_c(c.im * scale)));
    Ok(ProbeFrame {
        samples: Tensor::from_vec(vec![2, FRAME_LEN], data)?,
        label: scheme.class_index(),
        snr_db,
    })
}

/// Build the three probe sets. Deterministic per seed; probes never reuse
/// dataset generation seeds, and disjointness from the training data is
/// re-checked at probe time.
pub fn build_ood_suite<T: Scalar>(
    config: &OodConfig,
    dataset_cfg: &DatasetConfig,
    seed: u64,
) -> Result<OutOfDistributionSuite<T>> {
    if config.frames_per_set == 0 {
        return Err(Error::Config("OOD probe sets must be nonempty".to_string()));
    }
    for &snr in &config.unseen_snrs_db {
        if crate::wireless::snr_grid().contains(&(snr as i8)) && snr.fract() == 0.0 {
            return Err(Error::Config(format!(
                "unseen-SNR probe at {snr} dB collides with the training grid"
            )));
        }
    }
    let mut unseen_snr = Vec::with_capacity(config.frames_per_set);
    let schemes = ModulationScheme::ALL;
    for i in 0..config.frames_per_set {
        let scheme = schemes[i % schemes.len()];
        let snr = config.unseen_snrs_db[i % config.unseen_snrs_db.len()];
        unseen_snr.push(synthesize_probe::<T>(
            scheme,
            snr,
            dataset_cfg,
            util::derive_seed(seed, &[1, i as u64]),
        )?);
    }

    let mut unseen_scheme = Vec::new();
    if let Some(heldout) = config.heldout_scheme {
        for i in 0..config.frames_per_set {
            let snr = crate::wireless::snr_grid()[(i * 3) % 20] as f64;
            unseen_scheme.push(synthesize_probe::<T>(
                heldout,
                snr,
                dataset_cfg,
                util::derive_seed(seed, &[2, i as u64]),
            )?);
        }
    }

    let mut pure_noise = Vec::with_capacity(config.frames_per_set);
    for i in 0..config.frames_per_set {
        let mut rng = util::rng_for(seed, &[3, i as u64]);
        let draws: Vec<f64> = (0..2 * FRAME_LEN).map(|_| rng.sample(StandardNormal)).collect();
        let power = draws.iter().map(|v| v * v).sum::<f64>() / FRAME_LEN as f64;
        let scale = 1.0 / power.sqrt();
        let data: Vec<T> = draws.into_iter().map(|v| T::from_f64_c(v * scale)).collect();
        pure_noise.push(ProbeFrame {
            samples: Tensor::from_vec(vec![2, FRAME_LEN], data)?,
            label: rng.random_range(0..8),
            snr_db: f64::NEG_INFINITY,
        });
    }

    Ok(OutOfDistributionSuite {
        unseen_snr,
        unseen_scheme,
        pure_noise,
        heldout_scheme: config.heldout_scheme,
    })
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct OodSetReport {
    pub count: usize,
    pub accuracy: f64,
    /// Mean max-softmax score: a crude confidence indicator.
    pub mean_max_confidence: f64,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct OodReport {
    pub sets: BTreeMap<String, OodSetReport>,
    pub heldout_scheme: Option<ModulationScheme>,
}

fn frame_fingerprint<T: Scalar>(samples: &Tensor<T>) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for v in samples.data() {
        let bits = (v.to_f64_c() as f32).to_bits() as u64;
        h = (h ^ bits).wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Evaluate a model on each probe set. Errors if any probe collides with a
/// training frame (the probes must be disjoint from the training data).
pub fn ood_probe<T: Scalar, O: PredictionOracle<T> + ?Sized>(
    oracle: &O,
    suite: &OutOfDistributionSuite<T>,
    training_frames: &[&IqFrame<T>],
) -> Result<OodReport> {
    let train_hashes: HashSet<u64> =
        training_frames.iter().map(|f| frame_fingerprint(&f.samples)).collect();
    let mut sets = BTreeMap::new();
    for (name, probes) in [
        ("unseen_snr", &suite.unseen_snr),
        ("unseen_scheme", &suite.unseen_scheme),
        ("pure_noise", &suite.pure_noise),
    ] {
        if probes.is_empty() {
            continue;
        }
        let mut correct = 0usize;
        let mut confidence_sum = 0.0;
        for probe in probes {
            if train_hashes.contains(&frame_fingerprint(&probe.samples)) {
                return Err(Error::Config(format!(
                    "OOD probe set {name} overlaps the training data"
                )));
            }
            let scores = oracle.scores(&probe.samples)?;
            let pred = util::argmax(&scores);
            if pred == probe.label {
                correct += 1;
            }
            confidence_sum += scores[pred].to_f64_c();
        }
        sets.insert(
            name.to_string(),
            OodSetReport {
                count: probes.len(),
                accuracy: correct as f64 / probes.len() as f64,
                mean_max_confidence: confidence_sum / probes.len() as f64,
            },
        );
    }
    Ok(OodReport { sets, heldout_scheme: suite.heldout_scheme })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct UniformOracle;

    impl PredictionOracle<f32> for UniformOracle {
        fn num_classes(&self) -> usize {
            8
        }
        fn scores(&self, input: &Tensor<f32>) -> Result<Vec<f32>> {
            // Deterministic but input-dependent argmax, independent of the
            // random labels on noise probes.
            let h = input.data().iter().map(|v| v.abs()).sum::<f32>();
            let mut s = vec![0.1f32; 8];
            s[(h * 1000.0) as usize % 8] = 0.9;
            Ok(s)
        }
    }

    #[test]
    fn pure_noise_probes_sit_near_chance() {
        let suite = build_ood_suite::<f32>(
            &OodConfig { frames_per_set: 800, ..OodConfig::default() },
            &DatasetConfig::default(),
            5,
        )
        .unwrap();
        let report = ood_probe(&UniformOracle, &suite, &[]).unwrap();
        let noise = &report.sets["pure_noise"];
        // Labels are uniform random: any deterministic predictor scores 1/8
        // in expectation.
        assert!(
            (noise.accuracy - 0.125).abs() < 0.04,
            "noise accuracy {} not near chance",
            noise.accuracy
        );
    }

    #[test]
    fn probe_snrs_stay_off_grid() {
        let cfg = OodConfig::default();
        for snr in &cfg.unseen_snrs_db {
            assert!((*snr as i64) % 2 != 0, "snr {snr} is on the even training grid");
        }
        let bad = OodConfig { unseen_snrs_db: vec![10.0], ..OodConfig::default() };
        assert!(build_ood_suite::<f32>(&bad, &DatasetConfig::default(), 1).is_err());
    }

    #[test]
    fn overlap_with_training_data_is_detected() {
        let suite = build_ood_suite::<f32>(
            &OodConfig { frames_per_set: 4, ..OodConfig::default() },
            &DatasetConfig::default(),
            6,
        )
        .unwrap();
        // Fabricate a training frame byte-identical to a probe.
        let stolen = IqFrame::new(
            suite.unseen_snr[0].samples.clone(),
            ModulationScheme::Bpsk,
            0,
        )
        .unwrap();
        let frames = [&stolen];
        assert!(matches!(
            ood_probe(&UniformOracle, &suite, &frames),
            Err(Error::Config(_))
        ));
    }
}
