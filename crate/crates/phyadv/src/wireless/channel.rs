//! AWGN channel and jammer models.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::util;
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

/// Mean |s|² of a complex signal, accumulated in f64.
pub fn measure_power<T: Scalar>(signal: &[Complex<T>]) -> f64 {
    if signal.is_empty() {
        return 0.0;
    }
    signal
        .iter()
        .map(|c| {
            let re = c.re.to_f64_c();
            let im = c.im.to_f64_c();
            re * re + im * im
        })
        .sum::<f64>()
        / signal.len() as f64
}

/// How the noise level of a channel is specified.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum NoiseSpec {
    /// Total signal power over total noise power, in dB.
    SnrDb(f64),
    /// Energy per information bit over noise spectral density, in dB, with
    /// the information rate in bits per channel use.
    EbN0Db { ebno_db: f64, bits_per_use: f64 },
}

impl NoiseSpec {
    pub fn snr_db(self) -> Result<f64> {
        match self {
            NoiseSpec::SnrDb(v) => Ok(v),
            NoiseSpec::EbN0Db { ebno_db, bits_per_use } => {
                super::metrics::ebno_to_snr(ebno_db, bits_per_use)
            }
        }
    }
}

/// AWGN channel configuration: noise level plus an optional uniform random
/// phase offset applied per burst.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelConfig {
    pub noise: NoiseSpec,
    pub random_phase: bool,
}

impl ChannelConfig {
    /// Total noise variance for a signal of the given power. Positive for
    /// any finite SNR.
    pub fn noise_variance(&self, signal_power: f64) -> Result<f64> {
        let snr_db = self.noise.snr_db()?;
        if snr_db.is_infinite() && snr_db > 0.0 {
            return Ok(0.0);
        }
        let var = signal_power / 10f64.powf(snr_db / 10.0);
        if !(var > 0.0) || !var.is_finite() {
            return Err(Error::Numeric(format!(
                "noise variance {var} not positive/finite (snr {snr_db} dB, power {signal_power})"
            )));
        }
        Ok(var)
    }
}

/// Add white Gaussian noise so that `noise variance = power / 10^(snr/10)`,
/// split equally across I and Q. The noise is calibrated against an
/// explicitly supplied signal power (used when the caller knows the power of
/// a larger burst or a normalization target).
pub fn awgn_with_power<T: Scalar>(
    signal: &[Complex<T>],
    signal_power: f64,
    snr_db: f64,
    seed: u64,
) -> Vec<Complex<T>> {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return signal.to_vec();
    }
    let variance = signal_power / 10f64.powf(snr_db / 10.0);
    let sigma_component = (variance / 2.0).sqrt();
    let mut rng = util::rng_for(seed, &[0x6177_676e]);
    signal
        .iter()
        .map(|c| {
            let ni: f64 = rng.sample(StandardNormal);
            let nq: f64 = rng.sample(StandardNormal);
            Complex::new(
                c.re + T::from_f64_c(ni * sigma_component),
                c.im + T::from_f64_c(nq * sigma_component),
            )
        })
        .collect()
}

/// Add white Gaussian noise at the given SNR relative to the measured power
/// of `signal`. An infinite SNR passes the signal through unchanged.
pub fn awgn<T: Scalar>(signal: &[Complex<T>], snr_db: f64, seed: u64) -> Vec<Complex<T>> {
    awgn_with_power(signal, measure_power(signal), snr_db, seed)
}

/// Jam a signal with white Gaussian noise carrying exactly
/// `power_ratio × signal energy` — the jam vector is rescaled so the
/// injected energy matches the ratio, making jammed-vs-adversarial
/// comparisons energy-exact.
pub fn jam<T: Scalar>(
    signal: &[Complex<T>],
    power_ratio: f64,
    seed: u64,
) -> Result<Vec<Complex<T>>> {
    if !(power_ratio >= 0.0) {
        return Err(Error::Config(format!(
            "jam power ratio must be ≥ 0, got {power_ratio}"
        )));
    }
    if power_ratio == 0.0 || signal.is_empty() {
        return Ok(signal.to_vec());
    }
    let signal_energy = measure_power(signal) * signal.len() as f64;
    let mut rng = util::rng_for(seed, &[0x6a61_6d00]);
    let draws: Vec<(f64, f64)> = signal
        .iter()
        .map(|_| (rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let draw_energy: f64 = draws.iter().map(|(i, q)| i * i + q * q).sum();
    if draw_energy == 0.0 {
        return Ok(signal.to_vec());
    }
    let scale = (power_ratio * signal_energy / draw_energy).sqrt();
    Ok(signal
        .iter()
        .zip(&draws)
        .map(|(c, &(ni, nq))| {
            Complex::new(
                c.re + T::from_f64_c(ni * scale),
                c.im + T::from_f64_c(nq * scale),
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize) -> Vec<Complex<f64>> {
        (0..n)
            .map(|i| Complex::from_polar(1.0, 0.01 * i as f64))
            .collect()
    }

    #[test]
    fn infinite_snr_passes_through() {
        let s = tone(64);
        assert_eq!(awgn(&s, f64::INFINITY, 5), s);
    }

    #[test]
    fn zero_db_noise_power_matches_signal_power() {
        let s = tone(100_000);
        let noisy = awgn(&s, 0.0, 7);
        let noise_power: f64 = s
            .iter()
            .zip(&noisy)
            .map(|(a, b)| (b - a).norm_sqr())
            .sum::<f64>()
            / s.len() as f64;
        let signal_power = measure_power(&s);
        assert!(
            (noise_power - signal_power).abs() / signal_power < 0.05,
            "noise power {noise_power} vs signal power {signal_power}"
        );
    }

    #[test]
    fn awgn_is_deterministic_per_seed() {
        let s = tone(256);
        assert_eq!(awgn(&s, 3.0, 11), awgn(&s, 3.0, 11));
        assert_ne!(awgn(&s, 3.0, 11), awgn(&s, 3.0, 12));
    }

    #[test]
    fn jam_ratio_zero_is_identity() {
        let s = tone(32);
        assert_eq!(jam(&s, 0.0, 3).unwrap(), s);
        assert!(jam(&s, -0.5, 3).is_err());
    }

    #[test]
    fn jam_injects_exact_energy() {
        let s = tone(512);
        let ratio = 0.37;
        let jammed = jam(&s, ratio, 21).unwrap();
        let injected: f64 = s.iter().zip(&jammed).map(|(a, b)| (b - a).norm_sqr()).sum();
        let signal_energy = measure_power(&s) * s.len() as f64;
        assert!(
            (injected / signal_energy - ratio).abs() < 1e-12,
            "injected {injected}, expected {}",
            ratio * signal_energy
        );
    }

    #[test]
    fn jam_is_deterministic_per_seed() {
        let s = tone(64);
        assert_eq!(jam(&s, 1.0, 9).unwrap(), jam(&s, 1.0, 9).unwrap());
    }

    #[test]
    fn channel_config_variance_positive_for_finite_snr() {
        let cfg = ChannelConfig { noise: NoiseSpec::SnrDb(-20.0), random_phase: false };
        assert!(cfg.noise_variance(1.0).unwrap() > 0.0);
        let inf = ChannelConfig { noise: NoiseSpec::SnrDb(f64::INFINITY), random_phase: false };
        assert_eq!(inf.noise_variance(1.0).unwrap(), 0.0);
    }
}
