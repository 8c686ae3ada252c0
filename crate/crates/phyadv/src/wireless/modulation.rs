//! The eight digital modulation schemes and their baseband waveforms.
//!
//! Linear schemes map Gray-coded bit groups onto unit-average-energy
//! constellations and use rectangular (sample-and-hold) pulses; CPFSK and
//! GFSK are constant-envelope continuous-phase schemes with modulation
//! index 0.5 (GFSK adds a Gaussian frequency filter with BT = 0.35).

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use num_complex::Complex;
use std::f64::consts::PI;

/// CPFSK / GFSK modulation index.
const FSK_MOD_INDEX: f64 = 0.5;
/// GFSK Gaussian filter bandwidth-time product.
const GFSK_BT: f64 = 0.35;
/// GFSK frequency pulse truncation, in symbols on each side.
const GFSK_SPAN: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ModulationScheme {
    #[serde(rename = "PAM4")]
    Pam4,
    #[serde(rename = "BPSK")]
    Bpsk,
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "8PSK")]
    Psk8,
    #[serde(rename = "QAM16")]
    Qam16,
    #[serde(rename = "QAM64")]
    Qam64,
    #[serde(rename = "CPFSK")]
    Cpfsk,
    #[serde(rename = "GFSK")]
    Gfsk,
}

impl ModulationScheme {
    pub const ALL: [ModulationScheme; 8] = [
        ModulationScheme::Pam4,
        ModulationScheme::Bpsk,
        ModulationScheme::Qpsk,
        ModulationScheme::Psk8,
        ModulationScheme::Qam16,
        ModulationScheme::Qam64,
        ModulationScheme::Cpfsk,
        ModulationScheme::Gfsk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModulationScheme::Pam4 => "PAM4",
            ModulationScheme::Bpsk => "BPSK",
            ModulationScheme::Qpsk => "QPSK",
            ModulationScheme::Psk8 => "8PSK",
            ModulationScheme::Qam16 => "QAM16",
            ModulationScheme::Qam64 => "QAM64",
            ModulationScheme::Cpfsk => "CPFSK",
            ModulationScheme::Gfsk => "GFSK",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Config(format!("unknown modulation scheme {name:?}")))
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            ModulationScheme::Bpsk | ModulationScheme::Cpfsk | ModulationScheme::Gfsk => 1,
            ModulationScheme::Pam4 | ModulationScheme::Qpsk => 2,
            ModulationScheme::Psk8 => 3,
            ModulationScheme::Qam16 => 4,
            ModulationScheme::Qam64 => 6,
        }
    }

    /// Linear memoryless constellation schemes (everything but CPFSK/GFSK).
    pub fn is_linear(self) -> bool {
        !matches!(self, ModulationScheme::Cpfsk | ModulationScheme::Gfsk)
    }

    /// Stable class index (also the dataset label and file tag).
    pub fn class_index(self) -> usize {
        Self::ALL.iter().position(|&s| s == self).expect("scheme in ALL")
    }

    pub fn from_class_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::Format(format!("modulation tag {index} out of range")))
    }

    /// The constellation for a linear scheme, indexed by the Gray-coded bit
    /// group value. Unit average energy by construction.
    pub fn constellation(self) -> Result<Vec<Complex<f64>>> {
        match self {
            ModulationScheme::Bpsk => Ok(vec![Complex::new(1.0, 0.0), Complex::new(-1.0, 0.0)]),
            ModulationScheme::Pam4 => {
                Ok((0..4).map(|v| Complex::new(pam_level(v, 2), 0.0)).collect())
            }
            ModulationScheme::Qpsk => {
                let a = 1.0 / 2.0f64.sqrt();
                Ok((0..4)
                    .map(|v| {
                        let i = if v & 0b10 == 0 { a } else { -a };
                        let q = if v & 0b01 == 0 { a } else { -a };
                        Complex::new(i, q)
                    })
                    .collect())
            }
            ModulationScheme::Psk8 => Ok((0..8)
                .map(|v| {
                    let p = inverse_gray(v) as f64;
                    Complex::from_polar(1.0, p * PI / 4.0)
                })
                .collect()),
            ModulationScheme::Qam16 => Ok((0..16)
                .map(|v| {
                    let i = pam_level(v >> 2, 2);
                    let q = pam_level(v & 0b11, 2);
                    Complex::new(i, q) / 2.0f64.sqrt()
                })
                .collect()),
            ModulationScheme::Qam64 => Ok((0..64)
                .map(|v| {
                    let i = pam_level(v >> 3, 3);
                    let q = pam_level(v & 0b111, 3);
                    Complex::new(i, q) / 2.0f64.sqrt()
                })
                .collect()),
            _ => Err(Error::Config(format!(
                "{} is not a linear scheme and has no constellation",
                self.name()
            ))),
        }
    }
}

/// Gray-coded PAM level for a `bits`-bit value, normalized to unit average
/// energy over the axis.
fn pam_level(value: usize, bits: usize) -> f64 {
    let m = 1usize << bits;
    let index = inverse_gray(value) as f64;
    let level = 2.0 * index - (m as f64 - 1.0);
    // Mean square of {±1, ±3, ..., ±(m−1)} is (m²−1)/3.
    let norm = (((m * m - 1) as f64) / 3.0).sqrt();
    level / norm
}

/// Index `p` such that `p ^ (p >> 1) == value` (binary-reflected Gray code).
fn inverse_gray(value: usize) -> usize {
    let mut p = value;
    let mut shift = 1;
    while (p >> shift) != 0 {
        p ^= p >> shift;
        shift <<= 1;
    }
    p
}

fn validate_bits(scheme: ModulationScheme, bits: &[u8]) -> Result<()> {
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::Config("bit stream must contain only 0/1".to_string()));
    }
    let bps = scheme.bits_per_symbol();
    if bits.is_empty() || bits.len() % bps != 0 {
        return Err(Error::Config(format!(
            "{} needs a nonempty bit count divisible by {bps}, got {}",
            scheme.name(),
            bits.len()
        )));
    }
    Ok(())
}

/// Modulate a bit stream into a complex baseband sequence at
/// `samples_per_symbol` samples per symbol. Deterministic; unit average
/// power at the constellation / envelope level.
pub fn modulate<T: Scalar>(
    scheme: ModulationScheme,
    bits: &[u8],
    samples_per_symbol: usize,
) -> Result<Vec<Complex<T>>> {
    validate_bits(scheme, bits)?;
    if samples_per_symbol == 0 {
        return Err(Error::Config("samples_per_symbol must be positive".to_string()));
    }
    let waveform = if scheme.is_linear() {
        modulate_linear(scheme, bits, samples_per_symbol)?
    } else {
        modulate_cpm(scheme, bits, samples_per_symbol)
    };
    Ok(waveform
        .into_iter()
        .map(|c| Complex::new(T::from_f64_c(c.re), T::from_f64_c(c.im)))
        .collect())
}

fn modulate_linear(
    scheme: ModulationScheme,
    bits: &[u8],
    sps: usize,
) -> Result<Vec<Complex<f64>>> {
    let bps = scheme.bits_per_symbol();
    let points = scheme.constellation()?;
    let mut out = Vec::with_capacity(bits.len() / bps * sps);
    for group in bits.chunks_exact(bps) {
        let value = group.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        let point = points[value];
        for _ in 0..sps {
            out.push(point);
        }
    }
    Ok(out)
}

fn modulate_cpm(scheme: ModulationScheme, bits: &[u8], sps: usize) -> Vec<Complex<f64>> {
    let n = bits.len() * sps;
    // NRZ frequency waveform at sample rate: +1 for bit 0, −1 for bit 1.
    let mut freq: Vec<f64> = Vec::with_capacity(n);
    for &b in bits {
        let a = if b == 0 { 1.0 } else { -1.0 };
        freq.extend(std::iter::repeat(a).take(sps));
    }
    if scheme == ModulationScheme::Gfsk {
        freq = gaussian_filter(&freq, sps);
    }
    // Integrate phase: each bit contributes a total excursion of ±π·h.
    let step = PI * FSK_MOD_INDEX / sps as f64;
    let mut phase = 0.0;
    let mut out = Vec::with_capacity(n);
    for f in freq {
        phase += step * f;
        out.push(Complex::from_polar(1.0, phase));
    }
    out
}

/// Convolve the NRZ waveform with a truncated, unit-sum Gaussian so each
/// bit's total phase contribution is preserved.
fn gaussian_filter(freq: &[f64], sps: usize) -> Vec<f64> {
    let b = GFSK_BT / sps as f64; // bandwidth in cycles/sample
    let half = (GFSK_SPAN * sps) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|t| {
            let t = t as f64;
            (-2.0 * PI * PI * b * b * t * t / (2.0f64.ln())).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= sum;
    }
    let mut out = vec![0.0; freq.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &tap) in taps.iter().enumerate() {
            let j = i as isize + (k as isize - half);
            if j >= 0 && (j as usize) < freq.len() {
                acc += tap * freq[j as usize];
            }
        }
        *o = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bpsk_canonical_mapping() {
        let s = modulate::<f64>(ModulationScheme::Bpsk, &[0, 1], 1).unwrap();
        assert_eq!(s[0], Complex::new(1.0, 0.0));
        assert_eq!(s[1], Complex::new(-1.0, 0.0));
    }

    #[test]
    fn qpsk_gray_zero_zero() {
        let s = modulate::<f64>(ModulationScheme::Qpsk, &[0, 0], 1).unwrap();
        let a = 1.0 / 2.0f64.sqrt();
        assert!((s[0].re - a).abs() < 1e-12);
        assert!((s[0].im - a).abs() < 1e-12);
    }

    #[test]
    fn linear_constellations_have_unit_mean_power() {
        for scheme in ModulationScheme::ALL.into_iter().filter(|s| s.is_linear()) {
            let points = scheme.constellation().unwrap();
            assert_eq!(points.len(), 1 << scheme.bits_per_symbol());
            let mean: f64 =
                points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64;
            assert!(
                (mean - 1.0).abs() < 1e-9,
                "{} mean power {mean}",
                scheme.name()
            );
        }
    }

    #[test]
    fn gray_neighbors_differ_in_one_bit_for_psk8() {
        let points = ModulationScheme::Psk8.constellation().unwrap();
        // For each pair of adjacent phases, the Gray-coded values differ in 1 bit.
        for p in 0..8usize {
            let v_here = (0..8).find(|&v| inverse_gray(v) == p).unwrap();
            let v_next = (0..8).find(|&v| inverse_gray(v) == (p + 1) % 8).unwrap();
            assert_eq!((v_here ^ v_next).count_ones(), 1);
        }
        let _ = points;
    }

    #[test]
    fn cpm_schemes_are_constant_envelope() {
        for scheme in [ModulationScheme::Cpfsk, ModulationScheme::Gfsk] {
            let bits: Vec<u8> = (0..64).map(|i| (i * 7 % 3 == 0) as u8).collect();
            let s = modulate::<f64>(scheme, &bits, 8).unwrap();
            assert_eq!(s.len(), 64 * 8);
            for c in &s {
                assert!((c.norm() - 1.0).abs() < 1e-12, "{} envelope", scheme.name());
            }
        }
    }

    #[test]
    fn cpfsk_phase_step_matches_index() {
        // One symbol of bit 0 at sps=4 advances phase by π·h = π/2.
        let s = modulate::<f64>(ModulationScheme::Cpfsk, &[0], 4).unwrap();
        let total = s.last().unwrap().arg();
        assert!((total - PI * FSK_MOD_INDEX).abs() < 1e-12);
    }

    #[test]
    fn bit_count_must_divide() {
        assert!(matches!(
            modulate::<f64>(ModulationScheme::Qam16, &[0, 1, 0], 8),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            modulate::<f64>(ModulationScheme::Bpsk, &[2], 8),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn upsampling_repeats_symbols() {
        let s = modulate::<f64>(ModulationScheme::Bpsk, &[1], 8).unwrap();
        assert_eq!(s.len(), 8);
        assert!(s.iter().all(|c| *c == Complex::new(-1.0, 0.0)));
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in ModulationScheme::ALL {
            assert_eq!(ModulationScheme::from_name(s.name()).unwrap(), s);
            assert_eq!(ModulationScheme::from_class_index(s.class_index()).unwrap(), s);
        }
        assert!(ModulationScheme::from_name("AM-DSB").is_err());
    }
}
