//! Synthetic IQ-frame dataset with the RML2016.10a-like schema:
//! 2×128 real samples per frame, eight digital schemes, SNR grid
//! −20..+18 dB in 2 dB steps.
//!
//! Each frame is a random 128-sample window of a longer modulated burst,
//! optionally rotated by a uniform random phase, impaired by AWGN calibrated
//! against the window's measured signal power, and normalized to unit
//! average power. Generation is a pure function of (config, seed).

use super::channel::{awgn_with_power, measure_power};
use super::modulation::{modulate, ModulationScheme};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::util;
use num_complex::Complex;
use rand::Rng;
use sha2::{Digest, Sha256};
use std::path::Path;

pub const FRAME_LEN: usize = 128;

/// The 20-level SNR grid, in dB.
pub fn snr_grid() -> Vec<i8> {
    (-20..=18).step_by(2).map(|v| v as i8).collect()
}

/// One labeled baseband window: `samples` is a `[2, 128]` tensor holding the
/// I row then the Q row.
#[derive(Clone, Debug, PartialEq)]
pub struct IqFrame<T: Scalar> {
    pub samples: Tensor<T>,
    pub label: ModulationScheme,
    pub snr_db: i8,
}

impl<T: Scalar> IqFrame<T> {
    pub fn new(samples: Tensor<T>, label: ModulationScheme, snr_db: i8) -> Result<Self> {
        if samples.shape() != [2, FRAME_LEN] {
            return Err(Error::Config(format!(
                "frame samples must be [2, {FRAME_LEN}], got {:?}",
                samples.shape()
            )));
        }
        if !samples.is_finite() {
            return Err(Error::Numeric("frame contains non-finite samples".to_string()));
        }
        if !snr_grid().contains(&snr_db) {
            return Err(Error::Config(format!("snr {snr_db} dB is not on the dataset grid")));
        }
        Ok(Self { samples, label, snr_db })
    }

    /// The frame as a complex vector.
    pub fn to_complex(&self) -> Vec<Complex<T>> {
        let d = self.samples.data();
        (0..FRAME_LEN).map(|i| Complex::new(d[i], d[FRAME_LEN + i])).collect()
    }

    pub fn from_complex(
        samples: &[Complex<T>],
        label: ModulationScheme,
        snr_db: i8,
    ) -> Result<Self> {
        if samples.len() != FRAME_LEN {
            return Err(Error::Config(format!(
                "expected {FRAME_LEN} complex samples, got {}",
                samples.len()
            )));
        }
        let mut data = Vec::with_capacity(2 * FRAME_LEN);
        data.extend(samples.iter().map(|c| c.re));
        data.extend(samples.iter().map(|c| c.im));
        Self::new(Tensor::from_vec(vec![2, FRAME_LEN], data)?, label, snr_db)
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetConfig {
    /// Frames per (scheme, SNR) cell, train and test together.
    pub frames_per_cell: usize,
    /// Per-cell fraction assigned to the train split.
    pub train_fraction: f64,
    pub samples_per_symbol: usize,
    /// Apply a uniform random phase offset per burst.
    pub random_phase: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            frames_per_cell: 100,
            train_fraction: 0.8,
            samples_per_symbol: 8,
            random_phase: true,
        }
    }
}

/// Class-balanced labeled frames with train/test split markers.
#[derive(Clone, Debug)]
pub struct Dataset<T: Scalar> {
    pub frames: Vec<IqFrame<T>>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
}

impl<T: Scalar> Dataset<T> {
    pub fn train_frames(&self) -> Vec<&IqFrame<T>> {
        self.train_idx.iter().map(|&i| &self.frames[i]).collect()
    }

    pub fn test_frames(&self) -> Vec<&IqFrame<T>> {
        self.test_idx.iter().map(|&i| &self.frames[i]).collect()
    }

    /// Wrap externally produced frames (e.g. an imported file) with a
    /// per-run split.
    pub fn from_frames(frames: Vec<IqFrame<T>>, train_fraction: f64, seed: u64) -> Self {
        let train_count =
            ((frames.len() as f64 * train_fraction).round() as usize).min(frames.len());
        Self {
            train_idx: (0..train_count).collect(),
            test_idx: (train_count..frames.len()).collect(),
            frames,
            seed,
        }
    }

    /// SHA-256 over the canonical binary encoding plus the split markers.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(encode_frames(&self.frames));
        for idx in self.train_idx.iter().chain(&self.test_idx) {
            hasher.update((*idx as u64).to_le_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Diagnostic decomposition of a synthesized frame, for power-accounting
/// tests: `clean + noise == frame samples` (all already normalized).
pub struct FrameParts<T: Scalar> {
    pub clean: Vec<Complex<T>>,
    pub noise: Vec<Complex<T>>,
}

impl<T: Scalar> FrameParts<T> {
    pub fn measured_snr_db(&self) -> f64 {
        let ps = measure_power(&self.clean);
        let pn = measure_power(&self.noise);
        10.0 * (ps / pn).log10()
    }
}

/// Synthesize one frame; the seed should be derived per (scheme, snr, index).
pub fn synthesize_frame<T: Scalar>(
    scheme: ModulationScheme,
    snr_db: i8,
    config: &DatasetConfig,
    frame_seed: u64,
) -> Result<(IqFrame<T>, FrameParts<T>)> {
    let sps = config.samples_per_symbol;
    let burst_symbols = FRAME_LEN / sps + FRAME_LEN / sps.max(1) + 2;
    let bits_needed = burst_symbols * scheme.bits_per_symbol();
    let mut rng = util::rng_for(frame_seed, &[0x6672_616d_6500]);
    let bits: Vec<u8> = (0..bits_needed).map(|_| rng.random_range(0..=1u8)).collect();
    let mut burst = modulate::<f64>(scheme, &bits, sps)?;
    if config.random_phase {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let rot = Complex::from_polar(1.0, theta);
        for s in burst.iter_mut() {
            *s *= rot;
        }
    }
    let max_start = burst.len().checked_sub(FRAME_LEN).ok_or_else(|| {
        Error::Config(format!(
            "burst of {} samples shorter than a {FRAME_LEN}-sample frame",
            burst.len()
        ))
    })?;
    let start = rng.random_range(0..=max_start);
    let window: Vec<Complex<f64>> = burst[start..start + FRAME_LEN].to_vec();

    let signal_power = measure_power(&window);
    let noise_seed = rng.random::<u64>();
    let noisy = awgn_with_power(&window, signal_power, snr_db as f64, noise_seed);

    // Normalize the received window to unit average power; the SNR inside
    // the window is unaffected.
    let scale = 1.0 / measure_power(&noisy).sqrt();
    let frame_samples: Vec<Complex<T>> = noisy
        .iter()
        .map(|c| Complex::new(T::from_f64_c(c.re * scale), T::from_f64_c(c.im * scale)))
        .collect();
    let clean: Vec<Complex<T>> = window
        .iter()
        .map(|c| Complex::new(T::from_f64_c(c.re * scale), T::from_f64_c(c.im * scale)))
        .collect();
    let noise: Vec<Complex<T>> = noisy
        .iter()
        .zip(&window)
        .map(|(n, s)| {
            Complex::new(
                T::from_f64_c((n.re - s.re) * scale),
                T::from_f64_c((n.im - s.im) * scale),
            )
        })
        .collect();

    let frame = IqFrame::from_complex(&frame_samples, scheme, snr_db)?;
    Ok((frame, FrameParts { clean, noise }))
}

/// Synthesize the full class-balanced dataset:
/// 8 schemes × 20 SNR levels × `frames_per_cell` frames.
pub fn synthesize_dataset<T: Scalar>(config: &DatasetConfig, seed: u64) -> Result<Dataset<T>> {
    if config.frames_per_cell == 0 {
        return Err(Error::Config("frames_per_cell must be positive".to_string()));
    }
    if !(0.0..=1.0).contains(&config.train_fraction) {
        return Err(Error::Config(format!(
            "train_fraction must lie in [0,1], got {}",
            config.train_fraction
        )));
    }
    if config.samples_per_symbol == 0 || FRAME_LEN % config.samples_per_symbol != 0 {
        return Err(Error::Config(format!(
            "samples_per_symbol must divide {FRAME_LEN}, got {}",
            config.samples_per_symbol
        )));
    }
    let grid = snr_grid();
    let per_cell = config.frames_per_cell;
    let train_per_cell = ((per_cell as f64 * config.train_fraction).round() as usize).min(per_cell);
    let mut frames = Vec::with_capacity(8 * grid.len() * per_cell);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for scheme in ModulationScheme::ALL {
        for (snr_i, &snr_db) in grid.iter().enumerate() {
            for k in 0..per_cell {
                let frame_seed = util::derive_seed(
                    seed,
                    &[scheme.class_index() as u64, snr_i as u64, k as u64],
                );
                let (frame, _) = synthesize_frame::<T>(scheme, snr_db, config, frame_seed)?;
                let idx = frames.len();
                frames.push(frame);
                if k < train_per_cell {
                    train_idx.push(idx);
                } else {
                    test_idx.push(idx);
                }
            }
        }
    }
    Ok(Dataset { frames, train_idx, test_idx, seed })
}

// ---------------------------------------------------------------------------
// Binary dataset format
// ---------------------------------------------------------------------------
//
//   magic    8 bytes  "PHYADVD1"
//   count    u32      frame count
//   version  u32      schema version (1)
//   records  count ×  { scheme tag: u8, snr-db: i8, 256 × f32 LE (I row, Q row) }

pub const DATASET_MAGIC: &[u8; 8] = b"PHYADVD1";
pub const DATASET_SCHEMA_VERSION: u32 = 1;

pub fn encode_frames<T: Scalar>(frames: &[IqFrame<T>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + frames.len() * (2 + FRAME_LEN * 8));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    out.extend_from_slice(&DATASET_SCHEMA_VERSION.to_le_bytes());
    for frame in frames {
        out.push(frame.label.class_index() as u8);
        out.extend_from_slice(&frame.snr_db.to_le_bytes());
        for &v in frame.samples.data() {
            out.extend_from_slice(&(v.to_f64_c() as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_frames<T: Scalar>(bytes: &[u8]) -> Result<Vec<IqFrame<T>>> {
    let need = |want: usize, have: usize| {
        Error::Format(format!("truncated dataset file: need {want} bytes, have {have}"))
    };
    if bytes.len() < 16 {
        return Err(need(16, bytes.len()));
    }
    if &bytes[..8] != DATASET_MAGIC {
        return Err(Error::Format("bad magic; not a dataset file".to_string()));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let version = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    if version != DATASET_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset schema version {version}"
        )));
    }
    let record = 2 + FRAME_LEN * 2 * 4;
    let expected = 16 + count * record;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "dataset length {} does not match header ({} frames need {expected})",
            bytes.len(),
            count
        )));
    }
    let mut frames = Vec::with_capacity(count);
    for r in 0..count {
        let base = 16 + r * record;
        let scheme = ModulationScheme::from_class_index(bytes[base] as usize)?;
        let snr_db = bytes[base + 1] as i8;
        let mut data = Vec::with_capacity(2 * FRAME_LEN);
        for i in 0..2 * FRAME_LEN {
            let off = base + 2 + i * 4;
            let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            data.push(T::from_f64_c(v as f64));
        }
        frames.push(
            IqFrame::new(Tensor::from_vec(vec![2, FRAME_LEN], data)?, scheme, snr_db)
                .map_err(|e| Error::Format(e.to_string()))?,
        );
    }
    Ok(frames)
}

pub fn save_frames<T: Scalar>(frames: &[IqFrame<T>], path: &Path) -> Result<()> {
    std::fs::write(path, encode_frames(frames))?;
    Ok(())
}

/// Import path for externally converted corpora; same format as
/// [`save_frames`].
pub fn load_frames<T: Scalar>(path: &Path) -> Result<Vec<IqFrame<T>>> {
    decode_frames(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> DatasetConfig {
        DatasetConfig { frames_per_cell: 2, ..DatasetConfig::default() }
    }

    #[test]
    fn per_cell_count_gives_expected_total() {
        let cfg = DatasetConfig { frames_per_cell: 10, ..DatasetConfig::default() };
        let ds: Dataset<f32> = synthesize_dataset(&cfg, 1).unwrap();
        assert_eq!(ds.frames.len(), 1600);
        assert_eq!(ds.train_idx.len() + ds.test_idx.len(), 1600);
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let cfg = small_config();
        let a: Dataset<f32> = synthesize_dataset(&cfg, 5).unwrap();
        let b: Dataset<f32> = synthesize_dataset(&cfg, 5).unwrap();
        let c: Dataset<f32> = synthesize_dataset(&cfg, 6).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn frames_are_unit_power_and_finite() {
        let cfg = small_config();
        let ds: Dataset<f64> = synthesize_dataset(&cfg, 3).unwrap();
        for frame in &ds.frames {
            assert!(frame.samples.is_finite());
            let power = frame.samples.energy() / FRAME_LEN as f64;
            assert!((power - 1.0).abs() < 1e-9, "frame power {power}");
        }
    }

    #[test]
    fn measured_snr_tracks_label_at_nonnegative_snr() {
        let cfg = DatasetConfig::default();
        for &snr in &[0i8, 10, 18] {
            for scheme in ModulationScheme::ALL {
                for k in 0..3u64 {
                    let fs = util::derive_seed(100, &[scheme.class_index() as u64, snr as u64, k]);
                    let (_, parts) = synthesize_frame::<f64>(scheme, snr, &cfg, fs).unwrap();
                    let measured = parts.measured_snr_db();
                    assert!(
                        (measured - snr as f64).abs() <= 1.0,
                        "{} at {snr} dB measured {measured:.2} dB",
                        scheme.name()
                    );
                }
            }
        }
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let cfg = small_config();
        let ds: Dataset<f32> = synthesize_dataset(&cfg, 7).unwrap();
        let bytes = encode_frames(&ds.frames);
        let loaded: Vec<IqFrame<f32>> = decode_frames(&bytes).unwrap();
        assert_eq!(loaded, ds.frames);
        assert_eq!(encode_frames(&loaded), bytes);
    }

    #[test]
    fn truncated_dataset_is_format_error() {
        let cfg = small_config();
        let ds: Dataset<f32> = synthesize_dataset(&cfg, 7).unwrap();
        let bytes = encode_frames(&ds.frames);
        assert!(matches!(
            decode_frames::<f32>(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
        assert!(matches!(decode_frames::<f32>(&bytes[..4]), Err(Error::Format(_))));
    }

    #[test]
    fn cells_are_class_balanced() {
        let cfg = small_config();
        let ds: Dataset<f32> = synthesize_dataset(&cfg, 2).unwrap();
        let mut counts = std::collections::HashMap::new();
        for f in &ds.frames {
            *counts.entry((f.label, f.snr_db)).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 160);
        assert!(counts.values().all(|&c| c == cfg.frames_per_cell));
    }
}
