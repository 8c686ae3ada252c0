//! Digital modulation, AWGN channel/jammer models, synthetic dataset
//! generation, and link-level metrics.
//!
//! Everything here is a pure function of its inputs and an explicit seed, so
//! concurrent callers with distinct seeds (or shared read-only inputs) are
//! safe.

pub mod channel;
pub mod dataset;
pub mod metrics;
pub mod modulation;

pub use channel::{awgn, awgn_with_power, jam, measure_power, ChannelConfig, NoiseSpec};
pub use dataset::{
    load_frames, save_frames, snr_grid, synthesize_dataset, synthesize_frame, Dataset,
    DatasetConfig, IqFrame, FRAME_LEN,
};
pub use metrics::{ber, bler, ebno_to_snr, ConfusionMatrix};
pub use modulation::{modulate, ModulationScheme};
