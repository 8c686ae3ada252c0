//! Binary weight-file container.
//!
//! Layout (all integers little-endian, payload 32-bit floats, row-major):
//!
//! ```text
//! magic      8 bytes  "PHYADVW1"
//! seed       u64      initialization / crafting seed
//! count      u32      number of entries
//! entries    count ×  { kind: u8, dims: 4 × u32 }
//! payload    f32 ×    parameters in entry order (dense: weights then bias;
//!                      conv1d: weights then bias; UPERT: the delta vector)
//! ```
//!
//! Entry kinds: 0 dense(in,out), 1 conv1d(in_ch,out_ch,kernel,stride),
//! 2 relu, 3 softmax, 4 energy-norm(n), 5 flatten, 6 UPERT(n) — a stored
//! universal perturbation. The fixed endianness makes files portable across
//! platforms; round trips are bit-exact for `f32` models.

use super::{LayerParams, LayerSpec, ModelSpec, ModelState};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::path::Path;

pub const WEIGHT_MAGIC: &[u8; 8] = b"PHYADVW1";

const KIND_DENSE: u8 = 0;
const KIND_CONV1D: u8 = 1;
const KIND_RELU: u8 = 2;
const KIND_SOFTMAX: u8 = 3;
const KIND_ENERGY_NORM: u8 = 4;
const KIND_FLATTEN: u8 = 5;
/// Tag for a stored universal perturbation ("UPERT" entry).
const KIND_UPERT: u8 = 6;

/// Largest per-dimension size accepted when parsing, to reject corrupt files
/// before attempting a huge allocation.
const MAX_DIM: u32 = 1 << 24;

fn layer_entry(layer: &LayerSpec) -> (u8, [u32; 4]) {
    match *layer {
        LayerSpec::Dense { input, output } => (KIND_DENSE, [input as u32, output as u32, 0, 0]),
        LayerSpec::Conv1d { in_channels, out_channels, kernel, stride } => (
            KIND_CONV1D,
            [in_channels as u32, out_channels as u32, kernel as u32, stride as u32],
        ),
        LayerSpec::Relu => (KIND_RELU, [0; 4]),
        LayerSpec::Softmax => (KIND_SOFTMAX, [0; 4]),
        LayerSpec::EnergyNorm { dim } => (KIND_ENERGY_NORM, [dim as u32, 0, 0, 0]),
        LayerSpec::Flatten => (KIND_FLATTEN, [0; 4]),
    }
}

fn entry_layer(kind: u8, dims: [u32; 4]) -> Result<LayerSpec> {
    if dims.iter().any(|&d| d > MAX_DIM) {
        return Err(Error::Format(format!("entry dimension {dims:?} exceeds limit")));
    }
    match kind {
        KIND_DENSE => Ok(LayerSpec::Dense { input: dims[0] as usize, output: dims[1] as usize }),
        KIND_CONV1D => Ok(LayerSpec::Conv1d {
            in_channels: dims[0] as usize,
            out_channels: dims[1] as usize,
            kernel: dims[2] as usize,
            stride: dims[3] as usize,
        }),
        KIND_RELU => Ok(LayerSpec::Relu),
        KIND_SOFTMAX => Ok(LayerSpec::Softmax),
        KIND_ENERGY_NORM => Ok(LayerSpec::EnergyNorm { dim: dims[0] as usize }),
        KIND_FLATTEN => Ok(LayerSpec::Flatten),
        other => Err(Error::Format(format!("unknown entry kind tag {other}"))),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "truncated file: needed {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32_slice(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n * 4)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn push_f32s<T: Scalar>(out: &mut Vec<u8>, values: &[T]) {
    for &v in values {
        out.extend_from_slice(&(v.to_f64_c() as f32).to_le_bytes());
    }
}

/// Serialize a model to the container format.
pub fn encode_weights<T: Scalar>(model: &ModelState<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&model.seed().to_le_bytes());
    out.extend_from_slice(&(model.spec().layers.len() as u32).to_le_bytes());
    for layer in &model.spec().layers {
        let (kind, dims) = layer_entry(layer);
        out.push(kind);
        for d in dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
    }
    for params in model.params() {
        if let LayerParams::WeightsBias { weights, bias } = params {
            push_f32s(&mut out, weights.data());
            push_f32s(&mut out, bias.data());
        }
    }
    out
}

/// Parse a model from container bytes. Any malformed input yields a format
/// error and no partial state.
pub fn decode_weights<T: Scalar>(bytes: &[u8]) -> Result<ModelState<T>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != WEIGHT_MAGIC {
        return Err(Error::Format("bad magic; not a weight file".to_string()));
    }
    let seed = cur.u64()?;
    let count = cur.u32()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let kind = cur.u8()?;
        if kind == KIND_UPERT {
            return Err(Error::Format(
                "file stores a perturbation, not model weights".to_string(),
            ));
        }
        let dims = [cur.u32()?, cur.u32()?, cur.u32()?, cur.u32()?];
        layers.push(entry_layer(kind, dims)?);
    }
    let spec = ModelSpec::new(layers);
    let mut params = Vec::with_capacity(count);
    for layer in &spec.layers {
        let p = match *layer {
            LayerSpec::Dense { input, output } => {
                let w = cur.f32_slice(input * output)?;
                let b = cur.f32_slice(output)?;
                LayerParams::WeightsBias {
                    weights: from_f32(vec![output, input], w)?,
                    bias: from_f32(vec![output], b)?,
                }
            }
            LayerSpec::Conv1d { in_channels, out_channels, kernel, .. } => {
                let w = cur.f32_slice(out_channels * in_channels * kernel)?;
                let b = cur.f32_slice(out_channels)?;
                LayerParams::WeightsBias {
                    weights: from_f32(vec![out_channels, in_channels, kernel], w)?,
                    bias: from_f32(vec![out_channels], b)?,
                }
            }
            _ => LayerParams::None,
        };
        params.push(p);
    }
    cur.finish()?;
    ModelState::from_parts(spec, params, seed).map_err(|e| Error::Format(e.to_string()))
}

fn from_f32<T: Scalar>(shape: Vec<usize>, values: Vec<f32>) -> Result<Tensor<T>> {
    let data = values.into_iter().map(|v| T::from_f64_c(v as f64)).collect();
    Tensor::from_vec(shape, data)
}

pub fn save_weights<T: Scalar>(model: &ModelState<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_weights(model))?;
    Ok(())
}

pub fn load_weights<T: Scalar>(path: &Path) -> Result<ModelState<T>> {
    decode_weights(&std::fs::read(path)?)
}

/// Serialize a universal perturbation as a single UPERT entry.
pub fn encode_perturbation<T: Scalar>(delta: &[T], seed: u64) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&1u32.to_le_bytes());
    out.push(KIND_UPERT);
    out.extend_from_slice(&(delta.len() as u32).to_le_bytes());
    for _ in 0..3 {
        out.extend_from_slice(&0u32.to_le_bytes());
    }
    push_f32s(&mut out, delta);
    out
}

pub fn decode_perturbation<T: Scalar>(bytes: &[u8]) -> Result<(Vec<T>, u64)> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != WEIGHT_MAGIC {
        return Err(Error::Format("bad magic; not a weight file".to_string()));
    }
    let seed = cur.u64()?;
    let count = cur.u32()?;
    if count != 1 {
        return Err(Error::Format(format!("perturbation file must hold 1 entry, has {count}")));
    }
    let kind = cur.u8()?;
    if kind != KIND_UPERT {
        return Err(Error::Format(format!("expected UPERT entry, found kind tag {kind}")));
    }
    let n = cur.u32()?;
    if n > MAX_DIM {
        return Err(Error::Format(format!("perturbation length {n} exceeds limit")));
    }
    for _ in 0..3 {
        if cur.u32()? != 0 {
            return Err(Error::Format("UPERT entry has nonzero reserved dims".to_string()));
        }
    }
    let values = cur.f32_slice(n as usize)?;
    cur.finish()?;
    Ok((values.into_iter().map(|v| T::from_f64_c(v as f64)).collect(), seed))
}

pub fn save_perturbation<T: Scalar>(delta: &[T], seed: u64, path: &Path) -> Result<()> {
    std::fs::write(path, encode_perturbation(delta, seed))?;
    Ok(())
}

pub fn load_perturbation<T: Scalar>(path: &Path) -> Result<(Vec<T>, u64)> {
    decode_perturbation(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_model;

    fn sample_spec() -> ModelSpec {
        ModelSpec::new(vec![
            LayerSpec::Conv1d { in_channels: 2, out_channels: 3, kernel: 3, stride: 2 },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { input: 9, output: 4 },
            LayerSpec::Softmax,
        ])
    }

    #[test]
    fn round_trip_is_bit_exact_for_f32() {
        let model: ModelState<f32> = init_model(&sample_spec(), 99).unwrap();
        let bytes = encode_weights(&model);
        let loaded: ModelState<f32> = decode_weights(&bytes).unwrap();
        assert_eq!(model, loaded);
        // And the re-encoded bytes are identical.
        assert_eq!(bytes, encode_weights(&loaded));
    }

    #[test]
    fn truncated_file_is_format_error_without_partial_state() {
        let model: ModelState<f32> = init_model(&sample_spec(), 99).unwrap();
        let bytes = encode_weights(&model);
        for cut in [3, 12, 21, bytes.len() - 1] {
            let err = decode_weights::<f32>(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Format(_)), "cut at {cut} gave {err:?}");
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let model: ModelState<f32> = init_model(&sample_spec(), 99).unwrap();
        let mut bytes = encode_weights(&model);
        bytes.push(0);
        assert!(matches!(decode_weights::<f32>(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let model: ModelState<f32> = init_model(&sample_spec(), 99).unwrap();
        let mut bytes = encode_weights(&model);
        bytes[0] = b'X';
        assert!(matches!(decode_weights::<f32>(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn hand_built_fixture_loads_identically() {
        // dense(2->1) with W = [[0.5, -1.25]], b = [2.0], seed 0x0102030405060708,
        // assembled byte-by-byte against the documented layout.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"PHYADVW1");
        bytes.extend_from_slice(&0x0102_0304_0506_0708u64.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.push(0); // dense
        bytes.extend_from_slice(&2u32.to_le_bytes()); // in
        bytes.extend_from_slice(&1u32.to_le_bytes()); // out
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        for v in [0.5f32, -1.25, 2.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }

        let model: ModelState<f32> = decode_weights(&bytes).unwrap();
        assert_eq!(model.seed(), 0x0102_0304_0506_0708);
        let LayerParams::WeightsBias { weights, bias } = &model.params()[0] else { panic!() };
        assert_eq!(weights.data(), &[0.5, -1.25]);
        assert_eq!(bias.data(), &[2.0]);
        assert_eq!(encode_weights(&model), bytes);
    }

    #[test]
    fn perturbation_round_trip() {
        let delta = vec![0.25f32, -0.5, 0.125, 1.0, -2.0, 0.0, 3.5];
        let bytes = encode_perturbation(&delta, 44);
        let (loaded, seed) = decode_perturbation::<f32>(&bytes).unwrap();
        assert_eq!(loaded, delta);
        assert_eq!(seed, 44);
        // A perturbation file is not loadable as model weights.
        assert!(matches!(decode_weights::<f32>(&bytes), Err(Error::Format(_))));
    }
}
