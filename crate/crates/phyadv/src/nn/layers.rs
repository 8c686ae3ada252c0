//! Per-layer forward and backward kernels.
//!
//! All kernels operate on a single example (no batch dimension); training
//! loops accumulate gradients across a minibatch.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::util;

/// `y = W x + b` with `W` of shape `[out, in]` (row-major) and `x` of shape `[in]`.
pub fn dense_forward<T: Scalar>(
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    input: &Tensor<T>,
) -> Result<Tensor<T>> {
    let out_dim = weights.shape()[0];
    let in_dim = weights.shape()[1];
    if input.len() != in_dim {
        return Err(Error::Config(format!(
            "dense layer expects input of length {in_dim}, got {}",
            input.len()
        )));
    }
    let w = weights.data();
    let x = input.data();
    let mut y = bias.data().to_vec();
    for (o, yo) in y.iter_mut().enumerate() {
        *yo = *yo + util::dot(&w[o * in_dim..(o + 1) * in_dim], x);
    }
    Tensor::from_vec(vec![out_dim], y)
}

/// Returns (grad_weights, grad_bias, grad_input).
pub fn dense_backward<T: Scalar>(
    weights: &Tensor<T>,
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let out_dim = weights.shape()[0];
    let in_dim = weights.shape()[1];
    let w = weights.data();
    let x = input.data();
    let g = grad_out.data();

    let mut gw = vec![T::zero(); out_dim * in_dim];
    let mut gx = vec![T::zero(); in_dim];
    for o in 0..out_dim {
        let go = g[o];
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let grow = &mut gw[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            grow[i] = go * x[i];
            gx[i] = gx[i] + go * row[i];
        }
    }
    (
        Tensor::from_vec(vec![out_dim, in_dim], gw).expect("dense grad shape"),
        Tensor::from_vec(vec![out_dim], g.to_vec()).expect("bias grad shape"),
        Tensor::from_vec(vec![in_dim], gx).expect("input grad shape"),
    )
}

/// Valid (no padding) 1-D convolution. `weights` is `[out_ch, in_ch, kernel]`,
/// `input` is `[in_ch, len]`, output is `[out_ch, out_len]` with
/// `out_len = (len - kernel) / stride + 1`.
pub fn conv1d_forward<T: Scalar>(
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    input: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let out_ch = weights.shape()[0];
    let in_ch = weights.shape()[1];
    let kernel = weights.shape()[2];
    if input.shape().len() != 2 || input.shape()[0] != in_ch {
        return Err(Error::Config(format!(
            "conv1d expects input shape [{in_ch}, len], got {:?}",
            input.shape()
        )));
    }
    let len = input.shape()[1];
    if len < kernel {
        return Err(Error::Config(format!(
            "conv1d kernel {kernel} longer than input length {len}"
        )));
    }
    let out_len = (len - kernel) / stride + 1;
    let w = weights.data();
    let x = input.data();
    let b = bias.data();
    let mut y = vec![T::zero(); out_ch * out_len];
    for o in 0..out_ch {
        for j in 0..out_len {
            let start = j * stride;
            let mut acc = b[o];
            for i in 0..in_ch {
                let wrow = &w[(o * in_ch + i) * kernel..(o * in_ch + i + 1) * kernel];
                let xrow = &x[i * len + start..i * len + start + kernel];
                acc = acc + util::dot(wrow, xrow);
            }
            y[o * out_len + j] = acc;
        }
    }
    Tensor::from_vec(vec![out_ch, out_len], y)
}

/// Returns (grad_weights, grad_bias, grad_input).
pub fn conv1d_backward<T: Scalar>(
    weights: &Tensor<T>,
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let out_ch = weights.shape()[0];
    let in_ch = weights.shape()[1];
    let kernel = weights.shape()[2];
    let len = input.shape()[1];
    let out_len = grad_out.shape()[1];
    let w = weights.data();
    let x = input.data();
    let g = grad_out.data();

    let mut gw = vec![T::zero(); out_ch * in_ch * kernel];
    let mut gb = vec![T::zero(); out_ch];
    let mut gx = vec![T::zero(); in_ch * len];
    for o in 0..out_ch {
        for j in 0..out_len {
            let go = g[o * out_len + j];
            if go == T::zero() {
                continue;
            }
            gb[o] = gb[o] + go;
            let start = j * stride;
            for i in 0..in_ch {
                let wrow = &w[(o * in_ch + i) * kernel..(o * in_ch + i + 1) * kernel];
                let xrow = &x[i * len + start..i * len + start + kernel];
                let gwrow = &mut gw[(o * in_ch + i) * kernel..(o * in_ch + i + 1) * kernel];
                let gxrow = &mut gx[i * len + start..i * len + start + kernel];
                for t in 0..kernel {
                    gwrow[t] = gwrow[t] + go * xrow[t];
                    gxrow[t] = gxrow[t] + go * wrow[t];
                }
            }
        }
    }
    (
        Tensor::from_vec(vec![out_ch, in_ch, kernel], gw).expect("conv grad shape"),
        Tensor::from_vec(vec![out_ch], gb).expect("conv bias grad shape"),
        Tensor::from_vec(input.shape().to_vec(), gx).expect("conv input grad shape"),
    )
}

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let data = input.data().iter().map(|&x| if x > T::zero() { x } else { T::zero() }).collect();
    Tensor::from_vec(input.shape().to_vec(), data).expect("relu preserves shape")
}

pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape().to_vec(), data).expect("relu grad shape")
}

/// Numerically stable softmax over a 1-D tensor.
pub fn softmax_forward<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape().len() != 1 {
        return Err(Error::Config(format!(
            "softmax expects a 1-D tensor, got shape {:?}",
            input.shape()
        )));
    }
    let x = input.data();
    let max = x.iter().cloned().fold(T::neg_infinity(), T::max);
    let mut data: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum = data.iter().cloned().fold(T::zero(), |a, b| a + b);
    for v in data.iter_mut() {
        *v = *v / sum;
    }
    Tensor::from_vec(vec![x.len()], data)
}

/// Softmax backward from its own output: `gx = y ⊙ (g − (g·y))`.
pub fn softmax_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let y = output.data();
    let g = grad_out.data();
    let gy = util::dot(g, y);
    let data = y.iter().zip(g).map(|(&yi, &gi)| yi * (gi - gy)).collect();
    Tensor::from_vec(vec![y.len()], data).expect("softmax grad shape")
}

/// Rescale a 1-D tensor so its mean squared value is exactly 1:
/// `y = x · sqrt(n / Σ x²)`.
pub fn energy_norm_forward<T: Scalar>(input: &Tensor<T>, dim: usize) -> Result<Tensor<T>> {
    if input.shape() != [dim] {
        return Err(Error::Config(format!(
            "energy-norm expects shape [{dim}], got {:?}",
            input.shape()
        )));
    }
    let sum_sq = input.data().iter().fold(T::zero(), |a, &x| a + x * x);
    if sum_sq == T::zero() || !sum_sq.is_finite() {
        return Err(Error::Numeric(
            "energy-norm requires a nonzero finite input".to_string(),
        ));
    }
    let alpha = (T::from_f64_c(dim as f64) / sum_sq).sqrt();
    Ok(input.scaled(alpha))
}

/// Full quotient-rule gradient of the energy normalization (the norm is
/// treated as a differentiable function of the input, not a stop-gradient):
/// `gx = α (g − x (g·x) / Σx²)` with `α = sqrt(n / Σx²)`.
pub fn energy_norm_backward<T: Scalar>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    dim: usize,
) -> Tensor<T> {
    let x = input.data();
    let g = grad_out.data();
    let sum_sq = x.iter().fold(T::zero(), |a, &v| a + v * v);
    let alpha = (T::from_f64_c(dim as f64) / sum_sq).sqrt();
    let gx_dot = util::dot(g, x);
    let data = x
        .iter()
        .zip(g)
        .map(|(&xi, &gi)| alpha * (gi - xi * gx_dot / sum_sq))
        .collect();
    Tensor::from_vec(vec![dim], data).expect("energy-norm grad shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_identity_passes_input_through() {
        // Identity weights, zero bias, input [1,2,3] -> [1,2,3].
        let w = Tensor::from_vec(
            vec![3, 3],
            vec![1.0f64, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let b = Tensor::zeros(vec![3]);
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let y = dense_forward(&w, &b, &x).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn dense_input_grad_is_column_sums_for_sum_loss() {
        // y = Wx, loss = sum(y): input gradient equals column sums of W.
        let w = Tensor::from_vec(vec![2, 3], vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let x = Tensor::vector(vec![0.5, -1.0, 2.0]);
        let ones = Tensor::vector(vec![1.0, 1.0]);
        let (_, _, gx) = dense_backward(&w, &x, &ones);
        assert_eq!(gx.data(), &[5.0, 7.0, 9.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let y = softmax_forward(&Tensor::vector(vec![0.0f64, 0.0])).unwrap();
        assert!((y.data()[0] - 0.5).abs() < 1e-12);
        assert!((y.data()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn softmax_handles_extreme_logits() {
        let y = softmax_forward(&Tensor::vector(vec![1e4f64, -1e4, 0.0])).unwrap();
        assert!(y.is_finite());
        let sum: f64 = y.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn energy_norm_matches_hand_example() {
        // [3,4] with n=2 -> [3√2/5, 4√2/5]; mean squared value 1.
        let y = energy_norm_forward(&Tensor::vector(vec![3.0f64, 4.0]), 2).unwrap();
        let s = 2.0f64.sqrt() / 5.0;
        assert!((y.data()[0] - 3.0 * s).abs() < 1e-12);
        assert!((y.data()[1] - 4.0 * s).abs() < 1e-12);
        let mean_sq = y.energy() / 2.0;
        assert!((mean_sq - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_norm_rejects_zero_input() {
        assert!(matches!(
            energy_norm_forward(&Tensor::vector(vec![0.0f64, 0.0]), 2),
            Err(crate::error::Error::Numeric(_))
        ));
    }

    #[test]
    fn conv1d_shapes_and_known_values() {
        // One input channel, one output channel, kernel [1, 1], stride 1:
        // output is the 2-sample moving sum.
        let w = Tensor::from_vec(vec![1, 1, 2], vec![1.0f64, 1.0]).unwrap();
        let b = Tensor::zeros(vec![1]);
        let x = Tensor::from_vec(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = conv1d_forward(&w, &b, &x, 1).unwrap();
        assert_eq!(y.shape(), &[1, 3]);
        assert_eq!(y.data(), &[3.0, 5.0, 7.0]);

        let strided = conv1d_forward(&w, &b, &x, 2).unwrap();
        assert_eq!(strided.shape(), &[1, 2]);
        assert_eq!(strided.data(), &[3.0, 7.0]);
    }
}
