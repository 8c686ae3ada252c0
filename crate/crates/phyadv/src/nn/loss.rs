//! Cross-entropy loss, in both logits and probability form.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn check_label<T: Scalar>(values: &Tensor<T>, label: usize) -> Result<()> {
    if values.shape().len() != 1 {
        return Err(Error::Config(format!(
            "cross-entropy expects a 1-D tensor, got shape {:?}",
            values.shape()
        )));
    }
    if label >= values.len() {
        return Err(Error::Config(format!(
            "label {label} out of range for {} classes",
            values.len()
        )));
    }
    Ok(())
}

/// Cross-entropy on raw logits via log-sum-exp:
/// `loss = lse(z) − z[label]`, `grad = softmax(z) − onehot(label)`.
///
/// This is the numerically stable path used for training and for
/// gradient-based attacks, which drive logits to extreme values.
pub fn cross_entropy_logits<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<(T, Tensor<T>)> {
    check_label(logits, label)?;
    let z = logits.data();
    let max = z.iter().cloned().fold(T::neg_infinity(), T::max);
    let sum_exp = z.iter().fold(T::zero(), |a, &v| a + (v - max).exp());
    let lse = max + sum_exp.ln();
    let loss = lse - z[label];
    let mut grad: Vec<T> = z.iter().map(|&v| (v - max).exp() / sum_exp).collect();
    grad[label] = grad[label] - T::one();
    Ok((loss, Tensor::vector(grad)))
}

/// Cross-entropy on an explicit probability vector:
/// `loss = −ln p[label]`, zero exactly when the label's probability is 1.
/// The gradient is with respect to the probabilities.
pub fn cross_entropy_probs<T: Scalar>(probs: &Tensor<T>, label: usize) -> Result<(T, Tensor<T>)> {
    check_label(probs, label)?;
    let p = probs.data()[label];
    // Clamp away from zero so attacked inputs that saturate the softmax
    // still produce a finite loss and gradient.
    let p_safe = p.max(T::min_positive_value());
    let loss = -(p_safe.ln());
    let mut grad = vec![T::zero(); probs.len()];
    grad[label] = -(T::one() / p_safe);
    Ok((loss, Tensor::vector(grad)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_prediction_has_zero_loss() {
        let probs = Tensor::vector(vec![1.0f64, 0.0, 0.0]);
        let (loss, _) = cross_entropy_probs(&probs, 0).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn uniform_probs_cost_ln_k() {
        let k = 8;
        let probs = Tensor::vector(vec![1.0f64 / k as f64; k]);
        let (loss, _) = cross_entropy_probs(&probs, 3).unwrap();
        assert!((loss - (k as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_is_nonnegative() {
        let probs = Tensor::vector(vec![0.7f64, 0.2, 0.1]);
        let (loss, _) = cross_entropy_probs(&probs, 1).unwrap();
        assert!(loss > 0.0);
    }

    #[test]
    fn out_of_range_label_is_config_error() {
        let logits = Tensor::vector(vec![0.0f32; 4]);
        assert!(matches!(cross_entropy_logits(&logits, 4), Err(Error::Config(_))));
        assert!(matches!(cross_entropy_probs(&logits, 9), Err(Error::Config(_))));
    }

    #[test]
    fn logits_form_matches_probs_form() {
        let logits = Tensor::vector(vec![0.5f64, -1.0, 2.0]);
        let probs = crate::nn::layers::softmax_forward(&logits).unwrap();
        let (a, _) = cross_entropy_logits(&logits, 2).unwrap();
        let (b, _) = cross_entropy_probs(&probs, 2).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let logits = Tensor::vector(vec![500.0f32, -500.0, 0.0]);
        let (loss, grad) = cross_entropy_logits(&logits, 1).unwrap();
        assert!(loss.is_finite());
        assert!(grad.is_finite());
    }
}
