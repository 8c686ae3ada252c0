//! N-dimensional row-major tensor with an optional gradient slot.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::util;

/// Dense real tensor. Data is stored row-major; the optional gradient always
/// has the same shape as the data.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    /// Build a tensor, checking that `product(shape) == data.len()` and that
    /// every dimension is positive.
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Config(format!(
                "shape {shape:?} expects {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self { shape, data: vec![T::zero(); n], grad: None }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Self { shape: vec![data.len()], data, grad: None }
    }

    /// One-hot vector of length `len` with a single 1 at `index`.
    pub fn one_hot(index: usize, len: usize) -> Result<Self> {
        if index >= len {
            return Err(Error::Config(format!(
                "one-hot index {index} out of range for length {len}"
            )));
        }
        let mut data = vec![T::zero(); len];
        data[index] = T::one();
        Ok(Self { shape: vec![len], data, grad: None })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Attach a gradient; it must match the tensor's shape.
    pub fn set_grad(&mut self, grad: Vec<T>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::Config(format!(
                "gradient length {} does not match tensor length {}",
                grad.len(),
                self.data.len()
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Reinterpret as a 1-D tensor of the same length.
    pub fn flattened(&self) -> Tensor<T> {
        Tensor { shape: vec![self.data.len()], data: self.data.clone(), grad: None }
    }

    /// Reshape without copying semantics change; element count must match.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Tensor<T>> {
        Tensor::from_vec(shape, self.data.clone())
    }

    pub fn is_finite(&self) -> bool {
        util::all_finite(&self.data)
    }

    pub fn l2_norm(&self) -> f64 {
        util::l2_norm(&self.data)
    }

    /// Sum of squared entries, accumulated in f64.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|&x| x.to_f64_c() * x.to_f64_c()).sum()
    }

    pub fn scaled(&self, s: T) -> Tensor<T> {
        let data = self.data.iter().map(|&x| x * s).collect();
        Tensor { shape: self.shape.clone(), data, grad: None }
    }

    /// Element-wise sum; shapes must match.
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape != other.shape {
            return Err(Error::Config(format!(
                "cannot add tensors of shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Ok(Tensor { shape: self.shape.clone(), data, grad: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_is_enforced() {
        assert!(Tensor::from_vec(vec![2, 3], vec![0.0f32; 6]).is_ok());
        assert!(Tensor::from_vec(vec![2, 3], vec![0.0f32; 5]).is_err());
        assert!(Tensor::<f32>::from_vec(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn grad_shape_is_enforced() {
        let mut t = Tensor::zeros(vec![4]);
        assert!(t.set_grad(vec![1.0f64; 4]).is_ok());
        assert!(t.set_grad(vec![1.0f64; 3]).is_err());
    }

    #[test]
    fn one_hot_bounds() {
        let t = Tensor::<f32>::one_hot(2, 4).unwrap();
        assert_eq!(t.data(), &[0.0, 0.0, 1.0, 0.0]);
        assert!(Tensor::<f32>::one_hot(4, 4).is_err());
    }
}
