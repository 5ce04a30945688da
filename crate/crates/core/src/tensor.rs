//! Dense n-dimensional tensors, row-major storage.

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// A dense tensor. `data` is row-major; `product(shape) == data.len()` always
/// holds (zero extents are permitted, giving an empty tensor). When a tensor
/// lives on a [`crate::tape::Tape`], `requires_grad` marks it as a trainable
/// leaf and `grad` accumulates its gradient during the backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    pub shape: Vec<usize>,
    pub data: Vec<S>,
    pub requires_grad: bool,
    pub grad: Option<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let product: usize = shape.iter().product();
        if product != data.len() {
            return Err(CoreError::InvalidShape {
                shape,
                product,
                len: data.len(),
            });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![S::zero(); n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(x: S) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![x],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn from_f64_slice(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Tensor::new(shape, data.iter().map(|&x| S::of_f64(x)).collect())
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Index into a C×H×W tensor.
    pub fn chw(&self, c: usize, y: usize, x: usize) -> S {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x]
    }
}

/// Sum of squares over a slice, accumulated in f64 so the global gradient
/// norm does not depend on the training dtype more than it has to.
pub fn sum_sq_f64<S: Scalar>(data: &[S]) -> f64 {
    data.iter().map(|x| x.as_f64() * x.as_f64()).sum()
}
