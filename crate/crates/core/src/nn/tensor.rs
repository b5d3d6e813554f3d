//! Flat, shape-tagged tensors.

use super::Scalar;
use crate::scalogram::Scalogram;

/// A dense tensor: a shape and a flat row-major data vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Tensor<T> {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match data length {}",
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor<T> {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Single-channel image tensor `[1, H, W]` from a scalogram.
    pub fn from_scalogram(s: &Scalogram) -> Tensor<T> {
        Tensor::new(
            vec![1, s.height, s.width],
            s.pixels.iter().map(|&p| T::from_f64(p as f64)).collect(),
        )
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
