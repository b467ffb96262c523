//! Dense tensors: flat row-major storage with an explicit shape.
//!
//! Invariants enforced at creation: every dimension is positive,
//! product(shape) == data length, and every entry is finite. The grad buffer,
//! when present, always matches the data length.

use super::rng::Rng;
use super::scalar::Scalar;
use crate::error::{LabError, Result};

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
}

impl<T: Scalar> Tensor<T> {
    /// Validated constructor: positive dims, matching length, finite entries.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(LabError::config(format!(
                "tensor shape {shape:?} has a zero dimension"
            )));
        }
        let expected = numel(&shape);
        if expected != data.len() {
            return Err(LabError::ShapeData {
                shape,
                expected,
                got: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(LabError::NonFinite {
                what: "tensor data".to_string(),
                index,
            });
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn scalar(v: T) -> Self {
        Tensor::new(vec![1], vec![v]).expect("finite scalar")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero dimension in {shape:?}");
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::ZERO; numel(shape)],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        Tensor::new(shape.to_vec(), vec![v; numel(shape)]).expect("finite fill value")
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Result<Self> {
        let data = (0..numel(shape)).map(|i| f(i)).collect();
        Tensor::new(shape.to_vec(), data)
    }

    pub fn rand_uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Self {
        let mut data = vec![T::ZERO; numel(shape)];
        rng.fill_uniform(&mut data, lo, hi);
        Tensor::new(shape.to_vec(), data).expect("uniform draws are finite")
    }

    pub fn rand_normal(rng: &mut Rng, shape: &[usize], std: f64) -> Self {
        let mut data = vec![T::ZERO; numel(shape)];
        rng.fill_normal(&mut data, std);
        Tensor::new(shape.to_vec(), data).expect("normal draws are finite")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, yes: bool) {
        self.requires_grad = yes;
        if yes && self.grad.is_none() {
            self.grad = Some(vec![T::ZERO; self.data.len()]);
        }
        if !yes {
            self.grad = None;
        }
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [T]> {
        self.grad.as_deref_mut()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.fill(T::ZERO);
        }
    }

    /// Same data, new shape; lengths must agree.
    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        if numel(&shape) != self.data.len() {
            let expected = numel(&shape);
            return Err(LabError::ShapeData {
                shape,
                expected,
                got: self.data.len(),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Element at a full multi-index.
    pub fn at(&self, idx: &[usize]) -> T {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut flat = 0;
        for (i, (&ix, &dim)) in idx.iter().zip(&self.shape).enumerate() {
            debug_assert!(ix < dim, "index {ix} out of bounds for axis {i} ({dim})");
            flat = flat * dim + ix;
        }
        self.data[flat]
    }

    /// Contiguous row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[T] {
        assert_eq!(self.rank(), 2, "row() requires rank 2");
        let d = self.shape[1];
        &self.data[i * d..(i + 1) * d]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Tensor::new(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            grad: None,
            requires_grad: self.requires_grad,
        }
    }
}
