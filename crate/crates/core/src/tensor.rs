//! Dense row-major tensors.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Result};
use crate::real::Real;

/// A dense, row-major N-dimensional array.
///
/// Image-like tensors use channels-last layout: `[N, H, W, C]` or `[H, W, C]`.
/// Scalars have shape `[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    values: Vec<S>,
}

impl<S: Real> Tensor<S> {
    pub fn new(shape: Vec<usize>, values: Vec<S>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(dim_err!("shape {:?} must be non-empty with positive sizes", shape));
        }
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(dim_err!("shape {:?} holds {} values, got {}", shape, n, values.len()));
        }
        Ok(Self { shape, values })
    }

    pub fn from_f64(shape: Vec<usize>, values: &[f64]) -> Result<Self> {
        Self::new(shape, values.iter().map(|&v| S::of(v)).collect())
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn ones(shape: Vec<usize>) -> Self {
        Self::full(shape, S::one())
    }

    pub fn full(shape: Vec<usize>, value: S) -> Self {
        assert!(!shape.is_empty() && shape.iter().all(|&d| d > 0), "bad shape {shape:?}");
        let n = shape.iter().product();
        Self { shape, values: vec![value; n] }
    }

    pub fn scalar(value: S) -> Self {
        Self { shape: vec![1], values: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.values.len() == 1
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.values.len() || shape.contains(&0) {
            return Err(dim_err!("cannot reshape {:?} into {:?}", self.shape, shape));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self { shape: self.shape.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn cast<T: Real>(&self) -> Tensor<T> {
        Tensor { shape: self.shape.clone(), values: self.values.iter().map(|v| T::of(v.as_f64())).collect() }
    }

    /// Checks that every value is exactly 0 or 1.
    pub fn ensure_binary(&self) -> Result<()> {
        match self.values.iter().position(|&v| v != S::zero() && v != S::one()) {
            None => Ok(()),
            Some(i) => Err(invalid!("value {:?} at index {} is not binary", self.values[i], i)),
        }
    }
}

/// Channels-last image geometry of a rank-3 or rank-4 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Nhwc {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    /// Whether the tensor carried an explicit batch axis.
    pub batched: bool,
}

impl Nhwc {
    pub fn of(shape: &[usize]) -> Result<Self> {
        match *shape {
            [h, w, c] => Ok(Self { n: 1, h, w, c, batched: false }),
            [n, h, w, c] => Ok(Self { n, h, w, c, batched: true }),
            _ => Err(dim_err!("expected [H, W, C] or [N, H, W, C], got {:?}", shape)),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        if self.batched {
            vec![self.n, self.h, self.w, self.c]
        } else {
            vec![self.h, self.w, self.c]
        }
    }

    pub fn with(&self, h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c, ..*self }
    }

    pub fn len(&self) -> usize {
        self.n * self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
