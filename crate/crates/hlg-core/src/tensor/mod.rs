//! Dense tensors with reverse-mode automatic differentiation.
//!
//! The design is define-by-run: a [`Graph`] records every operation of one
//! forward pass and replays it in reverse to accumulate gradients. There is
//! no broadcasting beyond scalar coefficients; every operation checks its
//! operand shapes so the backward rules stay auditable.
//!
//! Two element types are supported through the [`Real`] trait: `f32` for
//! training and `f64` for gradient checking and tests.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_params, save_params, validate_shapes, CheckpointError};
pub use gradcheck::grad_check;
pub use graph::{Graph, Var};

use std::collections::BTreeMap;

use num_traits::Float;
use rand::Rng;
use thiserror::Error;

/// Element type of tensors: `f32` for training, `f64` for verification.
pub trait Real:
    Float + std::fmt::Debug + std::fmt::Display + std::iter::Sum + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn from_f32(x: f32) -> Self;
    fn to_f32(self) -> f32;
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f32(x: f32) -> Self {
        x
    }
    fn to_f32(self) -> f32 {
        self
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f32(x: f32) -> Self {
        x as f64
    }
    fn to_f32(self) -> f32 {
        self as f32
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: lhs {lhs:?}, rhs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    BadLength { shape: Vec<usize>, len: usize },
}

/// A host tensor: a shape plus row-major values. Parameters and inputs live
/// here; graph nodes copy values in and gradients out.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, TensorError> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(TensorError::BadLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); len],
        }
    }

    pub fn scalar(x: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, TensorError> {
        Self::new(vec![rows, cols], data)
    }

    /// Uniform samples in `[lo, hi)`. Draws are made in `f64` so that `f32`
    /// and `f64` models built from the same seed agree to rounding.
    pub fn uniform<R: Rng>(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut R) -> Self {
        let len = shape.iter().product();
        let data = (0..len)
            .map(|_| T::from_f64(rng.random_range(lo..hi)))
            .collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value at `(row, col)` of a rank-2 tensor.
    pub fn at(&self, row: usize, col: usize) -> T {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[row * self.shape[1] + col]
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
        }
    }
}

/// Named parameter store. `BTreeMap` keeps iteration in name order, which
/// makes serialization and gradient application deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params<T> {
    map: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> Params<T> {
    pub fn new() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.map.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.map.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Merge another store into this one. Duplicate names are a caller bug.
    pub fn extend(&mut self, other: Params<T>) {
        for (name, tensor) in other.map {
            let prev = self.map.insert(name.clone(), tensor);
            debug_assert!(prev.is_none(), "duplicate parameter {name}");
        }
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            map: self
                .map
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Shape of every parameter, for checkpoint validation.
    pub fn shapes(&self) -> BTreeMap<String, Vec<usize>> {
        self.map
            .iter()
            .map(|(k, v)| (k.clone(), v.shape().to_vec()))
            .collect()
    }
}

/// Gradients accumulated for a set of named parameters.
pub type Grads<T> = BTreeMap<String, Tensor<T>>;

/// Parameters bound into a graph as differentiable leaves, keyed by name.
/// After `backward`, [`Bound::grads`] collects the leaf gradients.
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn bind<T: Real>(graph: &mut Graph<T>, params: &Params<T>) -> Self {
        let vars = params
            .iter()
            .map(|(name, tensor)| (name.clone(), graph.leaf(tensor)))
            .collect();
        Self { vars }
    }

    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter {name}"))
    }

    pub fn grads<T: Real>(&self, graph: &Graph<T>) -> Grads<T> {
        self.vars
            .iter()
            .map(|(name, &var)| (name.clone(), graph.grad_tensor(var)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_length_is_checked() {
        let err = Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, TensorError::BadLength { .. }));
    }

    #[test]
    fn cast_round_trips_f32_values() {
        let t = Tensor::<f32>::vector(vec![0.25, 0.5, 1.0]);
        let up: Tensor<f64> = t.cast();
        let down: Tensor<f32> = up.cast();
        assert_eq!(t, down);
    }

    #[test]
    fn params_iterate_in_name_order() {
        let mut p = Params::<f64>::new();
        p.insert("b", Tensor::scalar(2.0));
        p.insert("a", Tensor::scalar(1.0));
        let names: Vec<_> = p.names().cloned().collect();
        assert_eq!(names, vec!["a".to_string(), "b".to_string()]);
    }
}
