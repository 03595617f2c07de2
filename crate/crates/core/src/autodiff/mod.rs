//! A small reverse-mode differentiation engine over dense `f64` arrays.
//!
//! Graphs are built eagerly: every operation computes its value when it is
//! added, so the forward pass is the construction itself. `Graph::backward`
//! returns gradients for every parameter the graph touched; they are folded
//! into the [`ParameterStore`] with [`ParameterStore::accumulate`] and applied
//! by [`ParameterStore::clip_and_step`].

mod check;
mod graph;

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use check::{grad_check, GradCheckConfig, GradCheckReport};
pub use graph::{Graph, NodeId};

/// A row-major real array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Invalid(format!("array shape {shape:?} has an empty axis")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Invalid(format!(
                "array shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Array { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Array::new(shape, vec![0.0; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count and row width, viewing the array as a matrix.
    pub fn rows_cols(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [r, rest @ ..] => (*r, rest.iter().product()),
            [] => (0, 0),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let (_, c) = self.rows_cols();
        &self.data[r * c..(r + 1) * c]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameters with gradient accumulators.
#[derive(Clone, Debug)]
pub struct ParameterStore {
    names: Vec<String>,
    index: HashMap<String, ParamId>,
    values: Vec<Array>,
    grads: Vec<Vec<f64>>,
    /// Coefficient λ of the `λ‖w‖²` weight penalty.
    pub l2: f64,
    /// Global gradient-norm threshold.
    pub clip: f64,
}

impl Default for ParameterStore {
    fn default() -> Self {
        ParameterStore {
            names: Vec::new(),
            index: HashMap::new(),
            values: Vec::new(),
            grads: Vec::new(),
            l2: 1e-6,
            clip: 1.0,
        }
    }
}

/// Result of one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// Gradient norm before clipping.
    pub norm: f64,
    /// Factor the gradients were multiplied by.
    pub scale: f64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Invalid(format!("duplicate parameter `{name}`")));
        }
        let id = ParamId(self.values.len());
        self.grads.push(vec![0.0; value.len()]);
        self.values.push(value);
        self.index.insert(name.clone(), id);
        self.names.push(name);
        Ok(id)
    }

    /// Adds a `rows × cols` matrix drawn uniformly from
    /// `±sqrt(6 / (rows + cols))`.
    pub fn add_glorot<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add(name, Array::new(vec![rows, cols], data)?)
    }

    /// Adds a vector drawn from the same rule, treating it as `1 × len`.
    pub fn add_glorot_vector<R: Rng>(
        &mut self,
        name: impl Into<String>,
        len: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = (6.0 / (len + 1) as f64).sqrt();
        let data = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add(name, Array::new(vec![len], data)?)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> Result<ParamId> {
        self.add(name, Array::zeros(shape)?)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    /// Replaces the value of an existing parameter; shapes must agree.
    pub fn set(&mut self, name: &str, value: Array) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::Invalid(format!("unknown parameter `{name}`")))?;
        if self.values[id.0].shape() != value.shape() {
            return Err(Error::Invalid(format!(
                "parameter `{name}` has shape {:?}, got {:?}",
                self.values[id.0].shape(),
                value.shape()
            )));
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn accumulate(&mut self, grads: &Gradients) {
        for (i, g) in grads.per_param.iter().enumerate() {
            if let Some(g) = g {
                for (acc, v) in self.grads[i].iter_mut().zip(g) {
                    *acc += v;
                }
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rescales accumulated gradients to a global norm of at most `clip`, then
    /// applies `w ← w − lr · (g + 2λw)` and zeroes the accumulators.
    pub fn clip_and_step(&mut self, learning_rate: f64) -> Result<StepReport> {
        for (i, g) in self.grads.iter().enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(self.names[i].clone()));
            }
        }
        let norm = self.grad_norm();
        let scale = if norm > self.clip { self.clip / norm } else { 1.0 };
        let decay = 2.0 * self.l2;
        for (value, grad) in self.values.iter_mut().zip(self.grads.iter_mut()) {
            for (w, g) in value.data.iter_mut().zip(grad.iter_mut()) {
                *w -= learning_rate * (scale * *g + decay * *w);
                *g = 0.0;
            }
        }
        Ok(StepReport { norm, scale })
    }
}

/// Per-parameter gradients produced by one backward pass.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    per_param: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub(crate) fn with_capacity(params: usize) -> Self {
        Gradients {
            per_param: vec![None; params],
        }
    }

    pub(crate) fn slot(&mut self, id: ParamId, len: usize) -> &mut Vec<f64> {
        self.per_param[id.0].get_or_insert_with(|| vec![0.0; len])
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.per_param.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn norm(&self) -> f64 {
        self.per_param.iter().flatten().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_halves_gradient_of_norm_two() {
        let mut store = ParameterStore::new();
        store.l2 = 0.0;
        let p = store.add("w", Array::new(vec![2], vec![0.0, 0.0]).unwrap()).unwrap();
        store.grads[p.0] = vec![2.0 * 0.6, 2.0 * 0.8];
        let report = store.clip_and_step(1.0).unwrap();
        assert!((report.norm - 2.0).abs() < 1e-12);
        assert!((report.scale - 0.5).abs() < 1e-12);
        let w = store.value(p).data();
        assert!((w[0] + 0.6).abs() < 1e-12 && (w[1] + 0.8).abs() < 1e-12);
        assert_eq!(store.grad(p), &[0.0, 0.0]);
    }

    #[test]
    fn zero_gradient_zero_penalty_is_a_no_op() {
        let mut store = ParameterStore::new();
        store.l2 = 0.0;
        let p = store.add("w", Array::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap()).unwrap();
        store.clip_and_step(0.33).unwrap();
        assert_eq!(store.value(p).data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn weight_penalty_closed_form() {
        let mut store = ParameterStore::new();
        let p = store.add("w", Array::new(vec![1], vec![1.0]).unwrap()).unwrap();
        store.clip_and_step(0.33).unwrap();
        assert_eq!(store.value(p).data()[0], 1.0 - 0.33 * (2.0 * 1e-6 * 1.0));
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut store = ParameterStore::new();
        store.add_zeros("ok", vec![1]).unwrap();
        let bad = store.add_zeros("bad", vec![2]).unwrap();
        store.grads[bad.0][1] = f64::NAN;
        match store.clip_and_step(0.1) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "bad"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParameterStore::new();
        store.add_zeros("a", vec![1]).unwrap();
        assert!(store.add_zeros("a", vec![1]).is_err());
        assert!(store.set("a", Array::zeros(vec![2]).unwrap()).is_err());
    }
}
