use std::ops::Index;

use rand::Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Handle to a parameter tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameters with same-shaped gradient accumulators.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
    grads: Vec<Matrix>,
    step: u64,
}

/// Read-only view of parameter values, used by forward passes.
#[derive(Clone, Copy)]
pub struct Params<'a>(&'a [Matrix]);

/// Mutable view of gradient accumulators, used by backward passes.
pub struct Grads<'a>(&'a mut [Matrix]);

impl Index<ParamId> for Params<'_> {
    type Output = Matrix;
    fn index(&self, id: ParamId) -> &Matrix {
        &self.0[id.0]
    }
}

impl<'a> Params<'a> {
    pub fn get(self, id: ParamId) -> &'a Matrix {
        &self.0[id.0]
    }
}

impl Grads<'_> {
    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.0[id.0]
    }
}

/// Uniform(-k, k) initialization with k = 1/sqrt(fan_in).
pub fn uniform_init(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Matrix {
    let k = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-k..k)).collect();
    Matrix::new(rows, cols, data).expect("shape")
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        let (r, c) = value.shape();
        self.names.push(name);
        self.values.push(value);
        self.grads.push(Matrix::zeros(r, c));
        Ok(ParamId(self.values.len() - 1))
    }

    /// Adds a uniformly initialized parameter.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        self.add(name, uniform_init(rows, cols, fan_in, rng))
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

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.grads[id.0]
    }

    pub fn params(&self) -> Params<'_> {
        Params(&self.values)
    }

    pub fn split(&mut self) -> (Params<'_>, Grads<'_>) {
        (Params(&self.values), Grads(&mut self.grads))
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub(crate) fn bump_step(&mut self) {
        self.step += 1;
    }

    pub(crate) fn set_step_count(&mut self, step: u64) {
        self.step = step;
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.data().len()).sum()
    }

    /// Errors naming the first parameter whose gradient is non-finite.
    pub fn check_grads_finite(&self) -> Result<()> {
        for (name, g) in self.names.iter().zip(&self.grads) {
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        Ok(())
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Scales gradients so their global L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm.is_finite() {
            let k = max_norm / norm;
            self.grads.iter_mut().for_each(|g| g.scale(k));
        }
        norm
    }

    pub fn scale_grads(&mut self, k: f64) {
        self.grads.iter_mut().for_each(|g| g.scale(k));
    }

    /// Replaces a parameter with a wider copy: columns `0..old` are kept,
    /// new columns come from `fresh`.
    pub fn extend_cols(&mut self, id: ParamId, fresh: &Matrix) -> Result<()> {
        let old = &self.values[id.0];
        if fresh.rows() != old.rows() {
            return Err(Error::Dimension(format!(
                "cannot append {} rows of columns to `{}` with {} rows",
                fresh.rows(),
                self.names[id.0],
                old.rows()
            )));
        }
        let wider = Matrix::hcat(old, fresh);
        let (r, c) = wider.shape();
        self.values[id.0] = wider;
        self.grads[id.0] = Matrix::zeros(r, c);
        Ok(())
    }

    /// Appends rows to a parameter, keeping existing rows.
    pub fn extend_rows(&mut self, id: ParamId, fresh: &Matrix) -> Result<()> {
        let old = &self.values[id.0];
        if fresh.cols() != old.cols() {
            return Err(Error::Dimension(format!(
                "cannot append rows of width {} to `{}` of width {}",
                fresh.cols(),
                self.names[id.0],
                old.cols()
            )));
        }
        let mut data = old.data().to_vec();
        data.extend_from_slice(fresh.data());
        let taller = Matrix::new(old.rows() + fresh.rows(), old.cols(), data)?;
        let (r, c) = taller.shape();
        self.values[id.0] = taller;
        self.grads[id.0] = Matrix::zeros(r, c);
        Ok(())
    }
}
