use super::matrix::Matrix;
use super::params::ParamStore;
use crate::error::{Error, Result};

/// θ ← θ − lr·g, then zero the gradients and advance the step counter.
///
/// The update is rejected as a whole if any gradient is non-finite.
pub fn sgd_step(store: &mut ParamStore, lr: f64) -> Result<()> {
    store.check_grads_finite()?;
    for id in store.ids().collect::<Vec<_>>() {
        let g = store.grad(id).clone();
        let v = store.value_mut(id);
        for (p, gi) in v.data_mut().iter_mut().zip(g.data()) {
            *p -= lr * gi;
        }
    }
    store.zero_grads();
    store.bump_step();
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

/// Stateful optimizer wrapper. Adam moments are created lazily and resized
/// when the store grows (vocabulary extension).
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => sgd_step(store, self.lr),
            OptimizerKind::Adam => self.adam_step(store),
        }
    }

    fn adam_step(&mut self, store: &mut ParamStore) -> Result<()> {
        store.check_grads_finite()?;
        let ids: Vec<_> = store.ids().collect();
        for id in &ids {
            let shape = store.value(*id).shape();
            let i = id.index();
            if i >= self.m.len() {
                self.m.push(Matrix::zeros(shape.0, shape.1));
                self.v.push(Matrix::zeros(shape.0, shape.1));
            } else if self.m[i].shape() != shape {
                self.m[i] = Matrix::zeros(shape.0, shape.1);
                self.v[i] = Matrix::zeros(shape.0, shape.1);
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = self.lr * bc2.sqrt() / bc1;
        for id in ids {
            let i = id.index();
            let g = store.grad(id).clone();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = store.value_mut(id).data_mut();
            for k in 0..p.len() {
                let gk = g.data()[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                p[k] -= step * m[k] / (v[k].sqrt() + self.eps);
            }
        }
        store.zero_grads();
        store.bump_step();
        Ok(())
    }
}
