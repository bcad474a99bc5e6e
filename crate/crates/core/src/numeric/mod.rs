//! Dense linear algebra, parameter storage, optimizers and gradient checking.

mod gradcheck;
mod matrix;
mod optim;
mod params;
pub mod rng;

pub use gradcheck::{grad_check, grad_check_sampled, relative_error};
pub use matrix::{
    argmax, axpy, dot, log_add, log_softmax, log_softmax_in_place, logsumexp, matmul, sigmoid,
    softmax_in_place, Matrix,
};
pub(crate) use matrix::{gemm_nn, gemm_tn_acc};
pub use optim::{sgd_step, Optimizer, OptimizerKind};
pub use params::{uniform_init, Grads, ParamId, ParamStore, Params};
