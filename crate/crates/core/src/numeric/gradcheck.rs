use rand::seq::index::sample;
use rand::Rng;

use super::params::ParamStore;
use crate::error::{Error, Result};

/// Relative error used throughout the verification harness.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the gradient accumulated by `f` against central differences.
///
/// For each parameter tensor the error is `‖a − c‖ / max(‖a‖, ‖c‖, 1e-8)`
/// over its probed scalars; the maximum over tensors is returned. `f`
/// returns the loss and adds its gradient into the store (it must not
/// zero gradients itself).
pub fn grad_check<F>(store: &mut ParamStore, eps: f64, f: F) -> Result<f64>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
{
    grad_check_impl(store, eps, None::<(&mut rand_chacha::ChaCha8Rng, usize)>, f)
}

/// Like [`grad_check`] but probes at most `per_param` randomly chosen scalars
/// of each parameter.
pub fn grad_check_sampled<F, R>(
    store: &mut ParamStore,
    eps: f64,
    per_param: usize,
    rng: &mut R,
    f: F,
) -> Result<f64>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
    R: Rng,
{
    grad_check_impl(store, eps, Some((rng, per_param)), f)
}

fn grad_check_impl<F, R>(
    store: &mut ParamStore,
    eps: f64,
    mut sampling: Option<(&mut R, usize)>,
    mut f: F,
) -> Result<f64>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
    R: Rng,
{
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::Config(format!("probe step {eps} outside [1e-7, 1e-4]")));
    }
    store.zero_grads();
    let loss = f(store)?;
    if !loss.is_finite() {
        return Err(Error::Probe);
    }
    let analytic: Vec<_> = store.ids().map(|id| store.grad(id).clone()).collect();

    let mut worst: f64 = 0.0;
    for id in store.ids().collect::<Vec<_>>() {
        let n = store.value(id).data().len();
        let picks: Vec<usize> = match sampling.as_mut() {
            Some((rng, k)) if *k < n => sample(*rng, n, *k).into_vec(),
            _ => (0..n).collect(),
        };
        let (mut diff, mut an_sq, mut num_sq) = (0.0, 0.0, 0.0);
        for k in picks {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + eps;
            let plus = f(store)?;
            store.value_mut(id).data_mut()[k] = orig - eps;
            let minus = f(store)?;
            store.value_mut(id).data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Probe);
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[id.index()].data()[k];
            diff += (a - numeric).powi(2);
            an_sq += a * a;
            num_sq += numeric * numeric;
        }
        let err = diff.sqrt() / an_sq.sqrt().max(num_sq.sqrt()).max(1e-8);
        worst = worst.max(err);
    }
    store.zero_grads();
    Ok(worst)
}
