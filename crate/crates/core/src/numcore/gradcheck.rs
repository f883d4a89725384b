//! Central finite-difference checks for analytic gradients.

use rand::Rng;

use super::params::ParamStore;
use crate::error::Result;

/// Central differences of `f` at `x`.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-6)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Compares an analytic gradient against central differences of `f` at `x`.
pub fn grad_check(f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64], eps: f64) -> f64 {
    max_relative_error(analytic, &numeric_gradient(f, x, eps))
}

/// Checks gradients of a scalar function of (trainable params, input).
///
/// `backward` must accumulate parameter gradients into the store and return
/// the input gradient.
pub fn grad_check_store(
    store: &mut ParamStore,
    x: &[f64],
    eps: f64,
    forward: impl Fn(&ParamStore, &[f64]) -> Result<f64>,
    backward: impl Fn(&mut ParamStore, &[f64]) -> Result<Vec<f64>>,
) -> Result<f64> {
    store.zero_grad();
    let dx = backward(store, x)?;
    let analytic_params = store.flatten_trainable_grads();
    store.zero_grad();

    let base = store.flatten_trainable();
    let mut work = store.clone();
    let numeric_params = numeric_gradient(
        |p| {
            work.assign_trainable(p).expect("layout is fixed");
            forward(&work, x).expect("forward at probe point")
        },
        &base,
        eps,
    );
    let numeric_x = numeric_gradient(
        |xp| forward(store, xp).expect("forward at probe point"),
        x,
        eps,
    );

    Ok(max_relative_error(&analytic_params, &numeric_params)
        .max(max_relative_error(&dx, &numeric_x)))
}

/// Random vector with entries in `[-1, 1]`, used to reduce vector outputs to a
/// scalar objective.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}
