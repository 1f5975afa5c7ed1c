//! Central finite-difference gradient verification.

use std::collections::HashMap;

use crate::error::Result;
use crate::param::ParamStore;

use super::{Graph, TensorId};

/// Compare the analytic gradient of a scalar-valued computation against
/// central finite differences, coordinate by coordinate.
///
/// `build` receives a fresh graph and the leaf holding `x`, and must return
/// the scalar output tensor. Returns the max over coordinates of
/// `|analytic - numeric| / (|analytic| + |numeric| + 1e-12)`. NaNs produced
/// by `build` propagate into the result.
pub fn finite_difference_check<F>(
    build: F,
    x: &[f64],
    shape: &[usize],
    step: f64,
) -> Result<f64>
where
    F: Fn(&mut Graph, TensorId) -> Result<TensorId>,
{
    let mut graph = Graph::new();
    let leaf = graph.leaf(x.to_vec(), shape, true)?;
    let out = build(&mut graph, leaf)?;
    let map = graph.backward(out)?;
    let analytic = map.get(leaf).expect("leaf requested gradients").to_vec();

    let eval = |data: Vec<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let leaf = g.leaf(data, shape, false)?;
        let out = build(&mut g, leaf)?;
        Ok(g.value(out))
    };

    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.to_vec();
        plus[i] += step;
        let mut minus = x.to_vec();
        minus[i] -= step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
        let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs() + 1e-12);
        // f64::max ignores NaN; propagate it explicitly instead
        if err.is_nan() {
            return Ok(f64::NAN);
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Coordinates where both gradients sit below this are auto-passed: central
/// differences cannot resolve them, and analytic values that small are
/// rounding crumbs of structurally zero derivatives (e.g. a key-projection
/// bias, which shifts every attention logit of a row equally).
const FD_RESOLUTION: f64 = 1e-10;

/// Parameter-space variant of the check: perturbs each coordinate of every
/// parameter in `store` and compares against the supplied analytic
/// gradients. `eval` must replay the same pass deterministically (same seed,
/// stream and mode) over the store's current parameter values.
pub fn param_fd_max_error<M, F>(
    store: &mut M,
    analytic: &HashMap<String, Vec<f64>>,
    eval: F,
    step: f64,
) -> f64
where
    M: ParamStore,
    F: Fn(&M) -> f64,
{
    let names: Vec<String> = store.params().iter().map(|p| p.name.clone()).collect();
    let mut worst = 0.0f64;
    for name in &names {
        let grads = analytic
            .get(name)
            .unwrap_or_else(|| panic!("no analytic gradient for parameter {name}"));
        for (i, &analytic_grad) in grads.iter().enumerate() {
            let set = |m: &mut M, v: f64| {
                for p in m.params_mut() {
                    if &p.name == name {
                        p.data[i] = v;
                        return;
                    }
                }
            };
            let orig = store
                .params()
                .into_iter()
                .find(|p| &p.name == name)
                .map(|p| p.data[i])
                .unwrap();
            set(store, orig + step);
            let up = eval(store);
            set(store, orig - step);
            let down = eval(store);
            set(store, orig);
            let numeric = (up - down) / (2.0 * step);
            if analytic_grad.abs() < FD_RESOLUTION && numeric.abs() < FD_RESOLUTION {
                continue;
            }
            let err = (analytic_grad - numeric).abs() / (analytic_grad.abs() + numeric.abs() + 1e-12);
            worst = worst.max(err);
        }
    }
    worst
}
