//! Central finite-difference gradient checking.
//!
//! The oracle is independent of the backward pass: it re-runs the forward
//! closure at perturbed inputs and compares `(f(x+h) - f(x-h)) / 2h` to the
//! analytic gradient. Intended for `f64` graphs.

use super::graph::{Graph, NodeId};
use super::params::{ParamGroup, ParamStore};
use super::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;

/// Compare analytic gradients of `build`'s scalar output against central
/// finite differences for every element of every input. `build` must be a
/// pure function of the store values.
///
/// Returns the worst relative error on success.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], step: f64, tol: f64, build: F) -> Result<f64, String>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>, &[NodeId]) -> Result<NodeId, super::Error>,
{
    let mut store: ParamStore<f64> = ParamStore::new();
    let ids: Vec<_> = inputs
        .iter()
        .map(|t| store.add(t.clone(), ParamGroup::Weights))
        .collect();

    let eval = |store: &ParamStore<f64>| -> Result<(Graph<f64>, NodeId), String> {
        let mut g = Graph::new(true);
        let nodes: Vec<NodeId> = ids.iter().map(|id| g.param(store, *id)).collect();
        let loss = build(&mut g, store, &nodes).map_err(|e| e.to_string())?;
        Ok((g, loss))
    };

    let (graph, loss) = eval(&store)?;
    if graph.value(loss).numel() != 1 {
        return Err("gradient check requires a scalar output".to_string());
    }
    graph
        .backward(loss, &mut store)
        .map_err(|e| e.to_string())?;
    let analytic: Vec<Tensor<f64>> = ids.iter().map(|id| store.grad(*id).clone()).collect();

    let mut worst = 0.0f64;
    for (pi, id) in ids.iter().enumerate() {
        for j in 0..inputs[pi].numel() {
            let orig = store.value(*id).data()[j];
            store.value_mut(*id).data_mut()[j] = orig + step;
            let (gp, lp) = eval(&store)?;
            let f_plus = gp.value(lp).item();
            store.value_mut(*id).data_mut()[j] = orig - step;
            let (gm, lm) = eval(&store)?;
            let f_minus = gm.value(lm).item();
            store.value_mut(*id).data_mut()[j] = orig;

            let fd = (f_plus - f_minus) / (2.0 * step);
            let an = analytic[pi].data()[j];
            let err = relative_error(an, fd);
            worst = worst.max(err);
            if err > tol {
                return Err(format!(
                    "input {pi} element {j}: analytic {an:.9e} vs finite-difference {fd:.9e} (rel err {err:.3e} > {tol:.1e})"
                ));
            }
        }
    }
    Ok(worst)
}

/// Relative error with an absolute floor: gradients below 1e-3 in magnitude
/// compare against the floor, i.e. they pass at tolerance `tol` iff
/// `|a - b| <= tol * 1e-3`. Central differences at step 1e-5 carry ~1e-9
/// truncation noise, which would swamp a pure ratio on near-zero gradients
/// while still exposing any real (proportional) backward bug.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}
