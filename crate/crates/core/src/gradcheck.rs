//! Central finite-difference verification of graph gradients.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Bindings, Graph, Mode, NodeId};
use crate::params::ParamSet;
use crate::tensor::DenseArray;

/// Denominator floor of the relative error, so that gradients that are
/// zero up to rounding do not blow the ratio up.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, RELATIVE_FLOOR)`.
    pub max_relative_error: f64,
    /// Parameter and entry where the maximum occurred.
    pub worst: (String, usize),
    pub entries_checked: usize,
}

fn loss_at(g: &mut Graph, loss: NodeId, inputs: &[(&str, &DenseArray)], params: &ParamSet, mode: Mode) -> Result<f64> {
    let mut b = Bindings::new();
    for (n, v) in inputs {
        b.bind(n, v);
    }
    b.bind_params(params);
    g.forward(&b, mode)?;
    g.value(loss)
        .and_then(DenseArray::item)
        .ok_or_else(|| Error::invalid("loss is not a single value"))
}

/// Compares backpropagated parameter gradients of `loss` against central
/// differences with step `h`. `mode` is reused for every evaluation, so a
/// training seed keeps dropout masks fixed.
pub fn check_gradients(
    g: &mut Graph,
    loss: NodeId,
    inputs: &[(&str, &DenseArray)],
    params: &ParamSet,
    mode: Mode,
    h: f64,
) -> Result<GradCheck> {
    loss_at(g, loss, inputs, params, mode)?;
    let grads = g.backward(loss)?;
    let mut work = params.clone();
    let mut out = GradCheck {
        max_relative_error: 0.0,
        worst: (String::new(), 0),
        entries_checked: 0,
    };
    let names: Vec<String> = params.iter().map(|(n, _)| String::from(n)).collect();
    for name in names {
        let Some(analytic) = grads.get(&name) else { continue };
        let analytic = analytic.clone();
        for k in 0..analytic.len() {
            let orig = work.require(&name)?.as_slice()[k];
            work.get_mut(&name).expect("present").as_mut_slice()[k] = orig + h;
            let up = loss_at(g, loss, inputs, &work, mode)?;
            work.get_mut(&name).expect("present").as_mut_slice()[k] = orig - h;
            let down = loss_at(g, loss, inputs, &work, mode)?;
            work.get_mut(&name).expect("present").as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.as_slice()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            if rel > out.max_relative_error {
                out.max_relative_error = rel;
                out.worst = (name.clone(), k);
            }
            out.entries_checked += 1;
        }
    }
    Ok(out)
}
