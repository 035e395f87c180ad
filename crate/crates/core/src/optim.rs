//! Adam with bias correction.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::Gradients;
use crate::params::ParamSet;
use crate::tensor::DenseArray;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for one [`ParamSet`], aligned with its entry order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<DenseArray>,
    second: Vec<DenseArray>,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Result<Self> {
        if !(config.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        let zeros: Vec<DenseArray> = params.iter().map(|(_, p)| DenseArray::zeros(p.shape())).collect();
        Ok(Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[DenseArray] {
        &self.first
    }

    pub fn second_moments(&self) -> &[DenseArray] {
        &self.second
    }
}

/// One Adam update of every entry of `params` using the gradient of the same name.
pub fn adam_step(params: &mut ParamSet, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if state.first.len() != params.len() {
        return Err(Error::shape("optimizer state does not match parameter set"));
    }
    for (i, (name, p)) in params.iter().enumerate() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::invalid(alloc::format!("no gradient for `{name}`")))?;
        if g.shape() != p.shape() || state.first[i].shape() != p.shape() {
            return Err(Error::shape(alloc::format!(
                "`{name}`: parameter {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    state.step += 1;
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = state.config;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(b1, t);
    let c2 = 1.0 - libm::pow(b2, t);
    for (i, (name, p)) in params.iter_mut().enumerate() {
        let g = grads.get(name).expect("checked above");
        let m = state.first[i].as_mut_slice();
        let v = state.second[i].as_mut_slice();
        for (((pv, gv), mv), vv) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let mhat = *mv / c1;
            let vhat = *vv / c2;
            *pv -= lr * mhat / (libm::sqrt(vhat) + eps);
        }
    }
    Ok(())
}
