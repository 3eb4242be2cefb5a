//! Gradient clipping and the ADAM parameter update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numcore::Tensor;

/// First and second gradient moments for one named parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Optimizer state: step counter plus per-tensor moments, stored in the
/// model's canonical parameter order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub entries: Vec<MomentEntry>,
}

impl AdamState {
    /// Zeroed moments shaped after `params`.
    pub fn new(params: &ModelParams) -> AdamState {
        let entries = params
            .named_tensors()
            .into_iter()
            .map(|(name, t)| MomentEntry {
                name: name.to_string(),
                shape: t.dims().as_list(),
                m: vec![0.0; t.len()],
                v: vec![0.0; t.len()],
            })
            .collect();
        AdamState { step: 0, entries }
    }

    fn check_matches(&self, params: &ModelParams) -> Result<()> {
        let named = params.named_tensors();
        if named.len() != self.entries.len() {
            return Err(Error::config(format!(
                "optimizer state has {} tensors, model has {}",
                self.entries.len(),
                named.len()
            )));
        }
        for ((name, t), entry) in named.iter().zip(&self.entries) {
            if *name != entry.name || t.dims().as_list() != entry.shape {
                return Err(Error::config(format!(
                    "optimizer state entry {:?} {:?} does not match model tensor {:?} {:?}",
                    entry.name,
                    entry.shape,
                    name,
                    t.dims().as_list()
                )));
            }
        }
        Ok(())
    }
}

/// Euclidean norm over every gradient element.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Scales all gradients down to `max_norm` when their joint norm exceeds
/// it. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.data_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

/// One bias-corrected ADAM update over every parameter tensor. `grads`
/// must follow the model's canonical tensor order.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    state.check_matches(params)?;
    if grads.len() != state.entries.len() {
        return Err(Error::config(format!(
            "got {} gradient tensors, expected {}",
            grads.len(),
            state.entries.len()
        )));
    }
    for ((name, t), g) in params.named_tensors().iter().zip(grads) {
        if t.dims() != g.dims() {
            return Err(Error::config(format!(
                "gradient for {:?} has shape {}, expected {}",
                name,
                g.dims(),
                t.dims()
            )));
        }
    }
    state.step += 1;
    let step = state.step as i32;
    let m_correction = 1.0 - beta1.powi(step);
    let v_correction = 1.0 - beta2.powi(step);
    for ((entry, g), (_, t)) in state
        .entries
        .iter_mut()
        .zip(grads)
        .zip(params.named_tensors_mut())
    {
        let gd = g.data();
        let td = t.data_mut();
        for i in 0..gd.len() {
            entry.m[i] = beta1 * entry.m[i] + (1.0 - beta1) * gd[i];
            entry.v[i] = beta2 * entry.v[i] + (1.0 - beta2) * gd[i] * gd[i];
            let m_hat = entry.m[i] / m_correction;
            let v_hat = entry.v[i] / v_correction;
            td[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
