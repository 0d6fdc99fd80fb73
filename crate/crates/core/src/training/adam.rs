use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.5e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one tensor per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn zeros_like(params: &[&Tensor<T>]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

/// One bias-corrected Adam update at iteration `step` (1-based), applied in
/// place. The update is computed in f64 and rounded once into `T`.
pub fn adam_step<T: Real>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    m: &mut [Tensor<T>],
    v: &mut [Tensor<T>],
    config: &AdamConfig,
    step: u64,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || m.len() != n || v.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: grads.len().min(m.len()).min(v.len()),
        });
    }
    if step == 0 {
        return Err(Error::InvalidTrainConfig("adam step counts from 1".into()));
    }
    for i in 0..n {
        let shape = params[i].shape();
        if grads[i].shape() != shape || m[i].shape() != shape || v[i].shape() != shape {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                detail: format!("parameter {i}: {shape} vs grad {} / moments {} {}", grads[i].shape(), m[i].shape(), v[i].shape()),
            });
        }
    }
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = *config;
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    for i in 0..n {
        let p = params[i].data_mut();
        let (mi, vi) = (m[i].data_mut(), v[i].data_mut());
        for (j, &g) in grads[i].data().iter().enumerate() {
            let g = g.to_f64_lossy();
            let mj = b1 * mi[j].to_f64_lossy() + (1.0 - b1) * g;
            let vj = b2 * vi[j].to_f64_lossy() + (1.0 - b2) * g * g;
            mi[j] = T::from_f64_lossy(mj);
            vi[j] = T::from_f64_lossy(vj);
            let update = lr * (mj / c1) / ((vj / c2).sqrt() + eps);
            p[j] = T::from_f64_lossy(p[j].to_f64_lossy() - update);
        }
    }
    Ok(())
}
