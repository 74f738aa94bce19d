use super::model::Network;
use super::NnError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Network,
    pub v: Network,
    pub step: u64,
}

impl AdamState {
    pub fn new(like: &Network) -> Self {
        AdamState {
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Rejects the step (leaving everything untouched)
/// when any gradient entry is NaN or infinite.
pub fn adam_step(
    weights: &mut Network,
    state: &mut AdamState,
    grads: &Network,
    lr: f64,
) -> Result<(), NnError> {
    if !grads.is_finite() {
        return Err(NnError::NonFiniteGradient);
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let params = weights.tensors_mut();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(grads.tensors()) {
        for i in 0..p.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}
