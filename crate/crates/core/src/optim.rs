//! Adam optimizer with bias correction.

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Adam hyper-parameters. `beta1`, `beta2`, and `eps` default to the usual
/// 0.9 / 0.999 / 1e-8; the learning rate always comes from the caller.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamConfig<T> {
    pub fn with_lr(lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }
}

/// First/second moment buffers for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(numel: usize) -> Self {
        Self {
            m: vec![T::zero(); numel],
            v: vec![T::zero(); numel],
            t: 0,
        }
    }

    /// Rebuilds a state from checkpointed buffers.
    pub fn from_parts(m: Vec<T>, v: Vec<T>, t: u64) -> Result<Self> {
        if m.len() != v.len() {
            return Err(CoreError::InvalidArgument(format!(
                "adam moment buffers disagree: m has {} elements, v has {}",
                m.len(),
                v.len()
            )));
        }
        Ok(Self { m, v, t })
    }

    pub fn m(&self) -> &[T] {
        &self.m
    }

    pub fn v(&self) -> &[T] {
        &self.v
    }

    pub fn t(&self) -> u64 {
        self.t
    }
}

/// One Adam update in place. `params` and `grads` must have equal length and
/// match the state's buffers.
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    cfg: &AdamConfig<T>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(CoreError::InvalidArgument(format!(
            "adam_step length mismatch: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let one = T::one();
    let bc1 = one - cfg.beta1.powi(t);
    let bc2 = one - cfg.beta2.powi(t);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = cfg.beta1 * *m + (one - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (one - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}
