//! Bias-corrected Adam over a fixed list of parameter tensors.

use super::{Tensor, TensorError};

#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    /// Zero moments shaped after `params`. Defaults: beta1 0.9, beta2 0.999,
    /// eps 1e-8.
    pub fn new(params: &[&Tensor], lr: f64) -> Self {
        AdamState {
            first_moment: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr,
        }
    }
}

/// One Adam update. Gradients are read from each tensor's `grad` buffer;
/// a missing or non-finite gradient is an error, as is any shape drift
/// between the state and the parameter list.
pub fn adam_step(params: &mut [&mut Tensor], state: &mut AdamState) -> Result<(), TensorError> {
    if params.len() != state.first_moment.len() {
        return Err(TensorError::InvalidArgument(format!(
            "optimizer state tracks {} parameters, got {}",
            state.first_moment.len(),
            params.len()
        )));
    }
    if state.lr <= 0.0 {
        return Err(TensorError::InvalidArgument("lr must be > 0".into()));
    }
    for (i, p) in params.iter().enumerate() {
        let grad = p.grad.as_ref().ok_or_else(|| {
            TensorError::InvalidArgument(format!("parameter {i} has no gradient"))
        })?;
        if grad.len() != state.first_moment[i].len() {
            return Err(TensorError::ShapeMismatch {
                left: vec![grad.len()],
                right: vec![state.first_moment[i].len()],
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(TensorError::NonFinite {
                context: format!("gradient of parameter {i}"),
            });
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    for (i, p) in params.iter_mut().enumerate() {
        let grad = p.grad.as_ref().unwrap().clone();
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        let data = p.data_mut();
        for j in 0..grad.len() {
            let g = grad[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            data[j] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
