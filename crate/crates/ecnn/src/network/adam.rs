//! Adam optimizer over a flat parameter vector.

use super::NetworkError;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub learning_rate: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Reference settings: beta1=0.9, beta2=0.99, lr=0.001.
    pub fn new(param_count: usize, learning_rate: f64) -> AdamState {
        AdamState {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
            beta1: 0.9,
            beta2: 0.99,
            learning_rate,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. Aborts without touching parameters when
/// any gradient entry is non-finite.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
) -> Result<(), NetworkError> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(NetworkError::ShapeError {
            what: "adam parameters",
            expected: state.first_moment.len(),
            found: params.len().min(grads.len()),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(NetworkError::NonFiniteGradient);
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let m = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * grads[i];
        let v = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        params[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}
