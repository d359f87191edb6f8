//! Adam optimizer with bias-corrected moment estimates.

/// First/second moment buffers for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len] }
    }
}

/// One Adam update in place. `t` is the 1-based global step.
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    debug_assert_eq!(params.len(), grads.len());
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Default hyperparameters: `(lr unset, beta1, beta2, eps)`.
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = vec![1.0, -2.0, 0.5];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &[0.0; 3], &mut s, 1, 1e-3, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // bias correction makes m_hat = v_hat = g at t = 1, so the update is
        // lr * g / (|g| + eps) ~= lr for g = 1
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 1, 1e-3, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
        assert!((p[0] + 1e-3).abs() < 1e-8, "got {}", p[0]);
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut p = vec![0.3, -0.7];
            let mut s = AdamState::new(2);
            for t in 1..=50 {
                let g = vec![p[0] * 2.0, p[1] * 2.0]; // grad of x^2 + y^2
                adam_step(&mut p, &g, &mut s, t, 1e-2, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
            }
            p
        };
        assert_eq!(run(), run());
    }
}
