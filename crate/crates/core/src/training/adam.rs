//! Adaptive moment estimation.

use serde::{Deserialize, Serialize};

use crate::network::OptimizerState;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// One bias-corrected update. Moments are kept in single precision so a
/// checkpointed run resumes exactly.
pub fn adam_update(params: &mut [f32], grads: &[f64], state: &mut OptimizerState, lr: f64, cfg: &AdamConfig) {
    assert_eq!(params.len(), grads.len());
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i] + cfg.weight_decay * params[i] as f64;
        let m = cfg.beta1 * state.first_moment[i] as f64 + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * state.second_moment[i] as f64 + (1.0 - cfg.beta2) * g * g;
        state.first_moment[i] = m as f32;
        state.second_moment[i] = v as f32;
        let update = lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
        params[i] = (params[i] as f64 - update) as f32;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![1.0f32, -2.0, 0.5];
        let mut st = OptimizerState::new(3);
        adam_update(&mut p, &[0.3, -4.0, 0.0], &mut st, 0.01, &AdamConfig::default());
        assert!((p[0] - 0.99).abs() < 1e-6);
        assert!((p[1] + 1.99).abs() < 1e-6);
        assert_eq!(p[2], 0.5);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![3.0f32, -1.0];
        let mut st = OptimizerState::new(2);
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|&x| 2.0 * (x as f64 - 0.5)).collect();
            adam_update(&mut p, &g, &mut st, 0.01, &AdamConfig::default());
        }
        assert!(p.iter().all(|&x| (x - 0.5).abs() < 1e-2), "{p:?}");
    }
}
