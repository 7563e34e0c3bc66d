use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, decay: 0.9, epsilon: 1e-8 }
    }
}

/// Running mean of squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub mean_square: Vec<f64>,
}

impl RmsPropState {
    pub fn zeros(n: usize) -> Self {
        Self { mean_square: vec![0.0; n] }
    }
}

/// `v ← ρv + (1-ρ)g²`, `ψ ← ψ - lr·g/(√v + ε)`, elementwise.
pub fn rmsprop_step(psi: &mut [f64], grad: &[f64], state: &mut RmsPropState, cfg: &RmsPropConfig) -> Result<()> {
    for len in [grad.len(), state.mean_square.len()] {
        if len != psi.len() {
            return Err(Error::Shape { expected: psi.len(), actual: len });
        }
    }
    for ((p, &g), v) in psi.iter_mut().zip(grad).zip(state.mean_square.iter_mut()) {
        *v = cfg.decay * *v + (1.0 - cfg.decay) * g * g;
        *p -= cfg.learning_rate * g / (libm::sqrt(*v) + cfg.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_decays_state() {
        let mut psi = vec![1.0, -2.0];
        let mut st = RmsPropState { mean_square: vec![4.0, 1.0] };
        rmsprop_step(&mut psi, &[0.0, 0.0], &mut st, &RmsPropConfig::default()).unwrap();
        assert_eq!(psi, vec![1.0, -2.0]);
        assert!((st.mean_square[0] - 3.6).abs() < 1e-15);
        assert!((st.mean_square[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = RmsPropConfig { learning_rate: 0.01, decay: 0.9, epsilon: 1e-8 };
        for g in [3.0, -0.5, 1e-2] {
            let mut psi = vec![0.0];
            let mut st = RmsPropState::zeros(1);
            rmsprop_step(&mut psi, &[g], &mut st, &cfg).unwrap();
            let exact = -cfg.learning_rate * g / ((0.1f64 * g * g).sqrt() + cfg.epsilon);
            assert!((psi[0] - exact).abs() < 1e-15);
            let approx = -cfg.learning_rate * g.signum() / 0.1f64.sqrt();
            assert!((psi[0] - approx).abs() < 1e-6);
        }
    }

    #[test]
    fn equal_gradients_equal_updates() {
        let mut psi = vec![0.5, 0.5, 0.5];
        let mut st = RmsPropState::zeros(3);
        rmsprop_step(&mut psi, &[0.7, 0.7, 0.7], &mut st, &RmsPropConfig::default()).unwrap();
        assert!(psi[0] == psi[1] && psi[1] == psi[2]);
    }

    #[test]
    fn shape_mismatch() {
        let mut psi = vec![0.0; 2];
        let mut st = RmsPropState::zeros(2);
        assert!(rmsprop_step(&mut psi, &[1.0], &mut st, &RmsPropConfig::default()).is_err());
        let mut st = RmsPropState::zeros(3);
        assert!(rmsprop_step(&mut psi, &[1.0, 1.0], &mut st, &RmsPropConfig::default()).is_err());
    }
}
