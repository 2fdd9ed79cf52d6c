use serde::{Deserialize, Serialize};

use super::config::AdamConfig;
use crate::autodiff::Real;
use crate::error::{Error, Result};

/// Adam moments, kept in double precision whatever the parameter type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn update<T: Real>(&mut self, cfg: &AdamConfig, lr: f64, params: &mut [T], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} moments, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powf(self.step as f64);
        let c2 = 1.0 - cfg.beta2.powf(self.step as f64);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] = T::lit(params[i].as_f64() - lr * mhat / (vhat.sqrt() + cfg.eps));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamConfig::default();
        let mut st = OptimizerState::new(3);
        let mut p = [1.0f64, -2.0, 0.5];
        st.update(&cfg, 0.1, &mut p, &[3.0, -0.01, 0.0]).unwrap();
        // m_hat = g and v_hat = g^2 after one step
        assert!((p[0] - (1.0 - 0.1 * 3.0 / (3.0 + 1e-8))).abs() < 1e-15);
        assert!((p[1] - (-2.0 + 0.1 * 0.01 / (0.01 + 1e-8))).abs() < 1e-15);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn second_step_matches_hand_computation() {
        let cfg = AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        let mut st = OptimizerState::new(1);
        let mut p = [0.0f64];
        st.update(&cfg, 0.01, &mut p, &[1.0]).unwrap();
        st.update(&cfg, 0.01, &mut p, &[-2.0]).unwrap();
        let m = 0.9 * 0.1 + 0.1 * -2.0;
        let v = 0.999 * 0.001 + 0.001 * 4.0;
        let mhat = m / (1.0 - 0.81);
        let vhat = v / (1.0 - 0.999f64 * 0.999);
        let want = -0.01 * 1.0 / (1.0 + 1e-8) - 0.01 * mhat / (vhat.sqrt() + 1e-8);
        assert!((p[0] - want).abs() < 1e-15);
        assert_eq!(st.step, 2);
    }

    #[test]
    fn zero_gradient_is_no_update() {
        let mut st = OptimizerState::new(2);
        let mut p = [0.3f32, -0.7];
        for _ in 0..5 {
            st.update(&AdamConfig::default(), 1e-3, &mut p, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(p, [0.3, -0.7]);
        assert!(st.update(&AdamConfig::default(), 1e-3, &mut p, &[0.0]).is_err());
    }
}
