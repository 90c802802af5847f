use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad Adam settings {self:?}")))
        }
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One bias-corrected Adam update; `t` counts steps from 1.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, t: u64, cfg: &AdamConfig) -> Result<()> {
    if t == 0 {
        return Err(Error::invalid("Adam step index starts at 1"));
    }
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::invalid("parameter, gradient and state lengths differ"));
    }
    let c1 = 1.0 - cfg.beta1.powf(t as f64);
    let c2 = 1.0 - cfg.beta2.powf(t as f64);
    for i in 0..n {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = vec![0.3, -1.0, 2.0];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &[0.0; 3], &mut s, 1, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![0.3, -1.0, 2.0]);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 1, &cfg).unwrap();
        let expect = -cfg.lr / (1.0 + cfg.eps);
        assert!((p[0] - expect).abs() < 1e-18, "{}", p[0]);
    }

    #[test]
    fn step_is_bounded() {
        let cfg = AdamConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut p = vec![0.0; 16];
        let mut s = AdamState::new(16);
        for t in 1..=500 {
            let scale = 10f64.powf(rng.random_range(-6.0..3.0));
            let g: Vec<f64> = (0..16).map(|_| rng.random_range(-scale..scale)).collect();
            let before = p.clone();
            adam_step(&mut p, &g, &mut s, t, &cfg).unwrap();
            for (a, b) in p.iter().zip(&before) {
                assert!((a - b).abs() <= 10.0 * cfg.lr);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let mut s = AdamState::new(1);
        let cfg = AdamConfig::default();
        assert!(adam_step(&mut [0.0], &[1.0], &mut s, 0, &cfg).is_err());
        assert!(adam_step(&mut [0.0, 1.0], &[1.0], &mut s, 1, &cfg).is_err());
        assert!(AdamConfig { beta1: 1.0, ..cfg }.validate().is_err());
    }
}
