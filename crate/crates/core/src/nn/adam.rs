use serde::{Deserialize, Serialize};

use super::param::Params;
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

/// First and second moments, flattened in parameter visiting order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new<P: Params + ?Sized>(params: &P, config: AdamConfig) -> Self {
        let n = params.param_count();
        AdamState {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam step on `params` using `grads` of the same structure.
pub fn adam_update<P: Params + ?Sized>(params: &mut P, grads: &P, state: &mut AdamState) -> Result<()> {
    let g = grads.flat();
    if g.len() != state.m.len() || params.param_count() != g.len() {
        return Err(Error::Shape(format!(
            "optimizer tracks {} values, gradients have {}",
            state.m.len(),
            g.len()
        )));
    }
    state.t += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let c1 = 1.0 - beta1.powf(state.t as f64);
    let c2 = 1.0 - beta2.powf(state.t as f64);
    let (m, v) = (&mut state.m, &mut state.v);
    let mut at = 0;
    params.visit_mut("", &mut |_, theta| {
        for p in theta.iter_mut() {
            let gi = g[at];
            m[at] = beta1 * m[at] + (1.0 - beta1) * gi;
            v[at] = beta2 * v[at] + (1.0 - beta2) * gi * gi;
            let m_hat = m[at] / c1;
            let v_hat = v[at] / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
            at += 1;
        }
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::param::{visit1, visit1_mut};
    use ndarray::{array, Array1};

    #[derive(Debug, Clone, PartialEq)]
    struct Theta(Array1<f64>);

    impl Params for Theta {
        fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
            visit1(prefix, "theta", &self.0, f);
        }
        fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
            visit1_mut(prefix, "theta", &mut self.0, f);
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Theta(array![1.0]);
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_update(&mut p, &Theta(array![0.1]), &mut s).unwrap();
        // bias-corrected m_hat = 0.1, v_hat = 0.01
        let expected = 1.0 - 1e-3 * 0.1 / (0.01f64.sqrt() + 1e-8);
        assert!((p.0[0] - expected).abs() < 1e-15);
        assert!((p.0[0] - 0.9990).abs() < 1e-6);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = Theta(array![0.3, -2.0]);
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_update(&mut p, &Theta(array![0.0, 0.0]), &mut s).unwrap();
        assert_eq!(p.0, array![0.3, -2.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn deterministic_and_checked() {
        let mut a = Theta(array![0.5, 0.25]);
        let mut b = a.clone();
        let g = Theta(array![0.2, -0.7]);
        let mut sa = AdamState::new(&a, AdamConfig::default());
        let mut sb = sa.clone();
        for _ in 0..3 {
            adam_update(&mut a, &g, &mut sa).unwrap();
            adam_update(&mut b, &g, &mut sb).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert!(adam_update(&mut a, &Theta(array![1.0]), &mut sa).is_err());
    }
}
