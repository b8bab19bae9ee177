use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, cfg: &AdamConfig) {
    assert_eq!(params.len(), grad.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::default());
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn single_step_descends() {
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        adam_step(&mut p, &[1.0], &mut s, &cfg);
        assert!(p[0] < 1.0);
    }

    #[test]
    fn converges_on_convex_quadratic() {
        // f(p) = Σ c_i p_i² / 2
        let c = [1.0, 4.0, 0.25];
        let mut p = vec![1.0, -1.0, 2.0];
        let mut s = AdamState::new(3);
        let loss = |p: &[f64]| p.iter().zip(&c).map(|(x, c)| 0.5 * c * x * x).sum::<f64>();
        let mut lr = 0.05;
        let mut last = f64::INFINITY;
        let mut block_best = f64::INFINITY;
        for it in 0..20000 {
            if it % 2000 == 1999 {
                lr *= 0.3;
            }
            let g: Vec<f64> = p.iter().zip(&c).map(|(x, c)| c * x).collect();
            adam_step(&mut p, &g, &mut s, &AdamConfig { lr, ..AdamConfig::default() });
            last = loss(&p);
            // monotone across blocks after warm-up
            if it % 1000 == 999 && it > 1000 {
                assert!(last <= block_best, "loss rose to {last} at {it}");
                block_best = last;
            }
        }
        assert!(last < 1e-8, "{last}");
    }
}
