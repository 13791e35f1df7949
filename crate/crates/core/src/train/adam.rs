//! Bias-corrected Adam over a list of parameter blocks.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl AdamState {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update of every block in place. Moment buffers are created lazily
    /// on the first call and must keep the same block shapes afterwards.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        assert_eq!(params.len(), grads.len(), "block count mismatch");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[b], &mut self.v[b]);
            assert_eq!(p.len(), g.len());
            assert_eq!(m.len(), g.len(), "block {b} changed shape");
            for k in 0..g.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Adam update of a full parameter set.
pub fn adam_step(
    params: &mut crate::ifno::IfnoParams,
    grad: &crate::ifno::IfnoParams,
    state: &mut AdamState,
    lr: f64,
) {
    let grads: Vec<&[f64]> = grad.subnets().into_iter().flat_map(|s| s.blocks()).collect();
    let mut blocks = params.blocks_mut();
    state.step(&mut blocks, &grads, lr);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference(g: f64, lr: f64, steps: usize) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut th, mut m, mut v) = (0.0, 0.0, 0.0);
        for t in 1..=steps {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            th -= lr * mh / (vh.sqrt() + eps);
        }
        th
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut st = AdamState::default();
        let mut a = vec![1.0, -2.0];
        let mut b = vec![3.0];
        let before = (a.clone(), b.clone());
        for _ in 0..3 {
            st.step(&mut [&mut a, &mut b], &[&[0.0, 0.0], &[0.0]], 0.1);
        }
        assert_eq!((a, b), before);
    }

    #[test]
    fn first_step_value() {
        let mut st = AdamState::default();
        let mut x = vec![0.0];
        st.step(&mut [&mut x], &[&[2.0]], 0.1);
        let expected = -0.1 * 2.0 / (2.0 + 1e-8);
        assert!((x[0] - expected).abs() < 1e-15);
        assert!((x[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn two_steps_match_recurrence() {
        let mut st = AdamState::default();
        let mut x = vec![0.0];
        st.step(&mut [&mut x], &[&[0.7]], 0.05);
        st.step(&mut [&mut x], &[&[0.7]], 0.05);
        assert!((x[0] - reference(0.7, 0.05, 2)).abs() < 1e-12);
    }

    #[test]
    fn zero_lr_keeps_params() {
        let mut st = AdamState::default();
        let mut x = vec![0.25, 4.0];
        st.step(&mut [&mut x], &[&[1.0, -3.0]], 0.0);
        assert_eq!(x, vec![0.25, 4.0]);
    }
}
