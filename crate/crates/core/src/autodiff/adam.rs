use crate::{Error, Result};

/// Adam moment state for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected descent step `params -= lr · m̂ / (√v̂ + ε)`.
    ///
    /// Non-finite gradients reject the whole step and leave both parameters
    /// and moments untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::config(format!(
                "adam state has {} entries, params {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        for g in [1e-3, 0.5, -7.0, 1e4] {
            let mut st = AdamState::new(1);
            let mut p = [0.3];
            st.step(&mut p, &[g], 1e-3).unwrap();
            assert!(((p[0] - 0.3).abs() - 1e-3).abs() < 1e-6, "g = {g}");
        }
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut st = AdamState::new(3);
        let mut p = [1.0, -2.0, 3.0];
        for _ in 0..10 {
            st.step(&mut p, &[0.0; 3], 1e-2).unwrap();
        }
        assert_eq!(p, [1.0, -2.0, 3.0]);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut st = AdamState::new(2);
        let mut p = [0.1, 0.2];
        st.step(&mut p, &[5.0, -1.0], 0.0).unwrap();
        assert_eq!(p, [0.1, 0.2]);
    }

    #[test]
    fn nan_gradient_rejected_with_index() {
        let mut st = AdamState::new(3);
        let mut p = [0.0; 3];
        let err = st.step(&mut p, &[0.0, 1.0, f64::NAN], 1e-3).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { index: 2 }));
        assert_eq!(st.steps(), 0);
        assert_eq!(p, [0.0; 3]);
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        // f(x) = Σ c_i (x_i - t_i)²
        let target = [1.5, -0.5, 3.0];
        let curv = [1.0, 10.0, 0.1];
        let mut x = [0.0; 3];
        let mut st = AdamState::new(3);
        let mut steps = 0;
        while steps < 5000 {
            let g: Vec<f64> = (0..3).map(|i| 2.0 * curv[i] * (x[i] - target[i])).collect();
            let lr = if steps < 3000 { 1e-2 } else { 1e-3 };
            st.step(&mut x, &g, lr).unwrap();
            steps += 1;
        }
        for i in 0..3 {
            assert!((x[i] - target[i]).abs() < 1e-4, "coordinate {i}: {}", x[i]);
        }
    }
}
