use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Denominator stabilizer.
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("adam alpha must be > 0, got {}", self.alpha)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("adam {name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("adam eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// First and second moment buffers for one matrix variable.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    m: DenseMatrix,
    v: DenseMatrix,
    t: u64,
}

impl AdamState {
    pub fn new(shape: (usize, usize), config: AdamConfig) -> Self {
        Self {
            config,
            m: DenseMatrix::zeros(shape.0, shape.1),
            v: DenseMatrix::zeros(shape.0, shape.1),
            t: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &DenseMatrix {
        &self.m
    }

    pub fn second_moment(&self) -> &DenseMatrix {
        &self.v
    }

    /// One bias-corrected update `x -= alpha * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, x: &mut DenseMatrix, grad: &DenseMatrix) -> Result<()> {
        if x.shape() != self.m.shape() || grad.shape() != self.m.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                left: x.shape(),
                right: grad.shape(),
            });
        }
        let AdamConfig {
            alpha,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        let xs = x.data_mut();
        let ms = self.m.data_mut();
        let vs = self.v.data_mut();
        for (((xi, &g), m), v) in xs.iter_mut().zip(grad.data()).zip(ms.iter_mut()).zip(vs.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *xi -= alpha * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;

    #[test]
    fn zero_gradient_leaves_x_unchanged() {
        let mut s = AdamState::new((2, 2), AdamConfig::default());
        let mut x = DenseMatrix::from_fn(2, 2, |r, c| (r + 2 * c) as f64);
        let before = x.clone();
        s.step(&mut x, &DenseMatrix::zeros(2, 2)).unwrap();
        assert_eq!(x, before);
    }

    #[test]
    fn first_step_moves_by_about_alpha() {
        let cfg = AdamConfig::default();
        for g in [3.0, -0.25, 1e-3] {
            let mut s = AdamState::new((1, 1), cfg);
            let mut x = DenseMatrix::new(1, 1, vec![0.0]).unwrap();
            s.step(&mut x, &DenseMatrix::new(1, 1, vec![g]).unwrap()).unwrap();
            let expected = cfg.alpha * g.abs() / (g.abs() + cfg.eps);
            assert!((x.get(0, 0).abs() - expected).abs() < 1e-15);
            assert_eq!(x.get(0, 0).signum(), -g.signum());
        }
    }

    #[test]
    fn counter_advances_by_one() {
        let mut s = AdamState::new((1, 2), AdamConfig::default());
        let mut x = DenseMatrix::zeros(1, 2);
        let g = DenseMatrix::new(1, 2, vec![1.0, -1.0]).unwrap();
        assert_eq!(s.t(), 0);
        s.step(&mut x, &g).unwrap();
        assert_eq!(s.t(), 1);
        s.step(&mut x, &g).unwrap();
        assert_eq!(s.t(), 2);
    }

    #[test]
    fn second_moment_nonnegative_and_steps_bounded() {
        let cfg = AdamConfig::default();
        let mut s = AdamState::new((3, 3), cfg);
        let mut rng = RandomSource::new(2);
        let mut x = DenseMatrix::zeros(3, 3);
        for k in 0..300 {
            let g = DenseMatrix::random_normal(3, 3, 10.0f64.powi(k % 5 - 2), &mut rng);
            let before = x.clone();
            s.step(&mut x, &g).unwrap();
            assert!(s.second_moment().data().iter().all(|v| *v >= 0.0));
            if k >= 10 {
                let step = x.sub(&before).unwrap();
                assert!(step.data().iter().all(|d| d.abs() <= cfg.alpha / (1.0 - cfg.beta1)));
            }
        }
    }

    #[test]
    fn steps_within_two_alpha_on_smooth_problem() {
        // f(x) = 0.5 * ||x - 3||^2 from a random start
        let cfg = AdamConfig::default();
        let mut s = AdamState::new((4, 4), cfg);
        let mut x = DenseMatrix::random_uniform(4, 4, -2.0, 2.0, &mut RandomSource::new(6));
        for k in 0..500 {
            let g = x.map(|v| v - 3.0);
            let before = x.clone();
            s.step(&mut x, &g).unwrap();
            if k >= 10 {
                let step = x.sub(&before).unwrap();
                assert!(step.data().iter().all(|d| d.abs() <= 2.0 * cfg.alpha));
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut s = AdamState::new((2, 2), AdamConfig::default());
        let mut x = DenseMatrix::zeros(2, 2);
        assert!(s.step(&mut x, &DenseMatrix::zeros(2, 1)).is_err());
    }
}
