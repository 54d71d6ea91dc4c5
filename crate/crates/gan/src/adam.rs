//! Adam with bias correction; beta1 = 0.5 as is conventional for
//! adversarial training.

use serde::{Deserialize, Serialize};

use crate::layers::Param;
use crate::scalar::NnScalar;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 2e-4, beta1: 0.5, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, t: 0 }
    }

    /// One update over every parameter; grads are left untouched so the
    /// caller decides when to zero them.
    pub fn step<T: NnScalar>(&mut self, params: &mut [&mut Param<T>]) {
        self.t += 1;
        let b1 = T::from_f64_lossy(self.config.beta1);
        let b2 = T::from_f64_lossy(self.config.beta2);
        let eps = T::from_f64_lossy(self.config.epsilon);
        let bc1 = T::from_f64_lossy(1.0 - self.config.beta1.powi(self.t as i32));
        let bc2 = T::from_f64_lossy(1.0 - self.config.beta2.powi(self.t as i32));
        let lr = T::from_f64_lossy(self.config.learning_rate);
        let one = T::one();
        for p in params.iter_mut() {
            let g = p.grad.view();
            p.m.zip_mut_with(&g, |m, &gv| *m = b1 * *m + (one - b1) * gv);
            p.v.zip_mut_with(&g, |v, &gv| *v = b2 * *v + (one - b2) * gv * gv);
            let m = p.m.clone();
            let v = p.v.clone();
            p.value
                .iter_mut()
                .zip(m.iter().zip(v.iter()))
                .for_each(|(w, (&m, &v))| {
                    let mhat = m / bc1;
                    let vhat = v / bc2;
                    *w = *w - lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::ArrayD;

    /// One Adam step on a single scalar, against the update rule by hand.
    #[test]
    fn single_step_oracle() {
        let cfg = AdamConfig { learning_rate: 0.1, beta1: 0.5, beta2: 0.999, epsilon: 1e-8 };
        let mut opt = Adam::new(cfg);
        let mut p = Param::new(ArrayD::from_elem(vec![1], 2.0f64));
        p.grad.fill(0.4);
        opt.step(&mut [&mut p]);
        // m = 0.2, v = 0.00016; mhat = 0.4, vhat = 0.16; step = 0.1*0.4/(0.4+1e-8)
        let expect = 2.0 - 0.1 * 0.4 / (0.16f64.sqrt() + 1e-8);
        assert_relative_eq!(p.value[[0]], expect, epsilon = 1e-12);
        assert_eq!(opt.t, 1);
    }

    /// Adam should walk a quadratic bowl toward its minimum.
    #[test]
    fn converges_on_quadratic() {
        let mut opt = Adam::new(AdamConfig { learning_rate: 0.05, ..Default::default() });
        let mut p = Param::new(ArrayD::from_elem(vec![2], 3.0f64));
        for _ in 0..500 {
            let g: Vec<f64> = p.value.iter().map(|&w| 2.0 * (w - 1.0)).collect();
            p.grad = ArrayD::from_shape_vec(vec![2], g).unwrap();
            opt.step(&mut [&mut p]);
        }
        for &w in p.value.iter() {
            assert!((w - 1.0).abs() < 1e-3, "{w}");
        }
    }
}
