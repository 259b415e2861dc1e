use serde::{Deserialize, Serialize};

use super::tensor::Parameters;
use crate::error::{Error, Result};

/// Adam optimiser state: one first/second moment buffer per parameter
/// tensor, in the order `Parameters::tensors` yields them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<P: Parameters>(params: &P, learning_rate: f64) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn update<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grads: Vec<_> = grads.tensors();
        let targets = params.tensors_mut();
        if targets.len() != self.first_moment.len() || grads.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: self.first_moment.len(),
                actual: targets.len(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (k, (param, (_, grad))) in targets.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.first_moment[k], &mut self.second_moment[k]);
            if param.len() != m.len() || grad.len() != m.len() {
                return Err(Error::DimensionMismatch {
                    expected: m.len(),
                    actual: param.len(),
                });
            }
            for i in 0..m.len() {
                let g = grad.data[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param.data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::{Dense, Tensor};

    #[derive(Clone)]
    struct Scalar(Tensor);

    impl Parameters for Scalar {
        fn tensors(&self) -> Vec<(String, &Tensor)> {
            vec![("x".into(), &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Dense::init(3, 2, &mut rand::thread_rng());
        let before = p.clone();
        let mut opt = Adam::new(&p, 1e-3);
        let g = p.zeros_like();
        for _ in 0..5 {
            opt.update(&mut p, &g).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(opt.step, 5);
    }

    #[test]
    fn quadratic_loss_decreases_monotonically() {
        // f(x) = (x - 3)^2 from x = 0
        let mut p = Scalar(Tensor::from_vec(&[1], vec![0.0]).unwrap());
        let mut opt = Adam::new(&p, 0.05);
        let mut prev = 9.0;
        for _ in 0..50 {
            let x = p.0.data[0];
            let g = Scalar(Tensor::from_vec(&[1], vec![2.0 * (x - 3.0)]).unwrap());
            opt.update(&mut p, &g).unwrap();
            let loss = (p.0.data[0] - 3.0).powi(2);
            assert!(loss < prev);
            prev = loss;
        }
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let base = Dense::init(2, 2, &mut rand::thread_rng());
        let mut g = base.zeros_like();
        g.weight.data = vec![0.1, -0.2, 0.3, 0.05];
        let run = || {
            let mut p = base.clone();
            let mut opt = Adam::new(&p, 1e-2);
            for _ in 0..10 {
                opt.update(&mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
        let mut other = Dense::init(3, 2, &mut rand::thread_rng());
        let mut opt = Adam::new(&base, 1e-2);
        let og = other.zeros_like();
        assert!(opt.update(&mut other, &og).is_err());
    }
}
