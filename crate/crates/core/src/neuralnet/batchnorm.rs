use serde::{Deserialize, Serialize};

use super::tensor::{Parameters, Tensor};
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

/// Per-feature batch normalisation with running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// What backward needs from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    x_hat: Vec<Vec<f64>>,
    inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        let mut gamma = Tensor::zeros(&[features]);
        gamma.fill(1.0);
        Self {
            gamma,
            beta: Tensor::zeros(&[features]),
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Normalises rows of `x`. Training mode uses batch statistics and
    /// updates the running averages; eval mode uses the running averages.
    pub fn forward(&mut self, x: &[Vec<f64>], train_mode: bool) -> Result<Vec<Vec<f64>>> {
        if train_mode {
            Ok(self.forward_train(x)?.0)
        } else {
            Ok(self.forward_eval(x))
        }
    }

    pub fn forward_eval(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let xh = (v - self.running_mean[j]) / (self.running_var[j] + BN_EPSILON).sqrt();
                        self.gamma.data[j] * xh + self.beta.data[j]
                    })
                    .collect()
            })
            .collect()
    }

    pub(crate) fn forward_train(&mut self, x: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, BatchNormCache)> {
        let n = x.len();
        if n < 2 {
            return Err(Error::invalid(format!("batch norm in training needs batch >= 2, got {n}")));
        }
        let f = self.features();
        let mut mean = vec![0.0; f];
        for row in x {
            if row.len() != f {
                return Err(Error::DimensionMismatch {
                    expected: f,
                    actual: row.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; f];
        for row in x {
            for j in 0..f {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();

        let x_hat: Vec<Vec<f64>> = x
            .iter()
            .map(|row| (0..f).map(|j| (row[j] - mean[j]) * inv_std[j]).collect())
            .collect();
        let y = x_hat
            .iter()
            .map(|row| (0..f).map(|j| self.gamma.data[j] * row[j] + self.beta.data[j]).collect())
            .collect();
        for j in 0..f {
            self.running_mean[j] = BN_MOMENTUM * self.running_mean[j] + (1.0 - BN_MOMENTUM) * mean[j];
            self.running_var[j] = BN_MOMENTUM * self.running_var[j] + (1.0 - BN_MOMENTUM) * var[j];
        }
        Ok((y, BatchNormCache { x_hat, inv_std }))
    }

    /// Backward of a training-mode pass; accumulates gamma/beta gradients.
    pub(crate) fn backward(&self, cache: &BatchNormCache, dy: &[Vec<f64>], grads: &mut BatchNorm) -> Vec<Vec<f64>> {
        let n = dy.len() as f64;
        let f = self.features();
        let mut sum_dxh = vec![0.0; f];
        let mut sum_dxh_xh = vec![0.0; f];
        for (d, xh) in dy.iter().zip(&cache.x_hat) {
            for j in 0..f {
                grads.gamma.data[j] += d[j] * xh[j];
                grads.beta.data[j] += d[j];
                let dxh = d[j] * self.gamma.data[j];
                sum_dxh[j] += dxh;
                sum_dxh_xh[j] += dxh * xh[j];
            }
        }
        dy.iter()
            .zip(&cache.x_hat)
            .map(|(d, xh)| {
                (0..f)
                    .map(|j| {
                        let dxh = d[j] * self.gamma.data[j];
                        cache.inv_std[j] / n * (n * dxh - sum_dxh[j] - xh[j] * sum_dxh_xh[j])
                    })
                    .collect()
            })
            .collect()
    }
}

impl Parameters for BatchNorm {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_batch_maps_to_beta() {
        let mut bn = BatchNorm::new(2);
        bn.beta.data = vec![0.3, -1.0];
        let y = bn.forward(&[vec![4.0, 4.0], vec![4.0, 4.0], vec![4.0, 4.0]], true).unwrap();
        for row in y {
            assert_eq!(row, vec![0.3, -1.0]);
        }
    }

    #[test]
    fn unit_variance_pair() {
        let mut bn = BatchNorm::new(1);
        let y = bn.forward(&[vec![-1.0], vec![1.0]], true).unwrap();
        // mean 0, biased var 1: ±1/sqrt(1 + 1e-5)
        let expected = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y[0][0] + expected).abs() < 1e-15);
        assert!((y[1][0] - expected).abs() < 1e-15);
        assert!((y[1][0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn eval_ignores_batch_and_train_needs_two() {
        let mut bn = BatchNorm::new(1);
        bn.forward(&[vec![2.0], vec![6.0]], true).unwrap();
        // running mean 0.99*0 + 0.01*4, running var 0.99*1 + 0.01*4
        assert!((bn.running_mean[0] - 0.04).abs() < 1e-15);
        assert!((bn.running_var[0] - 1.03).abs() < 1e-15);
        let a = bn.forward(&[vec![5.0]], false).unwrap();
        let b = bn.forward(&[vec![5.0], vec![100.0]], false).unwrap();
        assert_eq!(a[0], b[0]);
        assert!(bn.forward(&[vec![5.0]], true).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x = vec![vec![0.3, -1.2], vec![1.5, 0.4], vec![-0.7, 2.2], vec![0.1, 0.0]];
        let w = [[0.5, -1.0], [2.0, 0.3], [-0.4, 1.1], [0.9, -0.2]];
        let mut bn = BatchNorm::new(2);
        bn.gamma.data = vec![1.3, 0.7];
        bn.beta.data = vec![0.1, -0.2];
        let loss = |bn: &BatchNorm, x: &[Vec<f64>]| -> f64 {
            let mut b = bn.clone();
            let (y, _) = b.forward_train(x).unwrap();
            y.iter().zip(&w).map(|(r, wr)| r[0] * wr[0] + r[1] * wr[1]).sum()
        };
        let mut probe = bn.clone();
        let (_, cache) = probe.forward_train(&x).unwrap();
        let dy: Vec<Vec<f64>> = w.iter().map(|r| r.to_vec()).collect();
        let mut grads = bn.zeros_like();
        let dx = bn.backward(&cache, &dy, &mut grads);
        let eps = 1e-6;
        for i in 0..x.len() {
            for j in 0..2 {
                let mut xp = x.clone();
                xp[i][j] += eps;
                let mut xm = x.clone();
                xm[i][j] -= eps;
                let fd = (loss(&bn, &xp) - loss(&bn, &xm)) / (2.0 * eps);
                assert!((fd - dx[i][j]).abs() < 1e-6, "{fd} vs {}", dx[i][j]);
            }
        }
        for j in 0..2 {
            let mut p = bn.clone();
            p.gamma.data[j] += eps;
            let mut m = bn.clone();
            m.gamma.data[j] -= eps;
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * eps);
            assert!((fd - grads.gamma.data[j]).abs() < 1e-6);
        }
    }
}
