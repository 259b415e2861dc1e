use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{Parameters, Tensor};
use crate::error::{Error, Result};

/// One GRU layer:
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// h~ = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ h~
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruLayer {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_h: Tensor,
    pub u_z: Tensor,
    pub u_r: Tensor,
    pub u_h: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_h: Tensor,
}

/// Activations of one step, kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct GruStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    h_tilde: Vec<f64>,
}

impl GruLayer {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Tensor::zeros(&[hidden_dim, input_dim]);
        let u = || Tensor::zeros(&[hidden_dim, hidden_dim]);
        let b = || Tensor::zeros(&[hidden_dim]);
        Self {
            input_dim,
            hidden_dim,
            w_z: w(),
            w_r: w(),
            w_h: w(),
            u_z: u(),
            u_r: u(),
            u_h: u(),
            b_z: b(),
            b_r: b(),
            b_h: b(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(input_dim, hidden_dim);
        layer.w_z = Tensor::glorot(hidden_dim, input_dim, rng);
        layer.w_r = Tensor::glorot(hidden_dim, input_dim, rng);
        layer.w_h = Tensor::glorot(hidden_dim, input_dim, rng);
        layer.u_z = Tensor::glorot(hidden_dim, hidden_dim, rng);
        layer.u_r = Tensor::glorot(hidden_dim, hidden_dim, rng);
        layer.u_h = Tensor::glorot(hidden_dim, hidden_dim, rng);
        layer
    }

    /// Single recurrence step with dimension checks.
    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        if h_prev.len() != self.hidden_dim {
            return Err(Error::DimensionMismatch {
                expected: self.hidden_dim,
                actual: h_prev.len(),
            });
        }
        Ok(self.step_cached(x, h_prev).0)
    }

    pub(crate) fn step_cached(&self, x: &[f64], h_prev: &[f64]) -> (Vec<f64>, GruStepCache) {
        let n = self.hidden_dim;
        let mut z = self.b_z.data.clone();
        self.w_z.matvec_acc(x, &mut z);
        self.u_z.matvec_acc(h_prev, &mut z);
        z.iter_mut().for_each(|v| *v = super::sigmoid(*v));

        let mut r = self.b_r.data.clone();
        self.w_r.matvec_acc(x, &mut r);
        self.u_r.matvec_acc(h_prev, &mut r);
        r.iter_mut().for_each(|v| *v = super::sigmoid(*v));

        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let mut h_tilde = self.b_h.data.clone();
        self.w_h.matvec_acc(x, &mut h_tilde);
        self.u_h.matvec_acc(&rh, &mut h_tilde);
        h_tilde.iter_mut().for_each(|v| *v = v.tanh());

        let h: Vec<f64> = (0..n).map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * h_tilde[i]).collect();
        let cache = GruStepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            z,
            r,
            h_tilde,
        };
        (h, cache)
    }

    /// Runs the layer over `xs` from a zero initial state and returns every
    /// hidden state together with the per-step caches.
    pub(crate) fn forward_seq<'a>(&self, xs: impl IntoIterator<Item = &'a [f64]>) -> (Vec<Vec<f64>>, Vec<GruStepCache>) {
        let mut h = vec![0.0; self.hidden_dim];
        let mut outs = Vec::new();
        let mut caches = Vec::new();
        for x in xs {
            let (next, cache) = self.step_cached(x, &h);
            caches.push(cache);
            outs.push(next.clone());
            h = next;
        }
        (outs, caches)
    }

    /// Final hidden state only; no caches retained.
    pub(crate) fn forward_last<'a>(&self, xs: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden_dim];
        for x in xs {
            h = self.step_cached(x, &h).0;
        }
        h
    }

    /// Backpropagation through time. `d_outs[t]` is the loss gradient that
    /// reaches hidden state `t` from outside the recurrence (empty vectors
    /// count as zero). Accumulates into `grads`; returns input gradients.
    pub(crate) fn backward_seq(&self, caches: &[GruStepCache], d_outs: &[Vec<f64>], grads: &mut GruLayer) -> Vec<Vec<f64>> {
        let n = self.hidden_dim;
        let mut carry = vec![0.0; n];
        let mut dxs = vec![Vec::new(); caches.len()];
        for t in (0..caches.len()).rev() {
            let c = &caches[t];
            let mut dh = carry;
            if !d_outs[t].is_empty() {
                for (a, b) in dh.iter_mut().zip(&d_outs[t]) {
                    *a += b;
                }
            }
            let mut dh_prev: Vec<f64> = (0..n).map(|i| dh[i] * (1.0 - c.z[i])).collect();
            let da_z: Vec<f64> = (0..n)
                .map(|i| dh[i] * (c.h_tilde[i] - c.h_prev[i]) * c.z[i] * (1.0 - c.z[i]))
                .collect();
            let da_h: Vec<f64> = (0..n)
                .map(|i| dh[i] * c.z[i] * (1.0 - c.h_tilde[i] * c.h_tilde[i]))
                .collect();

            let mut dx = vec![0.0; self.input_dim];
            let rh: Vec<f64> = c.r.iter().zip(&c.h_prev).map(|(a, b)| a * b).collect();
            grads.w_h.outer_acc(&da_h, &c.x);
            grads.u_h.outer_acc(&da_h, &rh);
            super::tensor::axpy(1.0, &da_h, &mut grads.b_h.data);
            self.w_h.matvec_t_acc(&da_h, &mut dx);
            let mut d_rh = vec![0.0; n];
            self.u_h.matvec_t_acc(&da_h, &mut d_rh);

            let da_r: Vec<f64> = (0..n)
                .map(|i| d_rh[i] * c.h_prev[i] * c.r[i] * (1.0 - c.r[i]))
                .collect();
            for i in 0..n {
                dh_prev[i] += d_rh[i] * c.r[i];
            }

            grads.w_z.outer_acc(&da_z, &c.x);
            grads.u_z.outer_acc(&da_z, &c.h_prev);
            super::tensor::axpy(1.0, &da_z, &mut grads.b_z.data);
            self.w_z.matvec_t_acc(&da_z, &mut dx);
            self.u_z.matvec_t_acc(&da_z, &mut dh_prev);

            grads.w_r.outer_acc(&da_r, &c.x);
            grads.u_r.outer_acc(&da_r, &c.h_prev);
            super::tensor::axpy(1.0, &da_r, &mut grads.b_r.data);
            self.w_r.matvec_t_acc(&da_r, &mut dx);
            self.u_r.matvec_t_acc(&da_r, &mut dh_prev);

            dxs[t] = dx;
            carry = dh_prev;
        }
        dxs
    }
}

impl Parameters for GruLayer {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w_z".into(), &self.w_z),
            ("w_r".into(), &self.w_r),
            ("w_h".into(), &self.w_h),
            ("u_z".into(), &self.u_z),
            ("u_r".into(), &self.u_r),
            ("u_h".into(), &self.u_h),
            ("b_z".into(), &self.b_z),
            ("b_r".into(), &self.b_r),
            ("b_h".into(), &self.b_h),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_layer() -> GruLayer {
        GruLayer::zeros(1, 1)
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let g = GruLayer::zeros(3, 2);
        let (h, c) = g.step_cached(&[0.3, -1.0, 2.0], &[0.0, 0.0]);
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(c.z, vec![0.5, 0.5]);
        assert_eq!(c.r, vec![0.5, 0.5]);
        assert_eq!(c.h_tilde, vec![0.0, 0.0]);
    }

    #[test]
    fn open_update_gate_passes_candidate() {
        let mut g = scalar_layer();
        g.b_z.data[0] = 50.0;
        g.w_h.data[0] = 1.0;
        let h = g.step(&[1.0], &[0.0]).unwrap();
        // z = σ(50) ≈ 1 - 2e-22, so h ≈ tanh(1)
        assert!((h[0] - 1f64.tanh()).abs() < 1e-12);
        assert!((h[0] - 0.76159).abs() < 1e-5);
    }

    #[test]
    fn closed_update_gate_keeps_state() {
        let mut g = GruLayer::init(2, 3, &mut rand::thread_rng());
        g.w_z.fill(0.0);
        g.u_z.fill(0.0);
        g.b_z.fill(-50.0);
        let h_prev = [0.2, -0.7, 0.9];
        let h = g.step(&[1.0, -2.0], &h_prev).unwrap();
        for (a, b) in h.iter().zip(h_prev) {
            assert!((a - b).abs() < 1e-18);
        }
    }

    #[test]
    fn step_checks_dimensions() {
        let g = GruLayer::zeros(2, 3);
        assert!(g.step(&[1.0], &[0.0; 3]).is_err());
        assert!(g.step(&[1.0, 2.0], &[0.0; 2]).is_err());
    }
}
