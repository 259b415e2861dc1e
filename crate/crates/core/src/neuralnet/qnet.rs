use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::Dense;
use super::dropout::dropout_mask;
use super::gru::{GruLayer, GruStepCache};
use super::tensor::{Parameters, Tensor};
use crate::clustering::ActionId;
use crate::embeddings::StateMatrix;
use crate::error::{Error, Result};

/// Two stacked GRU layers read the history's sentence vectors; the final
/// hidden state of the second layer goes through dropout and a dense head
/// with one output per clustered action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub gru1: GruLayer,
    pub gru2: GruLayer,
    pub head: Dense,
    pub dropout_rate: f64,
}

/// One regression sample for the TD loss.
#[derive(Debug, Clone, Copy)]
pub struct QSample<'a> {
    pub state: &'a StateMatrix,
    pub action: ActionId,
    pub target: f64,
}

struct ForwardCache {
    caches1: Vec<GruStepCache>,
    caches2: Vec<GruStepCache>,
    features: Vec<f64>,
    mask: Option<Vec<f64>>,
    q: Vec<f64>,
}

impl QNetwork {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, actions: usize, dropout_rate: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::invalid(format!("dropout rate {dropout_rate} outside [0, 1)")));
        }
        if input_dim == 0 || hidden_dim == 0 || actions == 0 {
            return Err(Error::invalid("network dimensions must be positive"));
        }
        Ok(Self {
            gru1: GruLayer::init(input_dim, hidden_dim, rng),
            gru2: GruLayer::init(hidden_dim, hidden_dim, rng),
            head: Dense::init(hidden_dim, actions, rng),
            dropout_rate,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.gru1.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.gru2.hidden_dim
    }

    pub fn actions(&self) -> usize {
        self.head.output_dim()
    }

    fn check_state(&self, s: &StateMatrix) -> Result<()> {
        if s.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: s.dim(),
            });
        }
        Ok(())
    }

    /// Q-values for every action. Only the `filled` rows of the state are
    /// read, so padding never influences the output.
    pub fn forward<R: Rng + ?Sized>(&self, s: &StateMatrix, train_mode: bool, rng: &mut R) -> Result<Vec<f64>> {
        self.check_state(s)?;
        let h1 = self.gru1.forward_seq(s.rows()).0;
        let mut h2 = self.gru2.forward_last(h1.iter().map(Vec::as_slice));
        if train_mode && self.dropout_rate > 0.0 {
            let mask = dropout_mask(h2.len(), self.dropout_rate, rng)?;
            h2.iter_mut().zip(mask).for_each(|(h, m)| *h *= m);
        }
        let q = self.head.forward(&h2);
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("q-values".into()));
        }
        Ok(q)
    }

    /// Deterministic evaluation-mode forward pass.
    pub fn q_values(&self, s: &StateMatrix) -> Result<Vec<f64>> {
        self.forward(s, false, &mut rand::rngs::mock::StepRng::new(0, 0))
    }

    fn forward_cached(&self, s: &StateMatrix, mask: Option<Vec<f64>>) -> ForwardCache {
        let (h1, caches1) = self.gru1.forward_seq(s.rows());
        let (h2s, caches2) = self.gru2.forward_seq(h1.iter().map(Vec::as_slice));
        let mut features = h2s.last().cloned().unwrap_or_else(|| vec![0.0; self.hidden_dim()]);
        if let Some(m) = &mask {
            features.iter_mut().zip(m).for_each(|(h, m)| *h *= m);
        }
        let q = self.head.forward(&features);
        ForwardCache {
            caches1,
            caches2,
            features,
            mask,
            q,
        }
    }

    /// Mean squared TD error over the batch, gradient flowing only through
    /// the chosen action's output. Targets are treated as constants.
    /// `train_mode` enables dropout, drawing one mask per sample.
    pub fn loss_and_gradients<R: Rng + ?Sized>(
        &self,
        batch: &[QSample<'_>],
        train_mode: bool,
        rng: &mut R,
    ) -> Result<(f64, QNetwork)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut grads = self.zeros_like();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for sample in batch {
            self.check_state(sample.state)?;
            if sample.action.0 >= self.actions() {
                return Err(Error::invalid(format!("action {} out of range", sample.action)));
            }
            if !sample.target.is_finite() {
                return Err(Error::NonFinite("td target".into()));
            }
            let mask = if train_mode && self.dropout_rate > 0.0 {
                Some(dropout_mask(self.hidden_dim(), self.dropout_rate, rng)?)
            } else {
                None
            };
            let fc = self.forward_cached(sample.state, mask);
            let err = fc.q[sample.action.0] - sample.target;
            loss += err * err * scale;
            self.backward_sample(&fc, sample.action, 2.0 * err * scale, &mut grads);
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        grads.check_finite()?;
        Ok((loss, grads))
    }

    fn backward_sample(&self, fc: &ForwardCache, action: ActionId, dq: f64, grads: &mut QNetwork) {
        let a = action.0;
        let mut d_features = self.head.weight.row(a).to_vec();
        d_features.iter_mut().for_each(|v| *v *= dq);
        super::tensor::axpy(dq, &fc.features, grads.head.weight.row_mut(a));
        grads.head.bias.data[a] += dq;
        if fc.caches2.is_empty() {
            return;
        }
        if let Some(m) = &fc.mask {
            d_features.iter_mut().zip(m).for_each(|(d, m)| *d *= m);
        }
        let steps = fc.caches2.len();
        let mut d_outs2 = vec![Vec::new(); steps];
        d_outs2[steps - 1] = d_features;
        let d_h1 = self.gru2.backward_seq(&fc.caches2, &d_outs2, &mut grads.gru2);
        self.gru1.backward_seq(&fc.caches1, &d_h1, &mut grads.gru1);
    }
}

impl Parameters for QNetwork {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (prefix, layer) in [("gru1", &self.gru1), ("gru2", &self.gru2)] {
            out.extend(layer.tensors().into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)));
        }
        out.extend(self.head.tensors().into_iter().map(|(n, t)| (format!("head.{n}"), t)));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.gru1.tensors_mut();
        out.extend(self.gru2.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(seed: u64) -> QNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = QNetwork::new(2, 3, 2, 0.0, &mut rng).unwrap();
        // non-zero biases so every parameter participates
        for t in net.tensors_mut() {
            if t.shape.len() == 1 {
                t.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
            }
        }
        net
    }

    fn state(rows: &[[f64; 2]]) -> StateMatrix {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        StateMatrix::from_rows(&rows, 2, 3).unwrap()
    }

    /// Scalar-loop evaluation written independently of the layer code.
    fn reference_q(net: &QNetwork, rows: &[[f64; 2]]) -> Vec<f64> {
        fn gru(l: &GruLayer, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
            let n = l.hidden_dim;
            let m = l.input_dim;
            let mut h = vec![0.0; n];
            let mut out = vec![];
            for x in xs {
                let mut next = vec![0.0; n];
                let mut r = vec![0.0; n];
                let mut z = vec![0.0; n];
                for i in 0..n {
                    let (mut az, mut ar) = (l.b_z.data[i], l.b_r.data[i]);
                    for j in 0..m {
                        az += l.w_z.data[i * m + j] * x[j];
                        ar += l.w_r.data[i * m + j] * x[j];
                    }
                    for j in 0..n {
                        az += l.u_z.data[i * n + j] * h[j];
                        ar += l.u_r.data[i * n + j] * h[j];
                    }
                    z[i] = sigmoid(az);
                    r[i] = sigmoid(ar);
                }
                for i in 0..n {
                    let mut ah = l.b_h.data[i];
                    for j in 0..m {
                        ah += l.w_h.data[i * m + j] * x[j];
                    }
                    for j in 0..n {
                        ah += l.u_h.data[i * n + j] * r[j] * h[j];
                    }
                    next[i] = (1.0 - z[i]) * h[i] + z[i] * ah.tanh();
                }
                h = next;
                out.push(h.clone());
            }
            out
        }
        let xs: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        let h1 = gru(&net.gru1, &xs);
        let h2 = gru(&net.gru2, &h1);
        let last = h2.last().cloned().unwrap_or(vec![0.0; 3]);
        (0..2)
            .map(|a| net.head.bias.data[a] + (0..3).map(|j| net.head.weight.data[a * 3 + j] * last[j]).sum::<f64>())
            .collect()
    }

    #[test]
    fn zero_head_gives_zero_q() {
        let mut net = tiny(1);
        net.head = Dense::zeros(3, 2);
        assert_eq!(net.q_values(&state(&[[1.0, 2.0], [0.5, -1.0]])).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn empty_state_returns_head_bias() {
        let net = tiny(2);
        assert_eq!(net.q_values(&state(&[])).unwrap(), net.head.bias.data);
    }

    #[test]
    fn matches_scalar_reference() {
        let net = tiny(3);
        let rows = [[0.3, -0.8], [1.1, 0.4]];
        let q = net.q_values(&state(&rows)).unwrap();
        let want = reference_q(&net, &rows);
        for (a, b) in q.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn eval_is_deterministic_and_dims_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = QNetwork::new(2, 4, 3, 0.2, &mut rng).unwrap();
        let s = state(&[[0.1, 0.2], [0.3, 0.4]]);
        assert_eq!(net.forward(&s, false, &mut rng).unwrap(), net.forward(&s, false, &mut rng).unwrap());
        let wrong = StateMatrix::from_rows(&[vec![1.0, 2.0, 3.0]], 3, 5).unwrap();
        assert!(net.q_values(&wrong).is_err());
    }

    #[test]
    fn exact_targets_give_zero_gradient() {
        let net = tiny(4);
        let s = state(&[[0.2, 0.1], [-0.4, 0.9], [1.0, 0.0]]);
        let q = net.q_values(&s).unwrap();
        let batch = [QSample { state: &s, action: ActionId(1), target: q[1] }];
        let (loss, grads) = net.loss_and_gradients(&batch, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.tensors().iter().all(|(_, t)| t.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn duplicated_batch_matches_single() {
        let net = tiny(5);
        let s = state(&[[0.2, 0.1], [-0.4, 0.9]]);
        let one = [QSample { state: &s, action: ActionId(0), target: 0.7 }];
        let two = [one[0], one[0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (l1, g1) = net.loss_and_gradients(&one, false, &mut rng).unwrap();
        let (l2, g2) = net.loss_and_gradients(&two, false, &mut rng).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for ((_, a), (_, b)) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn nan_target_rejected() {
        let net = tiny(6);
        let s = state(&[[0.2, 0.1]]);
        let batch = [QSample { state: &s, action: ActionId(0), target: f64::NAN }];
        assert!(net.loss_and_gradients(&batch, false, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
