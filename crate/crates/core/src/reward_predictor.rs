//! Regressors that predict a dialogue's episode reward from its first `h`
//! sentence vectors, and the history-length study built on them.
//!
//! Architecture: GRU-1 over the history, batch normalisation of its hidden
//! states (statistics pooled over every valid timestep of the batch), GRU-2,
//! batch normalisation of GRU-2's final state, and a scalar linear head.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::corpus::{distort_dialogue, Corpus};
use crate::embeddings::{embed_text, StateMatrix, WordEmbeddingTable};
use crate::error::{Error, Result};
use crate::neuralnet::{Adam, BatchNorm, BatchNormCache, Dense, GruLayer, GruStepCache, Parameters, Tensor, BN_EPSILON};
use crate::SeededRng;

pub const DEFAULT_HISTORY_LENGTHS: [usize; 6] = [1, 5, 10, 25, 35, 50];
pub const DEFAULT_FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionExample {
    pub history: StateMatrix,
    pub target: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub history_lens: Vec<usize>,
    pub fractions: Vec<f64>,
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub runs: usize,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            history_lens: DEFAULT_HISTORY_LENGTHS.to_vec(),
            fractions: DEFAULT_FRACTIONS.to_vec(),
            hidden_dim: 256,
            batch_size: 32,
            epochs: 20,
            learning_rate: 1e-3,
            runs: 10,
            seed: 0,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_lens.is_empty() || self.history_lens.contains(&0) {
            return Err(Error::invalid("history lengths must be nonempty and >= 1"));
        }
        if self.runs == 0 || self.hidden_dim == 0 || self.batch_size == 0 {
            return Err(Error::invalid("runs, hidden_dim and batch_size must be positive"));
        }
        if self.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid("fractions must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn examples_from<R: Rng + ?Sized>(
    corpus: &Corpus,
    fractions: &[f64],
    rng: &mut R,
    table: &WordEmbeddingTable,
    h: usize,
) -> Result<Vec<RegressionExample>> {
    let mut out = Vec::with_capacity(corpus.len() * fractions.len());
    for d in corpus.dialogues() {
        for &f in fractions {
            let distorted = distort_dialogue(d, f, corpus, rng)?;
            let rows: Vec<Vec<f64>> = distorted
                .turns
                .iter()
                .take(h)
                .map(|t| embed_text(&t.text, table).values)
                .collect();
            out.push(RegressionExample {
                history: StateMatrix::from_rows(&rows, table.dim(), h)?,
                target: distorted.label,
            });
        }
    }
    Ok(out)
}

/// One distorted copy of every dialogue per fraction, embedded up to its
/// first `h` sentences. Distractors come from the dialogue's own partition.
/// The random draws do not depend on `h`, so equal seeds give the same
/// distortions at every history length.
pub fn build_regression_dataset<R: Rng + ?Sized>(
    train: &Corpus,
    test: &Corpus,
    fractions: &[f64],
    rng: &mut R,
    table: &WordEmbeddingTable,
    h: usize,
) -> Result<(Vec<RegressionExample>, Vec<RegressionExample>)> {
    if h == 0 {
        return Err(Error::invalid("history length must be >= 1"));
    }
    let a = examples_from(train, fractions, rng, table, h)?;
    let b = examples_from(test, fractions, rng, table, h)?;
    Ok((a, b))
}

/// GRU + batch-norm scalar regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    pub gru1: GruLayer,
    pub bn1: BatchNorm,
    pub gru2: GruLayer,
    pub bn2: BatchNorm,
    pub head: Dense,
}

/// Batch-norm pass record; single-row batches normalise with the running
/// statistics and treat them as constants.
enum NormPass {
    Batch(BatchNormCache),
    Frozen(Vec<Vec<f64>>),
}

fn norm_train(bn: &mut BatchNorm, x: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, NormPass)> {
    if x.len() >= 2 {
        let (y, cache) = bn.forward_train(x)?;
        return Ok((y, NormPass::Batch(cache)));
    }
    let x_hat: Vec<Vec<f64>> = x
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - bn.running_mean[j]) / (bn.running_var[j] + BN_EPSILON).sqrt())
                .collect()
        })
        .collect();
    Ok((bn.forward_eval(x), NormPass::Frozen(x_hat)))
}

fn norm_backward(bn: &BatchNorm, pass: &NormPass, dy: &[Vec<f64>], grads: &mut BatchNorm) -> Vec<Vec<f64>> {
    match pass {
        NormPass::Batch(cache) => bn.backward(cache, dy, grads),
        NormPass::Frozen(x_hat) => dy
            .iter()
            .zip(x_hat)
            .map(|(d, xh)| {
                (0..d.len())
                    .map(|j| {
                        grads.gamma.data[j] += d[j] * xh[j];
                        grads.beta.data[j] += d[j];
                        d[j] * bn.gamma.data[j] / (bn.running_var[j] + BN_EPSILON).sqrt()
                    })
                    .collect()
            })
            .collect(),
    }
}

impl PredictorModel {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::invalid("network dimensions must be positive"));
        }
        Ok(Self {
            gru1: GruLayer::init(input_dim, hidden_dim, rng),
            bn1: BatchNorm::new(hidden_dim),
            gru2: GruLayer::init(hidden_dim, hidden_dim, rng),
            bn2: BatchNorm::new(hidden_dim),
            head: Dense::init(hidden_dim, 1, rng),
        })
    }

    fn check(&self, s: &StateMatrix) -> Result<()> {
        if s.dim() != self.gru1.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.gru1.input_dim,
                actual: s.dim(),
            });
        }
        if s.filled() == 0 {
            return Err(Error::invalid("empty history"));
        }
        Ok(())
    }

    /// Inference with running batch-norm statistics.
    pub fn predict(&self, s: &StateMatrix) -> Result<f64> {
        self.check(s)?;
        let (h1, _) = self.gru1.forward_seq(s.rows());
        let n1 = self.bn1.forward_eval(&h1);
        let f = self.gru2.forward_last(n1.iter().map(Vec::as_slice));
        let g = self.bn2.forward_eval(&[f]);
        Ok(self.head.forward(&g[0])[0])
    }

    /// Training-mode MSE over `batch` and its gradient. Updates the
    /// batch-norm running statistics as a side effect.
    pub fn loss_and_gradients(&mut self, batch: &[&RegressionExample]) -> Result<(f64, PredictorModel)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        for ex in batch {
            self.check(&ex.history)?;
        }
        let b = batch.len();
        let mut caches1: Vec<Vec<GruStepCache>> = Vec::with_capacity(b);
        let mut pooled = Vec::new();
        let mut lens = Vec::with_capacity(b);
        for ex in batch {
            let (h1, c1) = self.gru1.forward_seq(ex.history.rows());
            lens.push(h1.len());
            pooled.extend(h1);
            caches1.push(c1);
        }
        let (normed, pass1) = norm_train(&mut self.bn1, &pooled)?;

        let mut caches2 = Vec::with_capacity(b);
        let mut finals = Vec::with_capacity(b);
        let mut offset = 0;
        for &len in &lens {
            let (h2, c2) = self.gru2.forward_seq(normed[offset..offset + len].iter().map(Vec::as_slice));
            offset += len;
            finals.push(h2.last().cloned().expect("nonempty history"));
            caches2.push(c2);
        }
        let (g, pass2) = norm_train(&mut self.bn2, &finals)?;

        let mut grads = self.zeros_like();
        let mut loss = 0.0;
        let mut dg = Vec::with_capacity(b);
        for (gi, ex) in g.iter().zip(batch) {
            let err = self.head.forward(gi)[0] - ex.target as f64;
            loss += err * err / b as f64;
            dg.push(self.head.backward(gi, &[2.0 * err / b as f64], &mut grads.head));
        }
        let dfinals = norm_backward(&self.bn2, &pass2, &dg, &mut grads.bn2);

        let mut dnormed = Vec::with_capacity(pooled.len());
        for (c2, df) in caches2.iter().zip(dfinals) {
            let mut d_outs = vec![Vec::new(); c2.len()];
            *d_outs.last_mut().expect("nonempty history") = df;
            dnormed.extend(self.gru2.backward_seq(c2, &d_outs, &mut grads.gru2));
        }
        let dpooled = norm_backward(&self.bn1, &pass1, &dnormed, &mut grads.bn1);
        let mut offset = 0;
        for (c1, &len) in caches1.iter().zip(&lens) {
            self.gru1.backward_seq(c1, &dpooled[offset..offset + len], &mut grads.gru1);
            offset += len;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        grads.check_finite()?;
        Ok((loss, grads))
    }
}

impl Parameters for PredictorModel {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (prefix, layer) in [("gru1", &self.gru1), ("gru2", &self.gru2)] {
            out.extend(layer.tensors().into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)));
        }
        for (prefix, layer) in [("bn1", &self.bn1), ("bn2", &self.bn2)] {
            out.extend(layer.tensors().into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)));
        }
        out.extend(self.head.tensors().into_iter().map(|(n, t)| (format!("head.{n}"), t)));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.gru1.tensors_mut();
        out.extend(self.gru2.tensors_mut());
        out.extend(self.bn1.tensors_mut());
        out.extend(self.bn2.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }
}

/// Minibatch Adam on the MSE loss; shuffles every epoch.
pub fn train_predictor(dataset: &[RegressionExample], cfg: &PredictorConfig, seed: u64) -> Result<PredictorModel> {
    let first = dataset.first().ok_or_else(|| Error::invalid("empty regression dataset"))?;
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut model = PredictorModel::new(first.history.dim(), cfg.hidden_dim, &mut rng)?;
    let mut adam = Adam::new(&model, cfg.learning_rate);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&RegressionExample> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (_, grads) = model.loss_and_gradients(&batch)?;
            adam.update(&mut model, &grads)?;
        }
    }
    Ok(model)
}

pub fn mean_squared_error(model: &PredictorModel, data: &[RegressionExample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    let mut total = 0.0;
    for ex in data {
        total += (model.predict(&ex.history)? - ex.target as f64).powi(2);
    }
    Ok(total / data.len() as f64)
}

/// Sample Pearson correlation. A constant vector against a varying one
/// scores 0; two constant vectors have no defined correlation.
pub fn pearson(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    if y_true.len() < 2 {
        return Err(Error::invalid("pearson needs at least two pairs"));
    }
    let n = y_true.len() as f64;
    let mx = y_true.iter().sum::<f64>() / n;
    let my = y_pred.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in y_true.iter().zip(y_pred) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    match (sxx == 0.0, syy == 0.0) {
        (true, true) => Err(Error::UndefinedCorrelation),
        (true, false) | (false, true) => Ok(0.0),
        _ => Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub h: usize,
    pub scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// For each history length: `runs` predictors with distinct seeds, each
/// scored by Pearson correlation on the test examples.
pub fn history_length_study(
    train: &Corpus,
    test: &Corpus,
    table: &WordEmbeddingTable,
    cfg: &PredictorConfig,
) -> Result<Vec<StudyRow>> {
    cfg.validate()?;
    if cfg.history_lens.len() < 2 {
        return Err(Error::invalid("study needs at least two history lengths"));
    }
    let mut rows = Vec::with_capacity(cfg.history_lens.len());
    for &h in &cfg.history_lens {
        let mut data_rng = SeededRng::seed_from_u64(cfg.seed);
        let (tr, te) = build_regression_dataset(train, test, &cfg.fractions, &mut data_rng, table, h)?;
        let truth: Vec<f64> = te.iter().map(|e| e.target as f64).collect();
        let mut scores = Vec::with_capacity(cfg.runs);
        for run in 0..cfg.runs {
            let model = train_predictor(&tr, cfg, cfg.seed.wrapping_add(1 + run as u64))?;
            let pred = te.iter().map(|e| model.predict(&e.history)).collect::<Result<Vec<_>>>()?;
            scores.push(pearson(&truth, &pred)?);
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let std = if scores.len() > 1 {
            (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (scores.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        rows.push(StudyRow { h, scores, mean, std });
    }
    Ok(rows)
}

/// CSV with columns `h,run,pearson`.
pub fn write_study_csv(rows: &[StudyRow], path: &Path) -> Result<()> {
    let mut out = String::from("h,run,pearson\n");
    for row in rows {
        for (run, r) in row.scores.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", row.h, run, r));
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
