#![allow(dead_code)]

use chatdqn::clustering::ClusterModel;
use chatdqn::corpus::{Corpus, Dialogue};
use chatdqn::embeddings::{parse_embeddings, WordEmbeddingTable};
use chatdqn::neuralnet::{Parameters, QNetwork, QSample};
use chatdqn::SeededRng;
use rand::SeedableRng;

/// Every sentence is a distinct one-word utterance sitting on its own
/// cluster centroid, so candidate clusters never collide by construction
/// unless two sampled sentences coincide.
pub fn unique_word_world(dialogues: usize, turns: usize) -> (Corpus, WordEmbeddingTable, ClusterModel) {
    let n = dialogues * turns;
    let mut table_text = String::new();
    for i in 0..n {
        table_text.push_str(&format!("w{i} {}\n", i as f64));
    }
    let table = parse_embeddings(&table_text, 1).unwrap();
    let model = ClusterModel::from_centroids((0..n).map(|i| vec![i as f64]).collect()).unwrap();
    let ds = (0..dialogues)
        .map(|d| Dialogue::from_utterances(format!("d{d}"), (0..turns).map(|t| format!("w{}", d * turns + t))).unwrap())
        .collect();
    (Corpus::new(ds).unwrap(), table, model)
}

pub fn rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Largest relative error between analytic and central-difference
/// gradients of the evaluation-mode TD loss, over every parameter.
pub fn qnet_max_relative_error(net: &QNetwork, batch: &[QSample<'_>], eps: f64) -> (f64, String) {
    let (_, grads) = net.loss_and_gradients(batch, false, &mut rng(0)).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads.tensors().into_iter().map(|(n, t)| (n, t.data.clone())).collect();
    let mut worst = (0.0, String::new());
    for (ti, (name, g)) in analytic.iter().enumerate() {
        for i in 0..g.len() {
            let loss_at = |delta: f64| {
                let mut m = net.clone();
                m.tensors_mut()[ti].data[i] += delta;
                m.loss_and_gradients(batch, false, &mut rng(0)).unwrap().0
            };
            let fd = (loss_at(eps) - loss_at(-eps)) / (2.0 * eps);
            let scale = fd.abs().max(g[i].abs());
            let rel = if scale == 0.0 { 0.0 } else { (fd - g[i]).abs() / scale };
            if rel > worst.0 {
                worst = (rel, format!("{name}[{i}] analytic {} numeric {fd}", g[i]));
            }
        }
    }
    worst
}
