mod common;

use chatdqn::clustering::ActionId;
use chatdqn::embeddings::StateMatrix;
use chatdqn::neuralnet::{QNetwork, QSample};
use common::{qnet_max_relative_error, rng};
use rand::Rng;

fn random_state(r: &mut chatdqn::SeededRng, dim: usize, len: usize, max_len: usize) -> StateMatrix {
    let rows: Vec<Vec<f64>> = (0..len).map(|_| (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    StateMatrix::from_rows(&rows, dim, max_len).unwrap()
}

#[test]
fn qnet_gradients_match_central_differences() {
    for (seed, dim, hidden, k, len) in [(1, 2, 3, 2, 3), (2, 3, 4, 3, 5), (3, 1, 2, 4, 1)] {
        let mut r = rng(seed);
        let mut net = QNetwork::new(dim, hidden, k, 0.0, &mut r).unwrap();
        for b in [&mut net.gru1.b_z, &mut net.gru1.b_r, &mut net.gru2.b_h, &mut net.head.bias] {
            b.data.iter_mut().for_each(|v| *v = r.gen_range(-0.5..0.5));
        }
        let states: Vec<StateMatrix> = (0..k).map(|i| random_state(&mut r, dim, len.max(i + 1).min(len + 1), len + 1)).collect();
        let batch: Vec<QSample<'_>> = states
            .iter()
            .enumerate()
            .map(|(i, s)| QSample {
                state: s,
                action: ActionId(i % k),
                target: r.gen_range(-2.0..2.0),
            })
            .collect();
        let (worst, at) = qnet_max_relative_error(&net, &batch, 1e-5);
        assert!(worst < 1e-4, "seed {seed}: relative error {worst} at {at}");
    }
}
