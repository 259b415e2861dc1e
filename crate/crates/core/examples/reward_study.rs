//! History-length study: how well GRU regressors predict the reward of
//! distorted dialogues from their first `h` sentences.

use chatdqn::reward_predictor::{history_length_study, write_study_csv, PredictorConfig};
use chatdqn::synth::{generate, SynthConfig};

fn main() -> chatdqn::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "study.csv".into());
    let world = generate(&SynthConfig {
        coherence: 1.0,
        train_dialogues: 400,
        test_dialogues: 100,
        ..SynthConfig::default()
    })?;
    let cfg = PredictorConfig {
        hidden_dim: 16,
        epochs: 15,
        learning_rate: 3e-3,
        ..PredictorConfig::default()
    };
    let started = std::time::Instant::now();
    let rows = history_length_study(&world.train, &world.test, &world.table, &cfg)?;
    for row in &rows {
        println!("h = {:>2}   r = {:.3} ± {:.3}", row.h, row.mean, row.std);
    }
    write_study_csv(&rows, out.as_ref())?;
    println!("wrote {out} in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
