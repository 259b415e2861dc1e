//! Groups whole dialogues by their mean sentence vector into data splits and
//! corrupts one dialogue with distractor sentences.

use chatdqn::clustering::{dialogue_vector, fit, FitOptions};
use chatdqn::corpus::{distort_dialogue, split_corpus};
use chatdqn::synth::{generate, SynthConfig};
use chatdqn::SeededRng;
use rand::SeedableRng;

fn main() -> chatdqn::Result<()> {
    let world = generate(&SynthConfig::default())?;
    let vectors = world
        .train
        .dialogues()
        .iter()
        .map(|d| dialogue_vector(d, &world.table))
        .collect::<chatdqn::Result<Vec<_>>>()?;
    let mut rng = SeededRng::seed_from_u64(0);
    let model = fit(&vectors, 5, &mut rng, FitOptions::default())?;
    for s in split_corpus(&world.train, &model, &world.table)? {
        println!("split {}: {} dialogues", s.split_id, s.dialogue_ids.len());
    }

    let d = &world.train.dialogues()[0];
    let bad = distort_dialogue(d, 0.5, &world.train, &mut rng)?;
    println!("\n{} with half the agent turns replaced (label {})", bad.base_id, bad.label);
    for t in &bad.turns {
        println!("  {:?}: {}", t.speaker, t.text);
    }
    Ok(())
}
