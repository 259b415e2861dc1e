//! Trains a small agent, then drives the chat loop with scripted input and
//! writes the learning curve next to the transcript.

use std::io::Cursor;

use chatdqn::agent::{train, Agent, AgentConfig};
use chatdqn::chat::chat_repl;
use chatdqn::clustering::{fit, FitOptions};
use chatdqn::embeddings::embed_text;
use chatdqn::environment::ChatEnvironment;
use chatdqn::plot::{learning_curve_csv, learning_curve_svg};
use chatdqn::synth::{generate, SynthConfig};
use chatdqn::SeededRng;
use rand::SeedableRng;

fn main() -> chatdqn::Result<()> {
    let out = std::env::temp_dir().join("chatdqn-chat-example");
    std::fs::create_dir_all(&out).map_err(|e| chatdqn::Error::io(&out, e))?;
    let world = generate(&SynthConfig::default())?;
    let vectors: Vec<Vec<f64>> = world
        .train
        .dialogues()
        .iter()
        .flat_map(|d| d.texts().map(|t| embed_text(t, &world.table).values).collect::<Vec<_>>())
        .collect();
    let actions = fit(&vectors, 20, &mut SeededRng::seed_from_u64(0), FitOptions::default())?;
    let cfg = AgentConfig {
        k: 20,
        embedding_dim: world.table.dim(),
        hidden_dim: 32,
        learn_steps: 2_000,
        burn_in: 300,
        batch_size: 32,
        target_sync_period: 500,
        ..AgentConfig::default()
    };
    let env = ChatEnvironment::new(&world.train, &world.table, &actions, cfg.env_config())?;
    let mut agent = Agent::new(cfg)?;
    let report = train(&mut agent, &env, world.train.dialogues())?;

    let script = "do you like jazz ?\nwhat about the beach ?\n:quit\n";
    let transcript = out.join("chat.jsonl");
    let mut rng = SeededRng::seed_from_u64(1);
    chat_repl(&agent.online, &env, Cursor::new(script), std::io::stdout(), &transcript, &mut rng)?;

    let rewards: Vec<f64> = report.episode_rewards.iter().map(|&r| r as f64).collect();
    for (name, body) in [("curve.csv", learning_curve_csv(&rewards)), ("curve.svg", learning_curve_svg(&rewards))] {
        let p = out.join(name);
        std::fs::write(&p, body).map_err(|e| chatdqn::Error::io(&p, e))?;
    }
    println!("\nwrote {}", out.display());
    Ok(())
}
