//! Trains a ChatDQN agent on a seeded synthetic corpus and compares greedy
//! evaluation on the training dialogues with held-out ones.

use chatdqn::agent::{evaluate, train, Agent, AgentConfig, EvalOptions};
use chatdqn::clustering::{fit, FitOptions};
use chatdqn::embeddings::embed_text;
use chatdqn::environment::{baseline_bounds, ChatEnvironment};
use chatdqn::synth::{generate, SynthConfig};
use chatdqn::SeededRng;
use rand::SeedableRng;

fn main() -> chatdqn::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10_000);
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
        hidden_dim: 64,
        learn_steps: steps,
        burn_in: 500,
        batch_size: 32,
        target_sync_period: 500,
        ..AgentConfig::default()
    };
    let train_env = ChatEnvironment::new(&world.train, &world.table, &actions, cfg.env_config())?;
    let test_env = ChatEnvironment::new(&world.test, &world.table, &actions, cfg.env_config())?;
    let mut agent = Agent::new(cfg.clone())?;
    let report = train(&mut agent, &train_env, world.train.dialogues())?;
    let bounds = baseline_bounds(world.train.dialogues(), cfg.candidates)?;
    let opts = EvalOptions { seed: 7, episodes: None, max_steps: None };
    let on_train = evaluate(&agent.online, &train_env, world.train.dialogues(), opts)?;
    let on_test = evaluate(&agent.online, &test_env, world.test.dialogues(), opts)?;
    println!("episodes        {}", report.episode_rewards.len());
    println!("final avg       {:.3}", report.final_moving_average().unwrap_or(f64::NAN));
    println!("bounds          {:.3} / {:.3} / {:.3}", bounds.upper, bounds.lower, bounds.random);
    println!("greedy train    {:.3}", on_train.mean_reward);
    println!("greedy test     {:.3}", on_test.mean_reward);
    println!("seconds         {:.1}", report.wall_clock_secs);
    Ok(())
}
