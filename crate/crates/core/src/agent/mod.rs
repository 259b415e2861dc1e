//! ChatDQN: epsilon-greedy selection over candidate clusters, a replay
//! memory, a periodically synchronised target network, and the training
//! and greedy evaluation loops.

mod checkpoint;
mod replay;

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::clustering::ActionId;
use crate::corpus::{Corpus, Dialogue, Speaker};
use crate::embeddings::StateMatrix;
use crate::environment::{CandidateSet, ChatEnvironment, EnvConfig, EnvState, TranscriptEntry};
use crate::error::{Error, Result};
use crate::neuralnet::{Adam, QNetwork, QSample};
use crate::SeededRng;

pub use checkpoint::{config_hash, Checkpoint, CHECKPOINT_VERSION};
pub use replay::{ReplayMemory, Transition};

pub const MOVING_AVERAGE_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Annealing horizon after burn-in; `None` means `learn_steps / 2`.
    pub epsilon_decay_steps: Option<usize>,
    pub burn_in: usize,
    pub batch_size: usize,
    pub memory_size: usize,
    pub target_sync_period: usize,
    pub learn_steps: usize,
    pub test_steps: usize,
    pub candidates: usize,
    pub k: usize,
    pub history_len: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_steps: None,
            burn_in: 3_000,
            batch_size: 128,
            memory_size: 10_000,
            target_sync_period: 10_000,
            learn_steps: 50_000,
            test_steps: 100_000,
            candidates: 3,
            k: 100,
            history_len: 50,
            embedding_dim: 100,
            hidden_dim: 256,
            dropout: 0.2,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if !(0.0..=1.0).contains(&self.epsilon_end)
            || !(0.0..=1.0).contains(&self.epsilon_start)
            || self.epsilon_end > self.epsilon_start
        {
            return bad("need 0 <= epsilon_end <= epsilon_start <= 1");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.burn_in > self.learn_steps {
            return bad("burn_in must not exceed learn_steps");
        }
        if self.batch_size == 0 || self.memory_size == 0 || self.target_sync_period == 0 {
            return bad("batch_size, memory_size and target_sync_period must be positive");
        }
        if self.candidates == 0 || self.k == 0 || self.history_len == 0 || self.hidden_dim == 0 || self.embedding_dim == 0 {
            return bad("candidates, k, history_len, hidden_dim and embedding_dim must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            candidates: self.candidates,
            history_len: self.history_len,
        }
    }

    pub fn decay_steps(&self) -> usize {
        self.epsilon_decay_steps.unwrap_or(self.learn_steps / 2)
    }
}

/// Exploration rate: `epsilon_start` through burn-in, then a linear ramp
/// down to `epsilon_end` over the decay horizon, constant afterwards.
pub fn epsilon_at(step: usize, cfg: &AgentConfig) -> f64 {
    if step <= cfg.burn_in {
        return cfg.epsilon_start;
    }
    let horizon = cfg.decay_steps();
    let t = step - cfg.burn_in;
    if horizon == 0 || t >= horizon {
        return cfg.epsilon_end;
    }
    let frac = t as f64 / horizon as f64;
    cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)
}

/// Epsilon-greedy choice restricted to `candidates`. Q-values are only
/// requested on the greedy branch; ties go to the lowest action id.
fn choose_action<R, F>(qvals: F, candidates: &[ActionId], epsilon: f64, rng: &mut R) -> Result<ActionId>
where
    R: Rng + ?Sized,
    F: FnOnce() -> Result<Vec<f64>>,
{
    if candidates.is_empty() {
        return Err(Error::invalid("empty candidate set"));
    }
    if rng.gen::<f64>() < epsilon {
        return Ok(*candidates.choose(rng).expect("nonempty"));
    }
    let q = qvals()?;
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    let mut best = sorted[0];
    for &a in &sorted[1..] {
        if a.0 >= q.len() || best.0 >= q.len() {
            return Err(Error::invalid(format!("action {a} outside the Q-value range")));
        }
        if q[a.0] > q[best.0] {
            best = a;
        }
    }
    if best.0 >= q.len() {
        return Err(Error::invalid(format!("action {best} outside the Q-value range")));
    }
    Ok(best)
}

pub fn select_action<R: Rng + ?Sized>(qvals: &[f64], candidates: &[ActionId], epsilon: f64, rng: &mut R) -> Result<ActionId> {
    choose_action(|| Ok(qvals.to_vec()), candidates, epsilon, rng)
}

fn max_over(q: &[f64], ids: &[ActionId]) -> f64 {
    ids.iter().map(|a| q[a.0]).fold(f64::NEG_INFINITY, f64::max)
}

/// TD targets: `r` for terminal transitions, otherwise `r + γ · max Q̂`
/// over the next decision's candidate clusters.
pub fn compute_targets(batch: &[&Transition], target: &QNetwork, gamma: f64) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::invalid("empty minibatch"));
    }
    batch
        .iter()
        .map(|t| {
            let y = if t.done || t.candidate_ids_next.is_empty() {
                t.reward
            } else {
                let q = target.q_values(&t.next_state)?;
                t.reward + gamma * max_over(&q, &t.candidate_ids_next)
            };
            if y.is_finite() {
                Ok(y)
            } else {
                Err(Error::NonFinite("td target".into()))
            }
        })
        .collect()
}

/// Learner state: online and target networks, optimiser, replay memory,
/// and the random stream driving exploration and minibatches.
#[derive(Debug, Clone)]
pub struct Agent {
    pub cfg: AgentConfig,
    pub online: QNetwork,
    pub target: QNetwork,
    pub optimizer: Adam,
    pub memory: ReplayMemory,
    pub rng: SeededRng,
    /// Environment steps taken.
    pub steps: usize,
    /// Gradient updates applied.
    pub updates: usize,
    pub syncs: Vec<usize>,
}

impl Agent {
    pub fn new(cfg: AgentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = SeededRng::seed_from_u64(cfg.seed);
        let online = QNetwork::new(cfg.embedding_dim, cfg.hidden_dim, cfg.k, cfg.dropout, &mut rng)?;
        let optimizer = Adam::new(&online, cfg.learning_rate);
        Ok(Self {
            target: online.clone(),
            memory: ReplayMemory::new(cfg.memory_size),
            online,
            optimizer,
            rng,
            steps: 0,
            updates: 0,
            syncs: Vec::new(),
            cfg,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        ck.cfg.validate()?;
        Ok(Self {
            memory: ReplayMemory::new(ck.cfg.memory_size),
            online: ck.online,
            target: ck.target,
            optimizer: ck.optimizer,
            rng: ck.rng,
            steps: ck.steps,
            updates: ck.updates,
            syncs: Vec::new(),
            cfg: ck.cfg,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: config_hash(&self.cfg),
            cfg: self.cfg.clone(),
            online: self.online.clone(),
            target: self.target.clone(),
            optimizer: self.optimizer.clone(),
            rng: self.rng.clone(),
            steps: self.steps,
            updates: self.updates,
        }
    }

    /// One gradient step on the TD loss of `minibatch`; returns the loss.
    pub fn train_step(&mut self, minibatch: &[&Transition]) -> Result<f64> {
        let targets = compute_targets(minibatch, &self.target, self.cfg.gamma)?;
        let samples: Vec<QSample<'_>> = minibatch
            .iter()
            .zip(&targets)
            .map(|(t, &y)| QSample {
                state: &t.state,
                action: t.action,
                target: y,
            })
            .collect();
        let (loss, grads) = self.online.loss_and_gradients(&samples, true, &mut self.rng)?;
        self.optimizer.update(&mut self.online, &grads)?;
        self.updates += 1;
        Ok(loss)
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
        self.syncs.push(self.steps);
    }

    /// Records one environment step: stores the transition, trains once the
    /// memory holds `burn_in` transitions, and syncs every `C` steps.
    pub fn observe(&mut self, transition: Transition) -> Result<Option<f64>> {
        self.memory.push(transition);
        self.steps += 1;
        let mut loss = None;
        if self.memory.len() >= self.cfg.burn_in.max(1) {
            let batch: Vec<Transition> = self
                .memory
                .sample(self.cfg.batch_size, &mut self.rng)
                .into_iter()
                .cloned()
                .collect();
            let refs: Vec<&Transition> = batch.iter().collect();
            loss = Some(self.train_step(&refs)?);
        }
        if self.steps % self.cfg.target_sync_period == 0 {
            self.sync_target();
        }
        Ok(loss)
    }
}

/// Anything that can pick a clustered action for a candidate set.
pub trait Policy {
    fn choose(&mut self, state: &StateMatrix, cands: &CandidateSet, rng: &mut SeededRng) -> Result<ActionId>;
}

/// Greedy policy over a Q-network in evaluation mode.
pub struct GreedyPolicy<'a>(pub &'a QNetwork);

impl Policy for GreedyPolicy<'_> {
    fn choose(&mut self, state: &StateMatrix, cands: &CandidateSet, rng: &mut SeededRng) -> Result<ActionId> {
        choose_action(|| self.0.q_values(state), &cands.unique_actions(), 0.0, rng)
    }
}

/// Always picks the human response's cluster.
pub struct OraclePolicy;

impl Policy for OraclePolicy {
    fn choose(&mut self, _: &StateMatrix, cands: &CandidateSet, _: &mut SeededRng) -> Result<ActionId> {
        Ok(cands.truth_action())
    }
}

/// Uniform over the distinct candidate clusters.
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn choose(&mut self, _: &StateMatrix, cands: &CandidateSet, rng: &mut SeededRng) -> Result<ActionId> {
        Ok(*cands.unique_actions().choose(rng).expect("candidate set is never empty"))
    }
}

/// Per-step record of an evaluated episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub rewards: Vec<i32>,
    /// Number of distinct candidate clusters offered at each step.
    pub distinct_candidates: Vec<usize>,
    pub transcript: Vec<TranscriptEntry>,
}

impl EpisodeTrace {
    pub fn total(&self) -> i64 {
        self.rewards.iter().map(|&r| r as i64).sum()
    }
}

/// Plays one dialogue with `policy`. Candidate sampling uses `cand_rng`;
/// the policy and the wrong-cluster utterance draw from `policy_rng`, so
/// two policies given equal `cand_rng` seeds face identical candidates.
pub fn run_episode<P: Policy + ?Sized>(
    env: &ChatEnvironment<'_>,
    dialogue: &Dialogue,
    policy: &mut P,
    cand_rng: &mut SeededRng,
    policy_rng: &mut SeededRng,
) -> Result<EpisodeTrace> {
    let mut state = env.reset(dialogue)?;
    let mut trace = EpisodeTrace {
        rewards: Vec::new(),
        distinct_candidates: Vec::new(),
        transcript: Vec::new(),
    };
    for (i, text) in state.history.iter().enumerate() {
        trace.transcript.push(TranscriptEntry {
            turn: i,
            speaker: Speaker::Env,
            text: text.clone(),
            action_id: None,
            reward: None,
        });
    }
    while !state.done {
        let cands = env.make_candidates(&state, cand_rng)?;
        let s = env.state_matrix(&state)?;
        let a = policy.choose(&s, &cands, policy_rng)?;
        let before = state.history.len();
        let out = env.step(&mut state, a, &cands, policy_rng)?;
        trace.rewards.push(out.reward);
        trace.distinct_candidates.push(cands.unique_actions().len());
        trace.transcript.push(TranscriptEntry {
            turn: before,
            speaker: Speaker::Agent,
            text: out.uttered,
            action_id: Some(a),
            reward: Some(out.reward),
        });
        for (i, text) in state.history.iter().enumerate().skip(before + 1) {
            trace.transcript.push(TranscriptEntry {
                turn: i,
                speaker: Speaker::Env,
                text: text.clone(),
                action_id: None,
                reward: None,
            });
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub seed: u64,
    /// Episodes to play, cycling through the dialogues in order; `None`
    /// plays each dialogue once.
    pub episodes: Option<usize>,
    /// Optional cap on the total number of agent steps.
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub steps: usize,
    pub mean_reward: f64,
    pub episode_rewards: Vec<f64>,
}

/// Mean episode reward of `policy` over `dialogues`. Episode `i` draws its
/// candidates from stream `i` of the seed, pairing runs across policies.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &mut P,
    env: &ChatEnvironment<'_>,
    dialogues: &[Dialogue],
    opts: EvalOptions,
) -> Result<EvalSummary> {
    if dialogues.is_empty() {
        return Err(Error::invalid("no dialogues to evaluate"));
    }
    let episodes = opts.episodes.unwrap_or(dialogues.len());
    let mut policy_rng = SeededRng::seed_from_u64(opts.seed ^ 0x5eed_0f_a11);
    let mut rewards = Vec::with_capacity(episodes);
    let mut steps = 0;
    for ep in 0..episodes {
        if opts.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
        let mut cand_rng = SeededRng::seed_from_u64(opts.seed);
        cand_rng.set_stream(ep as u64);
        let trace = run_episode(env, &dialogues[ep % dialogues.len()], policy, &mut cand_rng, &mut policy_rng)?;
        steps += trace.rewards.len();
        rewards.push(trace.total() as f64);
    }
    let mean_reward = rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;
    Ok(EvalSummary {
        episodes: rewards.len(),
        steps,
        mean_reward,
        episode_rewards: rewards,
    })
}

/// Greedy (ε = 0, dropout off) evaluation of a trained network.
pub fn evaluate(net: &QNetwork, env: &ChatEnvironment<'_>, dialogues: &[Dialogue], opts: EvalOptions) -> Result<EvalSummary> {
    evaluate_policy(&mut GreedyPolicy(net), env, dialogues, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub episode_rewards: Vec<f64>,
    pub moving_avg: Vec<f64>,
    pub steps: usize,
    pub updates: usize,
    pub target_syncs: usize,
    pub mean_train_eval: Option<f64>,
    pub mean_test_eval: Option<f64>,
    /// Kept out of serialised reports so they stay byte-reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn final_moving_average(&self) -> Option<f64> {
        self.moving_avg.last().copied()
    }
}

/// Trailing mean over at most `window` values ending at each position.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Runs ChatDQN on the dialogues of one split until `learn_steps`
/// environment steps have been taken. Only completed episodes enter the
/// learning curve.
pub fn train(agent: &mut Agent, env: &ChatEnvironment<'_>, split: &[Dialogue]) -> Result<RunReport> {
    if split.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    if env.actions().k != agent.cfg.k || env.table().dim() != agent.cfg.embedding_dim {
        return Err(Error::IncompatibleCheckpoint(format!(
            "environment has k = {}, dim = {}; agent expects k = {}, dim = {}",
            env.actions().k,
            env.table().dim(),
            agent.cfg.k,
            agent.cfg.embedding_dim
        )));
    }
    let started = Instant::now();
    let mut episode_rewards = Vec::new();
    'episodes: while agent.steps < agent.cfg.learn_steps {
        let dialogue = &split[agent.rng.gen_range(0..split.len())];
        let mut state = env.reset(dialogue)?;
        let mut s = Arc::new(env.state_matrix(&state)?);
        let mut cands = env.make_candidates(&state, &mut agent.rng)?;
        let mut total = 0.0;
        loop {
            if agent.steps >= agent.cfg.learn_steps {
                break 'episodes;
            }
            let eps = epsilon_at(agent.steps, &agent.cfg);
            let online = &agent.online;
            let action = choose_action(|| online.q_values(&s), &cands.unique_actions(), eps, &mut agent.rng)?;
            let out = env.step(&mut state, action, &cands, &mut agent.rng)?;
            total += out.reward as f64;
            let next = Arc::new(env.state_matrix(&state)?);
            let next_cands = next_candidates(env, &state, &mut agent.rng)?;
            agent.observe(Transition {
                state: Arc::clone(&s),
                action,
                reward: out.reward as f64,
                next_state: Arc::clone(&next),
                done: out.done,
                candidate_ids_next: next_cands.as_ref().map(CandidateSet::unique_actions).unwrap_or_default(),
            })?;
            match next_cands {
                Some(c) => {
                    s = next;
                    cands = c;
                }
                None => break,
            }
        }
        episode_rewards.push(total);
    }
    Ok(RunReport {
        config_hash: config_hash(&agent.cfg),
        moving_avg: moving_average(&episode_rewards, MOVING_AVERAGE_WINDOW),
        episode_rewards,
        steps: agent.steps,
        updates: agent.updates,
        target_syncs: agent.syncs.len(),
        mean_train_eval: None,
        mean_test_eval: None,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

fn next_candidates(env: &ChatEnvironment<'_>, state: &EnvState<'_>, rng: &mut SeededRng) -> Result<Option<CandidateSet>> {
    if state.done {
        Ok(None)
    } else {
        env.make_candidates(state, rng).map(Some)
    }
}

/// Convenience for callers holding a `Corpus`.
pub fn train_on_corpus(agent: &mut Agent, env: &ChatEnvironment<'_>, split: &Corpus) -> Result<RunReport> {
    train(agent, env, split.dialogues())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> SeededRng {
        SeededRng::seed_from_u64(seed)
    }

    #[test]
    fn greedy_choice_is_restricted_to_candidates() {
        let q = [0.1, 0.9, 0.5];
        let a = select_action(&q, &[ActionId(0), ActionId(2)], 0.0, &mut rng(0)).unwrap();
        assert_eq!(a, ActionId(2));
        let a = select_action(&[1.0, 1.0, 1.0], &[ActionId(2), ActionId(1)], 0.0, &mut rng(0)).unwrap();
        assert_eq!(a, ActionId(1));
        assert!(select_action(&q, &[], 0.1, &mut rng(0)).is_err());
    }

    #[test]
    fn singleton_candidate_ignores_epsilon() {
        let q = vec![0.0; 8];
        for eps in [0.0, 0.3, 1.0] {
            assert_eq!(select_action(&q, &[ActionId(5)], eps, &mut rng(3)).unwrap(), ActionId(5));
        }
    }

    #[test]
    fn full_exploration_is_uniform() {
        let q = [5.0, 0.0, 0.0, 0.0];
        let cands = [ActionId(0), ActionId(1), ActionId(3)];
        let mut r = rng(11);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[select_action(&q, &cands, 1.0, &mut r).unwrap().0] += 1;
        }
        assert_eq!(counts[2], 0);
        for &i in &[0, 1, 3] {
            let f = counts[i] as f64 / n as f64;
            assert!((f - 1.0 / 3.0).abs() < 0.01, "{f}");
        }
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = AgentConfig {
            burn_in: 100,
            learn_steps: 1_000,
            ..AgentConfig::default()
        };
        assert_eq!(epsilon_at(0, &cfg), 1.0);
        assert_eq!(epsilon_at(100, &cfg), 1.0);
        // horizon = 500 steps after burn-in
        assert!((epsilon_at(350, &cfg) - 0.55).abs() < 1e-9);
        assert_eq!(epsilon_at(600, &cfg), 0.1);
        assert_eq!(epsilon_at(10_000, &cfg), 0.1);
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig::default().validate().is_ok());
        let bad = [
            AgentConfig { epsilon_end: 0.5, epsilon_start: 0.2, ..Default::default() },
            AgentConfig { gamma: 0.0, ..Default::default() },
            AgentConfig { burn_in: 60_000, ..Default::default() },
            AgentConfig { dropout: 1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn moving_average_window() {
        let v: Vec<f64> = (1..=5).map(|x| x as f64).collect();
        assert_eq!(moving_average(&v, 2), vec![1.0, 1.5, 2.5, 3.5, 4.5]);
        assert!(moving_average(&[], 100).is_empty());
    }
}
