//! The dialogue environment the agent acts in.
//!
//! An episode replays one human-human dialogue. At each agent turn the
//! environment offers the true human response mixed with sentences drawn
//! from other dialogues; the agent picks a sentence cluster and earns +1 if
//! it is the cluster of the human response, −1 otherwise. The partner's
//! reply always follows the original script.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{ActionId, ClusterModel};
use crate::corpus::{sample_distractors, Corpus, Dialogue, Speaker};
use crate::embeddings::{embed_text, StateMatrix, WordEmbeddingTable, DEFAULT_HISTORY_LEN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Candidate responses per turn, the human one included.
    pub candidates: usize,
    pub history_len: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            candidates: 3,
            history_len: DEFAULT_HISTORY_LEN,
        }
    }
}

/// Episode state: the dialogue being replayed and the history so far.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState<'d> {
    pub dialogue: &'d Dialogue,
    pub history: Vec<String>,
    history_vectors: Vec<Vec<f64>>,
    /// Index of the next agent turn in `dialogue.turns`.
    pub turn_index: usize,
    pub done: bool,
}

impl EnvState<'_> {
    pub fn dialogue_id(&self) -> &str {
        &self.dialogue.id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub sentences: Vec<String>,
    pub truth_index: usize,
    pub action_ids: Vec<ActionId>,
}

impl CandidateSet {
    pub fn truth_action(&self) -> ActionId {
        self.action_ids[self.truth_index]
    }

    /// Distinct candidate clusters, ascending.
    pub fn unique_actions(&self) -> Vec<ActionId> {
        let mut ids = self.action_ids.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: i32,
    pub done: bool,
    /// Sentence appended to the history on the agent's behalf.
    pub uttered: String,
}

/// One line of a transcript dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub turn: usize,
    pub speaker: Speaker,
    pub text: String,
    pub action_id: Option<ActionId>,
    pub reward: Option<i32>,
}

pub fn write_transcript(entries: &[TranscriptEntry], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for e in entries {
        let line = serde_json::to_string(e)?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Environment over a distractor pool, an embedding table, and the
/// sentence clustering that defines the action set.
pub struct ChatEnvironment<'a> {
    pool: &'a Corpus,
    table: &'a WordEmbeddingTable,
    actions: &'a ClusterModel,
    cfg: EnvConfig,
    cache: HashMap<String, (Vec<f64>, ActionId)>,
}

impl<'a> ChatEnvironment<'a> {
    /// Distractors are drawn from `pool`. Sentence vectors and clusters of
    /// every pool sentence are computed once up front.
    pub fn new(pool: &'a Corpus, table: &'a WordEmbeddingTable, actions: &'a ClusterModel, cfg: EnvConfig) -> Result<Self> {
        if cfg.candidates == 0 {
            return Err(Error::invalid("candidate set size must be at least 1"));
        }
        if cfg.history_len == 0 {
            return Err(Error::invalid("history length must be at least 1"));
        }
        if actions.dim != table.dim() {
            return Err(Error::DimensionMismatch {
                expected: table.dim(),
                actual: actions.dim,
            });
        }
        let mut env = Self {
            pool,
            table,
            actions,
            cfg,
            cache: HashMap::new(),
        };
        for d in pool.dialogues() {
            for t in &d.turns {
                if !env.cache.contains_key(&t.text) {
                    let v = embed_text(&t.text, table).values;
                    let a = actions.assign(&v)?;
                    env.cache.insert(t.text.clone(), (v, a));
                }
            }
        }
        Ok(env)
    }

    pub fn config(&self) -> EnvConfig {
        self.cfg
    }

    pub fn actions(&self) -> &ClusterModel {
        self.actions
    }

    pub fn table(&self) -> &WordEmbeddingTable {
        self.table
    }

    pub fn pool(&self) -> &'a Corpus {
        self.pool
    }

    /// Sentence vector and cluster of a sentence.
    pub fn encode(&self, text: &str) -> Result<(Vec<f64>, ActionId)> {
        match self.cache.get(text) {
            Some((v, a)) => Ok((v.clone(), *a)),
            None => {
                let v = embed_text(text, self.table).values;
                let a = self.actions.assign(&v)?;
                Ok((v, a))
            }
        }
    }

    pub fn reset<'d>(&self, d: &'d Dialogue) -> Result<EnvState<'d>> {
        d.validate()?;
        let first_agent = d
            .turns
            .iter()
            .position(|t| t.speaker == Speaker::Agent)
            .ok_or_else(|| Error::invalid(format!("dialogue {} has no agent turn", d.id)))?;
        let mut history = Vec::new();
        let mut history_vectors = Vec::new();
        for t in &d.turns[..first_agent] {
            history.push(t.text.clone());
            history_vectors.push(self.encode(&t.text)?.0);
        }
        Ok(EnvState {
            dialogue: d,
            history,
            history_vectors,
            turn_index: first_agent,
            done: false,
        })
    }

    /// Embedding of the most recent `history_len` sentences.
    pub fn state_matrix(&self, state: &EnvState<'_>) -> Result<StateMatrix> {
        StateMatrix::from_rows(&state.history_vectors, self.table.dim(), self.cfg.history_len)
    }

    /// The human response plus `candidates − 1` distractors, shuffled.
    pub fn make_candidates<R: Rng + ?Sized>(&self, state: &EnvState<'_>, rng: &mut R) -> Result<CandidateSet> {
        if state.done {
            return Err(Error::invalid("episode already finished"));
        }
        let truth = state.dialogue.turns[state.turn_index].text.clone();
        let mut sentences = vec![truth.clone()];
        if self.cfg.candidates > 1 {
            sentences.extend(sample_distractors(self.pool, &state.dialogue.id, self.cfg.candidates - 1, rng)?);
        }
        let mut order: Vec<usize> = (0..sentences.len()).collect();
        order.shuffle(rng);
        let sentences: Vec<String> = order.iter().map(|&i| sentences[i].clone()).collect();
        let truth_index = order.iter().position(|&i| i == 0).expect("truth present");
        let action_ids = sentences
            .iter()
            .map(|s| self.encode(s).map(|(_, a)| a))
            .collect::<Result<Vec<_>>>()?;
        Ok(CandidateSet {
            sentences,
            truth_index,
            action_ids,
        })
    }

    /// Executes a clustered action. Choosing the human response's cluster
    /// earns +1 and utters the human response; any other candidate cluster
    /// earns −1 and utters a random candidate from that cluster. The
    /// partner's scripted reply is then appended when the dialogue has one.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &mut EnvState<'_>,
        chosen: ActionId,
        cands: &CandidateSet,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        if state.done {
            return Err(Error::invalid("episode already finished"));
        }
        let members: Vec<usize> = (0..cands.sentences.len())
            .filter(|&i| cands.action_ids[i] == chosen)
            .collect();
        if members.is_empty() {
            return Err(Error::invalid(format!("action {chosen} is not among the candidate clusters")));
        }
        let (reward, uttered) = if chosen == cands.truth_action() {
            (1, cands.sentences[cands.truth_index].clone())
        } else {
            let pick = *members.choose(rng).expect("nonempty");
            (-1, cands.sentences[pick].clone())
        };
        let vector = self.encode(&uttered)?.0;
        state.history.push(uttered.clone());
        state.history_vectors.push(vector);

        let turns = &state.dialogue.turns;
        let mut next = state.turn_index + 1;
        while next < turns.len() && turns[next].speaker == Speaker::Env {
            state.history.push(turns[next].text.clone());
            state.history_vectors.push(self.encode(&turns[next].text)?.0);
            next += 1;
        }
        state.turn_index = next;
        state.done = next >= turns.len();
        Ok(StepOutcome {
            reward,
            done: state.done,
            uttered,
        })
    }
}

pub fn episode_reward(rewards: &[i32]) -> i64 {
    rewards.iter().map(|&r| r as i64).sum()
}

/// Best-case, worst-case, and uniform-random mean episode rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub upper: f64,
    pub lower: f64,
    pub random: f64,
}

/// The random expectation assumes exactly one correct candidate out of
/// `candidates` distinct clusters per turn.
pub fn baseline_bounds(dialogues: &[Dialogue], candidates: usize) -> Result<Bounds> {
    if dialogues.is_empty() {
        return Err(Error::invalid("baseline bounds need at least one dialogue"));
    }
    if candidates == 0 {
        return Err(Error::invalid("candidate set size must be at least 1"));
    }
    let n = dialogues.len() as f64;
    let turns: f64 = dialogues.iter().map(|d| d.agent_turns() as f64).sum::<f64>() / n;
    Ok(Bounds {
        upper: turns,
        lower: -turns,
        random: turns * (2.0 / candidates as f64 - 1.0),
    })
}
