//! Dialogue corpora: JSONL ingestion, Persona-Chat conversion, dialogue
//! cluster splits, distractor sampling, and distorted dialogues.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{dialogue_vector, ClusterModel};
use crate::embeddings::WordEmbeddingTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Env,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

impl Turn {
    pub fn env(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::Env,
            text: text.into(),
        }
    }

    pub fn agent(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::Agent,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// Builds a dialogue from alternating utterances, env speaking first.
    pub fn from_utterances<S: Into<String>>(id: impl Into<String>, utterances: impl IntoIterator<Item = S>) -> Result<Self> {
        let turns = utterances
            .into_iter()
            .enumerate()
            .map(|(i, t)| if i % 2 == 0 { Turn::env(t) } else { Turn::agent(t) })
            .collect();
        let d = Self { id: id.into(), turns };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::CorpusParse {
            line: 0,
            id: Some(self.id.clone()),
            reason,
        };
        if self.turns.len() < 2 {
            return Err(fail(format!("dialogue needs at least 2 turns, has {}", self.turns.len())));
        }
        for (i, t) in self.turns.iter().enumerate() {
            if t.text.trim().is_empty() {
                return Err(fail(format!("turn {i} has empty text")));
            }
            let expected = if i % 2 == 0 { Speaker::Env } else { Speaker::Agent };
            if t.speaker != expected {
                return Err(fail(format!("turn {i}: speakers must alternate starting with env")));
            }
        }
        Ok(())
    }

    pub fn agent_turns(&self) -> usize {
        self.turns.iter().filter(|t| t.speaker == Speaker::Agent).count()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.turns.iter().map(|t| t.text.as_str())
    }
}

/// Immutable set of validated dialogues with a flat sentence index.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    dialogues: Vec<Dialogue>,
    by_id: HashMap<String, usize>,
    /// Start offset of each dialogue's turns in the flat sentence index.
    offsets: Vec<usize>,
    total_turns: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusStats {
    pub dialogues: usize,
    pub turns: usize,
    pub mean_turns: f64,
}

impl Corpus {
    pub fn new(dialogues: Vec<Dialogue>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(dialogues.len());
        let mut offsets = Vec::with_capacity(dialogues.len());
        let mut total = 0;
        for (i, d) in dialogues.iter().enumerate() {
            d.validate()?;
            if by_id.insert(d.id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate dialogue id {:?}", d.id)));
            }
            offsets.push(total);
            total += d.turns.len();
        }
        Ok(Self {
            dialogues,
            by_id,
            offsets,
            total_turns: total,
        })
    }

    pub fn dialogues(&self) -> &[Dialogue] {
        &self.dialogues
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Dialogue> {
        self.by_id.get(id).map(|&i| &self.dialogues[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            dialogues: self.len(),
            turns: self.total_turns,
            mean_turns: if self.is_empty() {
                0.0
            } else {
                self.total_turns as f64 / self.len() as f64
            },
        }
    }

    /// New corpus holding only the listed dialogues, in the given order.
    pub fn subset(&self, ids: &[String]) -> Result<Corpus> {
        let picked = ids
            .iter()
            .map(|id| {
                self.get(id)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("unknown dialogue id {id:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(picked)
    }

    fn sentence_at(&self, flat: usize) -> &str {
        let d = self.offsets.partition_point(|&o| o <= flat) - 1;
        &self.dialogues[d].turns[flat - self.offsets[d]].text
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for d in &self.dialogues {
            out.push_str(&serde_json::to_string(d)?);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Reads a JSONL corpus, one `{id, turns: [{speaker, text}]}` per line.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

pub fn parse_corpus(text: &str) -> Result<Corpus> {
    let mut dialogues = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::CorpusParse {
            line: line_no,
            id: None,
            reason: format!("malformed JSON: {e}"),
        })?;
        let id = value.get("id").and_then(|v| v.as_str()).map(String::from);
        let d: Dialogue = serde_json::from_value(value).map_err(|e| Error::CorpusParse {
            line: line_no,
            id: id.clone(),
            reason: e.to_string(),
        })?;
        d.validate().map_err(|e| match e {
            Error::CorpusParse { id, reason, .. } => Error::CorpusParse {
                line: line_no,
                id,
                reason,
            },
            other => other,
        })?;
        dialogues.push(d);
    }
    Corpus::new(dialogues)
}

/// Converts a Persona-Chat text export (`N partner\tself\t...` lines with
/// numbering restarting at 1 per dialogue) into dialogues. Persona lines
/// and `__SILENCE__` placeholders are dropped; the remaining utterances
/// alternate env/agent in their original order.
pub fn parse_personachat(text: &str, id_prefix: &str) -> Result<Vec<Dialogue>> {
    let mut dialogues = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let flush = |current: &mut Vec<String>, dialogues: &mut Vec<Dialogue>| -> Result<()> {
        if current.len() >= 2 {
            let id = format!("{id_prefix}-{}", dialogues.len());
            dialogues.push(Dialogue::from_utterances(id, current.drain(..))?);
        }
        current.clear();
        Ok(())
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (num, rest) = line.split_once(' ').ok_or_else(|| Error::CorpusParse {
            line: i + 1,
            id: None,
            reason: "expected a leading turn number".into(),
        })?;
        let num: usize = num.parse().map_err(|_| Error::CorpusParse {
            line: i + 1,
            id: None,
            reason: format!("bad turn number {num:?}"),
        })?;
        if num == 1 {
            flush(&mut current, &mut dialogues)?;
        }
        if rest.starts_with("your persona:") || rest.starts_with("partner's persona:") {
            continue;
        }
        for utt in rest.split('\t').take(2) {
            let utt = utt.trim();
            if !utt.is_empty() && utt != "__SILENCE__" {
                current.push(utt.to_string());
            }
        }
    }
    flush(&mut current, &mut dialogues)?;
    Ok(dialogues)
}

/// One dialogue-cluster subset of the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub split_id: usize,
    pub dialogue_ids: Vec<String>,
}

/// Assigns every dialogue to the split of its nearest dialogue centroid.
pub fn split_corpus(corpus: &Corpus, model: &ClusterModel, table: &WordEmbeddingTable) -> Result<Vec<DataSplit>> {
    let mut splits: Vec<DataSplit> = (0..model.k)
        .map(|split_id| DataSplit {
            split_id,
            dialogue_ids: Vec::new(),
        })
        .collect();
    for d in corpus.dialogues() {
        let v = dialogue_vector(d, table)?;
        splits[model.assign(&v)?.0].dialogue_ids.push(d.id.clone());
    }
    Ok(splits)
}

pub fn save_splits(splits: &[DataSplit], path: &Path) -> Result<()> {
    let map: BTreeMap<String, &Vec<String>> = splits
        .iter()
        .map(|s| (s.split_id.to_string(), &s.dialogue_ids))
        .collect();
    fs::write(path, serde_json::to_string_pretty(&map)?).map_err(|e| Error::io(path, e))
}

pub fn load_splits(path: &Path) -> Result<Vec<DataSplit>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let map: BTreeMap<String, Vec<String>> = serde_json::from_str(&text)?;
    let mut splits = map
        .into_iter()
        .map(|(k, ids)| {
            let split_id = k
                .parse()
                .map_err(|_| Error::Format(format!("split id {k:?} is not an integer")))?;
            Ok(DataSplit {
                split_id,
                dialogue_ids: ids,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    splits.sort_by_key(|s| s.split_id);
    Ok(splits)
}

/// Draws `n` distinct sentences uniformly from the turns of every dialogue
/// except `exclude_id`.
pub fn sample_distractors<R: Rng + ?Sized>(corpus: &Corpus, exclude_id: &str, n: usize, rng: &mut R) -> Result<Vec<String>> {
    if corpus.len() < 2 {
        return Err(Error::invalid("distractor sampling needs at least 2 dialogues"));
    }
    if n == 0 {
        return Err(Error::invalid("distractor count must be at least 1"));
    }
    let (skip_start, skip_len) = match corpus.index_of(exclude_id) {
        Some(i) => (corpus.offsets[i], corpus.dialogues[i].turns.len()),
        None => (0, 0),
    };
    let pool = corpus.total_turns - skip_len;
    if n > pool {
        return Err(Error::NotEnoughCandidates {
            requested: n,
            available: pool,
        });
    }
    Ok(index::sample(rng, pool, n)
        .into_iter()
        .map(|j| {
            let flat = if j >= skip_start { j + skip_len } else { j };
            corpus.sentence_at(flat).to_string()
        })
        .collect())
}

/// A dialogue with some agent turns swapped for sentences from elsewhere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistortedDialogue {
    pub base_id: String,
    pub turns: Vec<Turn>,
    /// One flag per agent turn, in order.
    pub replaced_mask: Vec<bool>,
    pub label: i64,
}

/// Label of a distortion mask: kept agent turns minus replaced ones.
pub fn distortion_label(mask: &[bool]) -> i64 {
    mask.iter().map(|&r| if r { -1 } else { 1 }).sum()
}

/// Replaces `ceil(fraction * agent_turns)` agent turns, chosen uniformly
/// without replacement, with distractors from other dialogues.
pub fn distort_dialogue<R: Rng + ?Sized>(d: &Dialogue, fraction: f64, corpus: &Corpus, rng: &mut R) -> Result<DistortedDialogue> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("replace fraction {fraction} outside [0, 1]")));
    }
    let agent_positions: Vec<usize> = d
        .turns
        .iter()
        .enumerate()
        .filter(|(_, t)| t.speaker == Speaker::Agent)
        .map(|(i, _)| i)
        .collect();
    let n_agent = agent_positions.len();
    // guard against 0.3 * 10 = 3.0000000000000004
    let n_replace = ((fraction * n_agent as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut mask = vec![false; n_agent];
    let mut turns = d.turns.clone();
    if n_replace > 0 {
        let chosen = index::sample(rng, n_agent, n_replace).into_vec();
        let fillers = sample_distractors(corpus, &d.id, n_replace, rng)?;
        for (slot, text) in chosen.into_iter().zip(fillers) {
            mask[slot] = true;
            turns[agent_positions[slot]].text = text;
        }
    }
    Ok(DistortedDialogue {
        base_id: d.id.clone(),
        turns,
        label: distortion_label(&mask),
        replaced_mask: mask,
    })
}
