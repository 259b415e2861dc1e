//! Seeded toy dialogue worlds for desk-scale experiments.
//!
//! Every dialogue has a topic. Words carry a topic direction or a speaker
//! role direction in embedding space, so mean sentence vectors cluster by
//! (topic, role). Env turns always stay on topic; each agent turn stays on
//! topic with probability `coherence` and otherwise borrows another topic,
//! which gives each dialogue idiosyncrasies that only memorisation recovers.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialogue};
use crate::embeddings::WordEmbeddingTable;
use crate::error::Result;
use crate::SeededRng;

const TOPICS: &[(&str, &[&str])] = &[
    ("music", &["guitar", "songs", "concert", "piano", "band", "jazz"]),
    ("food", &["pizza", "pasta", "cooking", "spicy", "bakery", "noodles"]),
    ("sports", &["soccer", "tennis", "running", "gym", "match", "team"]),
    ("travel", &["beach", "flights", "mountains", "paris", "hotel", "trips"]),
    ("pets", &["dog", "cat", "puppy", "kitten", "parrot", "walks"]),
    ("work", &["office", "boss", "meetings", "salary", "career", "shift"]),
    ("movies", &["film", "actor", "cinema", "comedy", "horror", "sequel"]),
    ("books", &["novel", "library", "author", "poetry", "chapter", "reading"]),
    ("garden", &["flowers", "tomatoes", "roses", "soil", "seeds", "lawn"]),
    ("tech", &["laptop", "phone", "coding", "robots", "games", "apps"]),
    ("family", &["kids", "parents", "sister", "wedding", "cousins", "home"]),
    ("weather", &["rain", "snow", "sunny", "winter", "storm", "summer"]),
];

const ENV_WORDS: &[&str] = &["do", "you", "like", "what", "about", "how", "ever", "tell", "me"];
const AGENT_WORDS: &[&str] = &["i", "love", "my", "really", "yes", "think", "enjoy", "favorite", "always"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub topics: usize,
    pub dim: usize,
    /// Distinct sentences generated per (topic, role).
    pub sentences_per_role: usize,
    pub min_turns: usize,
    pub max_turns: usize,
    /// Probability an agent turn stays on the dialogue's topic.
    pub coherence: f64,
    pub train_dialogues: usize,
    pub test_dialogues: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            topics: 8,
            dim: 16,
            sentences_per_role: 8,
            min_turns: 6,
            max_turns: 10,
            coherence: 0.8,
            train_dialogues: 100,
            test_dialogues: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub table: WordEmbeddingTable,
    pub train: Corpus,
    pub test: Corpus,
}

fn unit_vector(rng: &mut SeededRng, dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / norm).collect()
}

fn jitter(base: &[f64], scale: f64, rng: &mut SeededRng) -> Vec<f64> {
    let normal = Normal::new(0.0, scale).expect("valid normal");
    base.iter().map(|b| b + normal.sample(rng)).collect()
}

/// Word vectors only. Drawn from their own stream, so worlds that differ
/// only in `dim` share the same dialogues.
pub fn embedding_table(cfg: &SynthConfig) -> Result<WordEmbeddingTable> {
    let topics = cfg.topics.clamp(1, TOPICS.len());
    let mut rng = SeededRng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut table = WordEmbeddingTable::new(cfg.dim)?;
    let env_dir = unit_vector(&mut rng, cfg.dim);
    let agent_dir = unit_vector(&mut rng, cfg.dim);
    for w in ENV_WORDS {
        table.insert(w, jitter(&env_dir, 0.15, &mut rng))?;
    }
    for w in AGENT_WORDS {
        table.insert(w, jitter(&agent_dir, 0.15, &mut rng))?;
    }
    for (_, words) in &TOPICS[..topics] {
        let centre = unit_vector(&mut rng, cfg.dim);
        for w in *words {
            table.insert(w, jitter(&centre, 0.15, &mut rng))?;
        }
    }
    Ok(table)
}

pub fn generate(cfg: &SynthConfig) -> Result<SyntheticWorld> {
    let topics = cfg.topics.clamp(1, TOPICS.len());
    let table = embedding_table(cfg)?;
    let mut rng = SeededRng::seed_from_u64(cfg.seed);

    // sentence pools per topic: [env, agent]
    let mut pools: Vec<[Vec<String>; 2]> = Vec::with_capacity(topics);
    for (_, words) in &TOPICS[..topics] {
        let mut make = |role_words: &[&str], suffix: &str| -> Vec<String> {
            (0..cfg.sentences_per_role)
                .map(|_| {
                    let mut toks: Vec<&str> = role_words.choose_multiple(&mut rng, 2).copied().collect();
                    toks.extend(words.choose_multiple(&mut rng, 2).copied());
                    toks.shuffle(&mut rng);
                    format!("{}{suffix}", toks.join(" "))
                })
                .collect()
        };
        let env = make(ENV_WORDS, " ?");
        let agent = make(AGENT_WORDS, " .");
        pools.push([env, agent]);
    }

    let dialogue = |id: String, rng: &mut SeededRng| -> Result<Dialogue> {
        let topic = rng.gen_range(0..topics);
        let n = rng.gen_range(cfg.min_turns.max(2)..=cfg.max_turns.max(cfg.min_turns.max(2)));
        let utterances: Vec<String> = (0..n)
            .map(|i| {
                let role = i % 2;
                let t = if role == 1 && topics > 1 && rng.gen::<f64>() >= cfg.coherence {
                    let other = rng.gen_range(0..topics - 1);
                    if other >= topic {
                        other + 1
                    } else {
                        other
                    }
                } else {
                    topic
                };
                pools[t][role].choose(rng).expect("nonempty pool").clone()
            })
            .collect();
        Dialogue::from_utterances(id, utterances)
    };
    let train = (0..cfg.train_dialogues)
        .map(|i| dialogue(format!("train-{i}"), &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let test = (0..cfg.test_dialogues)
        .map(|i| dialogue(format!("test-{i}"), &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticWorld {
        table,
        train: Corpus::new(train)?,
        test: Corpus::new(test)?,
    })
}
