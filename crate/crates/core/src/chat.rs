//! Interactive inspection of a trained policy.
//!
//! Each user line joins the history. The tool draws a candidate set from
//! the pool, prints all `k` Q-values with candidate clusters marked, and
//! utters a candidate from the greedy cluster.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::index;

use crate::clustering::ActionId;
use crate::corpus::Speaker;
use crate::embeddings::embed_history;
use crate::environment::{write_transcript, ChatEnvironment, TranscriptEntry};
use crate::error::{Error, Result};
use crate::neuralnet::QNetwork;
use crate::SeededRng;

pub const QUIT: &str = ":quit";

fn flat_sentences<'a>(env: &ChatEnvironment<'a>) -> Vec<&'a str> {
    env.pool().dialogues().iter().flat_map(|d| d.texts()).collect()
}

/// Runs until `:quit` or end of input, then writes the transcript as JSONL.
pub fn chat_repl<R: BufRead, W: Write>(
    net: &QNetwork,
    env: &ChatEnvironment<'_>,
    input: R,
    mut output: W,
    transcript: &Path,
    rng: &mut SeededRng,
) -> Result<Vec<TranscriptEntry>> {
    let io = |e| Error::io("<terminal>", e);
    let pool = flat_sentences(env);
    let c = env.config().candidates;
    if pool.len() < c {
        return Err(Error::NotEnoughCandidates {
            requested: c,
            available: pool.len(),
        });
    }
    let mut history: Vec<String> = Vec::new();
    let mut entries = Vec::new();
    let mut lines = input.lines();
    loop {
        write!(output, "you> ").map_err(io)?;
        output.flush().map_err(io)?;
        let line = match lines.next() {
            Some(l) => l.map_err(io)?,
            None => break,
        };
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text == QUIT {
            break;
        }
        entries.push(TranscriptEntry {
            turn: history.len(),
            speaker: Speaker::Env,
            text: text.to_string(),
            action_id: None,
            reward: None,
        });
        history.push(text.to_string());

        let state = embed_history(&history, env.table(), env.config().history_len)?;
        let sentences: Vec<String> = index::sample(rng, pool.len(), c).into_iter().map(|i| pool[i].to_string()).collect();
        let ids = sentences.iter().map(|s| Ok(env.encode(s)?.1)).collect::<Result<Vec<ActionId>>>()?;
        let q = net.q_values(&state)?;
        for (i, s) in sentences.iter().enumerate() {
            writeln!(output, "  candidate {i} [cluster {}]: {s}", ids[i]).map_err(io)?;
        }
        let cells: Vec<String> = q
            .iter()
            .enumerate()
            .map(|(a, v)| {
                let mark = if ids.contains(&ActionId(a)) { "*" } else { "" };
                format!("{a}{mark}:{v:.3}")
            })
            .collect();
        writeln!(output, "  q = [{}]", cells.join(" ")).map_err(io)?;
        let choice = ids
            .iter()
            .copied()
            .max_by(|a, b| q[a.0].total_cmp(&q[b.0]).then(b.0.cmp(&a.0)))
            .expect("nonempty candidates");
        let pos = ids.iter().position(|a| *a == choice).expect("chosen from ids");
        let uttered = sentences[pos].clone();
        writeln!(output, "agent> {uttered}   (cluster {choice})").map_err(io)?;
        entries.push(TranscriptEntry {
            turn: history.len(),
            speaker: Speaker::Agent,
            text: uttered.clone(),
            action_id: Some(choice),
            reward: None,
        });
        history.push(uttered);
    }
    write_transcript(&entries, transcript)?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::ClusterModel;
    use crate::corpus::{Corpus, Dialogue};
    use crate::embeddings::parse_embeddings;
    use crate::environment::EnvConfig;
    use rand::SeedableRng;

    fn run(input: &str) -> (String, Vec<TranscriptEntry>, String) {
        let table = parse_embeddings("a 0.0\nb 10.0\nc 20.0\nd 30.0\n", 1).unwrap();
        let model = ClusterModel::from_centroids(vec![vec![0.0], vec![10.0], vec![20.0], vec![30.0]]).unwrap();
        let corpus = Corpus::new(vec![
            Dialogue::from_utterances("x", ["a", "b", "a", "b"]).unwrap(),
            Dialogue::from_utterances("y", ["c", "d", "c", "d"]).unwrap(),
        ])
        .unwrap();
        let env = ChatEnvironment::new(&corpus, &table, &model, EnvConfig::default()).unwrap();
        let net = QNetwork::new(1, 3, 4, 0.0, &mut SeededRng::seed_from_u64(0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let mut out = Vec::new();
        let entries = chat_repl(&net, &env, input.as_bytes(), &mut out, &path, &mut SeededRng::seed_from_u64(1)).unwrap();
        let saved = std::fs::read_to_string(&path).unwrap();
        (String::from_utf8(out).unwrap(), entries, saved)
    }

    #[test]
    fn empty_input_reprompts_without_state_change() {
        let (out, entries, _) = run("\n   \n:quit\n");
        assert_eq!(out.matches("you> ").count(), 3);
        assert!(entries.is_empty());
    }

    #[test]
    fn quit_flushes_transcript() {
        let (_, entries, saved) = run("hello a\n:quit\nnever read\n");
        assert_eq!(entries.len(), 2);
        assert_eq!(saved.lines().count(), 2);
        assert!(saved.contains("hello a"));
    }

    #[test]
    fn prints_all_q_values_with_candidates_marked() {
        let (out, entries, _) = run("a b\nc\n");
        let q_lines: Vec<&str> = out.lines().filter(|l| l.trim_start().starts_with("q = [")).collect();
        assert_eq!(q_lines.len(), 2);
        for l in q_lines {
            let inner = l.trim().trim_start_matches("q = [").trim_end_matches(']');
            assert_eq!(inner.split(' ').count(), 4);
            assert!(inner.contains('*'));
        }
        assert_eq!(entries.len(), 4);
    }
}
