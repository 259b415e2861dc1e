//! Pretrained word vectors and the mean-vector sentence representation.
//!
//! A sentence is the arithmetic mean of the vectors of its in-vocabulary
//! tokens; a dialogue history is a stack of such sentence vectors, truncated
//! to the most recent `max_len` sentences and zero-padded after the content.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Default maximum number of sentence vectors kept in a state.
pub const DEFAULT_HISTORY_LEN: usize = 50;

const EDGE_PUNCT: &[char] = &['.', ',', '!', '?', ';', ':', '"', '(', ')'];

/// Immutable token → vector lookup loaded from a GloVe-style text file.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl WordEmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dim must be positive"));
        }
        Ok(Self {
            dim,
            entries: HashMap::new(),
        })
    }

    /// Inserts a vector, rejecting empty/duplicate tokens and bad vectors.
    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if token.is_empty() {
            return Err(Error::invalid("empty token"));
        }
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vector for {token:?}")));
        }
        if self.entries.contains_key(token) {
            return Err(Error::invalid(format!("duplicate token {token:?}")));
        }
        self.entries.insert(token.to_string(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    /// Largest absolute coefficient stored in the table (0 when empty).
    pub fn max_abs_coefficient(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|v| v.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Writes the table in the same text format `load_embeddings` reads,
    /// with tokens sorted so the output is reproducible.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tokens: Vec<&String> = self.entries.keys().collect();
        tokens.sort();
        let mut out = String::new();
        for tok in tokens {
            out.push_str(tok);
            for v in &self.entries[tok] {
                out.push(' ');
                out.push_str(&format!("{v:?}"));
            }
            out.push('\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Parses a GloVe-style file: one `token v1 ... v_dim` line per word.
pub fn load_embeddings(path: &Path, dim: usize) -> Result<WordEmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, dim)
}

/// Parses embedding text already in memory. Blank lines are skipped.
pub fn parse_embeddings(text: &str, dim: usize) -> Result<WordEmbeddingTable> {
    let mut table = WordEmbeddingTable::new(dim)?;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: &str| Error::EmbeddingParse {
            line: line_no,
            reason: reason.to_string(),
        };
        let mut parts = line.trim_end_matches('\r').split(' ');
        let token = parts.next().filter(|t| !t.is_empty()).ok_or_else(|| err("malformed line"))?;
        let mut vector = Vec::with_capacity(dim);
        for field in parts {
            if field.is_empty() {
                return Err(err("malformed line"));
            }
            let v: f64 = field.parse().map_err(|_| err("non-numeric coefficient"))?;
            if !v.is_finite() {
                return Err(err("non-numeric coefficient"));
            }
            vector.push(v);
        }
        if vector.len() != dim {
            return Err(err("wrong coefficient count"));
        }
        if table.entries.contains_key(token) {
            return Err(err("duplicate token"));
        }
        table.entries.insert(token.to_string(), vector);
    }
    Ok(table)
}

/// Lowercases, splits on whitespace, and strips `.,!?;:"()` from token edges.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(EDGE_PUNCT).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Mean word vector of one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceVector {
    pub values: Vec<f64>,
    pub word_count: usize,
}

pub fn embed_sentence<S: AsRef<str>>(tokens: &[S], table: &WordEmbeddingTable) -> SentenceVector {
    let mut values = vec![0.0; table.dim()];
    let mut word_count = 0;
    for tok in tokens {
        if let Some(v) = table.lookup(tok.as_ref()) {
            for (acc, x) in values.iter_mut().zip(v) {
                *acc += x;
            }
            word_count += 1;
        }
    }
    if word_count > 0 {
        let n = word_count as f64;
        values.iter_mut().for_each(|v| *v /= n);
    }
    SentenceVector { values, word_count }
}

/// Tokenizes and embeds raw text in one call.
pub fn embed_text(text: &str, table: &WordEmbeddingTable) -> SentenceVector {
    embed_sentence(&tokenize(text), table)
}

/// Zero-padded stack of the most recent sentence vectors of a history.
///
/// Only the `filled` content rows are stored; rows `filled..max_len` are
/// implicit zeros and are materialised by [`StateMatrix::to_dense`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    dim: usize,
    max_len: usize,
    data: Vec<f64>,
}

impl StateMatrix {
    pub fn empty(dim: usize, max_len: usize) -> Self {
        Self {
            dim,
            max_len,
            data: Vec::new(),
        }
    }

    /// Builds a state from content rows, keeping the most recent `max_len`.
    pub fn from_rows(rows: &[Vec<f64>], dim: usize, max_len: usize) -> Result<Self> {
        if max_len == 0 {
            return Err(Error::invalid("max_len must be at least 1"));
        }
        let start = rows.len().saturating_sub(max_len);
        let mut data = Vec::with_capacity((rows.len() - start) * dim);
        for row in &rows[start..] {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, max_len, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn filled(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Row `i` for `i < max_len`; padding rows come back as `None`.
    pub fn row(&self, i: usize) -> Option<&[f64]> {
        (i < self.filled()).then(|| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Full `max_len × dim` row-major matrix including zero padding.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.max_len * self.dim];
        out[..self.data.len()].copy_from_slice(&self.data);
        out
    }

    /// Copy of this state restricted to its first `h` content rows.
    pub fn truncated(&self, h: usize) -> Self {
        let keep = h.min(self.filled()) * self.dim;
        Self {
            dim: self.dim,
            max_len: self.max_len,
            data: self.data[..keep].to_vec(),
        }
    }
}

/// Embeds a history of raw sentences into a padded state matrix.
pub fn embed_history<S: AsRef<str>>(
    history: &[S],
    table: &WordEmbeddingTable,
    max_len: usize,
) -> Result<StateMatrix> {
    if max_len == 0 {
        return Err(Error::invalid("max_len must be at least 1"));
    }
    let start = history.len().saturating_sub(max_len);
    let rows: Vec<Vec<f64>> = history[start..]
        .iter()
        .map(|s| embed_text(s.as_ref(), table).values)
        .collect();
    StateMatrix::from_rows(&rows, table.dim(), max_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_table() -> WordEmbeddingTable {
        parse_embeddings("hi 1.0 0.0\nyo 0.0 2.0\n", 2).unwrap()
    }

    #[test]
    fn parses_two_entries() {
        let t = toy_table();
        assert_eq!(t.len(), 2);
        assert_eq!(t.lookup("hi"), Some(&[1.0, 0.0][..]));
        assert_eq!(t.lookup("yo"), Some(&[0.0, 2.0][..]));
    }

    #[test]
    fn empty_file_is_valid() {
        let t = parse_embeddings("", 100).unwrap();
        assert!(t.is_empty());
        let v = embed_text("anything at all", &t);
        assert_eq!(v.values, vec![0.0; 100]);
        assert_eq!(v.word_count, 0);
    }

    #[test]
    fn load_errors_name_the_line() {
        let e = parse_embeddings("hi 1.0", 2).unwrap_err();
        assert!(e.to_string().contains("wrong coefficient count at line 1"), "{e}");
        let e = parse_embeddings("hi 1.0 0.0\nyo 0.0 x\n", 2).unwrap_err();
        assert!(e.to_string().contains("non-numeric coefficient at line 2"), "{e}");
        let e = parse_embeddings("hi 1.0 0.0\n\nhi 0.0 1.0\n", 2).unwrap_err();
        assert!(e.to_string().contains("duplicate token at line 3"), "{e}");
        let e = parse_embeddings("hi  1.0 0.0\n", 2).unwrap_err();
        assert!(e.to_string().contains("malformed line at line 1"), "{e}");
    }

    #[test]
    fn load_from_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        toy_table().save(&path).unwrap();
        assert_eq!(load_embeddings(&path, 2).unwrap(), toy_table());
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(
            tokenize("Hello, what are doing today?"),
            vec!["hello", "what", "are", "doing", "today"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("I'm good."), vec!["i'm", "good"]);
        assert!(tokenize(" ... !! ").is_empty());
    }

    #[test]
    fn sentence_means() {
        let t = toy_table();
        let v = embed_sentence(&["hi"], &t);
        assert_eq!((v.values.as_slice(), v.word_count), (&[1.0, 0.0][..], 1));
        // (1+0)/2, (0+2)/2
        let v = embed_sentence(&["hi", "yo"], &t);
        assert_eq!((v.values.as_slice(), v.word_count), (&[0.5, 1.0][..], 2));
        let v = embed_sentence(&["zzz"], &t);
        assert_eq!((v.values.as_slice(), v.word_count), (&[0.0, 0.0][..], 0));
    }

    #[test]
    fn history_padding_and_truncation() {
        let t = toy_table();
        let s = embed_history(&["hi", "yo"], &t, 50).unwrap();
        assert_eq!(s.filled(), 2);
        let dense = s.to_dense();
        assert_eq!(dense.len(), 100);
        assert_eq!(&dense[..4], &[1.0, 0.0, 0.0, 2.0]);
        assert!(dense[4..].iter().all(|&v| v == 0.0));

        let long: Vec<String> = (1..=60).map(|i| if i % 2 == 0 { "yo" } else { "hi" }.to_string()).collect();
        let s = embed_history(&long, &t, 50).unwrap();
        assert_eq!(s.filled(), 50);
        // sentence 11 (odd → "hi") is the first kept row
        assert_eq!(s.row(0).unwrap(), &[1.0, 0.0]);
        assert_eq!(s.row(49).unwrap(), &[0.0, 2.0]);
        assert!(s.row(50).is_none());

        let s = embed_history::<&str>(&[], &t, 50).unwrap();
        assert_eq!(s.filled(), 0);
        assert!(s.to_dense().iter().all(|&v| v == 0.0));
        assert!(embed_history(&["hi"], &t, 0).is_err());
    }

    fn word() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["hi", "yo", "zzz", "Hi!", "(yo)", "abc."]).prop_map(String::from)
    }

    proptest! {
        #[test]
        fn mean_is_bounded_and_order_free(words in prop::collection::vec(word(), 0..12)) {
            let t = toy_table();
            let sentence = words.join(" ");
            let v = embed_text(&sentence, &t);
            let bound = t.max_abs_coefficient();
            prop_assert!(v.values.iter().all(|x| x.is_finite() && x.abs() <= bound + 1e-12));
            let mut rev = tokenize(&sentence);
            rev.reverse();
            let w = embed_sentence(&rev, &t);
            prop_assert_eq!(v.word_count, w.word_count);
            for (a, b) in v.values.iter().zip(&w.values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn history_rows_match_sentences(sents in prop::collection::vec(prop::collection::vec(word(), 0..5), 0..10)) {
            let t = toy_table();
            let hist: Vec<String> = sents.iter().map(|w| w.join(" ")).collect();
            let s = embed_history(&hist, &t, 50).unwrap();
            prop_assert_eq!(s.filled(), hist.len());
            for (i, h) in hist.iter().enumerate() {
                let want = embed_text(h, &t).values;
                prop_assert_eq!(s.row(i).unwrap(), want.as_slice());
            }
        }
    }
}
