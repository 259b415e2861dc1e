//! Chitchat agents that learn to pick human-like responses from raw
//! dialogue corpora.
//!
//! Sentences become mean word vectors, K-Means++ groups them into a finite
//! action set, and a recurrent Q-network learns to select the cluster of
//! the true human response among noisy candidates, earning +1 for the human
//! reply and −1 for a randomly sourced one. A companion GRU regressor
//! predicts whole-dialogue rewards from dialogue histories of varying length.

pub mod agent;
pub mod chat;
pub mod clustering;
pub mod corpus;
pub mod embeddings;
pub mod environment;
pub mod experiment;
pub mod error;
pub mod neuralnet;
pub mod plot;
pub mod reward_predictor;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};

/// Seedable random source used throughout the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;
