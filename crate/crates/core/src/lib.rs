//! Motif embeddings for monophonic folksongs.
//!
//! Songs are read from `**kern`, encoded as chromatic interval tokens and
//! merged into two- or three-interval multi-word motifs. Skip-gram with
//! negative sampling learns a vector per token, and the evaluation module
//! checks embedding quality by substituting motifs with their neighbours
//! and measuring how far the resulting melodies move.

pub mod corpus;
pub mod encoding;
pub mod evaluation;
pub mod kern;
pub mod measures;
pub mod pipeline;
mod rng;
pub mod sgns;
pub mod similarity;

pub use corpus::{load_corpus, Corpus};
pub use encoding::{TokenSequence, Vocabulary};
pub use kern::{parse_kern, Duration, NoteEvent, Song};
pub use sgns::{train, EmbeddingModel, TrainConfig};
