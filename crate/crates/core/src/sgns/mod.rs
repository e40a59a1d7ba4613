//! Skip-gram with negative sampling over token corpora.

mod model_file;
mod noise;
mod pairs;
mod step;

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::encoding::{TokenSequence, Vocabulary};
use crate::rng::derive_seed;

pub use model_file::{
    load_model, read_model, save_model, write_model, ModelFileError, MODEL_FORMAT_VERSION,
    MODEL_MAGIC,
};
pub use noise::{sample_negative, NoiseTable};
pub use pairs::{generate_pairs, pairs_for_center, TrainingPair};
pub use step::{sgd_step, sgns_gradient, SgnsGradient};

use step::{Scratch, SharedWeights};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("vocabulary has {0} entries, need at least 2")]
    EmptyVocab(usize),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("non-finite value after updating {} row {row}", if *.output { "output" } else { "input" })]
    NonFiniteUpdate { row: usize, output: bool },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    /// Maximum context offset; each center draws its reach from `1..=window`.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
    pub noise_power: f64,
    pub min_count: u64,
    /// Frequent-token subsampling threshold; off when `None`.
    pub subsample: Option<f64>,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 150,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr_start: 0.025,
            lr_end: 0.0001,
            seed: 42,
            noise_power: 0.75,
            min_count: 1,
            subsample: None,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if self.window == 0 {
            return fail("window must be at least 1");
        }
        if self.negatives == 0 {
            return fail("negatives must be at least 1");
        }
        if !(self.lr_end > 0.0 && self.lr_start >= self.lr_end) {
            return fail("need lr_start >= lr_end > 0");
        }
        if !self.noise_power.is_finite() {
            return fail("noise_power must be finite");
        }
        if self.min_count == 0 {
            return fail("min_count must be at least 1");
        }
        if matches!(self.subsample, Some(t) if t.is_nan() || t <= 0.0) {
            return fail("subsample threshold must be positive");
        }
        if self.workers == 0 {
            return fail("workers must be at least 1");
        }
        Ok(())
    }
}

/// Input (center) and output (context) vectors, row-major `|V| × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub vocab: Vocabulary,
    pub input_vectors: Vec<f32>,
    pub output_vectors: Vec<f32>,
    pub config: TrainConfig,
}

impl EmbeddingModel {
    /// All-zero model over a vocabulary of `size` placeholder tokens.
    pub fn zeros(size: usize, config: TrainConfig) -> Self {
        let vocab = Vocabulary::from_entries((0..size).map(|i| (format!("t{i}"), 1)).collect(), 0);
        Self::with_vocab(vocab, config)
    }

    pub fn with_vocab(vocab: Vocabulary, config: TrainConfig) -> Self {
        let n = vocab.len() * config.dim;
        EmbeddingModel {
            vocab,
            input_vectors: vec![0.0; n],
            output_vectors: vec![0.0; n],
            config,
        }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn input_row(&self, id: usize) -> &[f32] {
        &self.input_vectors[id * self.dim()..(id + 1) * self.dim()]
    }

    pub fn output_row(&self, id: usize) -> &[f32] {
        &self.output_vectors[id * self.dim()..(id + 1) * self.dim()]
    }

    /// Embedding used for queries and evaluation.
    pub fn vector(&self, token: &str) -> Option<&[f32]> {
        self.vocab.id(token).map(|id| self.input_row(id))
    }
}

/// Full-softmax probability of `context` given `center`; only sensible for
/// small vocabularies.
pub fn softmax_prob(model: &EmbeddingModel, center: usize, context: usize) -> f64 {
    softmax_distribution(model, center)[context]
}

pub fn softmax_distribution(model: &EmbeddingModel, center: usize) -> Vec<f64> {
    let w = model.input_row(center);
    let scores: Vec<f64> = (0..model.len())
        .map(|c| {
            w.iter()
                .zip(model.output_row(c))
                .map(|(a, b)| *a as f64 * *b as f64)
                .sum()
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainStats {
    /// Mean per-pair negative log-likelihood of each epoch.
    pub epoch_losses: Vec<f64>,
    pub pairs: u64,
}

pub fn train(
    corpus: &[TokenSequence],
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<EmbeddingModel, TrainError> {
    train_with_stats(corpus, vocab, config).map(|(m, _)| m)
}

struct Shared<'a> {
    input: &'a [AtomicU32],
    output: &'a [AtomicU32],
    processed: &'a AtomicU64,
    failed: &'a AtomicBool,
    total_work: u64,
    config: &'a TrainConfig,
    noise: &'a NoiseTable,
    keep_prob: Option<&'a [f64]>,
}

impl Shared<'_> {
    fn learning_rate(&self) -> f32 {
        let done = self.processed.load(Ordering::Relaxed) as f64 / self.total_work.max(1) as f64;
        let lr = self.config.lr_start - (self.config.lr_start - self.config.lr_end) * done;
        lr.max(self.config.lr_end) as f32
    }

    /// Trains on the given songs; returns (loss sum, pair count).
    fn run(&self, songs: &[&[usize]], rng: &mut ChaCha8Rng) -> Result<(f64, u64), TrainError> {
        let dim = self.config.dim;
        let mut weights = SharedWeights {
            input: self.input,
            output: self.output,
            dim,
        };
        let mut scratch = Scratch::new(dim);
        let mut kept = Vec::new();
        let mut pairs = Vec::new();
        let mut negatives = vec![0usize; self.config.negatives];
        let (mut loss, mut count) = (0.0, 0u64);

        for ids in songs {
            if self.failed.load(Ordering::Relaxed) {
                break;
            }
            kept.clear();
            match self.keep_prob {
                Some(keep) => kept.extend(
                    ids.iter()
                        .copied()
                        .filter(|&id| rng.random::<f64>() < keep[id]),
                ),
                None => kept.extend_from_slice(ids),
            }
            for t in 0..kept.len() {
                let lr = self.learning_rate();
                let span = rng.random_range(1..=self.config.window);
                pairs.clear();
                pairs_for_center(&kept, t, span, &mut pairs);
                for &pair in &pairs {
                    for n in negatives.iter_mut() {
                        *n = sample_negative(self.noise, rng, pair.context);
                    }
                    match step::update(&mut weights, &mut scratch, pair, &negatives, lr) {
                        Ok(l) => loss += l,
                        Err(e) => {
                            self.failed.store(true, Ordering::Relaxed);
                            return Err(e);
                        }
                    }
                    count += 1;
                }
            }
            self.processed
                .fetch_add(ids.len() as u64, Ordering::Relaxed);
        }
        Ok((loss, count))
    }
}

/// Trains skip-gram vectors. With one worker the result depends only on
/// the inputs and the seed; with several, workers update shared matrices
/// without locks.
pub fn train_with_stats(
    corpus: &[TokenSequence],
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<(EmbeddingModel, TrainStats), TrainError> {
    config.validate()?;
    let vocab = if config.min_count > 1 {
        let entries = vocab
            .iter()
            .filter(|(_, _, c)| *c >= config.min_count)
            .map(|(_, t, c)| (t.to_owned(), c))
            .collect();
        Vocabulary::from_entries(entries, vocab.n())
    } else {
        vocab.clone()
    };
    if vocab.len() < 2 {
        return Err(TrainError::EmptyVocab(vocab.len()));
    }
    let songs: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| {
            s.tokens
                .iter()
                .filter_map(|t| vocab.id(t))
                .collect::<Vec<_>>()
        })
        .filter(|ids| !ids.is_empty())
        .collect();
    if songs.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }

    let dim = config.dim;
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 0.5 / dim as f32;
    let input: Vec<AtomicU32> = (0..vocab.len() * dim)
        .map(|_| AtomicU32::new(init_rng.random_range(-bound..=bound).to_bits()))
        .collect();
    let output: Vec<AtomicU32> = (0..vocab.len() * dim).map(|_| AtomicU32::new(0)).collect();

    let noise = NoiseTable::new(vocab.counts(), config.noise_power);
    let total_tokens: u64 = songs.iter().map(|s| s.len() as u64).sum();
    let keep_prob: Option<Vec<f64>> = config.subsample.map(|t| {
        vocab
            .counts()
            .iter()
            .map(|&c| {
                let f = c as f64 / total_tokens as f64;
                ((f / t).sqrt() + 1.0) * t / f
            })
            .collect()
    });
    let processed = AtomicU64::new(0);
    let failed = AtomicBool::new(false);
    let shared = Shared {
        input: &input,
        output: &output,
        processed: &processed,
        failed: &failed,
        total_work: total_tokens * config.epochs as u64,
        config,
        noise: &noise,
        keep_prob: keep_prob.as_deref(),
    };

    let mut stats = TrainStats::default();
    let mut order: Vec<usize> = (0..songs.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut init_rng);
        let workers = config.workers.min(order.len());
        let shards: Vec<Vec<&[usize]>> = (0..workers)
            .map(|w| {
                order
                    .iter()
                    .skip(w)
                    .step_by(workers)
                    .map(|&i| songs[i].as_slice())
                    .collect()
            })
            .collect();

        let results: Vec<Result<(f64, u64), TrainError>> = if workers == 1 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64, 0));
            vec![shared.run(&shards[0], &mut rng)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = shards
                    .iter()
                    .enumerate()
                    .map(|(w, shard)| {
                        let shared = &shared;
                        scope.spawn(move || {
                            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                                config.seed,
                                epoch as u64,
                                w as u64,
                            ));
                            shared.run(shard, &mut rng)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training worker panicked"))
                    .collect()
            })
        };

        let (mut loss, mut count) = (0.0, 0u64);
        for r in results {
            let (l, c) = r?;
            loss += l;
            count += c;
        }
        stats
            .epoch_losses
            .push(if count > 0 { loss / count as f64 } else { 0.0 });
        stats.pairs += count;
        log::debug!(
            "epoch {epoch}: {count} pairs, mean loss {:.5}",
            stats.epoch_losses[epoch]
        );
    }

    let unpack = |v: Vec<AtomicU32>| {
        v.into_iter()
            .map(|a| f32::from_bits(a.into_inner()))
            .collect()
    };
    let model = EmbeddingModel {
        vocab,
        input_vectors: unpack(input),
        output_vectors: unpack(output),
        config: config.clone(),
    };
    Ok((model, stats))
}
