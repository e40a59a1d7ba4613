//! Oracles and builders shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use motif2vec::encoding::encode_song;
use motif2vec::pipeline::PipelineConfig;
use motif2vec::sgns::TrainingPair;
use motif2vec::{EmbeddingModel, TokenSequence, TrainConfig, Vocabulary};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CLUSTER_A: [&str; 5] = ["11", "21", "31", "41", "51"];
pub const CLUSTER_B: [&str; 5] = ["10", "20", "30", "40", "50"];

pub fn in_a(token: &str) -> bool {
    CLUSTER_A.contains(&token)
}

/// Fifty songs, each drawing all of its tokens from a single cluster.
pub fn planted_corpus(seed: u64) -> Vec<TokenSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..50)
        .map(|i| {
            let cluster = if i % 2 == 0 { &CLUSTER_A } else { &CLUSTER_B };
            let tokens = (0..80)
                .map(|_| cluster.choose(&mut rng).unwrap().to_string())
                .collect();
            TokenSequence::new(format!("planted{i}"), tokens)
        })
        .collect()
}

pub fn planted_config(seed: u64) -> TrainConfig {
    TrainConfig {
        dim: 20,
        window: 3,
        negatives: 5,
        epochs: 20,
        seed,
        ..Default::default()
    }
}

pub fn planted_vocab(corpus: &[TokenSequence]) -> Vocabulary {
    Vocabulary::from_sequences(corpus, 1, 1)
}

fn cos(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Mean cosine of within-cluster pairs minus mean cosine of cross pairs.
pub fn cluster_gap(model: &EmbeddingModel) -> f64 {
    let (mut within, mut nw, mut cross, mut nc) = (0.0, 0, 0.0, 0);
    let tokens = model.vocab.tokens();
    for i in 0..tokens.len() {
        for j in i + 1..tokens.len() {
            let c = cos(model.input_row(i), model.input_row(j));
            if in_a(&tokens[i]) == in_a(&tokens[j]) {
                within += c;
                nw += 1;
            } else {
                cross += c;
                nc += 1;
            }
        }
    }
    within / nw as f64 - cross / nc as f64
}

/// Per-pair log-likelihood `log σ(c·w) + Σ log σ(−n·w)` in plain f64.
pub fn log_likelihood(w: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let log_sigmoid = |x: f64| -(1.0 + (-x).exp()).ln();
    log_sigmoid(dot(context, w)) + negatives.iter().map(|n| log_sigmoid(-dot(n, w))).sum::<f64>()
}

/// Central-difference gradient of the log-likelihood with respect to the
/// center row and to every distinct output row touched by the pair.
pub fn finite_difference(
    model: &EmbeddingModel,
    pair: TrainingPair,
    negatives: &[usize],
    eps: f64,
) -> (Vec<f64>, Vec<(usize, Vec<f64>)>) {
    let dim = model.dim();
    let mut rows: Vec<usize> = vec![pair.context];
    for &n in negatives {
        if !rows.contains(&n) {
            rows.push(n);
        }
    }
    let input: Vec<f64> = model.input_row(pair.center).iter().map(|&v| v as f64).collect();
    let outputs: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| model.output_row(r).iter().map(|&v| v as f64).collect())
        .collect();
    let eval = |w: &[f64], outs: &[Vec<f64>]| {
        let row = |id: usize| outs[rows.iter().position(|&r| r == id).unwrap()].as_slice();
        let negs: Vec<&[f64]> = negatives.iter().map(|&n| row(n)).collect();
        log_likelihood(w, row(pair.context), &negs)
    };

    let mut center = vec![0.0; dim];
    for d in 0..dim {
        let (mut plus, mut minus) = (input.clone(), input.clone());
        plus[d] += eps;
        minus[d] -= eps;
        center[d] = (eval(&plus, &outputs) - eval(&minus, &outputs)) / (2.0 * eps);
    }
    let mut grads = Vec::new();
    for (k, &r) in rows.iter().enumerate() {
        let mut g = vec![0.0; dim];
        for d in 0..dim {
            let (mut plus, mut minus) = (outputs.clone(), outputs.clone());
            plus[k][d] += eps;
            minus[k][d] -= eps;
            g[d] = (eval(&input, &plus) - eval(&input, &minus)) / (2.0 * eps);
        }
        grads.push((r, g));
    }
    (center, grads)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// A model of `size` tokens with every entry uniform in `[-scale, scale]`.
pub fn random_model(size: usize, dim: usize, scale: f32, rng: &mut impl Rng) -> EmbeddingModel {
    let entries = (0..size).map(|i| (format!("{}1", i + 1), 1)).collect();
    let config = TrainConfig {
        dim,
        ..Default::default()
    };
    let mut model = EmbeddingModel::with_vocab(Vocabulary::from_entries(entries, 1), config);
    for v in model.input_vectors.iter_mut().chain(model.output_vectors.iter_mut()) {
        *v = rng.random_range(-scale..=scale);
    }
    model
}

/// Two-sided p-value of U for the first sample by enumerating every way of
/// splitting the pooled, tie-free sample.
pub fn brute_force_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let total = pooled.len();
    let u_of = |mask: u32| -> f64 {
        let mut u = 0.0;
        for i in 0..total {
            if mask & (1 << i) == 0 {
                continue;
            }
            for j in 0..total {
                if mask & (1 << j) == 0 && pooled[i] > pooled[j] {
                    u += 1.0;
                }
            }
        }
        u
    };
    let observed = u_of((1u32 << a.len()) - 1);
    let (mut below, mut above, mut all) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let u = u_of(mask);
        all += 1;
        if u <= observed {
            below += 1;
        }
        if u >= observed {
            above += 1;
        }
    }
    (2.0 * below.min(above) as f64 / all as f64).min(1.0)
}

/// `n` distinct values in random order.
pub fn tie_free(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(n);
    while out.len() < n {
        let v: f64 = rng.random_range(-100.0..100.0);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// The bundled fixture configuration, writing into `out_dir`.
pub fn fixture_config(out_dir: &Path) -> PipelineConfig {
    let mut config = PipelineConfig::load(&fixture_dir().join("fixture.conf")).unwrap();
    config.out_dir = out_dir.to_path_buf();
    config
}

/// Interval tokens of every fixture song.
pub fn fixture_unigrams() -> Vec<TokenSequence> {
    let corpus = motif2vec::load_corpus(&fixture_dir().join("kern"), "*.krn").unwrap();
    corpus
        .songs
        .iter()
        .filter_map(|s| encode_song(s).ok())
        .collect()
}
