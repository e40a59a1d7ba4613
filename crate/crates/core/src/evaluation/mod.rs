//! Substitution-based evaluation of motif embeddings.
//!
//! For each sampled segment, the first multi-word found in the model is
//! swapped for its nearest same-size neighbour (top variant), its second
//! nearest (close variant) and a random same-size motif whose cosine is
//! below `h` (distant variant). Each variant is scored against the
//! reference with every [`Measure`]. The report compares the score
//! vectors with a rank-sum test and with Euclidean distances.

mod wilcoxon;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{token_size, TokenSequence};
use crate::kern::{Duration, Song};
use crate::measures::{default_tatum, realize, Measure, MeasureError, SegmentRealization};
use crate::rng::derive_seed;
use crate::sgns::EmbeddingModel;
use crate::similarity::{nearest_among, pick_unrelated, Candidates, SimilarityError};

pub use wilcoxon::{midranks, wilcoxon_rank_sum, PValueMethod, RankSumTest, EXACT_MAX_TOTAL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("need {requested} segments with a multi-word, corpus has {available}")]
    NotEnoughSegments { requested: usize, available: usize },
    #[error("segment '{0}' has no multi-word known to the model")]
    NoMultiWord(String),
    #[error("'{token}' has {found} same-size neighbours, need {needed}")]
    TooFewNeighbors {
        token: String,
        found: usize,
        needed: usize,
    },
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no segment could be evaluated ({0} skipped)")]
    NothingEvaluated(usize),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Uniform sample without replacement among segments that contain at
/// least one multi-word token.
pub fn sample_segments<R: Rng + ?Sized>(
    corpus: &[TokenSequence],
    n: usize,
    rng: &mut R,
) -> Result<Vec<TokenSequence>, EvalError> {
    let eligible: Vec<&TokenSequence> = corpus.iter().filter(|s| s.has_multiword()).collect();
    if eligible.len() < n {
        return Err(EvalError::NotEnoughSegments {
            requested: n,
            available: eligible.len(),
        });
    }
    Ok(rand::seq::index::sample(rng, eligible.len(), n)
        .into_iter()
        .map(|i| eligible[i].clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Occurrence {
    /// First multi-word in the segment known to the model.
    #[default]
    First,
    /// A seeded random one among them.
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantTriple {
    pub reference: TokenSequence,
    pub top_variant: TokenSequence,
    pub close_variant: TokenSequence,
    pub distant_variant: TokenSequence,
    pub replaced_at: usize,
    pub replaced_token: String,
}

impl VariantTriple {
    pub fn replacement<'a>(&self, variant: &'a TokenSequence) -> &'a str {
        &variant.tokens[self.replaced_at]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantOptions {
    pub h: f64,
    /// Neighbour rank used for the close variant (1 is the top variant).
    pub close_rank: usize,
    pub occurrence: Occurrence,
}

impl Default for VariantOptions {
    fn default() -> Self {
        VariantOptions {
            h: 0.2,
            close_rank: 2,
            occurrence: Occurrence::First,
        }
    }
}

fn replaced(seg: &TokenSequence, at: usize, token: &str) -> TokenSequence {
    let mut out = seg.clone();
    out.tokens[at] = token.to_owned();
    out
}

pub fn make_variants<R: Rng + ?Sized>(
    seg: &TokenSequence,
    model: &EmbeddingModel,
    options: &VariantOptions,
    rng: &mut R,
) -> Result<VariantTriple, EvalError> {
    let positions: Vec<usize> = seg
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| token_size(t) > 1 && model.vocab.contains(t))
        .map(|(i, _)| i)
        .collect();
    let at = match options.occurrence {
        Occurrence::First => positions.first().copied(),
        Occurrence::Random => {
            (!positions.is_empty()).then(|| positions[rng.random_range(0..positions.len())])
        }
    }
    .ok_or_else(|| EvalError::NoMultiWord(seg.song_id.clone()))?;

    let token = &seg.tokens[at];
    let same_size = Candidates::Size(token_size(token));
    let needed = options.close_rank.max(1);
    let neighbors = nearest_among(model, token, needed, same_size)?.neighbors;
    if neighbors.len() < needed {
        return Err(EvalError::TooFewNeighbors {
            token: token.clone(),
            found: neighbors.len(),
            needed,
        });
    }
    let distant = pick_unrelated(model, token, options.h, same_size, rng)?;

    Ok(VariantTriple {
        top_variant: replaced(seg, at, &neighbors[0].0),
        close_variant: replaced(seg, at, &neighbors[needed - 1].0),
        distant_variant: replaced(seg, at, &distant),
        reference: seg.clone(),
        replaced_at: at,
        replaced_token: token.clone(),
    })
}

pub fn euclidean(u: &[f64], v: &[f64]) -> Result<f64, EvalError> {
    if u.len() != v.len() {
        return Err(EvalError::LengthMismatch(u.len(), v.len()));
    }
    Ok(u.iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Where the anchor pitch and note durations of a segment come from.
#[derive(Debug, Clone)]
pub enum NoteSource {
    /// Every segment starts on `anchor` and every note lasts `duration`.
    Uniform { anchor: i32, duration: Duration },
    /// Use the first pitch and the durations of the song with the same id.
    Songs(HashMap<String, Song>),
}

impl Default for NoteSource {
    fn default() -> Self {
        NoteSource::Uniform {
            anchor: 60,
            duration: Duration::from_integer(1),
        }
    }
}

impl NoteSource {
    pub fn from_songs(songs: &[Song]) -> Self {
        NoteSource::Songs(songs.iter().map(|s| (s.id.clone(), s.clone())).collect())
    }

    fn notes_for(&self, seg: &TokenSequence) -> Option<(i32, Vec<Duration>)> {
        match self {
            NoteSource::Uniform { anchor, duration } => {
                Some((*anchor, vec![*duration; seg.note_count()]))
            }
            NoteSource::Songs(map) => {
                let song = map.get(&seg.song_id)?;
                (song.events.len() == seg.note_count())
                    .then(|| (song.events[0].midi_pitch as i32, song.durations()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub n_segments: usize,
    pub variants: VariantOptions,
    pub seed: u64,
    pub tatum: Duration,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_segments: 2000,
            variants: VariantOptions::default(),
            seed: 42,
            tatum: default_tatum(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreVectors {
    pub top: Vec<f64>,
    pub close: Vec<f64>,
    pub distant: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub measure: Measure,
    pub mw_size: usize,
    pub d_close: f64,
    pub d_distant: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    pub no_multiword: usize,
    /// Missing notes, off-grid durations or pitches leaving the MIDI range.
    pub unrealizable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub mw_size: usize,
    pub segments_requested: usize,
    pub h: f64,
    pub seed: u64,
    pub tatum: String,
    pub close_rank: usize,
    pub occurrence: Occurrence,
    pub model_dim: usize,
    pub model_vocab: usize,
    /// Training hyperparameters when known, as `key=value` strings.
    pub training: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub settings: EvalSettings,
    /// Segment ids in the order of every score vector.
    pub segment_ids: Vec<String>,
    pub replaced: Vec<ReplacementRecord>,
    pub scores: BTreeMap<Measure, ScoreVectors>,
    /// Top-variant scores against distant-variant scores.
    pub wilcoxon: BTreeMap<Measure, RankSumTest>,
    pub distances: Vec<DistanceRow>,
    pub skipped: SkipCounts,
    pub table: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementRecord {
    pub at: usize,
    pub token: String,
    pub top: String,
    pub close: String,
    pub distant: String,
}

pub fn render_table(rows: &[DistanceRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10}{:>12}{:>12}{:>9}",
        "Measure", "d_close", "d_distant", "mw_size"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<10}{:>12.3}{:>12.3}{:>9}",
            r.measure.name(),
            r.d_close,
            r.d_distant,
            r.mw_size
        );
    }
    out
}

struct SegmentScores {
    id: String,
    record: ReplacementRecord,
    values: [[f64; 3]; 3],
}

enum Outcome {
    Scored(Box<SegmentScores>),
    NoMultiWord,
    Unrealizable,
}

fn score_segment(
    index: usize,
    seg: &TokenSequence,
    model: &EmbeddingModel,
    notes: &NoteSource,
    config: &EvalConfig,
) -> Result<Outcome, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1, index as u64));
    let triple = match make_variants(seg, model, &config.variants, &mut rng) {
        Ok(t) => t,
        Err(EvalError::NoMultiWord(_)) => return Ok(Outcome::NoMultiWord),
        Err(e) => return Err(e),
    };
    let variants = [
        &triple.top_variant,
        &triple.close_variant,
        &triple.distant_variant,
    ];
    let reference_notes = triple.reference.note_count();
    for v in variants {
        assert_eq!(v.tokens.len(), triple.reference.tokens.len());
        assert_eq!(
            v.note_count(),
            reference_notes,
            "substitution changed the note count"
        );
    }

    let Some((anchor, durations)) = notes.notes_for(seg) else {
        log::warn!("no notes for segment '{}'", seg.song_id);
        return Ok(Outcome::Unrealizable);
    };
    let realize_one = |t: &TokenSequence| realize(t, anchor, &durations, config.tatum);
    let realized: Result<Vec<SegmentRealization>, MeasureError> =
        std::iter::once(&triple.reference)
            .chain(variants)
            .map(realize_one)
            .collect();
    let realized = match realized {
        Ok(r) => r,
        Err(e @ (MeasureError::NonDivisibleDuration { .. } | MeasureError::PitchOutOfRange(_))) => {
            log::warn!("segment '{}' skipped: {e}", seg.song_id);
            return Ok(Outcome::Unrealizable);
        }
        Err(e) => return Err(e.into()),
    };

    let mut values = [[0.0; 3]; 3];
    for (m, measure) in Measure::ALL.iter().enumerate() {
        for v in 0..3 {
            values[m][v] = measure.between(&realized[0], &realized[v + 1])?;
        }
    }
    Ok(Outcome::Scored(Box::new(SegmentScores {
        id: seg.song_id.clone(),
        record: ReplacementRecord {
            at: triple.replaced_at,
            token: triple.replaced_token.clone(),
            top: triple.replacement(&triple.top_variant).to_owned(),
            close: triple.replacement(&triple.close_variant).to_owned(),
            distant: triple.replacement(&triple.distant_variant).to_owned(),
        },
        values,
    })))
}

/// Runs the full protocol on one substituted corpus.
pub fn run_evaluation(
    corpus: &[TokenSequence],
    model: &EmbeddingModel,
    notes: &NoteSource,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0, 0));
    let sample = sample_segments(corpus, config.n_segments, &mut rng)?;

    let score = |(i, seg): (usize, &TokenSequence)| score_segment(i, seg, model, notes, config);
    let outcomes: Vec<Result<Outcome, EvalError>> = if config.workers <= 1 {
        sample.iter().enumerate().map(score).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .expect("thread pool");
        pool.install(|| sample.par_iter().enumerate().map(score).collect())
    };

    let mut skipped = SkipCounts::default();
    let mut scored = Vec::new();
    for outcome in outcomes {
        match outcome? {
            Outcome::Scored(s) => scored.push(*s),
            Outcome::NoMultiWord => skipped.no_multiword += 1,
            Outcome::Unrealizable => skipped.unrealizable += 1,
        }
    }
    if scored.is_empty() {
        return Err(EvalError::NothingEvaluated(
            skipped.no_multiword + skipped.unrealizable,
        ));
    }
    scored.sort_by(|a, b| a.id.cmp(&b.id));

    let mw_size = model.vocab.n();
    let mut scores = BTreeMap::new();
    let mut tests = BTreeMap::new();
    let mut distances = Vec::new();
    for (m, measure) in Measure::ALL.into_iter().enumerate() {
        let column = |v: usize| scored.iter().map(|s| s.values[m][v]).collect::<Vec<f64>>();
        let vectors = ScoreVectors {
            top: column(0),
            close: column(1),
            distant: column(2),
        };
        tests.insert(measure, wilcoxon_rank_sum(&vectors.top, &vectors.distant));
        distances.push(DistanceRow {
            measure,
            mw_size,
            d_close: euclidean(&vectors.top, &vectors.close)?,
            d_distant: euclidean(&vectors.top, &vectors.distant)?,
        });
        scores.insert(measure, vectors);
    }

    Ok(EvalReport {
        settings: EvalSettings {
            mw_size,
            segments_requested: config.n_segments,
            h: config.variants.h,
            seed: config.seed,
            tatum: format!("{}/{}", config.tatum.numer(), config.tatum.denom()),
            close_rank: config.variants.close_rank,
            occurrence: config.variants.occurrence,
            model_dim: model.dim(),
            model_vocab: model.len(),
            training: BTreeMap::new(),
        },
        segment_ids: scored.iter().map(|s| s.id.clone()).collect(),
        replaced: scored.iter().map(|s| s.record.clone()).collect(),
        table: render_table(&distances),
        scores,
        wilcoxon: tests,
        distances,
        skipped,
    })
}
